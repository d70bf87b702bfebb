"""Behavioral model of a single filamentary RRAM cell.

A cell is binary (HRS or LRS). Its resistance in either state follows from
four filament-geometry parameters, and pulse-driven switching is stochastic
with a doubly-truncated log-normal switching-time distribution.

All functions broadcast: a :class:`DeviceParams` whose fields are arrays
describes a whole population of cells.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.stats import truncnorm

from .errors import ConvergenceError, DomainError

PARAM_NAMES = ("n_disc_min", "n_disc_max", "r_disc", "l_disc")

#: (low, mean, up) per variation parameter.
PARAM_RANGES = {
    "n_disc_min": (4.0, 8.0, 16.0),
    "n_disc_max": (18.0, 20.0, 22.0),
    "r_disc": (40.5, 45.0, 49.5),
    "l_disc": (0.36, 0.4, 0.44),
}

#: Reported mean resistances (ohm) the nominal device must reproduce.
HRS_TARGET = 65.56e3
LRS_TARGET = 1.64e3

#: Pulse-width study: duration (s) -> fraction of cells switched HRS -> LRS.
SWITCHING_TABLE = (
    (10e-9, 0.00),
    (100e-9, 0.11),
    (1e-6, 0.36),
    (3e-6, 0.50),
    (10e-6, 0.64),
    (1e-3, 0.94),
    (10e-3, 1.00),
)

_BOUND_RTOL = 1e-9


class DeviceState(enum.IntEnum):
    """Binary cell state; the integer value is the logic bit."""

    HRS = 0
    LRS = 1


@dataclass(frozen=True)
class DeviceParams:
    """Filament geometry of one cell, or of an array of cells.

    Fields may be floats or equally-shaped numpy arrays.
    """

    n_disc_min: float | np.ndarray
    n_disc_max: float | np.ndarray
    r_disc: float | np.ndarray
    l_disc: float | np.ndarray

    @classmethod
    def nominal(cls):
        return cls(*(PARAM_RANGES[name][1] for name in PARAM_NAMES))

    @classmethod
    def from_array(cls, values):
        """Build from an array whose last axis holds the four parameters."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != 4:
            raise DomainError(f"expected 4 parameters on the last axis, got {values.shape}")
        return cls(*(values[..., k] for k in range(4)))

    def as_array(self):
        return np.stack([np.asarray(getattr(self, name), dtype=float) for name in PARAM_NAMES], axis=-1)

    @property
    def shape(self):
        return np.shape(self.n_disc_min)

    def __getitem__(self, index):
        return DeviceParams(*(np.asarray(getattr(self, name))[index] for name in PARAM_NAMES))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def check_bounds(params, bounds=None):
    """Raise :class:`DomainError` if any parameter leaves its (low, up) range."""
    bounds = PARAM_RANGES if bounds is None else bounds
    for name in PARAM_NAMES:
        low, _, up = bounds[name]
        value = np.asarray(getattr(params, name), dtype=float)
        slack = _BOUND_RTOL * max(abs(low), abs(up))
        if np.any(~np.isfinite(value)) or np.any(value < low - slack) or np.any(value > up + slack):
            raise DomainError(f"{name} outside [{low}, {up}]")
    if np.any(np.asarray(params.n_disc_min) >= np.asarray(params.n_disc_max)):
        raise DomainError("n_disc_min must be below n_disc_max")


@dataclass(frozen=True)
class PulseSpec:
    """A rectangular-ish voltage pulse.

    ``polarity`` tags the pulse as ``"set"`` or ``"reset"`` explicitly. When
    left as ``None`` a positive amplitude means SET and a negative one RESET.
    Rise and fall times are carried for bookkeeping only.
    """

    amplitude: float
    duration: float
    rise: float = 0.0
    fall: float = 0.0
    polarity: str | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError(f"pulse duration must be positive, got {self.duration}")
        if self.rise < 0 or self.fall < 0:
            raise DomainError("rise and fall times must be non-negative")
        if self.polarity not in (None, "set", "reset"):
            raise DomainError(f"unknown polarity {self.polarity!r}")

    @classmethod
    def read(cls, amplitude=0.2, duration=10e-9):
        return cls(amplitude, duration)

    @classmethod
    def set(cls, amplitude=2.0, duration=10e-3, rise=1e-9, fall=1e-9):
        return cls(amplitude, duration, rise, fall, polarity="set")

    @classmethod
    def reset(cls, amplitude=-2.0, duration=25e-9, rise=2.5e-9, fall=2.5e-9):
        return cls(amplitude, duration, rise, fall, polarity="reset")

    @property
    def direction(self):
        if self.polarity is not None:
            return self.polarity
        return "set" if self.amplitude > 0 else "reset"


# Fitted by ``calibrate_switching`` against SWITCHING_TABLE with the default window.
_TAU50_SET = 3.164142771446469e-06
_SIGMA_TAU = 3.6320933367812844


@dataclass(frozen=True)
class DeviceModel:
    """Calibration constants of the behavioral cell model.

    Resistance is ``k * l_disc / (n_disc * r_disc**2)`` with ``n_disc_min``
    for HRS and ``n_disc_max`` for LRS.

    Switching time is log-normal with median ``tau50_*`` and log-spread
    ``sigma_tau``, truncated to ``[t_min, t_max]`` for the nominal cell:
    no cell switches on pulses shorter than its window start and every cell
    switches on pulses longer than its window end. A cell's whole curve is
    stretched in time by ``(l_disc / 0.4) * (45 / r_disc)**2``.
    """

    k_hrs: float = HRS_TARGET * 8.0 * 45.0**2 / 0.4
    k_lrs: float = LRS_TARGET * 20.0 * 45.0**2 / 0.4
    tau50_set: float = _TAU50_SET
    tau50_reset: float = 2e-12
    sigma_tau: float = _SIGMA_TAU
    t_min: float = 15e-9
    t_max: float = 7e-3
    min_switch_amplitude: float = 0.5
    read_amplitude_max: float = 0.3

    def __post_init__(self):
        if min(self.k_hrs, self.k_lrs, self.tau50_set, self.tau50_reset, self.sigma_tau) <= 0:
            raise DomainError("device constants must be positive")
        if not self.t_min < self.tau50_set < self.t_max:
            raise DomainError("tau50_set must lie inside (t_min, t_max)")

    # -- resistance ---------------------------------------------------------

    def resistance(self, params, state):
        check_bounds(params)
        lrs = np.asarray(state, dtype=bool)
        geometry = np.asarray(params.l_disc) / np.asarray(params.r_disc) ** 2
        r_hrs = self.k_hrs * geometry / np.asarray(params.n_disc_min)
        r_lrs = self.k_lrs * geometry / np.asarray(params.n_disc_max)
        return np.where(lrs, r_lrs, r_hrs)[()]

    def nominal_resistance(self, state):
        return float(self.resistance(DeviceParams.nominal(), state))

    @property
    def decision_boundary(self):
        """Geometric mean of the nominal HRS and LRS resistances."""
        return float(np.sqrt(self.nominal_resistance(DeviceState.HRS) * self.nominal_resistance(DeviceState.LRS)))

    # -- switching ----------------------------------------------------------

    @cached_property
    def _location(self):
        # log-domain location whose truncated distribution has median tau50_set
        lo, hi = np.log(self.t_min), np.log(self.t_max)
        target = np.log(self.tau50_set)
        sigma = self.sigma_tau

        def median_gap(mu):
            return truncnorm.median((lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma) - target

        return brentq(median_gap, lo - 10 * sigma, hi + 10 * sigma, xtol=1e-14, rtol=1e-15)

    def _curve(self, log_duration):
        mu, sigma = self._location, self.sigma_tau
        a = (np.log(self.t_min) - mu) / sigma
        b = (np.log(self.t_max) - mu) / sigma
        return truncnorm.cdf(log_duration, a, b, loc=mu, scale=sigma)

    @staticmethod
    def time_scale(params):
        return (np.asarray(params.l_disc) / 0.4) * (45.0 / np.asarray(params.r_disc)) ** 2

    def tau50(self, params, direction="set"):
        base = self.tau50_set if direction == "set" else self.tau50_reset
        return base * self.time_scale(params)

    def _probability(self, params, pulse, direction):
        if pulse.duration <= 0:
            raise DomainError("pulse duration must be positive")
        scale = self.time_scale(params)
        if direction == "reset":
            scale = scale * (self.tau50_reset / self.tau50_set)
        p = self._curve(np.log(pulse.duration) - np.log(scale))
        if abs(pulse.amplitude) < self.min_switch_amplitude:
            p = np.zeros_like(p)
        return np.asarray(p)[()]

    def set_probability(self, params, pulse):
        return self._probability(params, pulse, "set")

    def reset_probability(self, params, pulse):
        return self._probability(params, pulse, "reset")

    def apply_pulse(self, state, params, pulse, rng):
        """Return the post-pulse state(s); draws one uniform per cell."""
        scalar = np.ndim(state) == 0 and params.shape == ()
        state = np.asarray(state, dtype=bool)
        if abs(pulse.amplitude) <= self.read_amplitude_max:
            new = state.copy()
        else:
            direction = pulse.direction
            shape = np.broadcast_shapes(state.shape, params.shape)
            u = rng.random(shape)
            if direction == "set":
                switched = ~state & (u < self.set_probability(params, pulse))
                new = state | switched
            else:
                switched = state & (u < self.reset_probability(params, pulse))
                new = state & ~switched
        if scalar:
            return DeviceState(int(new))
        return new


DEFAULT_MODEL = DeviceModel()


def resistance(params, state, model=DEFAULT_MODEL):
    """Resistance in ohms of cell(s) ``params`` in ``state``."""
    return model.resistance(params, state)


def set_probability(params, pulse, model=DEFAULT_MODEL):
    """Probability that ``pulse`` switches an HRS cell to LRS."""
    return model.set_probability(params, pulse)


def apply_pulse(state, params, pulse, rng, model=DEFAULT_MODEL):
    return model.apply_pulse(state, params, pulse, rng)


# -- calibration --------------------------------------------------------------


def calibrate_resistance(hrs_target=HRS_TARGET, lrs_target=LRS_TARGET):
    """Return ``(k_hrs, k_lrs)`` so the nominal cell hits both targets."""
    if not 0 < lrs_target < hrs_target:
        raise ConvergenceError(f"inconsistent resistance targets: HRS {hrs_target} <= LRS {lrs_target}")
    nominal = DeviceParams.nominal()
    geometry = nominal.l_disc / nominal.r_disc**2
    return hrs_target * nominal.n_disc_min / geometry, lrs_target * nominal.n_disc_max / geometry


def calibrate_switching(table=SWITCHING_TABLE, t_min=15e-9, t_max=7e-3, initial=None, max_residual=0.05):
    """Least-squares fit of ``(tau50_set, sigma_tau)`` to a pulse-width table.

    Only rows strictly between 0 and 1 enter the fit; the saturated rows are
    carried by the truncation window. Returns ``(tau50, sigma, residuals)``
    where residuals cover every row of ``table``.
    """
    durations = np.array([row[0] for row in table], dtype=float)
    targets = np.array([row[1] for row in table], dtype=float)
    inner = (targets > 0) & (targets < 1)
    if inner.sum() < 2:
        raise ConvergenceError("need at least two unsaturated rows to fit the switching curve")
    if initial is None:
        initial = (_TAU50_SET, _SIGMA_TAU)
    log_lo, log_hi = np.log(t_min), np.log(t_max)

    def model_for(x):
        return DeviceModel(tau50_set=float(np.exp(x[0])), sigma_tau=float(x[1]), t_min=t_min, t_max=t_max)

    def residuals(x):
        if not log_lo < x[0] < log_hi or x[1] <= 0:
            return np.full(inner.sum(), 10.0)
        model = model_for(x)
        return model._curve(np.log(durations[inner])) - targets[inner]

    fit = least_squares(
        residuals,
        x0=[np.log(initial[0]), initial[1]],
        bounds=([log_lo + 1e-6, 1e-3], [log_hi - 1e-6, 50.0]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    model = model_for(fit.x)
    all_residuals = np.asarray(model._curve(np.log(durations))) - targets
    if not fit.success or np.max(np.abs(all_residuals)) > max_residual:
        dump = ", ".join(f"{d:.3g}s: {r:+.4f}" for d, r in zip(durations, all_residuals))
        raise ConvergenceError(f"switching-curve fit did not converge (residuals {dump})")
    return model.tau50_set, model.sigma_tau, all_residuals
