import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rramsec import device
from rramsec.device import (
    DEFAULT_MODEL,
    PARAM_RANGES,
    SWITCHING_TABLE,
    DeviceModel,
    DeviceParams,
    DeviceState,
    PulseSpec,
)
from rramsec.errors import ConvergenceError, DomainError
from rramsec.variation import VariationSpec, sample_d2d

SET_08 = dict(amplitude=-0.8, rise=1e-9, fall=1e-9, polarity="set")


def set_pulse(duration):
    return PulseSpec(duration=duration, **SET_08)


def params_strategy():
    def within(name):
        low, _, up = PARAM_RANGES[name]
        return st.floats(low, up, allow_nan=False)

    return st.builds(DeviceParams, within("n_disc_min"), within("n_disc_max"), within("r_disc"), within("l_disc"))


def reference_curve(duration, tau50, sigma, t_min, t_max):
    """Doubly-truncated log-normal CDF with median ``tau50``, from math.erf and bisection."""

    def phi(x):
        return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))

    lo, hi = math.log(t_min), math.log(t_max)

    def cdf(log_t, mu):
        a, b = phi((lo - mu) / sigma), phi((hi - mu) / sigma)
        return (phi((log_t - mu) / sigma) - a) / (b - a)

    left, right = lo - 4 * sigma, hi + 4 * sigma
    for _ in range(200):
        mid = 0.5 * (left + right)
        # the CDF at a fixed point falls as the location moves right
        if cdf(math.log(tau50), mid) > 0.5:
            left = mid
        else:
            right = mid
    mu = 0.5 * (left + right)
    log_t = min(max(math.log(duration), lo), hi)
    return cdf(log_t, mu)


# -- resistance ----------------------------------------------------------------


def test_nominal_resistances_hit_targets():
    nominal = DeviceParams.nominal()
    assert device.resistance(nominal, DeviceState.HRS) == pytest.approx(65.56e3, rel=1e-12)
    assert device.resistance(nominal, DeviceState.LRS) == pytest.approx(1.64e3, rel=1e-12)


def test_corner_span_brackets_reported_range():
    values = []
    for n_min, r, l in itertools.product((4.0, 16.0), (40.5, 49.5), (0.36, 0.44)):
        values.append(device.resistance(DeviceParams(n_min, 20.0, r, l), DeviceState.HRS))
    low, high = min(values) / 1e3, max(values) / 1e3
    assert low <= 31.0 and high >= 155.0
    assert high <= 155.0 * 1.2


@pytest.mark.xfail(strict=True, reason="the low corner sits 21% under 31 kOhm once the mean is pinned to 65.56 kOhm")
def test_low_corner_within_twenty_percent():
    low = device.resistance(DeviceParams(16.0, 20.0, 49.5, 0.36), DeviceState.HRS) / 1e3
    assert low >= 31.0 * 0.8


@settings(max_examples=200, deadline=None)
@given(params_strategy())
def test_hrs_always_above_lrs(params):
    if params.n_disc_min >= params.n_disc_max:
        return
    hrs = device.resistance(params, DeviceState.HRS)
    lrs = device.resistance(params, DeviceState.LRS)
    assert hrs > DEFAULT_MODEL.decision_boundary > lrs


def test_resistance_is_deterministic_and_vectorised():
    params = sample_d2d(VariationSpec(), np.random.default_rng(3), size=(5, 7))
    first = device.resistance(params, np.zeros((5, 7), dtype=bool))
    second = device.resistance(params, np.zeros((5, 7), dtype=bool))
    assert first.shape == (5, 7)
    assert np.array_equal(first, second)
    for i, j in [(0, 0), (4, 6), (2, 3)]:
        assert first[i, j] == device.resistance(params[i, j], DeviceState.HRS)


@pytest.mark.parametrize("field,value", [("n_disc_min", 3.0), ("r_disc", 60.0), ("l_disc", 0.5), ("n_disc_max", float("nan"))])
def test_out_of_range_params_rejected(field, value):
    params = DeviceParams.nominal().replace(**{field: value})
    with pytest.raises(DomainError):
        device.resistance(params, DeviceState.HRS)


def test_resistance_calibration_reproduces_default_constants():
    k_hrs, k_lrs = device.calibrate_resistance()
    assert k_hrs == pytest.approx(DEFAULT_MODEL.k_hrs, rel=1e-12)
    assert k_lrs == pytest.approx(DEFAULT_MODEL.k_lrs, rel=1e-12)
    with pytest.raises(ConvergenceError):
        device.calibrate_resistance(1.0e3, 2.0e3)


# -- switching probability -------------------------------------------------------


def test_table_examples_at_nominal():
    nominal = DeviceParams.nominal()
    assert abs(device.set_probability(nominal, set_pulse(3e-6)) - 0.5) <= 0.02
    assert device.set_probability(nominal, set_pulse(10e-9)) <= 0.01
    assert device.set_probability(nominal, set_pulse(10e-3)) >= 0.99


@pytest.mark.parametrize("duration", [10e-9, 20e-9, 100e-9, 1e-6, 3e-6, 10e-6, 1e-3, 6e-3, 10e-3])
def test_curve_matches_independent_reference(duration):
    m = DEFAULT_MODEL
    expected = reference_curve(duration, m.tau50_set, m.sigma_tau, m.t_min, m.t_max)
    assert device.set_probability(DeviceParams.nominal(), set_pulse(duration)) == pytest.approx(expected, abs=1e-9)


def test_median_is_tau50_and_scales_with_geometry():
    params = DeviceParams(8.0, 20.0, 40.5, 0.44)
    tau50 = DEFAULT_MODEL.tau50(params)
    assert tau50 == pytest.approx(DEFAULT_MODEL.tau50_set * (0.44 / 0.4) * (45 / 40.5) ** 2, rel=1e-12)
    assert device.set_probability(params, set_pulse(tau50)) == pytest.approx(0.5, abs=1e-9)


def test_below_switching_amplitude_gives_zero():
    pulse = PulseSpec(0.45, 10e-3, polarity="set")
    assert device.set_probability(DeviceParams.nominal(), pulse) == 0.0


def test_non_positive_duration_rejected():
    with pytest.raises(DomainError):
        PulseSpec(2.0, 0.0)
    with pytest.raises(DomainError):
        PulseSpec(2.0, -1e-9)


def test_monotone_in_duration_over_random_params():
    params = sample_d2d(VariationSpec(), np.random.default_rng(11), size=10_000)
    durations = np.logspace(-9, -1, 20)
    curves = np.stack([device.set_probability(params, set_pulse(d)) for d in durations])
    assert np.all(np.diff(curves, axis=0) >= 0)
    assert np.all((curves >= 0) & (curves <= 1))


def test_nominal_reset_is_deterministic():
    reset = PulseSpec.reset(-2.0, 25e-9)
    assert DEFAULT_MODEL.reset_probability(DeviceParams.nominal(), reset) == 1.0
    spec = VariationSpec()
    params = sample_d2d(spec, np.random.default_rng(0), size=1000)
    assert np.all(DEFAULT_MODEL.reset_probability(params, reset) == 1.0)


# -- apply_pulse ---------------------------------------------------------------


def test_read_pulse_never_changes_state():
    rng = np.random.default_rng(0)
    nominal = DeviceParams.nominal()
    for state in (DeviceState.HRS, DeviceState.LRS):
        for amplitude in (0.2, -0.3, 0.3):
            assert device.apply_pulse(state, nominal, PulseSpec(amplitude, 1.0), rng) == state


def test_long_set_switches_essentially_always():
    rng = np.random.default_rng(1)
    nominal = DeviceParams.from_array(np.tile(DeviceParams.nominal().as_array(), (10_000, 1)))
    after = device.apply_pulse(np.zeros(10_000, dtype=bool), nominal, PulseSpec.set(2.0, 10e-3), rng)
    assert after.mean() >= 0.99


def test_wrong_direction_pulses_are_no_ops():
    rng = np.random.default_rng(2)
    nominal = DeviceParams.nominal()
    assert device.apply_pulse(DeviceState.LRS, nominal, PulseSpec.set(2.0, 3e-6), rng) is DeviceState.LRS
    assert device.apply_pulse(DeviceState.HRS, nominal, PulseSpec.reset(), rng) is DeviceState.HRS


@pytest.mark.parametrize("duration", [300e-9, 3e-6, 30e-6])
def test_empirical_switch_rate_within_three_sigma(duration):
    rng = np.random.default_rng(5)
    trials = 20_000
    params = DeviceParams.from_array(np.tile(DeviceParams.nominal().as_array(), (trials, 1)))
    p = float(device.set_probability(DeviceParams.nominal(), set_pulse(duration)))
    after = device.apply_pulse(np.zeros(trials, dtype=bool), params, set_pulse(duration), rng)
    assert abs(after.mean() - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_polarity_tag_overrides_sign():
    assert PulseSpec(-0.8, 1e-6, polarity="set").direction == "set"
    assert PulseSpec(-0.8, 1e-6).direction == "reset"
    assert PulseSpec(2.0, 1e-6).direction == "set"
    with pytest.raises(DomainError):
        PulseSpec(1.0, 1e-6, polarity="sideways")


# -- switching calibration ---------------------------------------------------------


def test_switching_fit_reproduces_table_within_five_points():
    tau50, sigma, residuals = device.calibrate_switching()
    assert len(residuals) == len(SWITCHING_TABLE)
    assert np.max(np.abs(residuals)) <= 0.05
    assert 1e-6 < tau50 < 10e-6


def test_switching_fit_is_idempotent():
    tau50, sigma, _ = device.calibrate_switching()
    again, sigma_again, _ = device.calibrate_switching(initial=(tau50, sigma))
    assert again == pytest.approx(tau50, rel=1e-9)
    assert sigma_again == pytest.approx(sigma, rel=1e-9)
    assert tau50 == pytest.approx(DEFAULT_MODEL.tau50_set, rel=1e-9)


def test_inconsistent_table_fails_to_converge():
    table = [(1e-8, 0.0), (1e-7, 0.9), (1e-6, 0.1), (1e-5, 0.9), (1e-4, 0.1), (1e-2, 1.0)]
    with pytest.raises(ConvergenceError, match="residuals"):
        device.calibrate_switching(table)


def test_model_rejects_bad_constants():
    with pytest.raises(DomainError):
        DeviceModel(k_hrs=-1.0)
    with pytest.raises(DomainError):
        DeviceModel(tau50_set=1.0)
