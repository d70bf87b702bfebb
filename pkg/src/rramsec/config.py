"""Experiment configuration: nested dataclasses stored as JSON.

Every field has a default, so ``{}`` (or ``{"schema_version": 1}``) is a
valid config. Unknown keys are rejected to catch typos early.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .device import PARAM_RANGES, SWITCHING_TABLE, DeviceModel, PulseSpec
from .errors import ConfigurationError, DomainError
from .variation import VariationSpec

SCHEMA_VERSION = 1

_DEVICE_DEFAULTS = DeviceModel()


def _floats(values):
    return tuple(float(v) for v in values)


@dataclass
class CrossbarConfig:
    n_rows: int = 16
    n_cols: int = 16
    r_wire: float = 2.5


@dataclass
class VariationConfig:
    ranges: dict = field(default_factory=lambda: {k: list(v) for k, v in PARAM_RANGES.items()})
    rsd: float = 0.5
    c2c_step_fraction: float = 7e-4

    def __post_init__(self):
        self.ranges = {str(k): list(_floats(v)) for k, v in self.ranges.items()}

    def to_spec(self):
        return VariationSpec(
            ranges={k: tuple(v) for k, v in self.ranges.items()},
            rsd=self.rsd,
            c2c_step_fraction=self.c2c_step_fraction,
        )


@dataclass
class DeviceConfig:
    k_hrs: float = _DEVICE_DEFAULTS.k_hrs
    k_lrs: float = _DEVICE_DEFAULTS.k_lrs
    tau50_set: float = _DEVICE_DEFAULTS.tau50_set
    tau50_reset: float = _DEVICE_DEFAULTS.tau50_reset
    sigma_tau: float = _DEVICE_DEFAULTS.sigma_tau
    t_min: float = _DEVICE_DEFAULTS.t_min
    t_max: float = _DEVICE_DEFAULTS.t_max
    min_switch_amplitude: float = _DEVICE_DEFAULTS.min_switch_amplitude
    read_amplitude_max: float = _DEVICE_DEFAULTS.read_amplitude_max

    def to_model(self):
        return DeviceModel(**asdict(self))


@dataclass
class CalibrationConfig:
    hrs_target: float = 65.56e3
    lrs_target: float = 1.64e3
    switching_table: list = field(default_factory=lambda: [list(row) for row in SWITCHING_TABLE])

    def __post_init__(self):
        self.switching_table = [list(_floats(row)) for row in self.switching_table]
        if any(len(row) != 2 for row in self.switching_table):
            raise ConfigurationError("switching_table rows are [duration_s, probability]")


@dataclass
class PulseConfig:
    read_amplitude: float = 0.2
    read_duration: float = 10e-9
    set_amplitude: float = 2.0
    set_duration: float = 10e-3
    reset_amplitude: float = -2.0
    reset_duration: float = 25e-9
    half_amplitude: float = -0.8
    half_duration: float | None = None  # None: search for it
    half_search_tol: float = 1e-4

    def set_pulse(self):
        return PulseSpec.set(self.set_amplitude, self.set_duration)

    def reset_pulse(self):
        return PulseSpec.reset(self.reset_amplitude, self.reset_duration)

    def half_pulse(self, duration=None):
        duration = self.half_duration if duration is None else duration
        return PulseSpec(self.half_amplitude, duration, 1e-9, 1e-9, polarity="set")


@dataclass
class TRNGConfig:
    method: str = "halfpulse"
    bits: int = 100_000


@dataclass
class PUFConfig:
    devices: int = 10
    crps: int = 50_000
    entropy: str = "halfpulse"
    reference: str = "tracking"
    n_cal: int = 10_000
    read_noise: float = 0.0
    reliability_repeats: int = 10_000


@dataclass
class SweepConfig:
    durations: list = field(default_factory=lambda: [row[0] for row in SWITCHING_TABLE])
    n_seeds: int = 100
    n_rows: int = 10
    n_cols: int = 10

    def __post_init__(self):
        self.durations = list(_floats(self.durations))


_SECTIONS = {
    "crossbar": CrossbarConfig,
    "variation": VariationConfig,
    "device": DeviceConfig,
    "calibration": CalibrationConfig,
    "pulses": PulseConfig,
    "trng": TRNGConfig,
    "puf": PUFConfig,
    "sweep": SweepConfig,
}


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    alpha: float = 0.01
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    variation: VariationConfig = field(default_factory=VariationConfig)
    device: DeviceConfig = field(default_factory=DeviceConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    pulses: PulseConfig = field(default_factory=PulseConfig)
    trng: TRNGConfig = field(default_factory=TRNGConfig)
    puf: PUFConfig = field(default_factory=PUFConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
        _reject_unknown("config", data, cls)
        kwargs = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigurationError(f"section {key!r} must be an object")
            _reject_unknown(key, value, section)
            try:
                kwargs[key] = section(**value)
            except TypeError as exc:
                raise ConfigurationError(f"section {key!r}: {exc}") from None
        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self):
        """Raise :class:`ConfigurationError` or :class:`DomainError` on bad values."""
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        xb = self.crossbar
        if xb.n_rows < 1 or xb.n_cols < 1:
            raise ConfigurationError("crossbar needs at least one row and one column")
        if xb.r_wire < 0:
            raise ConfigurationError("r_wire must be non-negative")
        self.variation.to_spec()
        self.device.to_model()
        if self.trng.method not in ("writeback", "halfpulse"):
            raise ConfigurationError(f"unknown TRNG method {self.trng.method!r}")
        if self.trng.bits < 1:
            raise ConfigurationError("trng.bits must be positive")
        puf = self.puf
        if puf.devices < 1 or puf.crps < 1 or puf.reliability_repeats < 1:
            raise DomainError("puf.devices, puf.crps and puf.reliability_repeats must be positive")
        if puf.entropy not in ("writeback", "halfpulse"):
            raise ConfigurationError(f"unknown entropy method {puf.entropy!r}")
        if puf.reference not in ("tracking", "fixed"):
            raise ConfigurationError(f"unknown comparator reference {puf.reference!r}")
        if any(d <= 0 for d in self.sweep.durations):
            raise ConfigurationError("sweep durations must be positive")
        if self.sweep.n_seeds < 1:
            raise ConfigurationError("sweep.n_seeds must be positive")
        p = self.pulses
        if p.half_duration is not None and p.half_duration <= 0:
            raise ConfigurationError("pulses.half_duration must be positive")
        return self


def _reject_unknown(where, data, cls):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {unknown}")


def dumps(config):
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dump(config, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(config))
