"""Device-to-device sampling, cycle-to-cycle random walk and CSV schedules."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .device import DEFAULT_MODEL, PARAM_NAMES, PARAM_RANGES, DeviceParams, DeviceState
from .errors import DomainError, ParseError, ValidationError

MAX_REJECTION_ROUNDS = 10_000

SCHEDULE_HEADER = ("timestamp_s", "row", "col") + PARAM_NAMES


@dataclass(frozen=True)
class VariationSpec:
    """Parameter ranges and the knobs of both variation processes.

    ``ranges`` maps each parameter name to ``(low, mean, up)``. Draws use a
    normal distribution with standard deviation ``rsd * mean / 3`` truncated
    to ``[low, up]``. Each C2C step moves a parameter by
    ``c2c_step_fraction * (up - low)``.
    """

    ranges: dict = field(default_factory=lambda: dict(PARAM_RANGES))
    rsd: float = 0.5
    c2c_step_fraction: float = 7e-4

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.ranges)
        if missing:
            raise DomainError(f"missing ranges for {sorted(missing)}")
        for name in PARAM_NAMES:
            low, mean, up = self.ranges[name]
            if not low <= mean <= up:
                raise DomainError(f"{name}: need low <= mean <= up, got {(low, mean, up)}")
        if self.rsd < 0:
            raise DomainError("rsd must be non-negative")
        if not 0 <= self.c2c_step_fraction < 1:
            raise DomainError("c2c_step_fraction must lie in [0, 1)")

    @classmethod
    def degenerate(cls, **kwargs):
        """Zero-width ranges pinned at the nominal means."""
        ranges = {name: (mean, mean, mean) for name, (_, mean, _) in PARAM_RANGES.items()}
        return cls(ranges=ranges, **kwargs)

    @property
    def low(self):
        return np.array([self.ranges[name][0] for name in PARAM_NAMES], dtype=float)

    @property
    def mean(self):
        return np.array([self.ranges[name][1] for name in PARAM_NAMES], dtype=float)

    @property
    def up(self):
        return np.array([self.ranges[name][2] for name in PARAM_NAMES], dtype=float)

    @property
    def sigma(self):
        return self.rsd * self.mean / 3.0


def _truncated_normal(rng, mean, sigma, low, up, shape):
    if up == low or sigma == 0:
        return np.full(shape, min(max(mean, low), up), dtype=float)
    values = rng.normal(mean, sigma, size=shape)
    bad = (values < low) | (values > up)
    rounds = 0
    while bad.any() and rounds < MAX_REJECTION_ROUNDS:
        values[bad] = rng.normal(mean, sigma, size=int(bad.sum()))
        bad = (values < low) | (values > up)
        rounds += 1
    return np.clip(values, low, up)


def sample_d2d(spec, rng, size=None):
    """Draw device parameters for one cell (``size=None``) or an array of cells."""
    shape = (1,) if size is None else (size if isinstance(size, tuple) else (size,))
    low, mean, up, sigma = spec.low, spec.mean, spec.up, spec.sigma
    columns = [_truncated_normal(rng, mean[k], sigma[k], low[k], up[k], shape) for k in range(4)]
    # redraw the vacancy pair wherever the ordering is violated
    for _ in range(MAX_REJECTION_ROUNDS):
        bad = np.asarray(columns[0] >= columns[1])
        if not bad.any():
            break
        k = int(bad.sum())
        columns[0][bad] = _truncated_normal(rng, mean[0], sigma[0], low[0], up[0], (k,))
        columns[1][bad] = _truncated_normal(rng, mean[1], sigma[1], low[1], up[1], (k,))
    if size is None:
        return DeviceParams(*(float(c[0]) for c in columns))
    return DeviceParams(*columns)


def c2c_step(params, spec, rng):
    """One cycle of the reflected ±step random walk on every parameter."""
    low, up = spec.low, spec.up
    values = params.as_array()
    step = spec.c2c_step_fraction * (up - low)
    signs = np.where(rng.random(values.shape) < 0.5, 1.0, -1.0)
    values = values + signs * step
    values = np.where(values > up, 2 * up - values, values)
    values = np.where(values < low, 2 * low - values, values)
    values = np.clip(values, low, up)
    if params.shape == ():
        return DeviceParams(*(float(v) for v in values))
    return DeviceParams.from_array(values)


def simulate_cycles(params, spec, n_cycles, rng, model=DEFAULT_MODEL):
    """Walk ``params`` for ``n_cycles`` RESET/SET cycles.

    Returns ``(hrs, lrs)``: the resistance read after each RESET and each SET.
    Both programming pulses are long enough to switch deterministically, so
    only the parameter walk moves the readings.
    """
    hrs = np.empty(n_cycles)
    lrs = np.empty(n_cycles)
    for t in range(n_cycles):
        params = c2c_step(params, spec, rng)
        hrs[t] = model.resistance(params, DeviceState.HRS)
        lrs[t] = model.resistance(params, DeviceState.LRS)
    return hrs, lrs


def running_mean_excursion(values):
    """Largest relative deviation of a series from its cumulative mean."""
    values = np.asarray(values, dtype=float)
    running = np.cumsum(values) / np.arange(1, len(values) + 1)
    return float(np.max(np.abs(values / running - 1.0)))


@dataclass(frozen=True, eq=False)
class ParamSchedule:
    """Timestamped per-cell parameter records."""

    timestamps: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray  # (N, 4) in PARAM_NAMES order

    def __post_init__(self):
        for name, dtype in (("timestamps", float), ("rows", np.int64), ("cols", np.int64), ("values", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.values.size == 0:
            object.__setattr__(self, "values", self.values.reshape(0, 4))

    def __len__(self):
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, ParamSchedule):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("timestamps", "rows", "cols", "values")
        )

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 4)))

    def validate(self, spec=None, shape=None):
        spec = VariationSpec() if spec is None else spec
        if np.any(np.diff(self.timestamps) < 0):
            raise ValidationError("timestamps must be nondecreasing")
        if shape is not None:
            n, m = shape
            if np.any((self.rows < 0) | (self.rows >= n) | (self.cols < 0) | (self.cols >= m)):
                raise ValidationError(f"cell index outside a {n}x{m} crossbar")
        bad = (self.values < spec.low) | (self.values > spec.up)
        if bad.any():
            record, k = np.argwhere(bad)[0]
            raise ValidationError(
                f"record {record}: {PARAM_NAMES[k]}={self.values[record, k]} outside "
                f"[{spec.low[k]}, {spec.up[k]}]"
            )
        return self


def generate_schedule(spec, shape, n_cycles, rng, period=100e-9):
    """D2D draw followed by ``n_cycles`` C2C steps, one record per cell per cycle."""
    n, m = shape
    params = sample_d2d(spec, rng, size=(n, m))
    rows, cols = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    stamps, values = [], []
    for cycle in range(n_cycles + 1):
        if cycle:
            params = c2c_step(params, spec, rng)
        stamps.append(np.full(n * m, cycle * period))
        values.append(params.as_array().reshape(-1, 4))
    return ParamSchedule(
        np.concatenate(stamps),
        np.tile(rows.ravel(), n_cycles + 1),
        np.tile(cols.ravel(), n_cycles + 1),
        np.concatenate(values),
    )


def save_schedule(schedule, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCHEDULE_HEADER)
        for t, i, j, v in zip(schedule.timestamps, schedule.rows, schedule.cols, schedule.values):
            writer.writerow([repr(float(t)), int(i), int(j)] + [repr(float(x)) for x in v])


def load_schedule(path, spec=None, shape=None):
    """Parse and validate a schedule CSV; errors name the offending line."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header", line=1) from None
    if tuple(h.strip() for h in header) != SCHEDULE_HEADER:
        raise ParseError(f"expected header {','.join(SCHEDULE_HEADER)}", line=1)
    stamps, rows, cols, values = [], [], [], []
    for record in reader:
        line = reader.line_num
        if not record:
            continue
        if len(record) != len(SCHEDULE_HEADER):
            raise ParseError(f"expected {len(SCHEDULE_HEADER)} fields, got {len(record)}", line=line)
        try:
            stamps.append(float(record[0]))
            rows.append(int(record[1]))
            cols.append(int(record[2]))
            values.append([float(x) for x in record[3:]])
        except ValueError as exc:
            raise ParseError(str(exc), line=line) from None
    if not stamps:
        schedule = ParamSchedule.empty()
    else:
        schedule = ParamSchedule(stamps, rows, cols, values)
    return schedule.validate(spec, shape)
