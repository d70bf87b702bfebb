"""Random-bit generation on the crossbar.

Two harvesting schemes are provided: pairwise write-back, and a single
pulse whose duration switches half the cells on average. ``find_half_pulse``
locates that duration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .crossbar import Crossbar, DriveVector
from .device import DEFAULT_MODEL, PulseSpec
from .errors import ConfigurationError, DomainError, ParseError, SearchError, StateError
from .variation import VariationSpec, sample_d2d

logger = logging.getLogger(__name__)

LINE_WIDTH = 64

FORM_PULSE = PulseSpec.set(2.0, 10e-3)
RESET_PULSE = PulseSpec.reset(-2.0, 25e-9)
WRITE_PULSE = PulseSpec.set(2.0, 10e-3)


@dataclass
class BitStream:
    bits: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if self.bits.size < 1:
            raise DomainError("a bit stream holds at least one bit")
        if np.any(self.bits > 1):
            raise DomainError("bits must be 0 or 1")

    def __len__(self):
        return int(self.bits.size)

    def to_string(self):
        return "".join("1" if b else "0" for b in self.bits)


def matrix_to_stream(matrix, order="row-major", **provenance):
    if order != "row-major":
        raise DomainError(f"unsupported order {order!r}")
    matrix = np.asarray(matrix, dtype=np.uint8)
    provenance.setdefault("shape", "x".join(str(s) for s in matrix.shape))
    return BitStream(matrix.ravel(), dict(provenance))


def stream_to_matrix(stream, shape):
    return np.asarray(stream.bits, dtype=np.uint8).reshape(shape)


def writeback_generate(xbar, read_voltage=0.2, form=FORM_PULSE, reset=RESET_PULSE, write=WRITE_PULSE):
    """Form, reset, then SET the higher-current cell of each adjacent column pair.

    Rows are visited top to bottom and pairs ``(2j, 2j+1)`` left to right.
    A comparison drives the current row at ``read_voltage`` with every other
    row at 0 V and every column at virtual ground, so unselected cells see no
    bias and only wire IR drop couples neighbours into the reading. Exactly
    ``m/2`` cells per row end in LRS.
    """
    if xbar.m % 2:
        raise ConfigurationError("write-back pairs columns, so the column count must be even")
    xbar.pulse_all(form)
    xbar.pulse_all(reset)
    for i in range(xbar.n):
        voltages = np.zeros(xbar.n)
        voltages[i] = read_voltage
        drive = DriveVector(voltages, np.ones(xbar.m, dtype=bool))
        for j in range(0, xbar.m, 2):
            currents = xbar.solve(drive).column_currents
            # ties go to the left cell
            winner = j if currents[j] >= currents[j + 1] else j + 1
            mask = np.zeros(xbar.shape, dtype=bool)
            mask[i, winner] = True
            xbar.pulse_cells(mask, write)
    return xbar.read_states()


def pulse_generate(xbar, pulse):
    """Apply one pulse to an all-HRS crossbar and read the resulting bitmap."""
    if xbar.state.any():
        raise StateError("half-pulse generation needs every cell in HRS")
    xbar.pulse_all(pulse)
    return xbar.read_states()


def expected_switch_fraction(params, duration, amplitude=-0.8, model=DEFAULT_MODEL):
    pulse = PulseSpec(amplitude, duration, 1e-9, 1e-9, polarity="set")
    return float(np.mean(model.set_probability(params, pulse)))


def find_half_pulse(
    spec=None,
    amplitude=-0.8,
    tol=0.03,
    rng=None,
    model=DEFAULT_MODEL,
    n_trials=20,
    shape=(10, 10),
    bracket=(1e-9, 100e-3),
    max_iter=200,
):
    """Bisect log-duration for a pulse that switches half the cells.

    The switched fraction at each probe is estimated over ``n_trials``
    freshly sampled crossbars (the same ones at every probe) as the mean of
    the per-cell switching probabilities, which is the expectation of the
    empirical fraction without its binomial noise.
    """
    if not 0 < tol < 0.5:
        raise DomainError("tol must lie in (0, 0.5)")
    spec = VariationSpec() if spec is None else spec
    rng = np.random.default_rng(0) if rng is None else rng
    params = sample_d2d(spec, rng, size=(n_trials,) + tuple(shape))

    def fraction(log_d):
        return expected_switch_fraction(params, math.exp(log_d), amplitude, model)

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    f_lo, f_hi = fraction(lo), fraction(hi)
    if not f_lo < 0.5 < f_hi:
        raise SearchError(f"switched fraction {f_lo:.3f}..{f_hi:.3f} does not bracket 0.5")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fraction(mid)
        logger.debug("probe %.4g s -> %.5f", math.exp(mid), f_mid)
        if abs(f_mid - 0.5) <= tol:
            return PulseSpec(amplitude, math.exp(mid), 1e-9, 1e-9, polarity="set")
        if f_mid < 0.5:
            lo = mid
        else:
            hi = mid
    raise SearchError(f"no pulse within {tol} of 50% after {max_iter} probes")


def harvest(
    method,
    total_bits,
    master_seed,
    shape=(16, 16),
    variation=None,
    model=DEFAULT_MODEL,
    r_wire=2.5,
    pulse=None,
    writeback_pulses=None,
):
    """Concatenate bitmaps from fresh crossbars until ``total_bits`` are collected.

    Harvest ``h`` uses the crossbar and switching randomness of
    ``derive_rng(master_seed, HARVEST, h)``; the stream is truncated to
    ``total_bits``. ``writeback_pulses`` optionally overrides the
    ``form``/``reset``/``write`` pulses of :func:`writeback_generate`.
    Without ``pulse``, half-pulse harvesting first runs
    :func:`find_half_pulse` on a stream derived from ``master_seed``.
    """
    if total_bits < 1:
        raise DomainError("total_bits must be positive")
    if method not in ("writeback", "halfpulse"):
        raise DomainError(f"unknown TRNG method {method!r}")
    if method == "halfpulse" and pulse is None:
        pulse = find_half_pulse(variation, rng=seeding.derive_rng(master_seed, seeding.SEARCH), model=model)
    n, m = shape
    count = math.ceil(total_bits / (n * m))
    chunks = []
    for h in range(count):
        rng = seeding.derive_rng(master_seed, seeding.HARVEST, h)
        xbar = Crossbar.sample(n, m, rng, variation=variation, r_wire=r_wire, model=model)
        if method == "writeback":
            chunks.append(writeback_generate(xbar, **(writeback_pulses or {})).ravel())
        else:
            chunks.append(pulse_generate(xbar, pulse).ravel())
    provenance = {"method": method, "seed": int(master_seed), "shape": f"{n}x{m}", "harvests": count}
    if pulse is not None and method == "halfpulse":
        provenance["pulse_duration_s"] = repr(pulse.duration)
    return BitStream(np.concatenate(chunks)[:total_bits], provenance)


def save_stream(stream, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in stream.provenance.items():
            fh.write(f"# {key}: {value}\n")
        text = stream.to_string()
        for start in range(0, len(text), LINE_WIDTH):
            fh.write(text[start : start + LINE_WIDTH] + "\n")


def load_stream(path):
    provenance, chunks = {}, []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                provenance[key.strip()] = value.strip()
                continue
            if set(line) - {"0", "1"}:
                raise ParseError("bit lines may only contain '0' and '1'", line=number)
            chunks.append(line)
    text = "".join(chunks)
    if not text:
        raise ParseError("no bits in file")
    return BitStream(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"), provenance)
