"""Crossbar PUF: entropy enrollment, challenge mapping, CSA sensing, CRP I/O.

A challenge bit drives its row at the read voltage (1) or at 0 V (0); every
column sits at virtual ground and a per-column current comparator turns the
column current into a response bit. Because every line is driven, the
column currents are linear in the row voltages and are evaluated through
the crossbar's cached transfer matrix.

Comparator references come in two flavours. ``"fixed"`` compares column
``j`` against a constant current. ``"tracking"`` models a replica reference
column driven by the same rows, so the reference grows in proportion to the
number of driven rows; thresholds are then quoted at full drive (all rows
at the read voltage) and scaled by ``weight / n`` per challenge.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import seeding
from .crossbar import Crossbar, DriveVector
from .device import DEFAULT_MODEL, PulseSpec
from .errors import DomainError, ParseError
from .trng import RESET_PULSE, pulse_generate, writeback_generate

READ_VOLTAGE = 0.2
ENTROPY_METHODS = ("writeback", "halfpulse")
REFERENCES = ("tracking", "fixed")


def initialize_entropy(xbar, method="writeback", pulse=None):
    """Program the crossbar with a fresh TRNG bitmap; D2D parameters are kept."""
    if method == "writeback":
        writeback_generate(xbar)
    elif method == "halfpulse":
        if pulse is None:
            pulse = PulseSpec(-0.8, xbar.model.tau50_set, 1e-9, 1e-9, polarity="set")
        xbar.pulse_all(RESET_PULSE)
        pulse_generate(xbar, pulse)
    else:
        raise DomainError(f"unknown entropy method {method!r}")
    return xbar


def _as_challenges(challenges, n):
    c = np.asarray(challenges)
    if c.ndim == 1:
        c = c[None, :]
    if c.ndim != 2 or c.shape[1] != n:
        raise DomainError(f"challenges must have {n} bits, got shape {np.shape(challenges)}")
    if np.any((c != 0) & (c != 1)):
        raise DomainError("challenge bits must be 0 or 1")
    return c.astype(np.uint8)


def map_challenge(challenge, m, read_voltage=READ_VOLTAGE, n_rows=None):
    """Bit 1 drives its row at ``read_voltage``, bit 0 at 0 V; all ``m`` columns grounded.

    ``n_rows``, when given, is the crossbar height the challenge must match.
    """
    c = np.asarray(challenge)
    if c.ndim != 1:
        raise DomainError("map_challenge takes a single challenge vector")
    c = _as_challenges(c, c.size if n_rows is None else n_rows)[0]
    return DriveVector(c.astype(float) * read_voltage, np.ones(m, dtype=bool))


def random_challenges(rng, count, n):
    return rng.integers(0, 2, size=(count, n), dtype=np.uint8)


def reference_scale(challenges, reference="tracking"):
    """Per-challenge multiplier applied to full-drive thresholds."""
    c = np.asarray(challenges)
    if reference == "fixed":
        return np.ones(c.shape[:-1] + (1,))
    if reference == "tracking":
        return c.sum(axis=-1, keepdims=True) / c.shape[-1]
    raise DomainError(f"reference must be one of {REFERENCES}")


def calibrate_thresholds(xbar, n_cal, rng, read_voltage=READ_VOLTAGE, reference="tracking"):
    """Per-column median over ``n_cal`` uniformly random challenges.

    For a fixed reference this is the median column current. For a tracking
    reference it is the median of the current normalised to full drive;
    all-zero challenges carry no information there and are skipped.
    """
    if n_cal < 100:
        raise DomainError("threshold calibration needs at least 100 challenges")
    challenges = random_challenges(rng, n_cal, xbar.n)
    return thresholds_from(xbar, challenges, read_voltage, reference)


def thresholds_from(xbar, challenges, read_voltage=READ_VOLTAGE, reference="tracking"):
    currents = xbar.column_currents(challenges * read_voltage)
    scale = reference_scale(challenges, reference)
    keep = scale[:, 0] > 0
    return np.median(currents[keep] / scale[keep], axis=0)


def sense(currents, thresholds, scale=1.0):
    """Comparator: 1 iff the current exceeds ``thresholds * scale`` (ties read 0)."""
    currents = getattr(currents, "column_currents", currents)
    currents = np.asarray(currents, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if currents.shape[-1] != thresholds.shape[-1]:
        raise DomainError("current and threshold vectors differ in length")
    return (currents > thresholds * scale).astype(np.uint8)


@dataclass
class CRPSet:
    """Ordered challenge/response pairs from one crossbar."""

    challenges: np.ndarray
    responses: np.ndarray
    thresholds: np.ndarray
    tag: dict = field(default_factory=dict)

    def __post_init__(self):
        self.challenges = np.asarray(self.challenges, dtype=np.uint8)
        self.responses = np.asarray(self.responses, dtype=np.uint8)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if len(self.challenges) != len(self.responses):
            raise DomainError("challenge and response counts differ")

    def __len__(self):
        return len(self.challenges)


def collect_crps(xbar, challenges, thresholds, rng=None, read_voltage=READ_VOLTAGE, noise=0.0, reference="tracking"):
    """Evaluate challenges (an array, or a count of random ones drawn from ``rng``).

    Reads are non-destructive: the crossbar is left untouched.
    """
    if np.ndim(challenges) == 0:
        if rng is None:
            raise DomainError("a random challenge count needs an rng")
        challenges = random_challenges(rng, int(challenges), xbar.n)
    c = _as_challenges(challenges, xbar.n)
    currents = xbar.column_currents(c * read_voltage)
    scale = reference_scale(c, reference)
    if noise:
        if rng is None:
            raise DomainError("read noise needs an rng")
        currents = currents + rng.normal(0.0, noise * np.abs(thresholds * scale))
    return CRPSet(c, sense(currents, thresholds, scale), thresholds, {"reference": reference})


# -- file formats ---------------------------------------------------------------


def _to_hex(bits):
    digits = (len(bits) + 3) // 4
    value = int("".join("1" if b else "0" for b in bits), 2) if len(bits) else 0
    return format(value, f"0{digits}x")


def _from_hex(text, width, line):
    try:
        value = int(text, 16)
    except ValueError:
        raise ParseError(f"bad hex field {text!r}", line=line) from None
    if value >> width:
        raise ParseError(f"{text!r} does not fit in {width} bits", line=line)
    return [(value >> (width - 1 - k)) & 1 for k in range(width)]


def save_crps(crps, path, thresholds_path=None):
    """CSV of hex challenge/response pairs; bit 0 is the most significant."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in crps.tag.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(f"# challenge_bits: {crps.challenges.shape[1]}\n")
        fh.write(f"# response_bits: {crps.responses.shape[1]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["challenge_hex", "response_hex"])
        for c, r in zip(crps.challenges, crps.responses):
            writer.writerow([_to_hex(c), _to_hex(r)])
    if thresholds_path is not None:
        save_thresholds(crps.thresholds, thresholds_path)


def save_thresholds(thresholds, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("column,threshold_A\n")
        for j, t in enumerate(thresholds):
            fh.write(f"{j},{t:.12g}\n")


def load_thresholds(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[1]) for r in rows[1:] if r], dtype=float)


def load_crps(path, thresholds_path=None):
    tag, body = {}, []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                tag[key.strip()] = value.strip()
            elif line.strip():
                body.append((number, line))
    try:
        n_bits, m_bits = int(tag.pop("challenge_bits")), int(tag.pop("response_bits"))
    except KeyError:
        raise ParseError("missing challenge_bits/response_bits header") from None
    if not body or body[0][1].strip() != "challenge_hex,response_hex":
        raise ParseError("expected header challenge_hex,response_hex")
    challenges, responses = [], []
    for number, line in body[1:]:
        record = next(csv.reader(io.StringIO(line)))
        if len(record) != 2:
            raise ParseError("expected 2 fields", line=number)
        challenges.append(_from_hex(record[0], n_bits, number))
        responses.append(_from_hex(record[1], m_bits, number))
    thresholds = load_thresholds(thresholds_path) if thresholds_path else np.zeros(m_bits)
    return CRPSet(
        np.array(challenges, dtype=np.uint8).reshape(-1, n_bits),
        np.array(responses, dtype=np.uint8).reshape(-1, m_bits),
        thresholds,
        tag,
    )


# -- estimator -------------------------------------------------------------------


class CrossbarPUF(BaseEstimator):
    """A simulated crossbar PUF instance.

    ``fit`` performs enrollment: sample a crossbar (device-to-device draw),
    program it with a TRNG bitmap and calibrate the comparator thresholds.
    ``X`` passed to ``fit`` replaces the random calibration challenges.
    ``predict`` maps challenges ``(n_samples, n_rows)`` to responses
    ``(n_samples, n_cols)``.

    ``read_noise`` adds Gaussian current noise with standard deviation equal
    to that fraction of each column's applied threshold; the default is
    noiseless.
    """

    def __init__(
        self,
        n_rows=16,
        n_cols=16,
        entropy="halfpulse",
        reference="tracking",
        n_cal=10_000,
        read_voltage=READ_VOLTAGE,
        r_wire=2.5,
        read_noise=0.0,
        half_pulse=None,
        variation=None,
        device_model=None,
        random_state=None,
    ):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.entropy = entropy
        self.reference = reference
        self.n_cal = n_cal
        self.read_voltage = read_voltage
        self.r_wire = r_wire
        self.read_noise = read_noise
        self.half_pulse = half_pulse
        self.variation = variation
        self.device_model = device_model
        self.random_state = random_state

    def _seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy)
        if isinstance(self.random_state, np.random.Generator):
            return int(self.random_state.integers(2**63))
        return int(self.random_state)

    def fit(self, X=None, y=None):
        if self.entropy not in ENTROPY_METHODS:
            raise DomainError(f"entropy must be one of {ENTROPY_METHODS}")
        if self.reference not in REFERENCES:
            raise DomainError(f"reference must be one of {REFERENCES}")
        if self.read_noise < 0:
            raise DomainError("read_noise must be non-negative")
        seed = self._seed()
        model = DEFAULT_MODEL if self.device_model is None else self.device_model
        xbar = Crossbar.sample(
            self.n_rows,
            self.n_cols,
            seeding.derive_rng(seed, seeding.CROSSBAR),
            variation=self.variation,
            r_wire=self.r_wire,
            model=model,
        )
        initialize_entropy(xbar, self.entropy, self.half_pulse)
        if X is None:
            thresholds = calibrate_thresholds(
                xbar, self.n_cal, seeding.derive_rng(seed, seeding.CALIBRATION), self.read_voltage, self.reference
            )
        else:
            thresholds = thresholds_from(xbar, self._validate(X), self.read_voltage, self.reference)
        self.crossbar_ = xbar
        self.thresholds_ = thresholds
        self.noise_rng_ = seeding.derive_rng(seed, seeding.NOISE)
        self.seed_ = seed
        self.n_features_in_ = self.n_rows
        return self

    def _validate(self, X):
        X = check_array(X, dtype=None, ensure_min_samples=1)
        return _as_challenges(X, self.n_rows)

    def decision_function(self, X):
        """Column current minus applied threshold, in amperes."""
        check_is_fitted(self, "thresholds_")
        X = self._validate(X)
        currents = self.crossbar_.column_currents(X * self.read_voltage)
        applied = self.thresholds_ * reference_scale(X, self.reference)
        if self.read_noise:
            currents = currents + self.noise_rng_.normal(0.0, self.read_noise * np.abs(applied))
        return currents - applied

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.uint8)

    def collect(self, X):
        X = self._validate(X)
        tag = {"seed": self.seed_, "entropy": self.entropy, "reference": self.reference}
        return CRPSet(X, self.predict(X), self.thresholds_.copy(), tag)
