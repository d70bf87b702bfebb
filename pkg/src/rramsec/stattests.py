"""Randomness battery following the NIST SP 800-22 reference definitions.

Ten of the fifteen SP 800-22 tests are implemented. Each returns a
:class:`TestResult`; streams shorter than a test's recommended minimum are
reported as not applicable instead of failing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .errors import DomainError

DEFAULT_ALPHA = 0.01

OMITTED = (
    "overlapping_template",
    "universal",
    "linear_complexity",
    "random_excursions",
    "random_excursions_variant",
)

# Two aperiodic 9-bit templates; enough for a min-p verdict without the
# 148-template table.
DEFAULT_TEMPLATES = ("000000001", "111111110")

# Rounded rank-class shares (full, full - 1, lower) quoted for 32 x 32 matrices.
ROUNDED_RANK_PROBABILITIES = (0.2888, 0.5776, 0.1336)

# Longest-run class boundaries and probabilities, keyed by block length.
_LONGEST_RUN = {
    8: (1, 4, [0.2148, 0.3672, 0.2305, 0.1875]),
    128: (4, 9, [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124]),
    10000: (10, 16, [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727]),
}


@dataclass
class TestResult:
    name: str
    params: dict
    p_values: list
    passed: bool
    bits_consumed: int
    applicable: bool = True

    __test__ = False  # keep pytest from collecting this class

    @property
    def status(self):
        if not self.applicable:
            return "NA"
        return "pass" if self.passed else "fail"


@dataclass
class SuiteReport:
    results: list
    alpha: float = DEFAULT_ALPHA
    provenance: dict = field(default_factory=dict)
    omitted: tuple = OMITTED

    @property
    def applicable(self):
        return [r for r in self.results if r.applicable]

    @property
    def n_passed(self):
        return sum(r.passed for r in self.applicable)

    def result(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "provenance": dict(self.provenance),
            "passed": self.n_passed,
            "applicable": len(self.applicable),
            "omitted": list(self.omitted),
            "results": [asdict(r) | {"status": r.status} for r in self.results],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = [f"{r.name}: {r.status}" for r in self.results]
        lines.append(f"passed {self.n_passed}/{len(self.applicable)} applicable at alpha={self.alpha}")
        return "\n".join(lines) + "\n"


def _bits(stream):
    bits = getattr(stream, "bits", stream)
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size == 0:
        raise DomainError("stream is empty")
    if np.any((bits != 0) & (bits != 1)):
        raise DomainError("stream must contain only 0 and 1")
    return bits


def _igamc(a, x):
    return float(gammaincc(a, x))


def _clip(p):
    return float(min(1.0, max(0.0, p)))


def _result(name, params, p_values, n, alpha, applicable=True):
    if not applicable:
        return TestResult(name, params, [], False, 0, applicable=False)
    p_values = [_clip(p) for p in p_values]
    return TestResult(name, params, p_values, min(p_values) >= alpha, int(n))


def frequency(bits, alpha=DEFAULT_ALPHA, min_length=100):
    x = _bits(bits)
    n = x.size
    if n < min_length:
        return _result("frequency", {}, [], n, alpha, applicable=False)
    s_obs = abs(int(np.sum(2 * x - 1))) / math.sqrt(n)
    return _result("frequency", {}, [erfc(s_obs / math.sqrt(2))], n, alpha)


def block_frequency(bits, block_size=128, alpha=DEFAULT_ALPHA, min_length=100):
    x = _bits(bits)
    n = x.size
    blocks = n // block_size
    params = {"M": block_size}
    if n < min_length or blocks < 1:
        return _result("block_frequency", params, [], n, alpha, applicable=False)
    pi = x[: blocks * block_size].reshape(blocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    return _result("block_frequency", params, [_igamc(blocks / 2, chi2 / 2)], blocks * block_size, alpha)


def runs(bits, alpha=DEFAULT_ALPHA, min_length=100):
    """Total-runs test; a failed frequency prerequisite yields p = 0."""
    x = _bits(bits)
    n = x.size
    if n < min_length:
        return _result("runs", {}, [], n, alpha, applicable=False)
    pi = x.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return _result("runs", {}, [0.0], n, alpha)
    v_obs = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    num = abs(v_obs - 2 * n * pi * (1 - pi))
    den = 2 * math.sqrt(2 * n) * pi * (1 - pi)
    return _result("runs", {}, [erfc(num / den)], n, alpha)


def _longest_runs_per_block(blocks):
    best = np.zeros(len(blocks), dtype=int)
    current = np.zeros(len(blocks), dtype=int)
    for column in blocks.T:
        current = np.where(column == 1, current + 1, 0)
        best = np.maximum(best, current)
    return best


def longest_run(bits, alpha=DEFAULT_ALPHA):
    """Longest run of ones in blocks; block length follows the stream length."""
    x = _bits(bits)
    n = x.size
    if n < 128:
        return _result("longest_run", {}, [], n, alpha, applicable=False)
    block = 8 if n < 6272 else 128 if n < 750000 else 10000
    low, high, probs = _LONGEST_RUN[block]
    count = n // block
    longest = _longest_runs_per_block(x[: count * block].reshape(count, block))
    classes = np.clip(longest, low, high) - low
    observed = np.bincount(classes, minlength=len(probs))
    expected = count * np.asarray(probs)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    k = len(probs) - 1
    return _result("longest_run", {"M": block}, [_igamc(k / 2, chi2 / 2)], count * block, alpha)


def _trunc_div(a, b):
    # integer division rounding toward zero, as the reference C code does
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cusum_p(n, z):
    sqrt_n = math.sqrt(n)
    total1 = 0.0
    for k in range(_trunc_div(-_trunc_div(n, z) + 1, 4), _trunc_div(_trunc_div(n, z) - 1, 4) + 1):
        total1 += norm.cdf((4 * k + 1) * z / sqrt_n) - norm.cdf((4 * k - 1) * z / sqrt_n)
    total2 = 0.0
    for k in range(_trunc_div(-_trunc_div(n, z) - 3, 4), _trunc_div(_trunc_div(n, z) - 1, 4) + 1):
        total2 += norm.cdf((4 * k + 3) * z / sqrt_n) - norm.cdf((4 * k + 1) * z / sqrt_n)
    return 1.0 - total1 + total2


def cumulative_sums(bits, alpha=DEFAULT_ALPHA, min_length=100):
    """Forward and backward maximal excursions; two p-values."""
    x = _bits(bits)
    n = x.size
    if n < min_length:
        return _result("cumulative_sums", {}, [], n, alpha, applicable=False)
    steps = 2 * x - 1
    forward = int(np.max(np.abs(np.cumsum(steps))))
    backward = int(np.max(np.abs(np.cumsum(steps[::-1]))))
    return _result("cumulative_sums", {}, [_cusum_p(n, forward), _cusum_p(n, backward)], n, alpha)


def _pattern_counts(x, m):
    """Overlapping m-bit pattern counts with wrap-around."""
    if m == 0:
        return np.array([x.size])
    ext = np.concatenate([x, x[: m - 1]])
    codes = np.zeros(x.size, dtype=np.int64)
    for k in range(m):
        codes = (codes << 1) | ext[k : k + x.size]
    return np.bincount(codes, minlength=2**m)


def _psi2(x, m):
    if m <= 0:
        return 0.0
    counts = _pattern_counts(x, m).astype(float)
    return (2.0**m / x.size) * float(np.sum(counts**2)) - x.size


def serial(bits, m=2, alpha=DEFAULT_ALPHA):
    x = _bits(bits)
    n = x.size
    params = {"m": m}
    if m < 2 or n < 100 or m >= int(math.log2(n)) - 2:
        return _result("serial", params, [], n, alpha, applicable=False)
    psi_m, psi_m1, psi_m2 = _psi2(x, m), _psi2(x, m - 1), _psi2(x, m - 2)
    del1 = psi_m - psi_m1
    del2 = psi_m - 2 * psi_m1 + psi_m2
    return _result("serial", params, [_igamc(2 ** (m - 2), del1 / 2), _igamc(2 ** (m - 3), del2 / 2)], n, alpha)


def _phi(x, m):
    counts = _pattern_counts(x, m)
    c = counts[counts > 0] / x.size
    return float(np.sum(c * np.log(c)))


def approximate_entropy(bits, m=2, alpha=DEFAULT_ALPHA, min_length=100):
    x = _bits(bits)
    n = x.size
    params = {"m": m}
    if m < 1 or n < min_length or m >= int(math.log2(n)) - 5:
        return _result("approximate_entropy", params, [], n, alpha, applicable=False)
    apen = _phi(x, m) - _phi(x, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return _result("approximate_entropy", params, [_igamc(2 ** (m - 1), chi2 / 2)], n, alpha)


def dft_spectral(bits, alpha=DEFAULT_ALPHA, min_length=1000):
    """Spectral peak count below the 95% threshold ``sqrt(ln(20) n)``."""
    x = _bits(bits)
    n = x.size
    if n < min_length:
        return _result("dft_spectral", {}, [], n, alpha, applicable=False)
    modulus = np.abs(np.fft.fft(2.0 * x - 1.0))[: n // 2]
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2
    n1 = int(np.count_nonzero(modulus < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return _result("dft_spectral", {}, [erfc(abs(d) / math.sqrt(2))], n, alpha)


def _count_non_overlapping(block, template):
    m = len(template)
    if len(block) < m:
        return 0
    windows = np.lib.stride_tricks.sliding_window_view(block, m)
    starts = np.flatnonzero(np.all(windows == template, axis=1))
    hits, free_from = 0, 0
    for start in starts:
        if start >= free_from:
            hits += 1
            free_from = start + m
    return hits


def non_overlapping_template(bits, templates=DEFAULT_TEMPLATES, n_blocks=8, alpha=DEFAULT_ALPHA, min_expected=5.0):
    """One p-value per template; pass requires every p-value to clear ``alpha``.

    The test is applicable once every block expects at least
    ``min_expected`` occurrences, the usual chi-square validity condition.
    For 9-bit templates in 8 blocks that is 20544 bits.
    """
    x = _bits(bits)
    n = x.size
    templates = [np.array([int(c) for c in t], dtype=np.int64) for t in templates]
    m = len(templates[0])
    if any(len(t) != m for t in templates):
        raise DomainError("templates must share one length")
    block = n // n_blocks
    params = {"m": m, "N": n_blocks, "templates": ["".join(map(str, t)) for t in templates]}
    if block < m or (block - m + 1) / 2**m < min_expected:
        return _result("non_overlapping_template", params, [], n, alpha, applicable=False)
    mu = (block - m + 1) / 2**m
    var = block * (1 / 2**m - (2 * m - 1) / 2 ** (2 * m))
    blocks = x[: n_blocks * block].reshape(n_blocks, block)
    p_values = []
    for t in templates:
        w = np.array([_count_non_overlapping(b, t) for b in blocks], dtype=float)
        chi2 = float(np.sum((w - mu) ** 2) / var)
        p_values.append(_igamc(n_blocks / 2, chi2 / 2))
    return _result("non_overlapping_template", params, p_values, n_blocks * block, alpha)


def gf2_rank(matrix):
    """Rank over GF(2) by row reduction."""
    a = np.array(matrix, dtype=np.uint8) & 1
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        pivots = np.nonzero(a[rank:, c])[0]
        if pivots.size == 0:
            continue
        p = rank + pivots[0]
        if p != rank:
            a[[rank, p]] = a[[p, rank]]
        below = np.nonzero(a[:, c])[0]
        below = below[below != rank]
        a[below] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def rank_probability(r, rows, cols):
    """Probability that a uniform random ``rows x cols`` GF(2) matrix has rank ``r``."""
    log2p = r * (rows + cols - r) - rows * cols
    prod = 1.0
    for i in range(r):
        prod *= (1 - 2.0 ** (i - rows)) * (1 - 2.0 ** (i - cols)) / (1 - 2.0 ** (i - r))
    return 2.0**log2p * prod


def _exact_rank_shares():
    full, minus = rank_probability(32, 32, 32), rank_probability(31, 32, 32)
    return (full, minus, 1.0 - full - minus)


def binary_matrix_rank(bits, rows=32, cols=32, alpha=DEFAULT_ALPHA, min_matrices=38, probabilities=None):
    """Rank distribution of disjoint ``rows x cols`` GF(2) matrices.

    ``probabilities`` are the expected shares of full rank, one below full,
    and the rest. By default they are the exact 32 x 32 values, whatever the
    matrix size, as in the reference implementation.
    """
    x = _bits(bits)
    n = x.size
    params = {"M": rows, "Q": cols}
    count = n // (rows * cols)
    if count < min_matrices:
        return _result("binary_matrix_rank", params, [], n, alpha, applicable=False)
    full = min(rows, cols)
    ranks = [gf2_rank(mat) for mat in x[: count * rows * cols].reshape(count, rows, cols)]
    f_full = sum(r == full for r in ranks)
    f_minus = sum(r == full - 1 for r in ranks)
    observed = (f_full, f_minus, count - f_full - f_minus)
    if probabilities is None:
        probabilities = _exact_rank_shares()
    chi2 = sum((o - p * count) ** 2 / (p * count) for o, p in zip(observed, probabilities))
    return _result("binary_matrix_rank", params, [math.exp(-chi2 / 2)], count * rows * cols, alpha)


TESTS = {
    "frequency": frequency,
    "block_frequency": block_frequency,
    "runs": runs,
    "longest_run": longest_run,
    "cumulative_sums": cumulative_sums,
    "serial": serial,
    "approximate_entropy": approximate_entropy,
    "dft_spectral": dft_spectral,
    "non_overlapping_template": non_overlapping_template,
    "binary_matrix_rank": binary_matrix_rank,
}


def run_test(stream, test, alpha=DEFAULT_ALPHA, **params):
    try:
        fn = TESTS[test]
    except KeyError:
        raise DomainError(f"unknown test {test!r}; choose from {sorted(TESTS)}") from None
    return fn(stream, alpha=alpha, **params)


def run_suite(stream, alpha=DEFAULT_ALPHA, tests=None):
    """Every configured test in a fixed order."""
    names = list(TESTS) if tests is None else list(tests)
    bits = _bits(stream)
    provenance = dict(getattr(stream, "provenance", {}) or {})
    provenance["n_bits"] = int(bits.size)
    results = [run_test(bits, name, alpha=alpha) for name in names]
    return SuiteReport(results, alpha, provenance)
