"""PUF quality metrics: intra-HD, uniformity, uniqueness, bit-aliasing, reliability.

All values are percentages. Hamming distances are normalised by the
response width, so every metric lies in [0, 100].
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class MetricReport:
    name: str
    value: float | None
    samples: dict = field(default_factory=dict)
    per_bit: list | None = None
    histogram: dict | None = None  # {"edges": [...], "counts": [...]}
    applicable: bool = True

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _responses(responses, min_count=1):
    r = np.asarray(responses)
    if r.dtype == object or r.ndim != 2:
        raise DomainError("responses must form a 2-D array of equal-width bit vectors")
    if len(r) < min_count:
        raise DomainError(f"need at least {min_count} responses")
    if np.any((r != 0) & (r != 1)):
        raise DomainError("responses must be 0/1")
    return r.astype(np.uint8)


def _stack(responses):
    try:
        return np.asarray(responses)
    except ValueError:
        raise DomainError("responses have mismatched widths") from None


def hd_histogram(fractions, width):
    """Counts of per-pair HD values on one bin per possible distance."""
    counts = np.bincount(np.rint(np.asarray(fractions) * width).astype(int), minlength=width + 1)
    edges = (np.arange(width + 2) - 0.5) / width * 100.0
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def intra_hd(responses):
    """Mean normalised HD between consecutive responses, in percent.

    A 3-D ``(devices, n, m)`` input pairs responses within each device only.
    """
    stacked = _stack(responses)
    if stacked.ndim == 3:
        d = _devices(stacked, 1)
        if d.shape[1] < 2:
            raise DomainError("need at least 2 responses per device")
        fractions = (np.count_nonzero(d[:, 1:] != d[:, :-1], axis=2) / d.shape[2]).ravel()
        samples = {"k": d.shape[0], "n": d.shape[1], "m": d.shape[2]}
        width = d.shape[2]
    else:
        r = _responses(stacked, 2)
        fractions = np.count_nonzero(r[1:] != r[:-1], axis=1) / r.shape[1]
        samples = {"n": len(r), "m": r.shape[1]}
        width = r.shape[1]
    return MetricReport(
        "intra_hd",
        float(fractions.mean() * 100.0),
        samples,
        histogram=hd_histogram(fractions, width),
    )


def uniformity(responses):
    """Share of ones over all bits, with the per-position split."""
    r = _responses(_stack(responses).reshape(-1, np.shape(responses)[-1]))
    return MetricReport(
        "uniformity",
        float(r.mean() * 100.0),
        {"n": len(r), "m": r.shape[1]},
        per_bit=(r.mean(axis=0) * 100.0).tolist(),
    )


def _devices(per_device, min_devices):
    stacked = _stack([np.asarray(d) for d in per_device])
    if stacked.ndim != 3:
        raise DomainError("every device needs the same number of equal-width responses")
    if len(stacked) < min_devices:
        raise DomainError(f"need at least {min_devices} devices")
    return _responses(stacked.reshape(-1, stacked.shape[-1])).reshape(stacked.shape)


def uniqueness(per_device_responses):
    """Average pairwise inter-device normalised HD over shared challenges."""
    d = _devices(per_device_responses, 2)
    k, n, m = d.shape
    pair_means = []
    for i in range(k - 1):
        for j in range(i + 1, k):
            pair_means.append(np.count_nonzero(d[i] != d[j]) / (n * m))
    pair_means = np.array(pair_means)
    return MetricReport(
        "uniqueness",
        float(pair_means.mean() * 100.0),
        {"k": k, "n": n, "m": m},
        histogram=_fraction_histogram(pair_means),
    )


def _fraction_histogram(values, bins=20):
    counts, edges = np.histogram(np.asarray(values) * 100.0, bins=bins, range=(0.0, 100.0))
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def bit_aliasing(per_device_responses):
    """Per-position share of ones across every device and challenge."""
    d = _devices(per_device_responses, 2)
    per_bit = d.reshape(-1, d.shape[-1]).mean(axis=0) * 100.0
    return MetricReport(
        "bit_aliasing",
        float(per_bit.mean()),
        {"k": d.shape[0], "n": d.shape[1], "m": d.shape[2]},
        per_bit=per_bit.tolist(),
    )


def reliability(repeated_responses):
    """100 minus the intra-HD of one challenge's repeated responses."""
    inner = intra_hd(repeated_responses)
    return MetricReport("reliability", 100.0 - inner.value, inner.samples, histogram=inner.histogram)


def not_applicable(name, reason):
    return MetricReport(name, None, {"reason": reason}, applicable=False)


def save_histogram(report, path):
    """``bin_left,bin_right,count`` CSV of a report's histogram."""
    hist = report.histogram
    if hist is None:
        raise DomainError(f"{report.name} has no histogram")
    edges, counts = hist["edges"], hist["counts"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_left,bin_right,count\n")
        for left, right, count in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{left!r},{right!r},{count}\n")
