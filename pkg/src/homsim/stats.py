"""Ensemble summaries: detection-time histograms and detector fractions.

Censored trajectories count toward the ensemble size but are excluded from
the same/different-detector fractions and the waiting-time histograms.
Binning is left-closed right-open with exact integer arithmetic on the bin
index, so identical inputs give identical histograms everywhere.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSummaryError


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: float = 0.5
    t_min: float = 0.0
    t_max: float | None = None
    normalization: str = "counts"

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.t_max is not None and self.t_max <= self.t_min:
            raise ValueError("t_max must exceed t_min")
        if self.normalization not in ("counts", "frequency"):
            raise ValueError("normalization must be 'counts' or 'frequency'")


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray   # length n_bins + 1
    counts: np.ndarray  # raw event counts per bin

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class EnsembleSummary:
    n_total: int
    n_complete: int
    n_censored: int
    f_same: float
    f_diff: float
    binomial_stderr: float
    hist_t1: Histogram
    hist_t2: Histogram
    hist_dt_same: Histogram
    hist_dt_diff: Histogram
    shared_time_range: tuple  # (t_min, t_max) hint to plot T1/T2 on one scale
    normalization: str


def is_same_detector(result) -> bool:
    if result.censored:
        raise ValueError("same/different is undefined for censored records")
    return result.clicks[0].detector == result.clicks[1].detector


def waiting_time_split(results):
    """Waiting times T2-T1 partitioned into (same-detector, different-detector)."""
    same, diff = [], []
    for r in results:
        if r.censored:
            continue
        dt = r.clicks[1].time - r.clicks[0].time
        (same if is_same_detector(r) else diff).append(dt)
    return np.asarray(same), np.asarray(diff)


def _make_histogram(values: np.ndarray, spec: HistogramSpec, t_max: float) -> Histogram:
    n_bins = max(1, int(np.ceil((t_max - spec.t_min) / spec.bin_width - 1e-9)))
    edges = spec.t_min + spec.bin_width * np.arange(n_bins + 1)
    counts = np.zeros(n_bins, dtype=np.int64)
    if values.size:
        idx = np.floor((values - spec.t_min) / spec.bin_width).astype(np.int64)
        idx = np.clip(idx, 0, n_bins - 1)  # right edge of the last bin closes it
        np.add.at(counts, idx, 1)
    return Histogram(edges=edges, counts=counts)


def summarize(results, spec: HistogramSpec = HistogramSpec()) -> EnsembleSummary:
    """Aggregate an ensemble from one parameter set into Fig.-style artifacts."""
    n_total = len(results)
    complete = [r for r in results if not r.censored]
    n_complete = len(complete)
    if n_complete == 0:
        raise DegenerateSummaryError(
            "no trajectory completed two clicks; nothing to summarize")
    n_same = sum(1 for r in complete if is_same_detector(r))
    f_same = n_same / n_complete
    f_diff = 1.0 - f_same
    stderr = float(np.sqrt(f_same * f_diff / n_complete))

    t1 = np.array([r.clicks[0].time for r in complete])
    t2 = np.array([r.clicks[1].time for r in complete])
    dt_same, dt_diff = waiting_time_split(complete)
    if spec.t_max is not None:
        t_max = spec.t_max
    else:
        t_max = float(t2.max()) + spec.bin_width
    hist_t1 = _make_histogram(t1, spec, t_max)
    hist_t2 = _make_histogram(t2, spec, t_max)
    dt_shared = max(float(dt_same.max(initial=0.0)), float(dt_diff.max(initial=0.0)))
    dt_max = spec.t_max if spec.t_max is not None else dt_shared + spec.bin_width
    hist_dt_same = _make_histogram(dt_same, spec, dt_max)
    hist_dt_diff = _make_histogram(dt_diff, spec, dt_max)
    return EnsembleSummary(
        n_total=n_total,
        n_complete=n_complete,
        n_censored=n_total - n_complete,
        f_same=f_same,
        f_diff=f_diff,
        binomial_stderr=stderr,
        hist_t1=hist_t1,
        hist_t2=hist_t2,
        hist_dt_same=hist_dt_same,
        hist_dt_diff=hist_dt_diff,
        shared_time_range=(spec.t_min, t_max),
        normalization=spec.normalization,
    )


def _hist_rows(w, hist: Histogram, label: str, denom: int, normalization: str):
    for i in range(hist.counts.size):
        value = hist.counts[i] / denom if normalization == "frequency" else hist.counts[i]
        w.writerow([repr(float(hist.edges[i])), repr(float(hist.edges[i + 1])),
                    value, label])


def histograms_csv(summary: EnsembleSummary, file=None, header_lines=()) -> str:
    """Histogram export: bin_left, bin_right, count, class."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    lo, hi = summary.shared_time_range
    buf.write(f"# shared_time_range={lo},{hi}\n")
    buf.write("# T1/T2 histograms each total n_complete events\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "count", "class"])
    n = summary.n_complete
    _hist_rows(w, summary.hist_t1, "T1", n, summary.normalization)
    _hist_rows(w, summary.hist_t2, "T2", n, summary.normalization)
    _hist_rows(w, summary.hist_dt_same, "dT_same", n, summary.normalization)
    _hist_rows(w, summary.hist_dt_diff, "dT_diff", n, summary.normalization)
    text = buf.getvalue()
    if file is not None:
        file.write(text)
    return text


def summary_dict(summary: EnsembleSummary) -> dict:
    return {
        "n_total": summary.n_total,
        "n_complete": summary.n_complete,
        "n_censored": summary.n_censored,
        "f_same": summary.f_same,
        "f_diff": summary.f_diff,
        "binomial_stderr": summary.binomial_stderr,
        "shared_time_range": list(summary.shared_time_range),
        "normalization": summary.normalization,
    }
