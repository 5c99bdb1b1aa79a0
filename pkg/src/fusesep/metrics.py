"""Separation metrics and source/estimate assignment."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SDR_CAP",
    "MetricError",
    "AssignmentResult",
    "SegmentErrorStats",
    "sdr",
    "si_sdr",
    "si_sdr_grad",
    "si_sdri",
    "hungarian_assign",
    "pit_brute_force",
    "segment_mse",
    "segment_histogram",
    "write_histogram_csv",
]

SDR_CAP = 100.0
_CAP_RATIO = 1e-20


class MetricError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def _pair(v, vbar) -> tuple[np.ndarray, np.ndarray]:
    v, vbar = _as_array(v), _as_array(vbar)
    if v.shape != vbar.shape:
        raise MetricError(f"length mismatch: {v.shape} vs {vbar.shape}")
    return v, vbar


def sdr(v, vbar) -> float:
    """``10 log10(Var(v) / Var(v - vbar))`` with population variances."""
    v, vbar = _pair(v, vbar)
    var_v = np.var(v)
    if var_v <= 0:
        raise MetricError("reference has zero variance")
    var_e = np.var(v - vbar)
    if var_e < _CAP_RATIO * var_v:
        return SDR_CAP
    return float(10.0 * np.log10(var_v / var_e))


def si_sdr(v, vbar) -> float:
    """Scale-invariant SDR: project ``v`` on the estimate direction."""
    v, vbar = _pair(v, vbar)
    vv = v @ v
    if vv <= 0 or vbar @ vbar <= 0:
        raise MetricError("si_sdr undefined for all-zero signals")
    target = (v @ vbar) / vv * v
    err = vbar - target
    p, e = target @ target, err @ err
    if e < _CAP_RATIO * p:
        return SDR_CAP
    return float(10.0 * np.log10(p / e))


def si_sdr_grad(v, vbar) -> tuple[float, np.ndarray]:
    """SI-SDR and its gradient with respect to the estimate.

    The gradient is zero wherever the value is capped.
    """
    v, vbar = _pair(v, vbar)
    vv = v @ v
    a = v @ vbar
    p = a * a / vv
    e = vbar @ vbar - p
    if vv <= 0 or vbar @ vbar <= 0:
        raise MetricError("si_sdr undefined for all-zero signals")
    if e < _CAP_RATIO * p:
        return SDR_CAP, np.zeros_like(vbar)
    c = 10.0 / math.log(10.0)
    dp = 2.0 * a / vv * v
    de = 2.0 * vbar - dp
    return float(c * math.log(p / e)), c * (dp / p - de / e)


def si_sdri(v, vbar, m) -> float:
    return si_sdr(v, vbar) - si_sdr(v, m)


# -------------------------------------------------------------- assignment


@dataclass(frozen=True)
class AssignmentResult:
    """``permutation[i]`` is the estimate assigned to source ``i``."""

    permutation: tuple[int, ...]
    total_cost: float


def _square(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise MetricError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise MetricError("cost matrix has non-finite entries")
    return cost


def _total(cost: np.ndarray, perm) -> float:
    return float(sum(cost[i, j] for i, j in enumerate(perm)))


def _hungarian_min(cost: np.ndarray) -> tuple[float, list[int]]:
    """Shortest augmenting path Hungarian method, O(n^3)."""
    n = cost.shape[0]
    if n == 0:
        return 0.0, []
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    perm = [0] * n
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return _total(cost, perm), perm


def hungarian_assign(cost) -> AssignmentResult:
    """Minimum-cost bijection; among optimal ones the lexicographically
    smallest permutation is returned."""
    cost = _square(cost)
    n = cost.shape[0]
    best, perm = _hungarian_min(cost)
    scale = max(1.0, float(np.abs(cost).max(initial=0.0)))
    tol = 1e-12 * scale * max(n, 1)
    # fix rows in order to the smallest column that keeps the optimum
    rows = list(range(n))
    cols = list(range(n))
    chosen: list[int] = []
    fixed = 0.0
    for r in range(n):
        rest_rows = rows[r + 1:]
        for c in cols:
            rest_cols = [k for k in cols if k != c]
            sub = cost[np.ix_(rest_rows, rest_cols)]
            sub_best, _ = _hungarian_min(sub)
            if fixed + cost[r, c] + sub_best <= best + tol:
                chosen.append(c)
                fixed += cost[r, c]
                cols = rest_cols
                break
        else:  # numerical safety net, unreachable with exact arithmetic
            return AssignmentResult(tuple(perm), _total(cost, perm))
    return AssignmentResult(tuple(chosen), _total(cost, chosen))


def pit_brute_force(cost, max_sources: int = 8) -> AssignmentResult:
    """Exhaustive search over all permutations (lexicographic order)."""
    cost = _square(cost)
    n = cost.shape[0]
    if n > max_sources:
        raise MetricError(f"brute force limited to {max_sources} sources, got {n}")
    best_perm, best = None, np.inf
    for perm in itertools.permutations(range(n)):
        total = _total(cost, perm)
        if total < best:
            best, best_perm = total, perm
    return AssignmentResult(tuple(best_perm), float(best))


# ------------------------------------------------------------ segment MSE


@dataclass(frozen=True)
class SegmentErrorStats:
    """Per-segment MSE plus a histogram over log-spaced bins."""

    mse: np.ndarray
    width: int
    edges: np.ndarray
    counts: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.mse.mean())


def _segment_width(width, sample_rate) -> int:
    if width is None:
        width = 0.020
    if isinstance(width, float):
        if sample_rate is None:
            raise MetricError("a width in seconds needs a sample rate")
        width = int(round(width * sample_rate))
    if width < 1:
        raise MetricError("segment width must be at least one sample")
    return int(width)


def _log_edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    pos = values[values > 0]
    if pos.size == 0:
        return np.linspace(0.0, 1.0, n_bins + 1)
    lo, hi = pos.min(), pos.max()
    if hi <= lo:
        lo, hi = lo / 2.0, hi * 2.0
    edges = np.geomspace(lo, hi, n_bins + 1)
    edges[0] = 0.0  # zero-error segments land in the first bin
    return edges


def segment_mse(v, vbar, width=None, sample_rate: int | None = None, n_bins: int = 50) -> SegmentErrorStats:
    """MSE over consecutive non-overlapping segments (default 20 ms).

    ``width`` is either a sample count (int) or a duration in seconds (float).
    The trailing partial segment is dropped.
    """
    if sample_rate is None:
        sample_rate = getattr(v, "sample_rate", None)
    w = _segment_width(width, sample_rate)
    v, vbar = _pair(v, vbar)
    n_seg = v.size // w
    if n_seg < 1:
        raise MetricError(f"signal of {v.size} samples is shorter than one segment ({w})")
    d = (v[: n_seg * w] - vbar[: n_seg * w]).reshape(n_seg, w)
    mse = np.mean(d * d, axis=1)
    edges = _log_edges(mse, n_bins)
    counts, _ = np.histogram(mse, bins=edges)
    return SegmentErrorStats(mse, w, edges, counts)


def segment_histogram(det: SegmentErrorStats, gen: SegmentErrorStats, n_bins: int = 50):
    """Histogram both MSE sets over shared log-spaced edges."""
    edges = _log_edges(np.concatenate([det.mse, gen.mse]), n_bins)
    cd, _ = np.histogram(det.mse, bins=edges)
    cg, _ = np.histogram(gen.mse, bins=edges)
    return edges, cd, cg


def write_histogram_csv(path, edges, count_det, count_gen) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count_det", "count_gen"])
        for i in range(len(count_det)):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(count_det[i]), int(count_gen[i])])
