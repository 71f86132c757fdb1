"""Direct coincidence identification between two sparse time-tag streams.

The offset between two independently recorded streams is recovered by
counting signal-idler time differences that fall inside a rectangular
acceptance window around a trial offset, then searching that count over
trial offsets in two stages:

* a coarse pass over a short leading segment of both streams, stepping a
  wide window across the whole plausible offset range, and
* a fine pass over the full streams, histogramming every difference inside
  the winning coarse window at the requested resolution.

All counting is exact int64 picosecond arithmetic. The inner loops are
linear-time two-pointer sweeps over the sorted streams, compiled with
numba, so cost is O(n + m + matches) rather than O(n * m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import (
    CapacityError,
    InsufficientDataError,
    PeakNotFoundError,
    ResolutionError,
    ValidationError,
)
from .streams import TagStream

# Coarse-peak acceptance: Gaussian significance floor plus an exact-Poisson
# false-alarm budget (the plain z-score misfires on near-empty backgrounds).
COARSE_MIN_SIGNIFICANCE = 5.0
COARSE_FALSE_ALARM = 0.01

_BRUTE_FORCE_GUARD = 10**7


@dataclass(frozen=True)
class CoarseParams:
    """Coarse-stage knobs: segment length M, step/window width, search range.

    ``search_span_ps`` limits trial offsets to [-span, +span]; when None the
    scan covers the full segment span symmetrically in both directions.
    """

    segment_len_m: int = 5000
    tau_bw_c_ps: int = 500
    search_span_ps: Optional[int] = None

    def __post_init__(self):
        if self.segment_len_m < 1:
            raise ValidationError("segment_len_m must be >= 1")
        if self.tau_bw_c_ps < 1:
            raise ValidationError("tau_bw_c_ps must be >= 1")
        if self.search_span_ps is not None and self.search_span_ps < 0:
            raise ValidationError("search_span_ps must be >= 0")


@dataclass(frozen=True)
class CoarseResult:
    t0c_max_ps: int
    peak_counts: int
    background_mean: float
    background_sd: float
    significance: float
    n_candidates: int = 0
    false_alarm: float = 0.0


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Counts of pair differences versus trial offset.

    Bin k is centered at ``center0_ps + k * resolution_ps``. With
    ``window_width_ps == resolution_ps`` (the default) the bins partition the
    scanned span: bin k covers the half-open integer interval
    [center - resolution//2, center - resolution//2 + resolution).
    """

    resolution_ps: int
    center0_ps: int
    counts: np.ndarray
    window_width_ps: int

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.resolution_ps < 1:
            raise ValidationError("resolution_ps must be >= 1")
        if self.window_width_ps < 1:
            raise ValidationError("window_width_ps must be >= 1")
        if counts.ndim != 1 or counts.size == 0:
            raise ValidationError("counts must be a nonempty 1-D array")
        if np.any(counts < 0):
            raise ValidationError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return self.counts.size

    def centers(self) -> np.ndarray:
        return self.center0_ps + self.resolution_ps * np.arange(
            self.counts.size, dtype=np.int64
        )


@njit(cache=True)
def _count_pairs_kernel(t1, t2, lo_off, hi_off):
    # pairs (a, b) with lo_off <= t1[a] - t2[b] <= hi_off, both arrays sorted
    n = t1.size
    m = t2.size
    total = 0
    lo = 0
    hi = 0
    for a in range(n):
        tlo = t1[a] - hi_off
        thi = t1[a] - lo_off
        while lo < m and t2[lo] < tlo:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < m and t2[hi] <= thi:
            hi += 1
        total += hi - lo
    return total


@njit(cache=True)
def _collect_diffs_kernel(t1, t2, lo_off, hi_off, out):
    n = t1.size
    m = t2.size
    pos = 0
    lo = 0
    hi = 0
    for a in range(n):
        tlo = t1[a] - hi_off
        thi = t1[a] - lo_off
        while lo < m and t2[lo] < tlo:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < m and t2[hi] <= thi:
            hi += 1
        for b in range(lo, hi):
            out[pos] = t1[a] - t2[b]
            pos += 1
    return pos


_COLLECT_GUARD = 3 * 10**8


def _pair_differences(t1: np.ndarray, t2: np.ndarray, lo_off: int, hi_off: int) -> np.ndarray:
    """All t1[a] - t2[b] differences inside [lo_off, hi_off], in one pass."""
    total = _count_pairs_kernel(t1, t2, np.int64(lo_off), np.int64(hi_off))
    if total > _COLLECT_GUARD:
        raise CapacityError(
            f"{total} pair differences in range; narrow the search span"
        )
    out = np.empty(total, dtype=np.int64)
    _collect_diffs_kernel(t1, t2, np.int64(lo_off), np.int64(hi_off), out)
    return out


def _check_compatible(s: TagStream, i: TagStream) -> None:
    if s.lsb_ps != i.lsb_ps:
        raise ValidationError(
            f"streams have different LSB ({s.lsb_ps} vs {i.lsb_ps} ps)"
        )


def count_coincidences(s: TagStream, i: TagStream, t0_ps: int, tau_bw_ps: int) -> int:
    """Number of (signal, idler) pairs with |diff - t0_ps| <= tau_bw_ps // 2.

    All qualifying pairs are counted with multiplicity. Runs in
    O(n + m + matches) via a two-pointer sweep.
    """
    _check_compatible(s, i)
    if tau_bw_ps < 0:
        raise ValidationError("tau_bw_ps must be >= 0")
    half = int(tau_bw_ps) // 2
    t0_ps = int(t0_ps)
    return int(
        _count_pairs_kernel(
            s.times_ps(), i.times_ps(), np.int64(t0_ps - half), np.int64(t0_ps + half)
        )
    )


def brute_force_count(s: TagStream, i: TagStream, t0_ps: int, tau_bw_ps: int) -> int:
    """Exhaustive double-loop oracle with the same contract as count_coincidences."""
    _check_compatible(s, i)
    if tau_bw_ps < 0:
        raise ValidationError("tau_bw_ps must be >= 0")
    n, m = len(s), len(i)
    if n * m > _BRUTE_FORCE_GUARD:
        raise CapacityError(f"brute force guard exceeded: {n} * {m} > {_BRUTE_FORCE_GUARD}")
    if n == 0 or m == 0:
        return 0
    half = int(tau_bw_ps) // 2
    t1 = s.times_ps()
    t2 = i.times_ps()
    total = 0
    for a in range(n):
        d = int(t1[a]) - t2.astype(np.int64)
        total += int(np.count_nonzero(np.abs(d - int(t0_ps)) <= half))
    return total


def _window_counts(diffs: np.ndarray, anchor: int, step: int, k_lo: int, k_hi: int) -> tuple:
    """Counts per trial window k in [k_lo, k_hi].

    Window k accepts r = d - anchor + step//2 in [k*step, k*step + 2*(step//2)];
    for even step adjacent windows share one grid point, which is then counted
    in both (matching the inclusive per-window definition).

    Returns (k values with nonzero counts, their counts).
    """
    half = step // 2
    r = diffs - np.int64(anchor - half)
    k = np.floor_divide(r, step)
    if step % 2 == 0:
        on_edge = (np.mod(r, step) == 0) & (k > k_lo)
        if np.any(on_edge):
            k = np.concatenate([k, k[on_edge] - 1])
    keep = (k >= k_lo) & (k <= k_hi)
    uk, uc = np.unique(k[keep], return_counts=True)
    return uk, uc


def _poisson_sf(count: int, lam: float) -> float:
    """P(Poisson(lam) >= count), by direct tail summation."""
    if count <= 0:
        return 1.0
    if lam <= 0.0:
        return 0.0
    log_term = -lam + count * math.log(lam) - math.lgamma(count + 1)
    if log_term < -700.0:
        return 0.0
    term = math.exp(log_term)
    total = term
    j = count
    while term > total * 1e-16 and j < count + 10**6:
        j += 1
        term *= lam / j
        total += term
    return min(total, 1.0)


def coarse_scan(s: TagStream, i: TagStream, params: CoarseParams,
                false_alarm: float = COARSE_FALSE_ALARM) -> CoarseResult:
    """Locate the coincidence peak on a wide-step trial-offset grid.

    Uses the first ``segment_len_m`` events of each stream. Trial offsets sit
    on the grid anchored at the first-tag difference, stepping by
    ``tau_bw_c_ps``, extended symmetrically to negative steps so either sign
    of offset is found. Ties at the maximum break toward smallest |t0|, then
    smallest t0.

    Raises PeakNotFoundError (carrying the best candidate) unless the peak is
    both >= 5 sigma above the non-peak background and improbable under an
    exact-Poisson false-alarm budget across all scanned windows.
    """
    _check_compatible(s, i)
    mseg = params.segment_len_m
    if len(s) < mseg or len(i) < mseg:
        raise InsufficientDataError(
            f"need at least M={mseg} tags per stream, have {len(s)} and {len(i)}"
        )
    step = int(params.tau_bw_c_ps)
    if step < s.lsb_ps:
        raise ValidationError(f"tau_bw_c_ps {step} below stream LSB {s.lsb_ps}")
    t1 = s.times_ps()[:mseg]
    t2 = i.times_ps()[:mseg]
    anchor = int(t1[0]) - int(t2[0])
    n_c = (int(t1[-1]) - int(t1[0])) // step

    if params.search_span_ps is None:
        k_lo, k_hi = -n_c, n_c
    else:
        span = int(params.search_span_ps)
        k_lo = math.ceil((-span - anchor) / step)
        k_hi = math.floor((span - anchor) / step)
        if k_hi < k_lo:
            raise ValidationError(
                f"search_span_ps {span} admits no trial offsets on the {step} ps grid"
            )
    n_candidates = k_hi - k_lo + 1

    half = step // 2
    diffs = _pair_differences(
        t1, t2, anchor + k_lo * step - half, anchor + k_hi * step + half
    )
    uk, uc = _window_counts(diffs, anchor, step, k_lo, k_hi)

    if uk.size == 0:
        best = CoarseResult(anchor, 0, 0.0, 0.0, 0.0, n_candidates, 1.0)
        raise PeakNotFoundError("no pair differences inside the search range", best=best)

    peak_counts = int(uc.max())
    contenders = uk[uc == peak_counts]
    t0s = anchor + contenders.astype(np.int64) * step
    order = np.lexsort((t0s, np.abs(t0s)))
    t0c_max = int(t0s[order[0]])

    total = int(uc.sum())
    sq = float(np.dot(uc.astype(np.float64), uc.astype(np.float64)))
    n_bg = n_candidates - 1
    bg_mean = (total - peak_counts) / n_bg if n_bg > 0 else 0.0
    bg_var = (sq - peak_counts**2) / n_bg - bg_mean**2 if n_bg > 0 else 0.0
    bg_sd = math.sqrt(max(bg_var, 0.0))

    if bg_sd > 0.0:
        significance = (peak_counts - bg_mean) / bg_sd
    else:
        significance = math.inf if peak_counts > bg_mean else 0.0

    lam = max(bg_mean, 1.0 / n_candidates)
    p_false = min(_poisson_sf(peak_counts, lam) * n_candidates, 1.0)

    result = CoarseResult(
        t0c_max_ps=t0c_max,
        peak_counts=peak_counts,
        background_mean=bg_mean,
        background_sd=bg_sd,
        significance=float(significance),
        n_candidates=n_candidates,
        false_alarm=p_false,
    )
    if significance < COARSE_MIN_SIGNIFICANCE:
        raise PeakNotFoundError(
            f"peak significance {significance:.2f} below {COARSE_MIN_SIGNIFICANCE}",
            best=result,
        )
    if p_false > false_alarm:
        raise PeakNotFoundError(
            f"peak of {peak_counts} counts is plausible background "
            f"(false-alarm {p_false:.3g} > {false_alarm})",
            best=result,
        )
    return result


def fine_scan(s: TagStream, i: TagStream, t0c_max_ps: int, tau_bw_c_ps: int,
              n_f: int, window_width_ps: Optional[int] = None) -> CoincidenceHistogram:
    """Histogram all pair differences within +-tau_bw_c_ps/2 of the coarse peak.

    The requested bin width tau_bw_c_ps / n_f is floored to an LSB multiple
    and the bin count recomputed to cover the span. Uses the full streams.
    With the default ``window_width_ps`` equal to the bin width, bins are a
    partition and their sum equals the pair count over the covered span; a
    larger window gives an overlapping sliding-window scan instead.
    """
    _check_compatible(s, i)
    if n_f < 100:
        raise ValidationError(f"n_f must be >= 100, got {n_f}")
    tau_bw_c_ps = int(tau_bw_c_ps)
    if tau_bw_c_ps < 1:
        raise ValidationError("tau_bw_c_ps must be >= 1")
    lsb = s.lsb_ps
    res = (tau_bw_c_ps // int(n_f)) // lsb * lsb
    if res < lsb:
        raise ResolutionError(
            f"fine resolution {tau_bw_c_ps}/{n_f} ps is below the {lsb} ps LSB"
        )
    n_bins = -(-tau_bw_c_ps // res)  # ceil: cover the full span
    center0 = int(t0c_max_ps) - tau_bw_c_ps // 2
    left0 = center0 - res // 2

    window = res if window_width_ps is None else int(window_width_ps)
    if window < 1:
        raise ValidationError("window_width_ps must be >= 1")

    t1 = s.times_ps()
    t2 = i.times_ps()
    if window == res:
        diffs = _pair_differences(t1, t2, left0, left0 + n_bins * res - 1)
        idx = (diffs - np.int64(left0)) // res
        counts = np.bincount(idx, minlength=n_bins)
    else:
        whalf = window // 2
        diffs = np.sort(
            _pair_differences(t1, t2, center0 - whalf, center0 + (n_bins - 1) * res + whalf)
        )
        centers = center0 + res * np.arange(n_bins, dtype=np.int64)
        counts = np.searchsorted(diffs, centers + whalf, side="right") - np.searchsorted(
            diffs, centers - whalf, side="left"
        )
    return CoincidenceHistogram(
        resolution_ps=res,
        center0_ps=center0,
        counts=counts.astype(np.int64),
        window_width_ps=window,
    )


def save_histogram(hist: CoincidenceHistogram, path) -> None:
    """Write a histogram as CSV: headers then ``t0_ps,counts`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# resolution_ps={hist.resolution_ps}\n")
        fh.write(f"# window_width_ps={hist.window_width_ps}\n")
        for center, count in zip(hist.centers(), hist.counts):
            fh.write(f"{int(center)},{int(count)}\n")


def load_histogram(path) -> CoincidenceHistogram:
    resolution = None
    window = None
    centers = []
    counts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("resolution_ps="):
                    resolution = int(body.split("=", 1)[1])
                elif body.startswith("window_width_ps="):
                    window = int(body.split("=", 1)[1])
                continue
            try:
                c, v = line.split(",")
                centers.append(int(c))
                counts.append(int(v))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad histogram row {line!r}") from exc
    if resolution is None or window is None or not centers:
        raise ValidationError(f"{path}: missing histogram headers or data")
    return CoincidenceHistogram(
        resolution_ps=resolution,
        center0_ps=centers[0],
        counts=np.asarray(counts, dtype=np.int64),
        window_width_ps=window,
    )
