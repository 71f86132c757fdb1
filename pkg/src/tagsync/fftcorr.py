"""Binned FFT cross-correlation identification with a significance threshold.

The comparison method: both streams are binned onto a fixed power-of-two
grid, circularly cross-correlated via FFTs, and the correlation peak is
accepted only when its statistical significance S (peak height above the
baseline in units of the baseline standard deviation) exceeds a threshold
S_p set by the number of bins. Data longer than n_bins * bin_width folds
modulo the grid span, which is flagged; a fold means reported offsets are
modulo that span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateStatisticsError, ValidationError
from .streams import TagStream, shift_stream

MAX_FFT_BINS = 2**27


@dataclass(frozen=True)
class BaselineParams:
    n_bins: int
    bin_width_ps: int
    peak_exclusion_bins: int = 5

    def __post_init__(self):
        n = int(self.n_bins)
        if n < 2 or (n & (n - 1)) != 0:
            raise ValidationError(f"n_bins must be a power of two >= 2, got {n}")
        if n > MAX_FFT_BINS:
            raise ValidationError(f"n_bins must be <= 2^27, got {n}")
        if int(self.bin_width_ps) < 1:
            raise ValidationError("bin_width_ps must be >= 1")
        if int(self.peak_exclusion_bins) < 1:
            raise ValidationError("peak_exclusion_bins must be >= 1")


@dataclass(frozen=True)
class BaselineResult:
    s_trace: np.ndarray
    s_max: float
    k_max: int
    offset_ps: Optional[int] = None
    s_p: Optional[float] = None
    identified: Optional[bool] = None
    bin_width_ps: Optional[int] = None
    n_bins: Optional[int] = None
    folded: bool = False


def bin_stream(stream: TagStream, params: BaselineParams):
    """Occupancy counts per grid bin: floor(t / width) mod n_bins.

    Returns (counts, folded); ``folded`` is True when any tag lies beyond the
    grid span n_bins * bin_width and therefore wrapped around.
    """
    n = int(params.n_bins)
    width = int(params.bin_width_ps)
    times = stream.times_ps()
    if times.size == 0:
        return np.zeros(n, dtype=np.int64), False
    raw = times // width
    folded = bool(int(raw.max()) >= n)
    counts = np.bincount((raw % n).astype(np.int64), minlength=n)
    return counts.astype(np.int64), folded


def cross_correlate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular cross-correlation c[k] = sum_j a[j] * b[(j + k) mod N] via FFTs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("arrays must be 1-D with equal length")
    n = a.size
    if n < 1 or (n & (n - 1)) != 0:
        raise ValidationError(f"length must be a power of two, got {n}")
    cross_spectrum = np.conj(np.fft.rfft(a)) * np.fft.rfft(b)
    return np.fft.irfft(cross_spectrum, n=n)


def significance(corr: np.ndarray, peak_exclusion_bins: int) -> BaselineResult:
    """Significance trace S[k] = (c[k] - baseline mean) / baseline SD.

    The baseline statistics exclude ``peak_exclusion_bins`` bins on either
    side of the argmax (circularly). Threshold fields are left unset.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 1 or corr.size < 16:
        raise ValidationError("correlation array must be 1-D with length >= 16")
    n = corr.size
    k_max = int(np.argmax(corr))
    excl = int(peak_exclusion_bins)
    mask = np.ones(n, dtype=bool)
    mask[(k_max + np.arange(-excl, excl + 1)) % n] = False
    base = corr[mask]
    mean = float(base.mean())
    sd = float(base.std(ddof=1))
    if sd == 0.0:
        raise DegenerateStatisticsError("baseline has zero standard deviation")
    s_trace = (corr - mean) / sd
    return BaselineResult(s_trace=s_trace, s_max=float(s_trace[k_max]), k_max=k_max)


def _normal_upper_tail(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def threshold_sp(n_bins: int, false_alarm_alpha: float = 0.01) -> float:
    """Identification threshold S_p solving n_bins * Q(S_p) = alpha.

    Q is the standard normal upper tail; with n_bins independent trial bins
    this bounds the expected number of false peaks by alpha. Bisection to
    1e-6.
    """
    if n_bins < 2:
        raise ValidationError("n_bins must be >= 2")
    if not 0.0 < false_alarm_alpha < 1.0:
        raise ValidationError("false_alarm_alpha must be in (0, 1)")
    target = false_alarm_alpha / n_bins
    lo, hi = 0.0, 60.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _normal_upper_tail(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _signed_index(k: int, n: int) -> int:
    return k if k < n // 2 else k - n


def ho_identify(s: TagStream, i: TagStream, params: BaselineParams,
                alpha: float = 0.01) -> BaselineResult:
    """Bin both streams, correlate, and threshold the peak significance.

    The correlation is anchored on the idler stream so the peak index maps
    directly to the signal-minus-idler offset: offset_ps = k_signed *
    bin_width (modulo the grid span when the data folded). A sub-threshold
    peak yields identified=False, which is a result, not an error.
    """
    bins_i, folded_i = bin_stream(i, params)
    bins_s, folded_s = bin_stream(s, params)
    corr = cross_correlate(bins_i.astype(np.float64), bins_s.astype(np.float64))
    result = significance(corr, params.peak_exclusion_bins)
    s_p = threshold_sp(params.n_bins, alpha)
    k_signed = _signed_index(result.k_max, int(params.n_bins))
    return replace(
        result,
        offset_ps=k_signed * int(params.bin_width_ps),
        s_p=s_p,
        identified=bool(result.s_max > s_p),
        bin_width_ps=int(params.bin_width_ps),
        n_bins=int(params.n_bins),
        folded=folded_i or folded_s,
    )


def ho_identify_iterative(s: TagStream, i: TagStream, params: BaselineParams,
                          alpha: float = 0.01, max_rounds: int = 8):
    """Refinement schedule: re-center on each found peak, halve the bin width.

    After a successful identification the lagging stream is shifted by the
    found offset (so the residual offset is near zero), the bin width is
    halved at fixed n_bins, and identification repeats. Stops when the peak
    is no longer identified, the width would drop below the LSB, or
    ``max_rounds`` is reached.

    Returns (results, combined_offset_ps): one result per round and the
    accumulated offset estimate from the last identified round.
    """
    results = []
    total_offset = 0
    width = int(params.bin_width_ps)
    cur_s, cur_i = s, i
    for _ in range(max_rounds):
        round_params = replace(params, bin_width_ps=width)
        res = ho_identify(cur_s, cur_i, round_params, alpha)
        results.append(res)
        if not res.identified:
            break
        total_offset += res.offset_ps
        if res.offset_ps >= 0:
            cur_i = shift_stream(cur_i, res.offset_ps)
        else:
            cur_s = shift_stream(cur_s, -res.offset_ps)
        if width // 2 < max(s.lsb_ps, i.lsb_ps):
            break
        width //= 2
    return results, total_offset


def save_significance_csv(result: BaselineResult, path) -> None:
    """Write the significance trace: headers then ``k,S`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# bin_width_ps={result.bin_width_ps}\n")
        fh.write(f"# n_bins={result.n_bins}\n")
        fh.write(f"# s_p={result.s_p}\n")
        identified = "" if result.identified is None else str(result.identified).lower()
        fh.write(f"# identified={identified}\n")
        for k, value in enumerate(result.s_trace):
            fh.write(f"{k},{value:.6f}\n")
