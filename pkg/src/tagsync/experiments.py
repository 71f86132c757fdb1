"""Seeded validation experiments over the simulator, with CSV reports.

Each experiment runs the full recovery pipeline (simulate, coarse scan, fine
histogram, Gaussian fit) over an ensemble of independently seeded trials and
aggregates per-sweep-point statistics. Experiments are reproducible
bit-for-bit from (spec, seed): per-trial seeds are spawned from the spec seed
and recorded in the manifest. Trials are independent and may be distributed
over worker processes; aggregation is order-independent.

Experiments:

* ``table1``       mean fitted FWHM versus fine resolution
* ``fig3b``        offset SD and mean offset versus fine resolution, plus the
                   quadratic resolution-to-zero extrapolation
* ``fig4``         offset SD versus acquisition time against the closed-form
                   prediction
* ``fig5``         direct method versus the FFT baseline on one remote-delay
                   dataset across baseline bin widths
* ``coarse_demo``  wide-window scan trace around the coincidence peak
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__ as _version
from .correlate import CoarseParams, CoarseResult, coarse_scan, count_coincidences, fine_scan
from .errors import (
    HarnessError,
    InsufficientDataError,
    NoPeakError,
    TagSyncError,
)
from .fftcorr import BaselineParams, ho_identify
from .gaussfit import fit_gaussian, fit_quadratic_offset, predict_precision
from .spdc import SourceConfig, dump_config, remote_fiber_replica, simulate, table1_replica
from .streams import TagStream

EXPERIMENT_NAMES = ("table1", "fig3b", "fig4", "fig5", "coarse_demo")

TABLE1_RESOLUTIONS_PS = (1, 3, 5, 7, 9, 15, 25, 35, 55)
FIG4_TA_SWEEP_S = (0.14, 0.28, 0.56, 1.0, 2.2, 4.5)
FIG4_RESOLUTION_PS = 7
FIG5_BIN_WIDTHS_PS = (9.0, 4.5, 2.25)
FIG5_N_BINS = 2**20
FIG5_FINE_RESOLUTION_PS = 1

_MIN_FINE_BINS = 100
_MAX_FAILURE_FRACTION = 0.10
_SD_EXPERIMENTS = {"fig3b", "fig4"}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base_config: SourceConfig
    trials: int = 50
    sweep: tuple = ()
    output_dir: Optional[str] = None
    seed: int = 0
    workers: int = 1
    coarse: CoarseParams = field(default_factory=CoarseParams)

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise HarnessError(f"unknown experiment {self.name!r}; pick from {EXPERIMENT_NAMES}")
        if self.trials < 1:
            raise HarnessError("trials must be >= 1")
        if self.name in _SD_EXPERIMENTS and self.trials < 20:
            raise HarnessError(f"{self.name} reports an SD; needs >= 20 trials")
        if self.workers < 1:
            raise HarnessError("workers must be >= 1")
        object.__setattr__(self, "sweep", tuple(self.sweep))


@dataclass(frozen=True)
class SweepRow:
    sweep_value: float
    mean_offset_ps: float
    sd_ps: float
    mean_fwhm_ps: float
    predicted_sd_ps: float
    trials_used: int


@dataclass(frozen=True)
class Fig3bResult:
    rows: tuple
    c0: float
    c1: float
    c2: float
    true_offset_ps: int
    degradation_ratio: float


@dataclass(frozen=True)
class Fig5Row:
    requested_bin_width_ps: float
    bin_width_ps: int
    s_max: float
    s_p: float
    identified: bool
    offset_ps: int
    folded: bool
    agreement_ps: Optional[int]


@dataclass(frozen=True)
class Fig5Report:
    direct_offset_ps: float
    direct_fwhm_ps: float
    true_offset_ps: int
    rows: tuple


@dataclass(frozen=True)
class CoarseDemoResult:
    coarse: CoarseResult
    trace_t0_ps: np.ndarray
    trace_counts: np.ndarray
    true_offset_ps: int


def _trial_seeds(spec: ExperimentSpec) -> list:
    children = np.random.SeedSequence(spec.seed).spawn(spec.trials)
    return [int(c.generate_state(1, np.uint64)[0] & (2**63 - 1)) for c in children]


def _auto_search_span_ps(config: SourceConfig, coarse: CoarseParams) -> int:
    slew = abs(config.clock_signal.drift_rate - config.clock_idler.drift_rate)
    return (
        abs(config.true_offset_ps())
        + int(math.ceil(slew * config.duration_ps))
        + 10 * coarse.tau_bw_c_ps
        + 10_000
    )


def _round_to_lsb(value_ps: float, lsb_ps: int) -> int:
    ticks = max(1, int(math.floor(abs(value_ps) / lsb_ps + 0.5)))
    return ticks * lsb_ps


def recover_offset(signal: TagStream, idler: TagStream, resolution_ps: int,
                   coarse: CoarseParams):
    """One full recovery: coarse scan, fine histogram, Gaussian fit.

    The fine span is twice the coarse window so the peak keeps full support
    wherever the coarse grid put it (the coarse offset is only known to within
    half a window), and is widened further when needed so the histogram keeps
    at least 100 bins at the requested resolution.

    Returns (fit, coarse_result, histogram).
    """
    m = min(coarse.segment_len_m, len(signal), len(idler))
    if m < 2:
        raise InsufficientDataError("streams too short for a coarse scan")
    params = dataclasses.replace(coarse, segment_len_m=m)
    coarse_result = coarse_scan(signal, idler, params)
    n_f = max(
        _MIN_FINE_BINS, -(-2 * params.tau_bw_c_ps // resolution_ps)
    )
    span = n_f * resolution_ps
    hist = fine_scan(signal, idler, coarse_result.t0c_max_ps, span, n_f)
    fit = fit_gaussian(hist)
    if not fit.converged:
        raise NoPeakError("fine-histogram fit did not converge")
    return fit, coarse_result, hist


def _pipeline_worker(args):
    config, resolution_ps, coarse = args
    try:
        signal, idler, truth = simulate(config)
        fit, _, _ = recover_offset(signal, idler, resolution_ps, coarse)
        return ("ok", fit.center_ps, fit.fwhm_ps, truth.true_offset_ps)
    except TagSyncError as exc:
        return ("fail", type(exc).__name__, str(exc), None)


def _run_trials(spec: ExperimentSpec, configs, resolution_ps: int):
    coarse = spec.coarse
    if coarse.search_span_ps is None:
        coarse = dataclasses.replace(
            coarse, search_span_ps=_auto_search_span_ps(spec.base_config, coarse)
        )
    jobs = [(cfg, resolution_ps, coarse) for cfg in configs]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(_pipeline_worker, jobs))
    else:
        outcomes = [_pipeline_worker(job) for job in jobs]

    centers = [o[1] for o in outcomes if o[0] == "ok"]
    fwhms = [o[2] for o in outcomes if o[0] == "ok"]
    failures = [(o[1], o[2]) for o in outcomes if o[0] == "fail"]
    if len(failures) > _MAX_FAILURE_FRACTION * len(jobs):
        detail = "; ".join(f"{kind}: {msg}" for kind, msg in failures[:5])
        raise HarnessError(
            f"{len(failures)}/{len(jobs)} trials failed at resolution "
            f"{resolution_ps} ps ({detail})"
        )
    return np.asarray(centers), np.asarray(fwhms), len(centers)


def _sweep_row(spec: ExperimentSpec, sweep_value: float, centers, fwhms,
               used: int, config: SourceConfig) -> SweepRow:
    pred = predict_precision(
        config.g2_fwhm_ps,
        config.combined_jitter_fwhm_ps,
        max(config.detected_pair_rate_cps, 1e-12),
        config.ta_s,
    ).sd_ps
    return SweepRow(
        sweep_value=float(sweep_value),
        mean_offset_ps=float(np.mean(centers)) if used else math.nan,
        sd_ps=float(np.std(centers, ddof=1)) if used > 1 else math.nan,
        mean_fwhm_ps=float(np.mean(fwhms)) if used else math.nan,
        predicted_sd_ps=pred,
        trials_used=used,
    )


def _resolution_sweep(spec: ExperimentSpec):
    sweep = spec.sweep or TABLE1_RESOLUTIONS_PS
    seeds = _trial_seeds(spec)
    rows = []
    for requested in sweep:
        resolution = _round_to_lsb(float(requested), spec.base_config.lsb_ps)
        configs = [dataclasses.replace(spec.base_config, seed=s) for s in seeds]
        centers, fwhms, used = _run_trials(spec, configs, resolution)
        rows.append(_sweep_row(spec, resolution, centers, fwhms, used, spec.base_config))
    return rows, seeds


def run_table1(spec: ExperimentSpec):
    """Mean fitted FWHM per fine resolution over the trial ensemble."""
    rows, seeds = _resolution_sweep(spec)
    _emit(spec, rows, seeds)
    return rows


def run_fig3b(spec: ExperimentSpec) -> Fig3bResult:
    """Offset SD and mean offset per resolution, plus quadratic extrapolation."""
    rows, seeds = _resolution_sweep(spec)
    resolutions = [row.sweep_value for row in rows]
    offsets = [row.mean_offset_ps for row in rows]
    c0, c1, c2 = fit_quadratic_offset(resolutions, offsets)

    fine = [row.sd_ps for row in rows if row.sweep_value <= 9]
    coarse_rows = [row.sd_ps for row in rows if row.sweep_value >= 35]
    degradation = (
        max(coarse_rows) / float(np.median(fine)) if fine and coarse_rows else math.nan
    )
    result = Fig3bResult(
        rows=tuple(rows),
        c0=c0,
        c1=c1,
        c2=c2,
        true_offset_ps=spec.base_config.true_offset_ps(),
        degradation_ratio=degradation,
    )
    extra = [
        f"quadratic_c0_ps={c0:.6f}",
        f"quadratic_c1={c1:.6g}",
        f"quadratic_c2={c2:.6g}",
        f"sd_degradation_ratio={degradation:.4f}",
    ]
    _emit(spec, rows, seeds, extra)
    return result


def run_fig4(spec: ExperimentSpec):
    """Offset SD per acquisition time, with the closed-form prediction column."""
    sweep = spec.sweep or FIG4_TA_SWEEP_S
    seeds = _trial_seeds(spec)
    resolution = _round_to_lsb(FIG4_RESOLUTION_PS, spec.base_config.lsb_ps)
    rows = []
    for ta in sweep:
        config = dataclasses.replace(spec.base_config, ta_s=float(ta))
        configs = [dataclasses.replace(config, seed=s) for s in seeds]
        centers, fwhms, used = _run_trials(spec, configs, resolution)
        rows.append(_sweep_row(spec, ta, centers, fwhms, used, config))
    _emit(spec, rows, seeds)
    return rows


def run_fig5(spec: ExperimentSpec) -> Fig5Report:
    """Direct 1 ps recovery versus the FFT baseline across its bin widths.

    One fixed dataset; agreement_ps is the direct-minus-baseline offset
    residual taken modulo the (folded) baseline grid span.
    """
    seeds = _trial_seeds(spec)
    config = dataclasses.replace(spec.base_config, seed=seeds[0])
    signal, idler, truth = simulate(config)

    coarse = spec.coarse
    if coarse.search_span_ps is None:
        coarse = dataclasses.replace(
            coarse, search_span_ps=_auto_search_span_ps(config, coarse)
        )
    fit, _, _ = recover_offset(signal, idler, FIG5_FINE_RESOLUTION_PS, coarse)

    widths = spec.sweep or FIG5_BIN_WIDTHS_PS
    rows = []
    for requested in widths:
        width = _round_to_lsb(float(requested), config.lsb_ps)
        params = BaselineParams(n_bins=FIG5_N_BINS, bin_width_ps=width)
        result = ho_identify(signal, idler, params)
        agreement = None
        if result.identified:
            span = FIG5_N_BINS * width
            residual = (round(fit.center_ps) - result.offset_ps) % span
            agreement = int(min(residual, span - residual))
        rows.append(
            Fig5Row(
                requested_bin_width_ps=float(requested),
                bin_width_ps=width,
                s_max=result.s_max,
                s_p=result.s_p,
                identified=result.identified,
                offset_ps=result.offset_ps,
                folded=result.folded,
                agreement_ps=agreement,
            )
        )
    report = Fig5Report(
        direct_offset_ps=fit.center_ps,
        direct_fwhm_ps=fit.fwhm_ps,
        true_offset_ps=truth.true_offset_ps,
        rows=tuple(rows),
    )
    if spec.output_dir:
        _ensure_dir(spec.output_dir)
        path = os.path.join(spec.output_dir, f"{spec.name}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(
                "requested_bin_width_ps,bin_width_ps,s_max,s_p,identified,"
                "offset_ps,folded,agreement_ps\n"
            )
            for row in rows:
                fh.write(
                    f"{row.requested_bin_width_ps},{row.bin_width_ps},"
                    f"{row.s_max:.4f},{row.s_p:.4f},{str(row.identified).lower()},"
                    f"{row.offset_ps},{str(row.folded).lower()},"
                    f"{'' if row.agreement_ps is None else row.agreement_ps}\n"
                )
        _write_manifest(
            spec,
            seeds,
            [
                f"direct_offset_ps={report.direct_offset_ps:.4f}",
                f"direct_fwhm_ps={report.direct_fwhm_ps:.4f}",
                f"true_offset_ps={report.true_offset_ps}",
            ],
        )
    return report


def run_coarse_demo(spec: ExperimentSpec) -> CoarseDemoResult:
    """Coarse-stage trace: counts per wide trial window around the peak."""
    seeds = _trial_seeds(spec)
    config = dataclasses.replace(spec.base_config, seed=seeds[0])
    signal, idler, truth = simulate(config)

    coarse = spec.coarse
    m = min(coarse.segment_len_m, len(signal), len(idler))
    if m < 2:
        raise InsufficientDataError("streams too short for a coarse scan")
    if coarse.search_span_ps is None:
        coarse = dataclasses.replace(
            coarse, search_span_ps=_auto_search_span_ps(config, coarse)
        )
    coarse = dataclasses.replace(coarse, segment_len_m=m)
    result = coarse_scan(signal, idler, coarse)

    seg_s = TagStream(signal.tags[:m], signal.lsb_ps, signal.clock_id, signal.duration_ps)
    seg_i = TagStream(idler.tags[:m], idler.lsb_ps, idler.clock_id, idler.duration_ps)
    step = coarse.tau_bw_c_ps
    ks = np.arange(-50, 51, dtype=np.int64)
    t0s = result.t0c_max_ps + ks * step
    counts = np.array(
        [count_coincidences(seg_s, seg_i, int(t0), step) for t0 in t0s], dtype=np.int64
    )
    demo = CoarseDemoResult(
        coarse=result,
        trace_t0_ps=t0s,
        trace_counts=counts,
        true_offset_ps=truth.true_offset_ps,
    )
    if spec.output_dir:
        _ensure_dir(spec.output_dir)
        path = os.path.join(spec.output_dir, f"{spec.name}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t0_ps,counts\n")
            for t0, count in zip(t0s, counts):
                fh.write(f"{int(t0)},{int(count)}\n")
        _write_manifest(
            spec,
            seeds,
            [
                f"peak_t0_ps={result.t0c_max_ps}",
                f"peak_counts={result.peak_counts}",
                f"significance={result.significance:.4f}",
                f"true_offset_ps={truth.true_offset_ps}",
            ],
        )
    return demo


def run_experiment(spec: ExperimentSpec):
    runner = {
        "table1": run_table1,
        "fig3b": run_fig3b,
        "fig4": run_fig4,
        "fig5": run_fig5,
        "coarse_demo": run_coarse_demo,
    }[spec.name]
    return runner(spec)


def default_spec(name: str, output_dir=None, trials: int = 50, seed: int = 0,
                 workers: int = 1, config: Optional[SourceConfig] = None) -> ExperimentSpec:
    """Spec with the stock config and sweep for the named experiment."""
    if config is None:
        config = remote_fiber_replica() if name == "fig5" else table1_replica()
        if name == "coarse_demo":
            config = dataclasses.replace(config, ta_s=0.14)
    coarse = CoarseParams()
    if name == "coarse_demo":
        # short segment keeps the demo peak at the tens-of-counts scale
        coarse = CoarseParams(segment_len_m=600)
    return ExperimentSpec(
        name=name,
        base_config=config,
        trials=trials,
        output_dir=output_dir,
        seed=seed,
        workers=workers,
        coarse=coarse,
    )


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def _ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep_value,mean_offset_ps,sd_ps,mean_fwhm_ps,predicted_sd_ps,trials_used\n")
        for row in rows:
            fh.write(
                f"{row.sweep_value},{row.mean_offset_ps:.6f},{row.sd_ps:.6f},"
                f"{row.mean_fwhm_ps:.6f},{row.predicted_sd_ps:.6f},{row.trials_used}\n"
            )


def _write_manifest(spec: ExperimentSpec, seeds, extra=()) -> None:
    path = os.path.join(spec.output_dir, f"{spec.name}_manifest.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"experiment={spec.name}\n")
        fh.write(f"tagsync_version={_version}\n")
        fh.write(f"trials={spec.trials}\n")
        fh.write(f"sweep={','.join(str(v) for v in spec.sweep) or 'default'}\n")
        fh.write(f"base_seed={spec.seed}\n")
        fh.write(f"trial_seeds={','.join(str(s) for s in seeds)}\n")
        for line in extra:
            fh.write(line + "\n")
        fh.write("config:\n")
        fh.write(dump_config(spec.base_config))
        fh.write("\n")


def _emit(spec: ExperimentSpec, rows, seeds, extra=()) -> None:
    if not spec.output_dir:
        return
    _ensure_dir(spec.output_dir)
    write_sweep_csv(os.path.join(spec.output_dir, f"{spec.name}.csv"), rows)
    _write_manifest(spec, seeds, extra)
