"""Command-line front end: simulate / correlate / baseline / sweep / report.

Exit codes: 0 success, 1 identification failure (no significant peak, or the
FFT baseline stayed below threshold), 2 usage error, 3 I/O or validation
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

from . import __version__
from .correlate import CoarseParams, fine_scan, coarse_scan, save_histogram
from .errors import (
    PeakNotFoundError,
    ResolutionError,
    TagSyncError,
)
from .experiments import EXPERIMENT_NAMES, default_spec, run_experiment
from .fftcorr import BaselineParams, ho_identify, save_significance_csv
from .gaussfit import fit_gaussian
from .spdc import dump_config, load_config, simulate
from .streams import BINARY_MAGIC, load_stream, save_stream

EXIT_OK = 0
EXIT_NOT_IDENTIFIED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _power_of_two(text):
    value = int(text)
    if value < 2 or (value & (value - 1)) != 0:
        raise argparse.ArgumentTypeError(f"must be a power of two >= 2, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagsync",
        description="Recover the time offset between two single-photon time-tag streams.",
    )
    parser.add_argument("--no-banner", action="store_true",
                        help="suppress the version/timestamp banner (reproducible stdout)")
    parser.add_argument("--format", choices=("kv", "csv"), default="kv",
                        help="report format on stdout (default kv)")
    parser.add_argument("--threads", type=_positive_int, default=1,
                        help="worker cap for ensemble experiments (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic stream pair with known truth")
    p_sim.add_argument("config", help="JSON config file mirroring the simulator fields")
    p_sim.add_argument("--out", required=True, help="output prefix for the stream/truth files")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--stream-format", choices=("csv", "binary"), default="csv",
                   help="stream file format (default csv)")

    p_cor = sub.add_parser("correlate", help="coarse+fine offset recovery between two streams")
    p_cor.add_argument("signal")
    p_cor.add_argument("idler")
    p_cor.add_argument("--coarse-bw", type=_positive_int, default=500,
                       help="coarse window/step width in ps (default 500)")
    p_cor.add_argument("--m", type=_positive_int, default=5000,
                       help="events per stream in the coarse segment (default 5000)")
    p_cor.add_argument("--nf", type=_positive_int, default=500,
                       help="number of fine bins (default 500)")
    p_cor.add_argument("--fine-res", type=_positive_int, default=1,
                       help="fine bin width in ps (default 1)")
    p_cor.add_argument("--search-span", type=int, default=None,
                       help="limit coarse trial offsets to +-span ps (default: full segment span)")
    p_cor.add_argument("--hist-out", default=None, help="write the fine histogram CSV here")

    p_base = sub.add_parser("baseline", help="binned FFT cross-correlation identification")
    p_base.add_argument("signal")
    p_base.add_argument("idler")
    p_base.add_argument("--bins", type=_power_of_two, default=2**20,
                        help="FFT bin count, power of two (default 2^20)")
    p_base.add_argument("--bin-width", type=_positive_int, default=9,
                        help="bin width in ps (default 9)")
    p_base.add_argument("--alpha", type=float, default=0.01,
                        help="false-alarm budget for the threshold (default 0.01)")
    p_base.add_argument("--exclusion", type=_positive_int, default=5,
                        help="bins around the peak excluded from baseline stats (default 5)")
    p_base.add_argument("--trace-out", default=None, help="write the significance trace CSV here")

    p_sweep = sub.add_parser("sweep", help="run a seeded validation experiment")
    p_sweep.add_argument("--experiment", required=True, choices=EXPERIMENT_NAMES)
    p_sweep.add_argument("--config", default=None,
                         help="JSON simulator config (default: stock config for the experiment)")
    p_sweep.add_argument("--trials", type=_positive_int, default=50,
                     help="trials per sweep point (default 50)")
    p_sweep.add_argument("--seed", type=int, default=0,
                     help="base seed; per-trial seeds spawn from it (default 0)")
    p_sweep.add_argument("--sweep", default=None,
                         help="comma-separated sweep values (resolutions ps, or seconds for fig4)")
    p_sweep.add_argument("--out", required=True, help="output directory for CSV + manifest")

    p_rep = sub.add_parser("report", help="summarize experiment outputs in a directory")
    p_rep.add_argument("--dir", required=True)

    return parser


def _banner(args) -> None:
    if not args.no_banner:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        print(f"# tagsync {__version__} {stamp}")


def _sniff_load(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return load_stream(path, "binary" if magic == BINARY_MAGIC else "csv")


def _emit_pairs_report(pairs, fmt) -> None:
    if fmt == "csv":
        print(",".join(key for key, _ in pairs))
        print(",".join(str(value) for _, value in pairs))
    else:
        for key, value in pairs:
            print(f"{key}={value}")


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    print(dump_config(config))
    signal, idler, truth = simulate(config)
    ext = "csv" if args.stream_format == "csv" else "bin"
    sig_path = f"{args.out}_signal.{ext}"
    idl_path = f"{args.out}_idler.{ext}"
    truth_path = f"{args.out}_truth.txt"
    save_stream(signal, sig_path, args.stream_format)
    save_stream(idler, idl_path, args.stream_format)
    with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"true_offset_ps={truth.true_offset_ps}\n")
        fh.write(f"emitted_pairs={truth.emitted_pairs}\n")
        fh.write(f"detected_pairs={truth.detected_pairs}\n")
    print(f"wrote {sig_path} ({len(signal)} tags), {idl_path} ({len(idler)} tags), {truth_path}")
    return EXIT_OK


def _cmd_correlate(args) -> int:
    signal = _sniff_load(args.signal)
    idler = _sniff_load(args.idler)
    if args.fine_res < signal.lsb_ps or args.fine_res % signal.lsb_ps != 0:
        print(
            f"error: --fine-res {args.fine_res} ps must be a multiple of the "
            f"stream LSB ({signal.lsb_ps} ps)",
            file=sys.stderr,
        )
        return EXIT_USAGE
    params = CoarseParams(
        segment_len_m=args.m,
        tau_bw_c_ps=args.coarse_bw,
        search_span_ps=args.search_span,
    )
    try:
        coarse = coarse_scan(signal, idler, params)
    except PeakNotFoundError as exc:
        print(f"peak not found: {exc}")
        if exc.best is not None:
            best = exc.best
            _emit_pairs_report(
                [
                    ("best_t0_ps", best.t0c_max_ps),
                    ("best_counts", best.peak_counts),
                    ("coarse_significance", f"{best.significance:.4f}"),
                    ("background_mean", f"{best.background_mean:.6f}"),
                ],
                args.format,
            )
        return EXIT_NOT_IDENTIFIED

    span = args.nf * args.fine_res
    hist = fine_scan(signal, idler, coarse.t0c_max_ps, span, args.nf)
    fit = fit_gaussian(hist)
    if args.hist_out:
        save_histogram(hist, args.hist_out)
    _emit_pairs_report(
        [
            ("t0_coarse_ps", coarse.t0c_max_ps),
            ("coarse_counts", coarse.peak_counts),
            ("coarse_significance", f"{coarse.significance:.4f}"),
            ("center_ps", f"{fit.center_ps:.6f}"),
            ("fwhm_ps", f"{fit.fwhm_ps:.6f}"),
            ("amplitude", f"{fit.amplitude:.6f}"),
            ("baseline", f"{fit.baseline:.6f}"),
            ("residual_rms", f"{fit.residual_rms:.6f}"),
            ("converged", str(fit.converged).lower()),
            ("histogram_pairs", int(hist.counts.sum())),
            ("resolution_ps", hist.resolution_ps),
        ],
        args.format,
    )
    return EXIT_OK


def _cmd_baseline(args) -> int:
    signal = _sniff_load(args.signal)
    idler = _sniff_load(args.idler)
    params = BaselineParams(
        n_bins=args.bins,
        bin_width_ps=args.bin_width,
        peak_exclusion_bins=args.exclusion,
    )
    result = ho_identify(signal, idler, params, alpha=args.alpha)
    if args.trace_out:
        save_significance_csv(result, args.trace_out)
    _emit_pairs_report(
        [
            ("s_max", f"{result.s_max:.4f}"),
            ("s_p", f"{result.s_p:.4f}"),
            ("k_max", result.k_max),
            ("offset_ps", result.offset_ps),
            ("identified", str(result.identified).lower()),
            ("folded", str(result.folded).lower()),
            ("n_bins", result.n_bins),
            ("bin_width_ps", result.bin_width_ps),
        ],
        args.format,
    )
    return EXIT_OK if result.identified else EXIT_NOT_IDENTIFIED


def _cmd_sweep(args) -> int:
    config = load_config(args.config) if args.config else None
    spec = default_spec(
        args.experiment,
        output_dir=args.out,
        trials=args.trials,
        seed=args.seed,
        workers=args.threads,
        config=config,
    )
    if args.sweep:
        values = tuple(float(v) for v in args.sweep.split(","))
        spec = dataclasses.replace(spec, sweep=values)
    run_experiment(spec)
    print(f"experiment {args.experiment} written to {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    found = False
    for name in EXPERIMENT_NAMES:
        csv_path = os.path.join(args.dir, f"{name}.csv")
        manifest = os.path.join(args.dir, f"{name}_manifest.txt")
        if not os.path.exists(csv_path):
            continue
        found = True
        print(f"== {name} ({csv_path})")
        if os.path.exists(manifest):
            with open(manifest, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if line.startswith(("experiment=", "trials=", "tagsync_version=",
                                        "base_seed=", "quadratic_", "sd_degradation",
                                        "direct_", "true_offset", "peak_")):
                        print(f"  {line}")
        with open(csv_path, "r", encoding="utf-8") as fh:
            for line in fh:
                print(f"  {line.rstrip()}")
        print()
    if not found:
        print(f"error: no experiment outputs under {args.dir}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    _banner(args)
    handler = {
        "simulate": _cmd_simulate,
        "correlate": _cmd_correlate,
        "baseline": _cmd_baseline,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
    }[args.command]
    try:
        return handler(args)
    except ResolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TagSyncError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
