#!/usr/bin/env python3
"""Offset precision versus acquisition time, against the closed-form
width/sqrt(2 * pair_rate * time) prediction."""

import argparse

from tagsync.experiments import ExperimentSpec, run_fig4
from tagsync.spdc import load_config, table1_replica


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/fig4", help="output directory")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--config", default=None, help="JSON simulator config")
    parser.add_argument(
        "--sweep", default=None, help="comma-separated acquisition times in seconds"
    )
    args = parser.parse_args()

    config = load_config(args.config) if args.config else table1_replica()
    spec = ExperimentSpec(
        name="fig4",
        base_config=config,
        trials=args.trials,
        output_dir=args.out,
        seed=args.seed,
        workers=args.workers,
        sweep=tuple(float(v) for v in args.sweep.split(",")) if args.sweep else (),
    )
    rows = run_fig4(spec)
    print(f"{'ta_s':>6} {'sd_ps':>8} {'predicted_ps':>13} {'ratio':>7} {'trials':>7}")
    for row in rows:
        print(
            f"{row.sweep_value:6.2f} {row.sd_ps:8.4f} {row.predicted_sd_ps:13.4f} "
            f"{row.sd_ps / row.predicted_sd_ps:7.3f} {row.trials_used:7d}"
        )
    print(f"CSV + manifest in {args.out}")


if __name__ == "__main__":
    main()
