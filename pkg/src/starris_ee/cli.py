"""Command-line interface.

Subcommands:
    gen           write a seeded channel fixture CSV
    solve         run one alternating-optimization solve and print the report
    sweep         run the configured parameter sweep and write the CSV
    oracle-check  compare the optimizer against the grid oracle
    plot          render figures from an existing sweep CSV

Every subcommand accepts --config <file> (flat key = value text; missing
keys fall back to the reference defaults) and --seed to override the seed
list with a single seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import channel as ch
from . import cli_experiments as exp
from .ao_driver import alternating_optimize, report_to_lines
from .errors import InfeasibleInstanceError, SolverFailureError


def _load_config(args):
    config = exp.load_config(args.config) if args.config else exp.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(args.seed,))
    return config


def cmd_gen(args):
    config = _load_config(args)
    seed = config.seeds[0]
    _, channels = exp.generate_channels(config, seed)
    ch.write_channel_csv(channels, args.out)
    print(f"wrote channel fixture for seed {seed} to {args.out}")
    return 0


def cmd_solve(args):
    config = _load_config(args)
    seed = config.seeds[0]
    mode = args.mode or config.modes[0]
    instance = exp.build_instance(config, seed)
    try:
        ao_cfg = replace(config.ao, mode=mode)
        report = alternating_optimize(instance, ao_cfg)
    except InfeasibleInstanceError as e:
        print(f"infeasible = true  # {e}")
        return 1
    except SolverFailureError as e:
        print(f"solver_failure = true  # {e}", file=sys.stderr)
        return 2
    print(f"seed = {seed}")
    for line in report_to_lines(report):
        print(line)
    if args.plot_dir:
        from .plotting import render_convergence_figure

        os.makedirs(args.plot_dir, exist_ok=True)
        path = os.path.join(args.plot_dir, f"solve_{mode}_seed{seed}_convergence.png")
        render_convergence_figure(report, path)
        print(f"figure = {path}")
    return 0


def cmd_sweep(args):
    config = _load_config(args)
    rows = exp.run_sweep(config)
    csv_text = exp.sweep_rows_to_csv(rows)
    with open(args.out, "w", newline="") as fh:
        fh.write(csv_text)
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.plot_dir:
        from .plotting import render_sweep_figures

        prefix = os.path.splitext(os.path.basename(args.out))[0]
        for path in render_sweep_figures(rows, args.plot_dir, prefix=prefix):
            print(f"figure = {path}")
    return 0


def cmd_oracle_check(args):
    config = _load_config(args)
    rows = exp.run_oracle_check(config)
    csv_text = exp.oracle_rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(csv_text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_plot(args):
    from .plotting import render_sweep_figures

    rows = exp.read_sweep_csv(args.csv)
    prefix = os.path.splitext(os.path.basename(args.csv))[0]
    for path in render_sweep_figures(rows, args.out_dir, prefix=prefix):
        print(f"figure = {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="starris-ee",
        description="Max-min user energy efficiency optimization for "
                    "STAR-RIS assisted downlinks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the seed list")

    p = sub.add_parser("gen", help="write a channel fixture CSV")
    common(p)
    p.add_argument("--out", required=True, help="output fixture path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run one solve and print the report")
    common(p)
    p.add_argument("--mode", choices=["star_es", "reflect_only", "transmit_only"])
    p.add_argument("--plot-dir", help="also render a convergence figure here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run the configured sweep, write CSV")
    common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot-dir", help="also render sweep figures here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="compare optimizer vs grid oracle")
    common(p)
    p.add_argument("--out", help="output CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("plot", help="render figures from a sweep CSV")
    p.add_argument("--csv", required=True, help="sweep CSV to read")
    p.add_argument("--out-dir", required=True, help="directory for figures")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
