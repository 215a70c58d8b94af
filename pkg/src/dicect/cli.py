"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from dicect.config import SWEEP_AXES, _parse_scalar, apply_overrides, load_config
from dicect.errors import ConfigError, NumericalError
from dicect.experiment import ablation_sweep, evaluate_dirs, reconstruct_dir, run_experiment, simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _common(p):
    p.add_argument("--config", metavar="PATH", help="INI experiment configuration")
    p.add_argument("--method", help="comma-separated subset of fbp, pnp_fista, dice")
    p.add_argument("--views", help="comma-separated view counts, e.g. 15,30,60")
    p.add_argument("--pattern", help="comma-separated sampling kinds: uniform, nonuniform")
    p.add_argument("--seed", type=int, help="root seed for all random streams")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set any config key (repeatable); 'section.key=value' also accepted")


def build_parser():
    parser = argparse.ArgumentParser(prog="dicect", description="Sparse-view CT reconstruction experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="phantoms -> sinogram files")
    _common(p)
    p = sub.add_parser("reconstruct", help="sinogram files -> images")
    _common(p)
    p.add_argument("--input", metavar="DIR", required=True, help="directory of .sino files with .json sidecars")
    p = sub.add_parser("evaluate", help="image pairs -> metrics CSV")
    p.add_argument("--ref", metavar="DIR", required=True, help="reference images named <id>.pgm or <id>.f64")
    p.add_argument("--test", metavar="DIR", required=True,
                   help="reconstructions named <id>__<method>__<pattern>__<views>")
    p.add_argument("--csv", metavar="PATH", default="metrics.csv", help="output CSV path")
    p.add_argument("--data-range", type=float, default=1.0)
    p = sub.add_parser("sweep", help="ablation over one DICE parameter")
    _common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,3,4,5")
    p = sub.add_parser("all", help="simulate, reconstruct and score in one run")
    _common(p)
    return parser


def resolve_config(args):
    """Config file, then dedicated flags, then ``--override`` entries."""
    cfg = load_config(args.config)
    flags = []
    for key in ("method", "views", "pattern", "seed", "out", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            flags.append(f"{key}={value}")
    cfg = apply_overrides(cfg, flags, origin="command line")
    return apply_overrides(cfg, args.override)


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "evaluate":
        rows = evaluate_dirs(args.ref, args.test, args.csv, args.data_range)
        print(f"scored {len(rows)} image(s) -> {args.csv}")
        return EXIT_OK
    cfg = resolve_config(args)
    if args.verb == "simulate":
        scans = simulate(cfg)
        print(f"wrote {len(scans)} sinogram(s) to {Path(cfg.out) / 'sinograms'}")
    elif args.verb == "reconstruct":
        rows = reconstruct_dir(cfg, args.input)
        print(f"wrote {len(rows)} reconstruction(s) to {Path(cfg.out) / 'recon'}")
    elif args.verb == "sweep":
        values = [_parse_scalar(args.axis, v) for v in args.values.split(",") if v.strip()]
        rows = ablation_sweep(cfg, args.axis, values)
        print(f"wrote {len(rows)} row(s) to {Path(cfg.out) / f'sweep_{args.axis}.csv'}")
    else:
        rows = run_experiment(cfg)
        for r in rows:
            print(f"{r['image_id']:<14} {r['method']:<10} {r['pattern']:<10} {r['views']:>4}  "
                  f"psnr {float(r['psnr']):7.2f}  ssim {float(r['ssim']):.4f}")
        print(f"metrics -> {Path(cfg.out) / 'metrics.csv'}")
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
