"""Command-line entry point: ``surfdk <experiment> [--config FILE] [--<key> VALUE ...]``.

Every configuration key is also a flag (``--grid.I 16``, ``--run.dt_fraction
0.015625``); flags override the config file, which overrides the preset of
the chosen experiment.  Exit status is 0 when every check of the run passes,
1 when a check fails and 2 on a configuration error.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .config import EXPERIMENTS, SCHEMA, parse_config
from .exceptions import ConfigurationError, IntegratorBlowup
from .experiments import run_experiment

__all__ = ["build_parser", "main"]


def build_parser():
    parser = argparse.ArgumentParser(prog="surfdk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"surfdk {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="FILE", help="key = value configuration file")
        p.add_argument("--quiet", action="store_true", help="print only the check lines")
        for key in SCHEMA:
            if key == "experiment":
                continue
            p.add_argument(f"--{key}", dest=key, metavar="VALUE", default=None)
    return parser


def _describe(res, out):
    if hasattr(res, "peak_rho"):
        for t, s, r, n in zip(res.snapshot_times, res.snapshot_steps, res.peak_rho, res.peak_N):
            print(f"t={t:<6g} step={s:<7d} max rho={r:.6g}  max N={n:.6g}", file=out)
        print(f"running max rho={res.running_max_rho:.6g}  N={res.running_max_N:.6g}", file=out)
    if hasattr(res, "dt_max"):
        print(f"dt_max={res.dt_max:.6e}  dt={res.dt:.6e} (fraction {res.dt_fraction:g})", file=out)
    if getattr(res, "residuals", None):
        for k, v in res.residuals.items():
            print(f"algebra.{k}: {v:.3e}", file=out)
    if getattr(res, "variance", None) is not None:
        print(f"OU max variance error {res.max_variance_error:.4f} over {res.samples_per_cell} samples/cell", file=out)
        for k, z in res.covariance_z().items():
            print(f"OU corr {k}: {res.covariance[k]:+.4e} (z={z:+.2f})", file=out)
    for name in ("fvm", "particles"):
        chain = getattr(res, name, None)
        if chain is not None and chain.report is not None:
            for k, s in chain.report.summary().items():
                print(f"{name}.{k}: max |relerr|={s['max']:.4f} median={s['median']:.4f}", file=out)
    for k, v in getattr(res, "crossval", {}).items():
        print(f"{k}: max |z|={v.max_abs:.2f}, fraction |z|>3 = {v.fraction_over:.4f}", file=out)


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in SCHEMA if k != "experiment"}
    try:
        cfg = parse_config(args.config, experiment=args.experiment, overrides=overrides)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    last = [None]

    def progress(stage, step):
        if not args.quiet and step % 100_000 == 0 and last[0] != (stage, step):
            last[0] = (stage, step)
            print(f"[{stage}] step {step}", file=out, flush=True)

    try:
        res = run_experiment(cfg, progress=progress)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IntegratorBlowup as exc:
        print(f"integrator blowup: {exc}", file=sys.stderr)
        return 1

    if not args.quiet:
        _describe(res, out)
        print(f"wall time {res.wall_seconds:.1f} s", file=out)
    for k, ok in res.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {k}", file=out)
    return 0 if all(bool(np.all(v)) for v in res.checks.values()) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
