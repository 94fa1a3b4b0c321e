"""Command-line front end: one subcommand per experiment.

Exit codes: 0 all checks passed, 1 a statistical check failed, 2 bad
config or input, 3 numerical failure (blow-up, non-finite values).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import harness
from .harness import ConfigError, NumericalError

_RUNNERS = {
    "sample-fbm": harness.run_fbm_sample,
    "simulate": harness.run_simulate,
    "sigma": harness.run_sigma_experiment,
    "clt": harness.run_clt_experiment,
    "second-order": harness.run_second_order_experiment,
    "homogenize": harness.run_homogenization_experiment,
    "lln": harness.run_lln_check,
    "rough-check": harness.run_rough_check,
    "graph-check": harness.run_graph_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracavg",
        description="Monte Carlo experiments for slow/fast systems with fractional driving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, runner in _RUNNERS.items():
        doc = (runner.__doc__ or "").strip().splitlines()
        cmd = sub.add_parser(name, help=doc[0] if doc else None)
        cmd.add_argument("--config", required=True, help="path to the TOML experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override [mc].seed")
        cmd.add_argument("--out", default=None, help="override [output].directory")
    return parser


def _format_row(row) -> str:
    parts = [f"estimate={row.estimate:.6g}"]
    if row.target is not None:
        parts.append(f"target={row.target:.6g}")
    if row.stderr is not None:
        parts.append(f"se={row.stderr:.6g}")
    if row.z_score is not None:
        parts.append(f"z={row.z_score:.3g}")
    status = "PASS" if row.passed else "FAIL"
    return f"[{status}] {row.name}: " + " ".join(parts)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = harness.load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        if args.out is not None:
            config = dataclasses.replace(config, out_dir=args.out)
        report = _RUNNERS[args.command](config)
        written = harness.emit_outputs(report, config)
    except (NumericalError, FloatingPointError, OverflowError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for row in report.rows:
        print(_format_row(row))
    n_pass = sum(1 for r in report.rows if r.passed)
    print(f"{report.experiment}: {n_pass}/{len(report.rows)} checks passed")
    for warning in report.meta.get("warnings", []):
        print(f"warning: {warning}")
    for path in written:
        print(f"wrote {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
