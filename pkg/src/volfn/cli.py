"""Command line entry point: ``volfn simulate | estimate | mc``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, NumericalError
from .harness import run_estimate, run_mc, write_mc_csv
from .jumpfun import write_detections_csv
from .simkit import export_path, load_scenario, simulate_path
from .spotvol import EstimatorConfig, read_series_csv, spot_cov_series, validate_config
from .symfun import get_functional

log = logging.getLogger("volfn")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _add_estimator_args(p):
    p.add_argument("--g", default="square", help="functional name (default: square)")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--varpi", type=float, default=0.47)
    p.add_argument("--trunc-scale", type=float, default=None)
    p.add_argument("--varpi-prime", type=float, default=0.1)
    p.add_argument("--jump-trunc-scale", type=float, default=None)
    p.add_argument("--no-truncation", action="store_true")
    p.add_argument("--no-jump-correction", action="store_true")
    p.add_argument("--quad-nodes", type=int, default=16)
    p.add_argument("--border", choices=("kn", "kn_minus_1"), default="kn")


def _config(args):
    return EstimatorConfig(
        theta=args.theta,
        varpi=args.varpi,
        trunc_scale=args.trunc_scale,
        varpi_prime=args.varpi_prime,
        jump_trunc_scale=args.jump_trunc_scale,
        truncation_enabled=not args.no_truncation,
        jump_correction=not args.no_jump_correction,
        quad_nodes=args.quad_nodes,
        border=args.border,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="volfn", description="Integrated volatility functionals."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a path from a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="estimate from a t,x1..xd CSV series")
    p.add_argument("--series", required=True)
    _add_estimator_args(p)
    p.add_argument("--p", type=float, default=None, help="growth exponent")
    p.add_argument("--r", type=float, default=0.0, help="jump activity index")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--truth", default=None, help="truth.json sidecar")
    p.add_argument("--detections", default=None, help="write jump detections CSV")
    p.add_argument("--out", default=None)

    p = sub.add_parser("mc", help="Monte Carlo study on a scenario")
    p.add_argument("--scenario", required=True)
    _add_estimator_args(p)
    p.add_argument("--delta", type=float, default=1 / 5000)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--levels", default="0.95")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="per-replication CSV")
    p.add_argument("--summary", default=None, help="summary JSON (default: stdout)")
    return parser


def _truth_from_sidecar(path, g):
    import numpy as np

    with open(path) as fh:
        truth = json.load(fh)
    if g.name in truth.get("integrated", {}):
        return float(truth["integrated"][g.name])
    c = np.asarray(truth["c_fine"], dtype=float)
    d = int(truth["dim"])
    c = c.reshape(-1, d, d)
    return float(truth["fine_dt"] * np.sum(g(c[:-1])))


def _cmd_simulate(args):
    spec = load_scenario(args.scenario)
    if args.seed is not None:
        spec.seed = args.seed
    path = simulate_path(spec, args.delta)
    sidecar = export_path(path, args.out)
    log.info("wrote %s and %s", args.out, sidecar)


def _cmd_estimate(args):
    series = read_series_csv(args.series)
    cfg = _config(args)
    g = get_functional(args.g, series.dim)
    truth = _truth_from_sidecar(args.truth, g) if args.truth else None
    report = run_estimate(series, g, cfg, p=args.p, r=args.r, level=args.level, truth=truth)
    text = report.to_json(indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.detections:
        from .jumpfun import jump_functional
        from .symfun import bias_kernel_Gsecond

        p = g.growth_exponent if args.p is None else args.p
        tuning = validate_config(cfg, p, args.r, series=series)
        spots = spot_cov_series(series, tuning.k_n, tuning.u_n)
        _, dets = jump_functional(
            spots,
            lambda x, y: float(bias_kernel_Gsecond(g, x, y, cfg.quad_nodes)),
            tuning.k_n,
            series.delta_n,
            tuning.u_prime_n,
        )
        write_detections_csv(dets, args.detections)


def _cmd_mc(args):
    spec = load_scenario(args.scenario)
    levels = [float(v) for v in args.levels.split(",") if v.strip()]
    report = run_mc(
        spec,
        args.g,
        _config(args),
        delta_n=args.delta,
        reps=args.reps,
        levels=levels,
        seed=args.seed,
        workers=args.workers,
    )
    write_mc_csv(report, args.out)
    text = report.to_json(indent=2)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    log.info("%d replications in %.1f s", report.replications, report.runtime_seconds)


COMMANDS = {"simulate": _cmd_simulate, "estimate": _cmd_estimate, "mc": _cmd_mc}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"volfn: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"volfn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ArithmeticError, FloatingPointError) as exc:
        print(f"volfn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
