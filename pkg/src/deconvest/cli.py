"""Command-line interface.

Exit status is 0 on success, 1 for malformed input and 2 when estimation
fails. Errors go to standard error as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .asymptotics import confidence_interval, sigma_matrix
from .bench import METHODS, StudyConfig, coverage_curve, run_study
from .config import load_config
from .contrast import estimate as contrast_estimate
from .exceptions import DomainError, EstimationError, IllConditionedError, QuadratureError
from .ingest import (MalformedInputError, read_prices_csv, read_series_csv, to_log_chisq, to_returns,
                     write_series_csv, write_trajectory_csv)
from .kalman import qml_estimate
from .model import ModelSpec, NonStationaryError, ParamBox, Theta, make_rng, simulate
from .particles import FilterConfig, run_filter
from .siemle import SiemleConfig, siemle_estimate

EXIT_INPUT = 1
EXIT_ESTIMATION = 2
_ESTIMATION_ERRORS = (DomainError, EstimationError, IllConditionedError, QuadratureError,
                      FloatingPointError, np.linalg.LinAlgError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(EXIT_INPUT, "usage", message)


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    raise SystemExit(code)


def _common(p):
    p.add_argument("--config", help="INI file with defaults")
    p.add_argument("--model", choices=["ar1", "sv"])
    p.add_argument("--sigma-eps2", type=float, dest="sigma_eps2")
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--box", help="phi_lo,phi_hi,s2_lo,s2_hi search box")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deconvest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated trajectory CSV")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="estimate (phi, sigma2) from a Z CSV")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--method", default="contrast", choices=sorted(METHODS))
    p.add_argument("--alpha", type=float)
    p.add_argument("--particles", type=int)
    p.add_argument("--omit-timing", action="store_true", help="report seconds as 0 for reproducible output")

    for name in ("mc-study", "coverage"):
        p = sub.add_parser(name, help="Monte Carlo study" if name == "mc-study" else "coverage curve")
        _common(p)
        p.add_argument("--reps", type=int)
        p.add_argument("--out", required=True)
        p.add_argument("--omit-timing", action="store_true")
        if name == "mc-study":
            p.add_argument("--n", type=int)
            p.add_argument("--methods", "--method", dest="methods", default="contrast,qml")
            p.add_argument("--particles", type=int)
            p.add_argument("--csv", help="also write per-replicate estimates here")
        else:
            p.add_argument("--n", dest="n_grid", default="100,500,1000")
            p.add_argument("--alpha", type=float)

    p = sub.add_parser("ingest", help="convert prices to log-squared returns")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kappa", choices=["rounded", "exact"], default="rounded")
    p.add_argument("--config")
    return parser


def _settings(args):
    cfg = load_config(getattr(args, "config", None))
    for key in ("model", "sigma_eps2", "beta", "seed", "n", "reps", "alpha", "particles", "phi", "sigma2", "box"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def _spec(cfg) -> ModelSpec:
    box = None
    if cfg.box:
        try:
            box = ParamBox(*(float(v) for v in cfg.box.split(",")))
        except TypeError as exc:
            raise ValueError(f"box needs four numbers: {cfg.box!r}") from exc
    if cfg.model == "sv":
        return ModelSpec.sv(beta=cfg.beta, sigma_eps2=None if cfg.beta else cfg.sigma_eps2, box=box)
    return ModelSpec.ar1(cfg.sigma_eps2, box=box)


def _estimate(method, spec, z, cfg):
    rng = make_rng(cfg.seed)
    if method == "contrast":
        return contrast_estimate(spec, z).theta_hat
    if method == "qml":
        return qml_estimate(spec, z).theta_hat
    if method == "siemle":
        sc = SiemleConfig(M_tilde=cfg.M_tilde, C=cfg.C, max_sweeps=cfg.max_sweeps)
        return siemle_estimate(spec, z, sc, rng).theta_hat
    return run_filter(method, z, spec, FilterConfig(M=cfg.particles, h=cfg.h), rng)[0]


def cmd_simulate(args, cfg):
    spec = _spec(cfg)
    traj = simulate(spec, Theta(cfg.phi, cfg.sigma2), cfg.n, make_rng(cfg.seed))
    write_trajectory_csv(args.out, traj)
    return {"out": args.out, "n": traj.n}


def cmd_estimate(args, cfg):
    spec = _spec(cfg)
    z = read_series_csv(args.input, None)
    t0 = time.perf_counter()
    theta = _estimate(args.method, spec, z, cfg)
    payload = {"method": args.method, "theta_hat": [theta.phi, theta.sigma2],
               "sigma_matrix": None, "ci": None}
    if args.method == "contrast":
        if spec.is_sv:
            parts = sigma_matrix(theta, spec.sigma_eps2, cfg.q_trunc, "plugin", z=z, beta=spec.beta)
        else:
            parts = sigma_matrix(theta, spec.sigma_eps2, cfg.q_trunc)
        cis = confidence_interval(theta, parts.Sigma, z.shape[0], cfg.alpha)
        payload["sigma_matrix"] = parts.Sigma.tolist()
        payload["ci"] = [[c.lo, c.hi] for c in cis]
    payload["seconds"] = 0.0 if args.omit_timing else time.perf_counter() - t0
    return payload


def cmd_mc_study(args, cfg):
    spec = _spec(cfg)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    sc = StudyConfig(particles=cfg.particles, theta0=Theta(cfg.phi, cfg.sigma2),
                     siemle=SiemleConfig(M_tilde=cfg.M_tilde, C=cfg.C, max_sweeps=cfg.max_sweeps))
    report = run_study(spec, methods, cfg.n, cfg.reps, sc, cfg.seed)
    if args.omit_timing:
        report.seconds = {m: np.zeros_like(v) for m, v in report.seconds.items()}
    Path(args.out).write_text(report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return {"out": args.out, "mse": report.mse, "failures": report.failures}


def cmd_coverage(args, cfg):
    spec = _spec(cfg)
    grid = [int(v) for v in args.n_grid.split(",")]
    table = coverage_curve(spec, grid, cfg.reps, cfg.alpha, cfg.seed, Theta(cfg.phi, cfg.sigma2))
    Path(args.out).write_text(table.to_json())
    return {"out": args.out, "coverage": table.coverage.tolist()}


def cmd_ingest(args, cfg):
    prices = read_prices_csv(args.input)
    z, floored = to_log_chisq(to_returns(prices), mode=args.kappa, return_count=True)
    write_series_csv(args.out, z, "z")
    return {"out": args.out, "n": int(z.size), "floored": floored}


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mc-study": cmd_mc_study,
            "coverage": cmd_coverage, "ingest": cmd_ingest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _settings(args)
        result = COMMANDS[args.command](args, cfg)
    except _ESTIMATION_ERRORS as exc:
        _fail(EXIT_ESTIMATION, "estimation", exc)
    except (MalformedInputError, NonStationaryError, ValueError, OSError) as exc:
        _fail(EXIT_INPUT, "input", exc)
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
