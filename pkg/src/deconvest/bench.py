"""Monte Carlo study harness: paired replicates, MSE, coverage and timing."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .asymptotics import ConfidenceInterval, confidence_interval, sigma_matrix
from .contrast import estimate as contrast_estimate
from .kalman import qml_estimate
from .model import ModelSpec, Theta, make_rng, simulate
from .particles import FilterConfig, run_filter
from .siemle import SiemleConfig, siemle_estimate

log = logging.getLogger(__name__)


def mse(estimates: Sequence, truth: Theta) -> float:
    """``mean_j [(phi_j - phi0)^2 + (s2_j - s20)^2]``."""
    est = np.array([e.as_array() if isinstance(e, Theta) else np.asarray(e, float) for e in estimates])
    if est.shape[0] < 1:
        raise ValueError("need at least one estimate")
    return float(np.mean(np.sum((est - truth.as_array()) ** 2, axis=1)))


def coverage(ci_list: Sequence[Sequence[ConfidenceInterval]], truth: Theta) -> np.ndarray:
    """Per-coordinate fraction of intervals that contain the truth."""
    if len(ci_list) < 1:
        raise ValueError("need at least one interval pair")
    t = truth.as_array()
    hits = np.array([[ci.contains(t[k]) for k, ci in enumerate(pair)] for pair in ci_list])
    return hits.mean(axis=0)


@dataclass(frozen=True)
class StudyConfig:
    """Per-method settings for a study."""

    particles: int = 5000
    siemle: SiemleConfig = SiemleConfig()
    theta0: Theta = Theta(0.7, 0.3)
    n_jobs: int = 1


MethodFn = Callable[[ModelSpec, np.ndarray, np.random.Generator, StudyConfig], Theta]


def _m_contrast(model, z, rng, cfg):
    return contrast_estimate(model, z).theta_hat


def _m_qml(model, z, rng, cfg):
    return qml_estimate(model, z).theta_hat


def _particle(method):
    def run(model, z, rng, cfg):
        return run_filter(method, z, model, FilterConfig(M=cfg.particles), rng)[0]
    return run


def _m_siemle(model, z, rng, cfg):
    return siemle_estimate(model, z, cfg.siemle, rng).theta_hat


METHODS: Dict[str, MethodFn] = {
    "contrast": _m_contrast,
    "qml": _m_qml,
    "bootstrap": _particle("bootstrap"),
    "apf": _particle("apf"),
    "ksapf": _particle("ksapf"),
    "siemle": _m_siemle,
}


@dataclass
class McStudyReport:
    """Per-replicate estimates and aggregates of a study.

    ``estimates[m]`` is an ``(N, 2)`` array with NaN rows for failed
    replicates; ``seconds[m]`` holds per-replicate wall-clock times.
    """

    methods: List[str]
    estimates: Dict[str, np.ndarray]
    seconds: Dict[str, np.ndarray]
    failures: Dict[str, int]
    mse: Dict[str, float]
    config: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> Dict[str, float]:
        return {m: float(np.sum(self.seconds[m])) for m in self.methods}

    def recompute_mse(self) -> Dict[str, float]:
        truth = Theta(*self.config["theta0"])
        out = {}
        for m in self.methods:
            ok = self.estimates[m][~np.isnan(self.estimates[m]).any(axis=1)]
            out[m] = mse(ok, truth) if ok.shape[0] else float("nan")
        return out

    def to_json(self) -> str:
        payload = {
            "methods": self.methods,
            "estimates": {m: self.estimates[m].tolist() for m in self.methods},
            "seconds": {m: self.seconds[m].tolist() for m in self.methods},
            "failures": self.failures,
            "mse": self.mse,
            "config": self.config,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "McStudyReport":
        d = json.loads(text)
        ms = d["methods"]
        return cls(
            methods=ms,
            estimates={m: np.array(d["estimates"][m], dtype=float).reshape(-1, 2) for m in ms},
            seconds={m: np.array(d["seconds"][m], dtype=float) for m in ms},
            failures={m: int(d["failures"][m]) for m in ms},
            mse={m: float(d["mse"][m]) for m in ms},
            config=d["config"],
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "replicate", "phi_hat", "sigma2_hat", "seconds"])
        for m in self.methods:
            for r, (est, sec) in enumerate(zip(self.estimates[m], self.seconds[m])):
                w.writerow([m, r, repr(float(est[0])), repr(float(est[1])), repr(float(sec))])
        return buf.getvalue()


def _replicate(args):
    model, methods, n, child, cfg = args
    streams = child.spawn(len(methods) + 1)
    traj = simulate(model, cfg.theta0, n, make_rng(streams[0]))
    row = {}
    for m, ss in zip(methods, streams[1:]):
        t0 = time.perf_counter()
        try:
            est = METHODS[m](model, traj.z, make_rng(ss), cfg).as_array()
        except Exception as exc:  # one failing method must not sink the study
            log.warning("method %s failed: %s", m, exc)
            est = np.full(2, np.nan)
        row[m] = (est, time.perf_counter() - t0)
    return row


def run_study(model: ModelSpec, methods: Sequence[str], n: int, N: int,
              config: StudyConfig = StudyConfig(), seed: int = 0) -> McStudyReport:
    """Simulate ``N`` paired replicates and estimate with each method.

    Every method sees the same trajectory within a replicate; replicate
    streams derive from ``SeedSequence(seed)`` so results do not depend on
    ``n_jobs``.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    if N < 1:
        raise ValueError("N must be >= 1")
    children = np.random.SeedSequence(seed).spawn(N)
    jobs = [(model, methods, n, c, config) for c in children]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(config.n_jobs) as ex:
            rows = list(ex.map(_replicate, jobs))
    else:
        rows = [_replicate(j) for j in jobs]
    est = {m: np.array([r[m][0] for r in rows]) for m in methods}
    sec = {m: np.array([r[m][1] for r in rows]) for m in methods}
    fails = {m: int(np.isnan(est[m]).any(axis=1).sum()) for m in methods}
    report = McStudyReport(
        methods=methods, estimates=est, seconds=sec, failures=fails, mse={},
        config={
            "model": model.kind.value, "sigma_eps2": model.sigma_eps2, "beta": model.beta,
            "n": n, "N": N, "M": config.particles, "seed": seed,
            "theta0": [config.theta0.phi, config.theta0.sigma2],
        },
    )
    report.mse = report.recompute_mse()
    return report


@dataclass
class CoverageTable:
    n_grid: List[int]
    coverage: np.ndarray  # (len(n_grid), 2)
    median_width: np.ndarray  # (len(n_grid), 2)
    failures: List[int]
    alpha: float

    def to_json(self) -> str:
        return json.dumps({
            "n_grid": self.n_grid, "coverage": self.coverage.tolist(),
            "median_width": self.median_width.tolist(), "failures": self.failures, "alpha": self.alpha,
        }, indent=2)


def _coverage_replicate(args):
    model, n, child, alpha, theta0 = args
    traj = simulate(model, theta0, n, make_rng(child))
    try:
        th = contrast_estimate(model, traj.z).theta_hat
        if model.is_sv:
            parts = sigma_matrix(th, model.sigma_eps2, p2_source="plugin", z=traj.z, beta=model.beta)
        else:
            parts = sigma_matrix(th, model.sigma_eps2)
        return confidence_interval(th, parts.Sigma, n, alpha)
    except Exception as exc:
        log.warning("coverage replicate failed: %s", exc)
        return None


def coverage_curve(model: ModelSpec, n_grid: Sequence[int], N: int, alpha: float = 0.05,
                   seed: int = 0, theta0: Theta = Theta(0.7, 0.3), n_jobs: int = 1) -> CoverageTable:
    """Coverage and median CI width of the contrast estimator at each ``n``."""
    n_grid = [int(v) for v in n_grid]
    if any(b < a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be nondecreasing")
    streams = np.random.SeedSequence(seed).spawn(len(n_grid))
    cov, width, fails = [], [], []
    for n, ss in zip(n_grid, streams):
        jobs = [(model, n, c, alpha, theta0) for c in ss.spawn(N)]
        if n_jobs > 1:
            with ProcessPoolExecutor(n_jobs) as ex:
                cis = list(ex.map(_coverage_replicate, jobs))
        else:
            cis = [_coverage_replicate(j) for j in jobs]
        ok = [c for c in cis if c is not None]
        fails.append(len(cis) - len(ok))
        cov.append(coverage(ok, theta0) if ok else np.full(2, np.nan))
        width.append(np.median([[c.width for c in pair] for pair in ok], axis=0) if ok else np.full(2, np.nan))
    return CoverageTable(n_grid, np.array(cov), np.array(width), fails, alpha)
