"""Joint state and parameter particle filters.

Three filters share one particle cloud of hidden states and parameter
values: a bootstrap filter, an auxiliary particle filter, and a
kernel-smoothing auxiliary filter that shrinks parameter particles toward
their weighted mean before jittering them. Parameters follow a slow random
walk ``theta_{i+1} = theta_i + N(0, Q)`` in the first two.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .model import ModelKind, ModelSpec, Theta, as_series, make_rng
from .special import LOG_CHISQ_MEAN

log = logging.getLogger(__name__)

PHI_LIMIT = 0.99
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class Resampling(str, Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


class FilterMethod(str, Enum):
    BOOTSTRAP = "bootstrap"
    APF = "apf"
    KSAPF = "ksapf"


@dataclass(frozen=True)
class ParticleCloud:
    x: np.ndarray
    theta: np.ndarray  # (M, 2): phi, sigma2
    w: np.ndarray

    @property
    def M(self) -> int:
        return int(self.x.shape[0])

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.w**2))

    def theta_mean(self) -> np.ndarray:
        return self.w @ self.theta

    def x_mean(self) -> float:
        return float(self.w @ self.x)


@dataclass(frozen=True)
class FilterConfig:
    """Particle filter settings.

    Parameters
    ----------
    M : int
        Number of particles.
    Q : (2, 2) array
        Covariance of the parameter random walk (bootstrap and APF).
    h : float
        Kernel smoothing factor in (0, 1); shrinkage is ``sqrt(1 - h^2)``.
    prior : ((phi_lo, phi_hi), (s2_lo, s2_hi))
        Uniform prior ranges for the initial parameter particles.
    resampling : Resampling
    """

    M: int = 5000
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.6e-6, 0.1e-6]))
    h: float = 0.1
    prior: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.5, 0.9), (0.1, 0.4))
    resampling: Resampling = Resampling.SYSTEMATIC

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "resampling", Resampling(self.resampling))
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if Q.shape != (2, 2) or not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-15:
            raise ValueError("Q must be a symmetric PSD 2x2 matrix")
        if not 0.0 < self.h < 1.0:
            raise ValueError("h must be in (0, 1)")
        (a, b), (c, d) = self.prior
        if not (-1 < a <= b < 1 and 0 < c <= d):
            raise ValueError("prior ranges must lie in the stationary region")

    @classmethod
    def point_mass(cls, theta: Theta, M: int, **kw) -> "FilterConfig":
        """Degenerate prior at ``theta`` with no parameter evolution."""
        prior = ((theta.phi, theta.phi), (theta.sigma2, theta.sigma2))
        return cls(M=M, Q=np.zeros((2, 2)), prior=prior, **kw)


@dataclass
class FilterDiagnostics:
    ess: np.ndarray
    resampled: np.ndarray
    x_mean: np.ndarray
    theta_mean: np.ndarray

    @property
    def resample_count(self) -> int:
        return int(self.resampled.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "ess", "resampled", "x_mean"])
        for i, (e, r, m) in enumerate(zip(self.ess, self.resampled, self.x_mean), start=1):
            w.writerow([i, repr(float(e)), int(r), repr(float(m))])
        return buf.getvalue()


# ---------------------------------------------------------------------------


def obs_loglik(z: float, x: np.ndarray, model: ModelSpec) -> np.ndarray:
    """``log p(z | x)`` for every particle."""
    e = z - x
    if model.is_sv:
        # density of beta * (log xi^2 - E log xi^2) via the chi-square(1) law
        u = e / model.beta + LOG_CHISQ_MEAN
        return -np.log(model.beta) - _HALF_LOG_2PI + 0.5 * u - 0.5 * np.exp(u)
    return -0.5 * np.log(model.sigma_eps2) - _HALF_LOG_2PI - 0.5 * e * e / model.sigma_eps2


def _log_weights(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    finite = np.isfinite(logw)
    if not finite.any():
        log.warning("particle weights collapsed; resetting to uniform")
        return np.full(logw.shape, 1.0 / logw.size)
    w = np.exp(logw - logw[finite].max())
    w[~finite] = 0.0
    return w / w.sum()


def resample(w: np.ndarray, rng: np.random.Generator, scheme=Resampling.SYSTEMATIC) -> np.ndarray:
    """Indices of resampled particles."""
    M = w.size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    if Resampling(scheme) is Resampling.SYSTEMATIC:
        u = (rng.random() + np.arange(M)) / M
    else:
        u = rng.random(M)
    return np.searchsorted(cdf, u, side="right").clip(max=M - 1)


def _reflect(theta: np.ndarray) -> np.ndarray:
    phi = theta[:, 0]
    for _ in range(4):
        phi = np.where(phi > PHI_LIMIT, 2 * PHI_LIMIT - phi, phi)
        phi = np.where(phi < -PHI_LIMIT, -2 * PHI_LIMIT - phi, phi)
    phi = np.clip(phi, -PHI_LIMIT, PHI_LIMIT)
    s2 = np.abs(theta[:, 1])
    s2 = np.where(s2 > 0, s2, 1e-12)
    return np.column_stack([phi, s2])


def _evolve_theta(theta, Q, rng):
    if not np.any(Q):
        return theta
    jump = rng.multivariate_normal(np.zeros(2), Q, size=theta.shape[0], method="cholesky")
    return _reflect(theta + jump)


def _propagate(x, theta, rng):
    return theta[:, 0] * x + np.sqrt(theta[:, 1]) * rng.standard_normal(x.shape[0])


def init_cloud(config: FilterConfig, model: ModelSpec, rng) -> ParticleCloud:
    """Parameters from the uniform prior, states from each particle's stationary law."""
    rng = make_rng(rng)
    M = config.M
    (a, b), (c, d) = config.prior
    theta = np.column_stack([rng.uniform(a, b, M), rng.uniform(c, d, M)])
    g2 = theta[:, 1] / (1.0 - theta[:, 0] ** 2)
    x = np.sqrt(g2) * rng.standard_normal(M)
    return ParticleCloud(x=x, theta=theta, w=np.full(M, 1.0 / M))


def weight_cloud(cloud: ParticleCloud, z: float, model: ModelSpec) -> ParticleCloud:
    """Reweight by ``p(z | x)`` without moving particles (first observation)."""
    w = normalize_log_weights(_log_weights(cloud.w) + obs_loglik(z, cloud.x, model))
    return replace(cloud, w=w)


def _maybe_resample(cloud, config, rng, force):
    if force or cloud.ess < cloud.M / 2.0:
        idx = resample(cloud.w, rng, config.resampling)
        return ParticleCloud(cloud.x[idx], cloud.theta[idx], np.full(cloud.M, 1.0 / cloud.M)), True
    return cloud, False


def bootstrap_step(cloud: ParticleCloud, z_next: float, model: ModelSpec, config: FilterConfig,
                   rng, return_flag: bool = False):
    """Propagate through the transition, weight by the observation density.

    Resamples when the effective sample size drops below ``M / 2``.
    """
    rng = make_rng(rng)
    theta = _evolve_theta(cloud.theta, config.Q, rng)
    x = _propagate(cloud.x, theta, rng)
    w = normalize_log_weights(_log_weights(cloud.w) + obs_loglik(z_next, x, model))
    out, flag = _maybe_resample(ParticleCloud(x, theta, w), config, rng, force=False)
    return (out, flag) if return_flag else out


def _auxiliary(cloud, z_next, model, x_point, rng, config):
    """Shared two-stage update given predicted parameters and look-ahead points."""
    first = obs_loglik(z_next, x_point, model)
    lam = normalize_log_weights(_log_weights(cloud.w) + first)
    idx = resample(lam, rng, config.resampling)
    return idx, first[idx]


def apf_step(cloud: ParticleCloud, z_next: float, model: ModelSpec, config: FilterConfig, rng) -> ParticleCloud:
    """Auxiliary particle filter step with look-ahead at the transition mean."""
    rng = make_rng(rng)
    theta = _evolve_theta(cloud.theta, config.Q, rng)
    mu = theta[:, 0] * cloud.x
    idx, first = _auxiliary(cloud, z_next, model, mu, rng, config)
    theta = theta[idx]
    x = _propagate(cloud.x[idx], theta, rng)
    w = normalize_log_weights(obs_loglik(z_next, x, model) - first)
    return ParticleCloud(x, theta, w)


def ksapf_step(cloud: ParticleCloud, z_next: float, model: ModelSpec, config: FilterConfig, rng) -> ParticleCloud:
    """Kernel-smoothing auxiliary step: shrink, look ahead, resample, jitter, propagate."""
    rng = make_rng(rng)
    a = np.sqrt(1.0 - config.h**2)
    mean = cloud.theta_mean()
    dev = cloud.theta - mean
    cov = (dev * cloud.w[:, None]).T @ dev
    shrunk = a * cloud.theta + (1.0 - a) * mean
    mu = shrunk[:, 0] * cloud.x
    idx, first = _auxiliary(cloud, z_next, model, mu, rng, config)
    theta = shrunk[idx]
    kcov = config.h**2 * cov
    if np.any(kcov):
        theta = _reflect(theta + rng.multivariate_normal(np.zeros(2), kcov, size=theta.shape[0],
                                                         method="eigh"))
    x = _propagate(cloud.x[idx], theta, rng)
    w = normalize_log_weights(obs_loglik(z_next, x, model) - first)
    return ParticleCloud(x, theta, w)


def run_filter(method, z, model: ModelSpec, config: FilterConfig = FilterConfig(), rng=None):
    """Filter the whole series; returns ``(theta_hat, diagnostics)``.

    ``theta_hat`` is the weighted mean of the parameter particles after the
    last observation.
    """
    method = FilterMethod(method)
    z = as_series(z, min_length=1)
    rng = make_rng(rng)
    n = z.shape[0]
    ess, flags, xm = np.empty(n), np.zeros(n, dtype=bool), np.empty(n)
    cloud = weight_cloud(init_cloud(config, model, rng), z[0], model)
    ess[0], xm[0] = cloud.ess, cloud.x_mean()
    if method is FilterMethod.BOOTSTRAP:
        cloud, flags[0] = _maybe_resample(cloud, config, rng, force=False)
    for i in range(1, n):
        if method is FilterMethod.BOOTSTRAP:
            cloud, flags[i] = bootstrap_step(cloud, z[i], model, config, rng, return_flag=True)
            ess[i] = cloud.ess
            xm[i] = cloud.x_mean()
            continue
        step = apf_step if method is FilterMethod.APF else ksapf_step
        cloud = step(cloud, z[i], model, config, rng)
        flags[i] = True
        ess[i], xm[i] = cloud.ess, cloud.x_mean()
    theta_mean = cloud.theta_mean()
    theta_hat = Theta(float(np.clip(theta_mean[0], -PHI_LIMIT, PHI_LIMIT)), float(theta_mean[1]))
    return theta_hat, FilterDiagnostics(ess, flags, xm, theta_mean)


class ParticleFilterEstimator(BaseEstimator):
    """Parameter estimate from a joint state/parameter particle filter.

    Parameters
    ----------
    method : {"bootstrap", "apf", "ksapf"}
    model : {"ar1", "sv"}
    sigma_eps2 : float
    beta : float, optional
    n_particles : int
    h : float
    random_state : int or None
    """

    def __init__(self, method="bootstrap", model="ar1", sigma_eps2=0.1, beta=None,
                 n_particles=5000, h=0.1, random_state=None):
        self.method = method
        self.model = model
        self.sigma_eps2 = sigma_eps2
        self.beta = beta
        self.n_particles = n_particles
        self.h = h
        self.random_state = random_state

    def fit(self, z, y=None):
        if ModelKind(self.model) is ModelKind.LOG_SV:
            spec = ModelSpec.sv(beta=self.beta, sigma_eps2=self.sigma_eps2)
        else:
            spec = ModelSpec.ar1(self.sigma_eps2)
        config = FilterConfig(M=self.n_particles, h=self.h)
        self.theta_, self.diagnostics_ = run_filter(self.method, z, spec, config, self.random_state)
        return self
