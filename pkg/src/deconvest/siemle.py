"""Simulated EM likelihood estimation for the log-SV model.

The log-chi-square noise is replaced by a finite normal mixture. Conditional
on the mixture indicators the model is linear Gaussian, so a Gibbs sampler
alternates indicator draws with forward-filter backward-sample state draws.
The retained indicator sequences define a Monte Carlo E-step, maximised by
Nelder-Mead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .kalman import kalman_filter, kalman_loglik_batch
from .model import ModelKind, ModelSpec, Theta, as_series, make_rng
from .optimize import MinimizeResult, NelderMeadOptions, nelder_mead_box
from .special import LOG_CHISQ_MEAN

_KSC_OFFSET = 1.2704


@dataclass(frozen=True)
class MixtureApprox:
    """Normal mixture ``sum_j q_j N(m_j, v2_j)`` for the observation noise."""

    q: np.ndarray
    m: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        q, m, v2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.q, self.m, self.v2))
        if not (q.shape == m.shape == v2.shape) or q.ndim != 1:
            raise ValueError("q, m, v2 must be 1-D and of equal length")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(v2 <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "v2", v2)

    @property
    def K(self) -> int:
        return int(self.q.size)

    def mean(self) -> float:
        return float(self.q @ self.m)

    def variance(self) -> float:
        return float(self.q @ (self.v2 + self.m**2) - self.mean() ** 2)

    def centered(self) -> "MixtureApprox":
        return MixtureApprox(self.q, self.m - self.mean(), self.v2)

    @classmethod
    def single(cls, sigma_eps2: float) -> "MixtureApprox":
        """One Gaussian component; the model becomes exactly linear Gaussian."""
        return cls(np.array([1.0]), np.array([0.0]), np.array([sigma_eps2]))

    @classmethod
    def from_csv(cls, path) -> "MixtureApprox":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        body = np.array(rows[1:], dtype=float)
        return cls(body[:, 0], body[:, 1], body[:, 2])

    @classmethod
    def log_chisq(cls, beta: float = 1.0) -> "MixtureApprox":
        """Bundled seven-component table, rescaled to ``beta * (log xi^2 - E log xi^2)`` and centred."""
        ref = resources.files("deconvest") / "data" / "ksc_mixture.csv"
        with resources.as_file(ref) as path:
            base = cls.from_csv(path)
        m = beta * (base.m - _KSC_OFFSET - LOG_CHISQ_MEAN)
        return cls(base.q, m, beta**2 * base.v2).centered()


def indicator_posterior(z, x, mixture: MixtureApprox) -> np.ndarray:
    """Per-position posterior over components, shape ``(n, K)``."""
    e = np.asarray(z, float)[:, None] - np.asarray(x, float)[:, None] - mixture.m[None, :]
    with np.errstate(divide="ignore"):
        logq = np.log(mixture.q)
    logp = logq - 0.5 * np.log(mixture.v2) - 0.5 * e**2 / mixture.v2
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def sample_indicators(theta: Optional[Theta], z, x, mixture: MixtureApprox, rng) -> np.ndarray:
    """Independent draws of each ``s_r`` from its component posterior.

    ``theta`` is accepted for signature symmetry; given the states the
    indicators do not depend on it.
    """
    z, x = np.asarray(z, float), np.asarray(x, float)
    if z.shape != x.shape:
        raise ValueError("z and x must have equal length")
    rng = make_rng(rng)
    p = indicator_posterior(z, x, mixture)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(z.shape[0])[:, None]
    return np.minimum((u > cdf).sum(axis=1), mixture.K - 1)


def sample_states_ffbs(theta: Theta, z, indicators, mixture: MixtureApprox, rng) -> np.ndarray:
    """Joint draw of the state path given observations and indicators."""
    rng = make_rng(rng)
    s = np.asarray(indicators, dtype=int)
    run = kalman_filter(theta, mixture.v2[0], z, offsets=mixture.m[s], obs_var=mixture.v2[s])
    xf, Pf = run.x_filt.tolist(), run.P_filt.tolist()
    n = len(xf)
    noise = rng.standard_normal(n).tolist()
    phi, s2 = theta.phi, theta.sigma2
    out = [0.0] * n
    out[-1] = xf[-1] + math.sqrt(Pf[-1]) * noise[-1]
    for t in range(n - 2, -1, -1):
        denom = phi * phi * Pf[t] + s2
        gain = Pf[t] * phi / denom
        mean = xf[t] + gain * (out[t + 1] - phi * xf[t])
        var = Pf[t] - gain * phi * Pf[t]
        out[t] = mean + math.sqrt(max(var, 0.0)) * noise[t]
    return np.array(out)


def q_tilde(theta: Theta, z, indicator_draws, mixture: MixtureApprox) -> float:
    """Average offset-Kalman log-likelihood over the retained indicator draws."""
    S = np.atleast_2d(np.asarray(indicator_draws, dtype=int))
    if S.shape[0] < 1:
        raise ValueError("need at least one indicator draw")
    return float(np.mean(kalman_loglik_batch(theta, z, mixture.m[S], mixture.v2[S])))


@dataclass
class EmState:
    theta_k: Theta
    indicator_draws: np.ndarray
    q_tilde: float
    iteration: int = 0


@dataclass(frozen=True)
class SiemleConfig:
    """SIEMLE settings.

    ``max_sweeps`` caps the number of EM iterations; each iteration runs
    ``ceil(M_tilde / (1 - burn_in))`` Gibbs sweeps.
    """

    M_tilde: int = 100
    C: float = 1e-4
    max_sweeps: int = 30
    burn_in: float = 0.2
    theta_start: Theta = field(default_factory=lambda: Theta(0.5, 0.5))
    mixture: Optional[MixtureApprox] = None
    nm: NelderMeadOptions = NelderMeadOptions(xtol=1e-6, max_iter=300)

    def __post_init__(self):
        if self.M_tilde < 1 or self.max_sweeps < 1 or not self.C > 0:
            raise ValueError("invalid SIEMLE configuration")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must be in [0, 1)")


def gibbs_indicator_draws(theta: Theta, z, mixture: MixtureApprox, n_keep: int, burn_in: float,
                          rng, x_init=None):
    """Run the two-block Gibbs sampler; returns kept indicators and the final state path."""
    rng = make_rng(rng)
    total = int(math.ceil(n_keep / (1.0 - burn_in)))
    x = kalman_filter(theta, mixture.variance() + mixture.mean() ** 2, z).x_filt if x_init is None else x_init
    kept = np.empty((n_keep, len(z)), dtype=np.int64)
    for sweep in range(total):
        s = sample_indicators(theta, z, x, mixture, rng)
        x = sample_states_ffbs(theta, z, s, mixture, rng)
        slot = sweep - (total - n_keep)
        if slot >= 0:
            kept[slot] = s
    return kept, x


def siemle_estimate(model: ModelSpec, z, config: SiemleConfig = SiemleConfig(), rng=None,
                    trace: Optional[list] = None) -> MinimizeResult:
    """Simulated EM; ``objective_value`` is ``-Q~`` at the returned parameter.

    When ``trace`` is a list, an :class:`EmState` is appended per iteration.
    """
    z = as_series(z)
    rng = make_rng(rng)
    if config.mixture is not None:
        mixture = config.mixture
    elif model.is_sv:
        mixture = MixtureApprox.log_chisq(model.beta)
    else:
        mixture = MixtureApprox.single(model.sigma_eps2)
    box = model.box
    theta = Theta.from_array(box.clip(config.theta_start.as_array()))
    x = None
    converged = False
    value = np.nan
    n_eval = 0
    for it in range(1, config.max_sweeps + 1):
        draws, x = gibbs_indicator_draws(theta, z, mixture, config.M_tilde, config.burn_in, rng, x)
        if mixture.K == 1:
            draws = draws[:1]

        def negq(v, draws=draws):
            return -q_tilde(Theta(float(v[0]), float(v[1])), z, draws, mixture)

        start_val = negq(theta.as_array())
        xb, fb, _, ne = nelder_mead_box(negq, theta.as_array(), box, config.nm)
        n_eval += ne + 1
        new = Theta.from_array(xb) if fb <= start_val else theta
        value = min(fb, start_val)
        if trace is not None:
            trace.append(EmState(new, draws, -value, it))
        step = np.max(np.abs(new.as_array() - theta.as_array()))
        theta = new
        if step <= config.C:
            converged = True
            break
    return MinimizeResult(theta_hat=theta, objective_value=float(value), restarts_used=1,
                          converged=converged, n_evaluations=n_eval)


class SIEMLEstimator(BaseEstimator):
    """Simulated EM likelihood estimator.

    Parameters
    ----------
    model : {"sv", "ar1"}
    sigma_eps2 : float
    beta : float, optional
    M_tilde : int
        Retained Gibbs draws per E-step.
    C : float
        Stop when successive iterates differ by at most ``C`` (max-norm).
    max_sweeps : int
        Cap on EM iterations.
    mixture : MixtureApprox, optional
    random_state : int or None
    """

    def __init__(self, model="sv", sigma_eps2=0.1, beta=None, M_tilde=100, C=1e-4,
                 max_sweeps=30, mixture=None, random_state=None):
        self.model = model
        self.sigma_eps2 = sigma_eps2
        self.beta = beta
        self.M_tilde = M_tilde
        self.C = C
        self.max_sweeps = max_sweeps
        self.mixture = mixture
        self.random_state = random_state

    def fit(self, z, y=None):
        if ModelKind(self.model) is ModelKind.LOG_SV:
            spec = ModelSpec.sv(beta=self.beta, sigma_eps2=self.sigma_eps2)
        else:
            spec = ModelSpec.ar1(self.sigma_eps2)
        cfg = SiemleConfig(M_tilde=self.M_tilde, C=self.C, max_sweeps=self.max_sweeps, mixture=self.mixture)
        self.result_ = siemle_estimate(spec, z, cfg, self.random_state)
        self.theta_ = self.result_.theta_hat
        return self
