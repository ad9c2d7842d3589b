"""Model definitions, parameter boxes and trajectory simulation.

Two hidden-state models share the latent Gaussian AR(1) dynamics
``X[i+1] = phi * X[i] + eta[i+1]`` with ``eta ~ N(0, sigma2)``:

* ``GaussianAR1``: ``Z[i] = X[i] + eps[i]`` with Gaussian ``eps``.
* ``LogSV``: ``Y[i] = exp(X[i] / 2) * xi[i]**beta``; the observation used for
  estimation is ``Z[i] = log(Y[i]**2) - beta * E[log xi**2]`` so the additive
  noise is a centred, scaled log-chi-square variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .special import LOG_CHISQ_MEAN, LOG_CHISQ_VAR


class NonStationaryError(ValueError):
    """Raised when an autoregression coefficient has modulus >= 1."""


@dataclass(frozen=True)
class Theta:
    """Parameter pair (phi, sigma2) of the hidden AR(1) chain."""

    phi: float
    sigma2: float

    def __post_init__(self):
        if not np.isfinite(self.phi) or abs(self.phi) >= 1.0:
            raise NonStationaryError(f"|phi| must be < 1, got {self.phi}")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.sigma2], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Theta":
        phi, sigma2 = np.asarray(values, dtype=float).ravel()[:2]
        return cls(float(phi), float(sigma2))


@dataclass(frozen=True)
class ParamBox:
    """Compact rectangle for (phi, sigma2)."""

    phi_lo: float
    phi_hi: float
    s2_lo: float
    s2_hi: float

    def __post_init__(self):
        if not (-1.0 < self.phi_lo <= self.phi_hi < 1.0):
            raise ValueError("need -1 < phi_lo <= phi_hi < 1")
        if not (0.0 < self.s2_lo <= self.s2_hi):
            raise ValueError("need 0 < s2_lo <= s2_hi")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.phi_lo, self.s2_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.phi_hi, self.s2_hi])

    def contains(self, theta) -> bool:
        v = theta.as_array() if isinstance(theta, Theta) else np.asarray(theta, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def clip(self, values) -> np.ndarray:
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def grid(self, k: int = 3) -> np.ndarray:
        """Row-major ``k x k`` grid of cell centres (phi varies slowest)."""
        frac = (np.arange(k) + 0.5) / k
        phis = self.phi_lo + frac * (self.phi_hi - self.phi_lo)
        s2s = self.s2_lo + frac * (self.s2_hi - self.s2_lo)
        return np.array([[p, s] for p in phis for s in s2s])


class ModelKind(str, Enum):
    GAUSSIAN_AR1 = "ar1"
    LOG_SV = "sv"


def sv_noise_variance(beta: float) -> float:
    """Variance of ``beta * (log xi^2 - E log xi^2)``."""
    return beta**2 * LOG_CHISQ_VAR


def default_box(kind: ModelKind, sigma_eps2: float) -> ParamBox:
    if ModelKind(kind) is ModelKind.GAUSSIAN_AR1:
        return ParamBox(-0.99, 0.99, sigma_eps2 + 0.05, max(3.0, sigma_eps2 + 0.1))
    return ParamBox(-0.99, 0.99, 0.01, 3.0)


@dataclass(frozen=True)
class ModelSpec:
    """Which model is fitted, with its known noise parameters and box."""

    kind: ModelKind
    sigma_eps2: float
    beta: Optional[float] = None
    box: Optional[ParamBox] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.sigma_eps2 <= 0:
            raise ValueError("sigma_eps2 must be > 0")
        if self.kind is ModelKind.LOG_SV:
            if self.beta is None or self.beta <= 0:
                raise ValueError("LogSV needs beta > 0")
            if not np.isclose(self.sigma_eps2, sv_noise_variance(self.beta), rtol=1e-9):
                raise ValueError("LogSV requires sigma_eps2 = beta^2 pi^2 / 2")
        if self.box is None:
            object.__setattr__(self, "box", default_box(self.kind, self.sigma_eps2))
        if self.kind is ModelKind.GAUSSIAN_AR1 and self.box.s2_lo <= self.sigma_eps2:
            raise ValueError("AR(1) box needs s2_lo > sigma_eps2")

    @classmethod
    def ar1(cls, sigma_eps2: float = 0.1, box: Optional[ParamBox] = None) -> "ModelSpec":
        return cls(ModelKind.GAUSSIAN_AR1, sigma_eps2, None, box)

    @classmethod
    def sv(cls, beta: Optional[float] = None, sigma_eps2: Optional[float] = None,
           box: Optional[ParamBox] = None) -> "ModelSpec":
        """Log-SV model from either ``beta`` or the target noise variance."""
        if beta is None:
            if sigma_eps2 is None:
                beta = 1.0
            else:
                beta = float(np.sqrt(sigma_eps2 / LOG_CHISQ_VAR))
        return cls(ModelKind.LOG_SV, sv_noise_variance(beta), beta, box)

    @property
    def is_sv(self) -> bool:
        return self.kind is ModelKind.LOG_SV


@dataclass(frozen=True)
class Trajectory:
    """Observations ``z`` and, for simulated data, hidden states ``x``.

    For SV simulations ``y`` holds the raw returns before the log transform.
    """

    z: np.ndarray
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.shape != z.shape:
                raise ValueError("x and z must have the same length")
            object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.z.shape[0])


def make_rng(seed=None) -> np.random.Generator:
    """Counter-based generator (Philox) from an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_rngs(seed, k: int) -> list:
    """``k`` independent substreams derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(k)]


def stationary_variance(theta: Theta) -> float:
    """gamma^2 = sigma2 / (1 - phi^2)."""
    if abs(theta.phi) >= 1.0:
        raise NonStationaryError("non-stationary phi")
    return theta.sigma2 / (1.0 - theta.phi**2)


def _simulate_states(theta: Theta, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 2:
        raise ValueError("n must be >= 2")
    g2 = stationary_variance(theta)
    eta = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = np.sqrt(g2) * eta[0]
    sd = np.sqrt(theta.sigma2)
    for i in range(1, n):
        x[i] = theta.phi * x[i - 1] + sd * eta[i]
    return x


def simulate_ar1(theta: Theta, sigma_eps2: float, n: int, rng) -> Trajectory:
    """Stationary AR(1) path observed with additive N(0, sigma_eps2) noise."""
    rng = make_rng(rng)
    x = _simulate_states(theta, n, rng)
    z = x + np.sqrt(sigma_eps2) * rng.standard_normal(n)
    return Trajectory(z=z, x=x)


def simulate_sv(theta: Theta, beta: float, n: int, rng) -> Trajectory:
    """Log-SV path; returns raw returns ``y`` and centred log-squares ``z``."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    rng = make_rng(rng)
    x = _simulate_states(theta, n, rng)
    xi = rng.standard_normal(n)
    # xi**beta for negative xi: keep the sign, scale the modulus
    y = np.exp(x / 2.0) * np.sign(xi) * np.abs(xi) ** beta
    z = np.log(y**2) - beta * LOG_CHISQ_MEAN
    return Trajectory(z=z, x=x, y=y)


def simulate(model: ModelSpec, theta: Theta, n: int, rng) -> Trajectory:
    if model.is_sv:
        return simulate_sv(theta, model.beta, n, rng)
    return simulate_ar1(theta, model.sigma_eps2, n, rng)


def project_into_box(theta_raw, box: ParamBox) -> Theta:
    """Componentwise clamp of ``theta_raw`` into ``box``."""
    v = theta_raw.as_array() if isinstance(theta_raw, Theta) else np.asarray(theta_raw, dtype=float)
    return Theta.from_array(box.clip(v))


def as_series(z: Sequence[float], min_length: int = 2) -> np.ndarray:
    """Validate an observation series: 1-D, finite, long enough."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError("observations must be a 1-D series")
    if arr.shape[0] < min_length:
        raise ValueError(f"need at least {min_length} observations, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("observations contain non-finite values")
    return arr
