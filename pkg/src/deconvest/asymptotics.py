"""Sandwich covariance of the contrast estimator and confidence intervals.

The asymptotic covariance is ``Sigma = V^-1 Omega V^-1`` where ``V`` is the
Hessian of the limit contrast and ``Omega`` is the long-run variance of the
score ``grad m(Z_i, Z_{i+1}) = grad ||l||^2 - 2 Z_{i+1} U(Z_i)``, with ``U``
the deconvolved transform of ``grad l``.

Writing ``g_i = Z_{i+1} U(Z_i)`` and ``Gamma_k = E[g_0 g_k'] - P1``,

    Omega = 4 * (Gamma_0 + sum_{k=1}^{q-1} (Gamma_k + Gamma_k'))

``Gamma_0 = P2 - P1``. From lag 2 on the two factors share no noise, so the
lag moments depend on the hidden chain alone and are model-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.stats import norm

from ._gaussian import gauss_expect
from .contrast import QuadratureConfig, u_star_quadrature, _sv_log_fstar
from .exceptions import DomainError, IllConditionedError
from .model import Theta, as_series, stationary_variance

_SQRT_PI = np.sqrt(np.pi)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class SandwichParts:
    """Pieces of the sandwich covariance.

    ``Omega1 = 4 * Gamma_0`` and ``OmegaTail = 4 * sum_k (Gamma_k + Gamma_k')``
    so that ``Omega = Omega1 + OmegaTail``.
    """

    V: np.ndarray
    Omega1: np.ndarray
    OmegaTail: np.ndarray
    Sigma: np.ndarray
    q_trunc: int

    @property
    def Omega(self) -> np.ndarray:
        return self.Omega1 + self.OmegaTail

    def to_json(self) -> str:
        payload = {
            "V": self.V.tolist(),
            "Omega1": self.Omega1.tolist(),
            "OmegaTail": self.OmegaTail.tolist(),
            "Sigma": self.Sigma.tolist(),
            "q_trunc": self.q_trunc,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "SandwichParts":
        d = json.loads(text)
        return cls(*(np.array(d[k]) for k in ("V", "Omega1", "OmegaTail", "Sigma")), int(d["q_trunc"]))


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    alpha: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("lo must not exceed hi")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


# ---------------------------------------------------------------------------
# closed forms


def hessian_V(theta: Theta) -> np.ndarray:
    """Hessian of the limit contrast at its minimiser."""
    phi = theta.phi
    g = np.sqrt(stationary_variance(theta))
    c = 1.0 / (8.0 * _SQRT_PI * (1.0 - phi**2) ** 2)
    off = (-5.0 * phi**5 + 3.0 * phi**3 + 2.0 * phi) / (2.0 * g * (1.0 - phi**2))
    return c * np.array([
        [g * (7.0 * phi**4 - 4.0 * phi**2 + 4.0), off],
        [off, 7.0 * phi**2 / (4.0 * g**3)],
    ])


def p1_matrix(theta: Theta) -> np.ndarray:
    """``E[b(X) grad l(X)] E[b(X) grad l(X)]'`` (rank one)."""
    phi = theta.phi
    g2 = stationary_variance(theta)
    d = np.pi * (1.0 - phi**2) ** 2
    a = phi**2 * g2 * (2.0 - phi**2) ** 2 / (64.0 * d)
    b = phi**3 * (2.0 - phi**2) / (128.0 * d)
    c = phi**4 / (256.0 * d * g2)
    return np.array([[a, b], [b, c]])


def grad_l_coefficients(theta: Theta) -> np.ndarray:
    """Rows ``(c1, c3)`` with ``d l / d theta_k = (c1 x + c3 x^3) * N(0, gamma^2) pdf``."""
    phi = theta.phi
    g2 = stationary_variance(theta)
    om = 1.0 - phi**2
    return np.array([
        [(1.0 - 2.0 * phi**2) / om, phi**2 / (om * g2)],
        [-phi / (2.0 * om * g2), phi / (2.0 * om * g2**2)],
    ])


def grad_l(theta: Theta, x) -> np.ndarray:
    """Gradient of ``l`` in ``(phi, sigma2)``; shape ``(2,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    g2 = stationary_variance(theta)
    c = grad_l_coefficients(theta)
    dens = np.exp(-(x**2) / (2.0 * g2)) / np.sqrt(2.0 * np.pi * g2)
    return np.stack([(c[k, 0] * x + c[k, 1] * x**3) * dens for k in range(2)])


def psi_coefficients(theta: Theta, sigma_eps2: float) -> np.ndarray:
    """``[[Psi_phi_1, Psi_phi_2], [Psi_s_1, Psi_s_2]]`` of the Gaussian-noise gradient transform."""
    phi = theta.phi
    g2 = stationary_variance(theta)
    s = g2 - sigma_eps2
    if s <= 0:
        raise DomainError("gamma^2 must exceed sigma_eps2")
    om = 1.0 - phi**2
    pp1 = (g2 * (1.0 + phi**2) / om - 3.0 * phi**2 * g2**2 / (om * s)) / (_SQRT_2PI * s**1.5)
    pp2 = phi**2 * g2**2 / (om * _SQRT_2PI * s**3.5)
    ps1 = (phi / om - 1.5 * phi * g2 / (om * s)) / (_SQRT_2PI * s**1.5)
    ps2 = phi * g2 / (2.0 * om * _SQRT_2PI * s**3.5)
    return np.array([[pp1, pp2], [ps1, ps2]])


def u_star_grad_gaussian(theta: Theta, sigma_eps2: float, y) -> np.ndarray:
    """Deconvolved transforms of ``d l / d phi`` and ``d l / d sigma2``; shape ``(2,) + y.shape``."""
    psi = psi_coefficients(theta, sigma_eps2)
    s = stationary_variance(theta) - sigma_eps2
    y = np.asarray(y, dtype=float)
    damp = np.exp(-(y**2) / (2.0 * s))
    return np.stack([(psi[k, 0] * y + psi[k, 1] * y**3) * damp for k in range(2)])


def p2_matrix_ar1(theta: Theta, sigma_eps2: float) -> np.ndarray:
    """``E[Z_2^2 U(Z_1) U(Z_1)']`` for the Gaussian AR(1) model, closed form.

    Conditioning gives ``Z_2 | Z_1 ~ N(c Z_1, v2)`` with ``c = phi g2 / tau2``
    and ``tau2 = g2 + sigma_eps2``; the damping ``exp(-Z_1^2 / s)`` turns the
    ``Z_1`` law into ``N(0, w)`` with ``1/w = 2/s + 1/tau2``, scaled by
    ``sqrt(w / tau2)``.
    """
    psi = psi_coefficients(theta, sigma_eps2)
    g2 = stationary_variance(theta)
    s = g2 - sigma_eps2
    tau2 = g2 + sigma_eps2
    c2 = (theta.phi * g2 / tau2) ** 2
    v2 = tau2 - theta.phi**2 * g2**2 / tau2
    w = 1.0 / (2.0 / s + 1.0 / tau2)
    F = np.sqrt(w / tau2)

    def block(a, b):
        return F * (a[0] * b[0] * w * (v2 + 3.0 * c2 * w)
                    + 15.0 * a[1] * b[1] * w**3 * (v2 + 7.0 * c2 * w)
                    + (a[0] * b[1] + a[1] * b[0]) * 3.0 * w**2 * (v2 + 5.0 * c2 * w))

    return np.array([[block(psi[i], psi[j]) for j in range(2)] for i in range(2)])


def _u_grad_quadrature(theta, y, log_fstar, q):
    return np.stack([u_star_quadrature(theta, y, log_fstar, q, kernel=k) for k in ("phi", "sigma2")])


def p2_hat(theta: Theta, z, log_fstar, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Empirical ``mean_i Z_{i+1}^2 U(Z_i) U(Z_i)'`` with quadrature ``U``."""
    z = as_series(z)
    U = _u_grad_quadrature(theta, z[:-1], log_fstar, q)
    weighted = U * z[1:] ** 2
    return weighted @ U.T / (z.shape[0] - 1)


def p2_hat_sv(theta: Theta, z, beta: float, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Plug-in estimate of ``P2`` under log-chi-square noise."""
    return p2_hat(theta, z, _sv_log_fstar(beta), q)


# ---------------------------------------------------------------------------
# lag structure


def _hermite_projection(theta: Theta, n_max: int = 120) -> np.ndarray:
    """Coefficients ``a_n = E[b(X) grad l(X) h_n(X / gamma)]`` (orthonormal Hermite ``h_n``).

    With ``X`` standardised the integrand is polynomial times ``exp(-u^2)``,
    so a physicists' Gauss-Hermite rule of ``n_max`` nodes is exact.
    """
    g2 = stationary_variance(theta)
    g = np.sqrt(g2)
    c = grad_l_coefficients(theta)
    u, w = hermgauss(n_max // 2 + 8)
    x = g * u
    poly = np.stack([theta.phi * x * (c[k, 0] * x + c[k, 1] * x**3) for k in range(2)])
    poly /= 2.0 * np.pi * g
    h = np.empty((n_max + 1, u.size))
    h[0] = 1.0
    h[1] = u
    for n in range(1, n_max):
        h[n + 1] = (u * h[n] - np.sqrt(n) * h[n - 1]) / np.sqrt(n + 1)
    return (h * w) @ poly.T


def omega_j(theta: Theta, j: int, n_max: int = 120) -> np.ndarray:
    """``C~_j - P1`` by the Mehler expansion ``sum_{n>=1} rho^n a_n a_n'``, ``rho = phi^(j-1)``.

    Every term is positive semidefinite, so the difference is obtained
    without cancellation even when it is many orders below ``P1``.
    """
    if j < 2:
        raise ValueError("lag j must be >= 2")
    a = _hermite_projection(theta, n_max)[1:]
    rho = theta.phi ** (j - 1)
    powers = rho ** np.arange(1, n_max + 1)
    return (a.T * powers) @ a


def c_tilde(theta: Theta, j: int) -> np.ndarray:
    """``E[b(X_1) b(X_j) grad l(X_1) grad l(X_j)']`` for the stationary chain."""
    return p1_matrix(theta) + omega_j(theta, j)


def _noise_free_lag_moment(theta: Theta, k: int) -> np.ndarray:
    """``E[g_0 g_k']`` for ``k >= 2``: ``E[X_1 grad l(X_0) b(X_k) grad l(X_k)']``."""
    g2 = stationary_variance(theta)
    phi = theta.phi
    idx = np.array([0, 1, k])
    cov = g2 * phi ** np.abs(idx[:, None] - idx[None, :])
    c = grad_l_coefficients(theta)
    norm2 = 1.0 / (2.0 * np.pi * g2)

    def f(x):
        p0 = np.stack([c[r, 0] * x[0] + c[r, 1] * x[0] ** 3 for r in range(2)])
        pk = np.stack([c[r, 0] * x[2] + c[r, 1] * x[2] ** 3 for r in range(2)])
        return norm2 * phi * x[1] * x[2] * p0[:, None, :] * pk[None, :, :]

    return gauss_expect(cov, f, damp=[1.0 / g2, 0.0, 1.0 / g2])


def _gaussian_lag_moment(theta: Theta, sigma_eps2: float, k: int) -> np.ndarray:
    """``E[g_0 g_k']`` under Gaussian noise for ``k`` in {0, 1}."""
    g2 = stationary_variance(theta)
    s = g2 - sigma_eps2
    psi = psi_coefficients(theta, sigma_eps2)

    def U(x):
        return np.stack([psi[r, 0] * x + psi[r, 1] * x**3 for r in range(2)])

    def zcov(idx):
        idx = np.asarray(idx)
        d = np.abs(idx[:, None] - idx[None, :])
        return g2 * theta.phi**d + sigma_eps2 * (d == 0)

    if k == 0:
        return gauss_expect(zcov([0, 1]), lambda x: x[1] ** 2 * U(x[0])[:, None] * U(x[0])[None, :],
                            damp=[2.0 / s, 0.0])
    return gauss_expect(zcov([0, 1, 2]), lambda x: x[1] * x[2] * U(x[0])[:, None] * U(x[1])[None, :],
                        damp=[1.0 / s, 1.0 / s, 0.0])


def lag_moment(theta: Theta, sigma_eps2: float, k: int) -> np.ndarray:
    """``Gamma_k = E[g_0 g_k'] - P1`` for the Gaussian AR(1) model."""
    if k < 0:
        raise ValueError("lag must be >= 0")
    raw = _gaussian_lag_moment(theta, sigma_eps2, k) if k < 2 else _noise_free_lag_moment(theta, k)
    return raw - p1_matrix(theta)


def contrast_score(theta: Theta, z, sigma_eps2: Optional[float] = None, beta: Optional[float] = None,
                   q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Per-pair score ``grad m`` evaluated on a series; shape ``(2, n-1)``.

    Pass ``sigma_eps2`` for Gaussian noise (closed form) or ``beta`` for
    log-chi-square noise (quadrature).
    """
    z = as_series(z)
    phi = theta.phi
    om = 1.0 - phi**2
    g = np.sqrt(stationary_variance(theta))
    grad_norm = np.array([phi * g * (2.0 - phi**2) / (4.0 * _SQRT_PI * om),
                          phi**2 / (8.0 * _SQRT_PI * om * g)])
    if beta is not None:
        U = _u_grad_quadrature(theta, z[:-1], _sv_log_fstar(beta), q)
    elif sigma_eps2 is not None:
        U = u_star_grad_gaussian(theta, sigma_eps2, z[:-1])
    else:
        raise ValueError("give sigma_eps2 or beta")
    return grad_norm[:, None] - 2.0 * z[1:] * U


def _assemble(V, omega1, tail, q_trunc):
    if np.linalg.cond(V) > 1e12:
        raise IllConditionedError("cond(V) exceeds 1e12")
    Vinv = np.linalg.inv(V)
    Sigma = Vinv @ (omega1 + tail) @ Vinv.T
    Sigma = 0.5 * (Sigma + Sigma.T)
    vals, vecs = np.linalg.eigh(Sigma)
    if vals.min() < -1e-10:
        raise IllConditionedError(f"Sigma has eigenvalue {vals.min():.3e} < -1e-10")
    if vals.min() < 0:
        Sigma = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        Sigma = 0.5 * (Sigma + Sigma.T)
    return SandwichParts(V=V, Omega1=omega1, OmegaTail=tail, Sigma=Sigma, q_trunc=q_trunc)


def sigma_matrix(theta: Theta, sigma_eps2: float, q_trunc: int = 100, p2_source: str = "closed",
                 z=None, beta: Optional[float] = None,
                 q: QuadratureConfig = QuadratureConfig()) -> SandwichParts:
    """Assemble ``Sigma = V^-1 Omega V^-1``.

    Parameters
    ----------
    theta : Theta
    sigma_eps2 : float
    q_trunc : int
        Lags ``0 .. q_trunc - 1`` enter the long-run variance.
    p2_source : {"closed", "plugin"}
        ``"closed"`` uses the Gaussian-noise formulas for lags 0 and 1.
        ``"plugin"`` replaces them by sample averages over ``z`` with
        quadrature transforms against the log-chi-square noise of scale
        ``beta``; lags from 2 on are noise-free and exact either way.
    """
    if q_trunc < 2:
        raise ValueError("q_trunc must be >= 2")
    P1 = p1_matrix(theta)
    if p2_source == "closed":
        gam0 = lag_moment(theta, sigma_eps2, 0)
        gam1 = lag_moment(theta, sigma_eps2, 1)
    elif p2_source == "plugin":
        if z is None or beta is None:
            raise ValueError("plug-in source needs z and beta")
        z = as_series(z, min_length=3)
        U = _u_grad_quadrature(theta, z[:-1], _sv_log_fstar(beta), q)
        g = U * z[1:]
        gam0 = g @ g.T / g.shape[1] - P1
        gam1 = g[:, :-1] @ g[:, 1:].T / (g.shape[1] - 1) - P1
    else:
        raise ValueError(f"unknown p2_source {p2_source!r}")
    tail = gam1 + gam1.T
    for k in range(2, q_trunc):
        gk = lag_moment(theta, sigma_eps2, k)
        tail = tail + gk + gk.T
    return _assemble(hessian_V(theta), 4.0 * gam0, 4.0 * tail, q_trunc)


def confidence_interval(theta_hat: Theta, Sigma, n: int, alpha: float = 0.05):
    """Wald intervals ``theta_i +- z_{1-alpha/2} sqrt(Sigma_ii / n)``."""
    Sigma = np.asarray(Sigma, dtype=float)
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    diag = np.diag(Sigma)
    if np.any(diag < 0):
        raise ValueError("Sigma has a negative diagonal entry")
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(diag / n)
    est = theta_hat.as_array()
    return tuple(ConfidenceInterval(float(e - h), float(e + h), alpha) for e, h in zip(est, half))
