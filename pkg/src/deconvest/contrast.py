"""Deconvolution contrast objective and its minimiser.

For both models the target function is ``l(x) = phi * x * f(x)`` where ``f``
is the stationary N(0, gamma^2) density of the hidden chain. The empirical
contrast is

    ||l||^2 - 2/(n-1) * sum_j Z[j+1] * u(Z[j])

where ``u`` is the deconvolved transform of ``l``:
``u(z) = (1/2pi) * int exp(izx) l*(-x) / f_eps*(x) dx``. For Gaussian noise
``u`` has a closed form; for log-chi-square noise it is computed by
trapezoidal quadrature on a symmetric window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, QuadratureError
from .model import ModelKind, ModelSpec, Theta, as_series, stationary_variance
from .optimize import MinimizeResult, NelderMeadOptions, multistart_minimize
from .special import LOG_CHISQ_MEAN, complex_loggamma

log = logging.getLogger(__name__)

_SQRT_PI = np.sqrt(np.pi)
_SQRT_2PI = np.sqrt(2.0 * np.pi)

_CHUNK_ELEMENTS = 1 << 21
_TAIL_GUARD = 1e-4  # automatic windows stop where the envelope is below tol * guard


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for numerical Fourier inversion.

    Parameters
    ----------
    T : float or None
        Half-width of the integration window. ``None`` picks the smallest
        window whose integrand envelope stays below ``tol`` beyond it.
    nodes : int
        Number of trapezoid nodes on ``[-T, T]``.
    tol : float
        Absolute tolerance for the neglected tails.
    """

    T: Optional[float] = None
    nodes: int = 2048
    tol: float = 1e-12

    def __post_init__(self):
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be > 0")
        if self.nodes < 64:
            raise ValueError("nodes must be >= 64")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


def l2_norm_sq(theta: Theta) -> float:
    """Squared L2 norm of ``l``: ``phi^2 * gamma / (4 sqrt(pi))``."""
    return theta.phi**2 * np.sqrt(stationary_variance(theta)) / (4.0 * _SQRT_PI)


def _deconv_scale(theta: Theta, sigma_eps2: float) -> float:
    s = stationary_variance(theta) - sigma_eps2
    if s <= 0:
        raise DomainError("gamma^2 must exceed sigma_eps2 for Gaussian deconvolution")
    return s


def u_star_gaussian(theta: Theta, sigma_eps2: float, y):
    """Closed-form deconvolved transform under N(0, sigma_eps2) noise."""
    s = _deconv_scale(theta, sigma_eps2)
    g2 = stationary_variance(theta)
    y = np.asarray(y, dtype=float)
    return theta.phi * g2 * s**-1.5 * y * np.exp(-(y**2) / (2.0 * s)) / _SQRT_2PI


def fstar_gaussian(sigma_eps2: float, x):
    """Characteristic function of N(0, sigma_eps2)."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * sigma_eps2 * x**2).astype(complex)


def log_f_star_eps_sv(beta: float, y):
    """Complex log of :func:`f_star_eps_sv` (avoids overflow in 1/f*)."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    y = np.asarray(y, dtype=float)
    by = beta * y
    return (-1j * by * LOG_CHISQ_MEAN + 1j * by * np.log(2.0)
            + complex_loggamma(0.5 + 1j * by) - 0.5 * np.log(np.pi))


def f_star_eps_sv(beta: float, y):
    """Characteristic function of ``beta * (log xi^2 - E log xi^2)``.

    Equal to ``exp(-i beta E y) 2^(i beta y) Gamma(1/2 + i beta y) / sqrt(pi)``
    with ``E = psi(1/2) + log 2``; its modulus is ``cosh(pi beta y)^(-1/2)``.
    """
    return np.exp(log_f_star_eps_sv(beta, y))


# ---------------------------------------------------------------------------
# kernels: l*(-x) = -i x K(x) with K(x) = poly(x) * exp(-gamma^2 x^2 / 2)


def _kernel(theta: Theta, which: str):
    """Return ``(poly, gamma^2)`` describing the kernel ``K``."""
    phi = theta.phi
    g2 = stationary_variance(theta)
    dg_dphi = 2.0 * phi * g2 / (1.0 - phi**2)
    dg_ds = 1.0 / (1.0 - phi**2)
    if which == "l":
        return (lambda x: np.full_like(np.asarray(x, float), phi * g2)), g2
    if which == "phi":
        return (lambda x: g2 + phi * dg_dphi * (1.0 - 0.5 * g2 * x**2)), g2
    if which == "sigma2":
        return (lambda x: phi * dg_ds * (1.0 - 0.5 * g2 * x**2)), g2
    raise ValueError(f"unknown kernel {which!r}")


def _auto_truncation(log_envelope: Callable[[np.ndarray], np.ndarray], tol: float) -> float:
    """Smallest T with ``log_envelope(x) < log(tol)`` for every sampled x >= T."""
    log_tol = np.log(tol)
    hi = 4.0
    for _ in range(40):
        xs = np.linspace(0.0, hi, 4097)
        with np.errstate(divide="ignore"):
            env = log_envelope(xs)
        above = np.nonzero(~(env < log_tol))[0]
        if above.size == 0:
            return xs[1]
        last = above[-1]
        if last < xs.size - 512:
            return float(xs[last + 1])
        hi *= 2.0
    raise QuadratureError("integrand envelope never falls below tol")


def u_star_quadrature(theta: Theta, y, log_fstar: Callable[[np.ndarray], np.ndarray],
                      q: QuadratureConfig = QuadratureConfig(), kernel: str = "l",
                      return_imag: bool = False):
    """Deconvolved transform of ``l`` (or a partial derivative) by quadrature.

    Parameters
    ----------
    theta : Theta
    y : array_like
        Evaluation points.
    log_fstar : callable
        Complex log of the noise characteristic function.
    q : QuadratureConfig
        ``q.nodes`` is a minimum: the node count is raised when the window
        is so wide that the spacing would alias the transform at ``y``.
    kernel : {"l", "phi", "sigma2"}
        Transform ``l`` itself or its derivative in ``phi`` / ``sigma2``.
    return_imag : bool
        Also return the imaginary residual, which should vanish.
    """
    poly, g2 = _kernel(theta, kernel)

    def log_envelope(x):
        return np.log(np.abs(x * poly(x))) - 0.5 * g2 * x**2 - log_fstar(x).real

    T = q.T if q.T is not None else _auto_truncation(log_envelope, q.tol * _TAIL_GUARD)
    if q.T is not None:
        with np.errstate(divide="ignore"):
            if log_envelope(np.array([T]))[0] > np.log(q.tol):
                raise QuadratureError(f"tail weight at T={T} exceeds tol={q.tol}")
    y_arr = np.asarray(y, dtype=float)
    ymax = float(np.max(np.abs(y_arr))) if y_arr.size else 0.0
    dx_max = np.pi / (ymax + np.sqrt(2.0 * g2 * np.log(1.0 / q.tol)))
    nodes = max(q.nodes, int(np.ceil(2.0 * T / dx_max)) + 1)
    x = np.linspace(-T, T, nodes)
    w = np.full(nodes, x[1] - x[0])
    w[[0, -1]] *= 0.5
    h = -1j * x * poly(x) * np.exp(-0.5 * g2 * x**2 - log_fstar(x))
    wh = w * h / (2.0 * np.pi)
    flat = y_arr.ravel()
    vals = np.empty(flat.shape, dtype=complex)
    step = max(1, _CHUNK_ELEMENTS // nodes)  # bound the (points, nodes) work array
    for start in range(0, flat.size, step):
        sl = slice(start, start + step)
        vals[sl] = np.exp(1j * np.multiply.outer(flat[sl], x)) @ wh
    vals = vals.reshape(y_arr.shape)
    if return_imag:
        return vals.real, vals.imag
    return vals.real


def _sv_log_fstar(beta: float):
    return lambda x: log_f_star_eps_sv(beta, x)


def gaussian_log_fstar(sigma_eps2: float):
    """Complex log of the N(0, sigma_eps2) characteristic function."""
    return lambda x: -0.5 * sigma_eps2 * np.asarray(x, dtype=float) ** 2 + 0j


def u_star_sv(theta: Theta, beta: float, y, q: QuadratureConfig = QuadratureConfig(),
              kernel: str = "l", return_imag: bool = False):
    """Deconvolved transform under log-chi-square noise.

    Raises :class:`QuadratureError` if the imaginary residual exceeds
    ``100 * q.tol``.
    """
    re, im = u_star_quadrature(theta, y, _sv_log_fstar(beta), q, kernel, return_imag=True)
    worst = float(np.max(np.abs(im))) if np.size(im) else 0.0
    if worst > 100.0 * q.tol:
        raise QuadratureError(f"imaginary residual {worst:.3e} exceeds 100*tol")
    if worst > 0:
        log.debug("u_star_sv imaginary residual %.3e", worst)
    return (re, im) if return_imag else re


def population_contrast_ar1(theta: Theta, theta0: Theta) -> float:
    """Limit of the AR(1) contrast when data come from ``theta0``."""
    g2 = stationary_variance(theta)
    g02 = stationary_variance(theta0)
    return l2_norm_sq(theta) - np.sqrt(2.0 / np.pi) * theta.phi * theta0.phi * g2 * g02 / (g2 + g02) ** 1.5


# ---------------------------------------------------------------------------


class ContrastObjective:
    """Empirical contrast for one observation series.

    For the log-SV model the pair sum is evaluated in the frequency domain:
    ``sum_j Z[j+1] u(Z[j]) = (1/pi) Re int_0^inf D(x) h(x) dx`` with the
    empirical transform ``D(x) = sum_j Z[j+1] exp(i Z[j] x)`` tabulated once
    on a grid fine enough to avoid aliasing over the whole parameter box.
    Each evaluation then costs one pass over the grid.
    """

    def __init__(self, model: ModelSpec, z, quadrature: QuadratureConfig = QuadratureConfig()):
        self.model = model
        self.z = as_series(z, min_length=2)
        self.quadrature = quadrature
        self._pairs = self.z.shape[0] - 1
        if model.is_sv:
            self._prepare_sv()

    def _prepare_sv(self):
        box, beta, tol = self.model.box, self.model.beta, self.quadrature.tol
        phi_abs_max = max(abs(box.phi_lo), abs(box.phi_hi))
        phi_abs_min = 0.0 if box.phi_lo <= 0.0 <= box.phi_hi else min(abs(box.phi_lo), abs(box.phi_hi))
        g2_max = box.s2_hi / (1.0 - phi_abs_max**2)
        g2_min = box.s2_lo / (1.0 - phi_abs_min**2)
        zmax = float(np.max(np.abs(self.z)))
        dx = np.pi / (zmax + np.sqrt(2.0 * g2_max * np.log(1.0 / tol)))
        dx = min(dx, 0.114 / beta)

        def log_envelope(x):
            return np.log(x * g2_min * np.sqrt(2.0)) - 0.5 * g2_min * x**2 + 0.5 * np.pi * beta * x

        T = self.quadrature.T if self.quadrature.T is not None else _auto_truncation(log_envelope, tol)
        k = np.arange(1, int(np.ceil(T / dx)) + 1)
        x = k * dx
        lf = log_f_star_eps_sv(beta, x)
        zj, znext = self.z[:-1], self.z[1:]
        D = np.empty(x.size, dtype=complex)
        for start in range(0, x.size, 256):
            sl = slice(start, start + 256)
            D[sl] = np.exp(1j * np.multiply.outer(x[sl], zj)) @ znext
        # sum_j Z[j+1] u(Z[j]) = phi g2 * sum_k R_k exp(L_k - g2 x_k^2 / 2)
        self._x2 = x**2
        self._L = -lf.real
        self._R = (dx / np.pi) * x * np.real(-1j * D * np.exp(-1j * lf.imag))

    def pair_sum(self, theta: Theta) -> float:
        """``sum_j Z[j+1] u(Z[j])`` over the available pairs."""
        if self.model.is_sv:
            g2 = stationary_variance(theta)
            return float(theta.phi * g2 * np.dot(self._R, np.exp(self._L - 0.5 * g2 * self._x2)))
        u = u_star_gaussian(theta, self.model.sigma_eps2, self.z[:-1])
        return float(np.dot(self.z[1:], u))

    def __call__(self, theta: Theta) -> float:
        return l2_norm_sq(theta) - 2.0 * self.pair_sum(theta) / self._pairs

    def as_array_function(self) -> Callable[[np.ndarray], float]:
        return lambda v: self(Theta(float(v[0]), float(v[1])))


def objective(theta: Theta, z, model: ModelSpec,
              quadrature: QuadratureConfig = QuadratureConfig()) -> float:
    """Empirical contrast at ``theta``. Builds a fresh :class:`ContrastObjective`."""
    return ContrastObjective(model, z, quadrature)(theta)


def estimate(model: ModelSpec, z, options: NelderMeadOptions = NelderMeadOptions(),
             quadrature: QuadratureConfig = QuadratureConfig()) -> MinimizeResult:
    """Minimum-contrast estimate over ``model.box``."""
    obj = ContrastObjective(model, z, quadrature)
    return multistart_minimize(obj.as_array_function(), model.box, options)


class ContrastEstimator(BaseEstimator):
    """Minimum-contrast estimator with sandwich confidence intervals.

    Parameters
    ----------
    model : {"ar1", "sv"}
    sigma_eps2 : float
        Known noise variance. For ``"sv"`` it fixes ``beta`` unless ``beta``
        is given.
    beta : float, optional
        Exponent scale of the SV model.
    box : ParamBox, optional
        Search box; model default when omitted.
    xtol, max_iter, grid : NM settings.
    q_trunc : int
        Lags kept in the long-run variance.

    Attributes
    ----------
    theta_ : Theta
    result_ : MinimizeResult
    n_obs_ : int
    """

    def __init__(self, model="ar1", sigma_eps2=0.1, beta=None, box=None,
                 xtol=1e-7, max_iter=500, grid=3, q_trunc=100):
        self.model = model
        self.sigma_eps2 = sigma_eps2
        self.beta = beta
        self.box = box
        self.xtol = xtol
        self.max_iter = max_iter
        self.grid = grid
        self.q_trunc = q_trunc

    def model_spec(self) -> ModelSpec:
        if ModelKind(self.model) is ModelKind.LOG_SV:
            return ModelSpec.sv(beta=self.beta, sigma_eps2=self.sigma_eps2, box=self.box)
        return ModelSpec.ar1(self.sigma_eps2, box=self.box)

    def fit(self, z, y=None):
        spec = self.model_spec()
        self.z_ = as_series(z)
        opts = NelderMeadOptions(xtol=self.xtol, max_iter=self.max_iter, grid=self.grid)
        self.result_ = estimate(spec, self.z_, opts)
        self.theta_ = self.result_.theta_hat
        self.n_obs_ = self.z_.shape[0]
        self.spec_ = spec
        return self

    def sandwich(self):
        """Sandwich covariance parts at the fitted parameter."""
        from .asymptotics import sigma_matrix

        check_is_fitted(self, "theta_")
        if self.spec_.is_sv:
            return sigma_matrix(self.theta_, self.spec_.sigma_eps2, self.q_trunc,
                                p2_source="plugin", z=self.z_, beta=self.spec_.beta)
        return sigma_matrix(self.theta_, self.spec_.sigma_eps2, self.q_trunc)

    def confidence_intervals(self, alpha=0.05):
        from .asymptotics import confidence_interval

        parts = self.sandwich()
        return confidence_interval(self.theta_, parts.Sigma, self.n_obs_, alpha)
