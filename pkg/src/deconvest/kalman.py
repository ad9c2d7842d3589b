"""Kalman filter prediction-error likelihood and the QML estimator."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .model import ModelKind, ModelSpec, Theta, as_series, stationary_variance
from .optimize import MinimizeResult, NelderMeadOptions, multistart_minimize

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KalmanRun:
    """Output of one filter pass.

    ``x_pred``/``P_pred`` are one-step predictions of the state, ``nu``/``F``
    the prediction errors and their variances. ``x_filt``/``P_filt`` hold the
    filtered moments after each update.
    """

    nu: np.ndarray
    F: np.ndarray
    x_pred: np.ndarray
    P_pred: np.ndarray
    x_filt: np.ndarray
    P_filt: np.ndarray
    loglik: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "nu", "F"])
        for i, (a, b) in enumerate(zip(self.nu, self.F), start=1):
            w.writerow([i, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def kalman_filter(theta: Theta, sigma_eps2: float, z, offsets=None, obs_var=None) -> KalmanRun:
    """Filter ``Z_i = X_i + m_i + e_i``, ``e_i ~ N(0, v_i)``, stationary start.

    ``offsets`` (``m_i``) default to zero and ``obs_var`` (``v_i``) to
    ``sigma_eps2``; both may be given per time step.
    """
    z = np.asarray(z, dtype=float).ravel()
    n = z.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    m = np.zeros(n) if offsets is None else np.broadcast_to(np.asarray(offsets, float), (n,))
    v = np.full(n, float(sigma_eps2)) if obs_var is None else np.broadcast_to(np.asarray(obs_var, float), (n,))
    phi, s2 = theta.phi, theta.sigma2
    xp, P = 0.0, stationary_variance(theta)
    nu, F, xps, Pps, xfs, Pfs = ([0.0] * n for _ in range(6))
    ll = 0.0
    zl, ml, vl = z.tolist(), m.tolist(), v.tolist()
    for i in range(n):
        f = P + vl[i]
        assert f > 0.0, "prediction variance must be positive"
        e = zl[i] - xp - ml[i]
        k = P / f
        xf = xp + k * e
        Pf = P - k * P
        nu[i], F[i], xps[i], Pps[i], xfs[i], Pfs[i] = e, f, xp, P, xf, Pf
        ll -= 0.5 * (math.log(f) + e * e / f)
        xp = phi * xf
        P = phi * phi * Pf + s2
    ll -= 0.5 * n * _LOG_2PI
    return KalmanRun(np.array(nu), np.array(F), np.array(xps), np.array(Pps),
                     np.array(xfs), np.array(Pfs), ll)


def kalman_loglik(theta: Theta, sigma_eps2: float, z) -> float:
    """Gaussian log-likelihood of ``z`` by the prediction-error decomposition."""
    phi, s2 = theta.phi, theta.sigma2
    xp, P = 0.0, stationary_variance(theta)
    acc = 0.0
    for zi in np.asarray(z, dtype=float).ravel().tolist():
        f = P + sigma_eps2
        e = zi - xp
        acc += math.log(f) + e * e / f
        k = P / f
        xp = phi * (xp + k * e)
        P = phi * phi * (P - k * P) + s2
    return -0.5 * (acc + len(z) * _LOG_2PI)


def kalman_loglik_batch(theta: Theta, z, offsets: np.ndarray, obs_var: np.ndarray) -> np.ndarray:
    """Log-likelihoods for several offset/variance sequences at once.

    ``offsets`` and ``obs_var`` have shape ``(M, n)``; returns shape ``(M,)``.
    """
    z = np.asarray(z, dtype=float).ravel()
    offsets = np.atleast_2d(offsets)
    obs_var = np.atleast_2d(obs_var)
    M, n = offsets.shape
    phi, s2 = theta.phi, theta.sigma2
    resid = z[None, :] - offsets
    xp = np.zeros(M)
    P = np.full(M, stationary_variance(theta))
    acc = np.zeros(M)
    for i in range(n):
        f = P + obs_var[:, i]
        e = resid[:, i] - xp
        acc += np.log(f) + e * e / f
        k = P / f
        xp = phi * (xp + k * e)
        P = phi * phi * (P - k * P) + s2
    return -0.5 * (acc + n * _LOG_2PI)


def qml_estimate(model: ModelSpec, z, options: NelderMeadOptions = NelderMeadOptions()) -> MinimizeResult:
    """Maximise the Gaussian likelihood over ``model.box``.

    For the SV model the log-squared observations are treated as if their
    noise were N(0, sigma_eps2). ``objective_value`` is the negated log-likelihood.
    """
    z = as_series(z)
    s2e = model.sigma_eps2

    def negll(v):
        return -kalman_loglik(Theta(float(v[0]), float(v[1])), s2e, z)

    return multistart_minimize(negll, model.box, options)


class QMLEstimator(BaseEstimator):
    """Quasi-maximum-likelihood estimator via the Kalman filter.

    Parameters
    ----------
    model : {"ar1", "sv"}
    sigma_eps2 : float
    beta : float, optional
    box : ParamBox, optional
    xtol, max_iter, grid : Nelder-Mead settings.
    """

    def __init__(self, model="ar1", sigma_eps2=0.1, beta=None, box=None,
                 xtol=1e-7, max_iter=500, grid=3):
        self.model = model
        self.sigma_eps2 = sigma_eps2
        self.beta = beta
        self.box = box
        self.xtol = xtol
        self.max_iter = max_iter
        self.grid = grid

    def fit(self, z, y=None):
        if ModelKind(self.model) is ModelKind.LOG_SV:
            spec = ModelSpec.sv(beta=self.beta, sigma_eps2=self.sigma_eps2, box=self.box)
        else:
            spec = ModelSpec.ar1(self.sigma_eps2, box=self.box)
        opts = NelderMeadOptions(xtol=self.xtol, max_iter=self.max_iter, grid=self.grid)
        self.result_ = qml_estimate(spec, z, opts)
        self.theta_ = self.result_.theta_hat
        self.loglik_ = -self.result_.objective_value
        return self
