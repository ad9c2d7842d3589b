"""Box-constrained Nelder-Mead with a deterministic multi-start grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ParamBox, Theta


@dataclass(frozen=True)
class MinimizeResult:
    """Outcome of a minimisation over the parameter box.

    ``objective_value`` is the value of the minimised function at
    ``theta_hat``. Estimators that maximise a criterion (likelihoods) report
    the negated criterion here.
    """

    theta_hat: Theta
    objective_value: float
    restarts_used: int
    converged: bool
    n_evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "theta_hat": [self.theta_hat.phi, self.theta_hat.sigma2],
            "objective_value": self.objective_value,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "n_evaluations": self.n_evaluations,
        }


@dataclass(frozen=True)
class NelderMeadOptions:
    xtol: float = 1e-7
    max_iter: int = 500
    initial_step: float = 0.05
    grid: int = 3

    def __post_init__(self):
        if self.xtol <= 0 or self.max_iter < 1 or self.grid < 1:
            raise ValueError("invalid Nelder-Mead options")
        if not 0 < self.initial_step < 1:
            raise ValueError("initial_step is a fraction of the box width in (0, 1)")


def nelder_mead_box(fun: Callable[[np.ndarray], float], x0, box: ParamBox,
                    options: NelderMeadOptions = NelderMeadOptions()):
    """Minimise ``fun`` from ``x0`` with every trial point clipped into ``box``.

    Returns ``(x_best, f_best, converged, n_evaluations)``. Convergence means
    the simplex diameter, measured from the best vertex, fell to ``xtol``.
    """
    lo, hi = box.lower, box.upper
    width = np.where(hi > lo, hi - lo, 1.0)
    x0 = box.clip(x0)
    dim = x0.size
    n_eval = 0

    def f(x):
        nonlocal n_eval
        n_eval += 1
        val = float(fun(x))
        return val if np.isfinite(val) else np.inf

    simplex = [x0]
    for k in range(dim):
        step = options.initial_step * width[k]
        v = x0.copy()
        # step toward the far side of the box so the vertex stays distinct
        v[k] = x0[k] + step if x0[k] + step <= hi[k] else x0[k] - step
        simplex.append(box.clip(v))
    simplex = np.array(simplex)
    fvals = np.array([f(v) for v in simplex])

    converged = False
    for _ in range(options.max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if np.max(np.abs(simplex[1:] - simplex[0])) <= options.xtol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = box.clip(centroid + (centroid - worst))
        fr = f(xr)
        if fr < fvals[0]:
            xe = box.clip(centroid + 2.0 * (centroid - worst))
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = box.clip(centroid + 0.5 * (xr - centroid))
        else:
            xc = box.clip(centroid + 0.5 * (worst - centroid))
        fc = f(xc)
        if fc < min(fr, fvals[-1]):
            simplex[-1], fvals[-1] = xc, fc
            continue
        simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
        fvals[1:] = [f(v) for v in simplex[1:]]
    else:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        converged = bool(np.max(np.abs(simplex[1:] - simplex[0])) <= options.xtol)
    return simplex[0].copy(), float(fvals[0]), converged, n_eval


def multistart_minimize(fun: Callable[[np.ndarray], float], box: ParamBox,
                        options: NelderMeadOptions = NelderMeadOptions(),
                        starts=None) -> MinimizeResult:
    """Run :func:`nelder_mead_box` from each start and keep the lowest value.

    Starts default to the row-major ``grid x grid`` cell-centre grid of the
    box. Ties keep the earliest start. ``converged`` is False only when no
    start met the simplex tolerance within the iteration cap.
    """
    starts = box.grid(options.grid) if starts is None else np.atleast_2d(starts)
    best_x, best_f = None, np.inf
    any_conv = False
    total = 0
    for x0 in starts:
        x, fx, conv, ne = nelder_mead_box(fun, x0, box, options)
        total += ne
        any_conv = any_conv or conv
        if best_x is None or fx < best_f:
            best_x, best_f = x, fx
    if not np.isfinite(best_f):
        raise FloatingPointError("objective is not finite anywhere on the start grid")
    return MinimizeResult(
        theta_hat=Theta.from_array(best_x),
        objective_value=best_f,
        restarts_used=len(starts),
        converged=any_conv,
        n_evaluations=total,
    )
