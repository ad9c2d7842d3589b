"""Expectations of polynomial-times-Gaussian functionals of Gaussian vectors."""

import itertools

import numpy as np
from numpy.polynomial.hermite_e import hermegauss


def gauss_expect(cov, f, damp=None, nodes: int = 8):
    """``E[f(X) exp(-x' D x / 2)]`` for ``X ~ N(0, cov)``, ``D = diag(damp)``.

    The damping factor is absorbed into a tilted Gaussian, after which a
    tensor Gauss-Hermite rule is exact whenever ``f`` is a polynomial of
    degree below ``2 * nodes`` in every coordinate.

    Parameters
    ----------
    cov : (d, d) array_like
    f : callable
        Maps a ``(d, N)`` array of points to an array whose last axis has
        length ``N``.
    damp : sequence of float, optional
    nodes : int
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    D = np.zeros((d, d)) if damp is None else np.diag(np.asarray(damp, dtype=float))
    tilted = np.linalg.inv(np.linalg.inv(cov) + D)
    tilted = 0.5 * (tilted + tilted.T)
    scale = np.sqrt(np.linalg.det(tilted) / np.linalg.det(cov))
    t, w = hermegauss(nodes)
    w = w / w.sum()
    idx = np.array(list(itertools.product(range(nodes), repeat=d))).T
    weights = np.prod(w[idx], axis=0)
    pts = np.linalg.cholesky(tilted) @ t[idx]
    return scale * (f(pts) @ weights)
