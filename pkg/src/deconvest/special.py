"""Special functions used by the log-chi-square noise model."""

import numpy as np
from scipy.special import digamma

# E[log xi^2] and Var[log xi^2] for xi ~ N(0, 1)
LOG_CHISQ_MEAN = float(digamma(0.5) + np.log(2.0))
LOG_CHISQ_VAR = float(np.pi**2 / 2.0)

_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _loggamma_right(z):
    # valid for Re(z) >= 0.5
    z = z - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for k in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def complex_loggamma(z):
    """Log-Gamma for complex arguments via the Lanczos approximation.

    Uses g = 7 with nine coefficients, which gives roughly 15 significant
    digits. Arguments with ``Re(z) < 0.5`` go through the reflection formula.
    The branch of the logarithm is not normalised, so only ``exp`` of the
    result (and its real part) are meaningful.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    right = z.real >= 0.5
    out[right] = _loggamma_right(z[right])
    if np.any(~right):
        zl = z[~right]
        out[~right] = np.log(np.pi) - np.log(np.sin(np.pi * zl)) - _loggamma_right(1.0 - zl)
    return out[0] if scalar else out


def complex_gamma(z):
    """Gamma function for complex arguments (exp of :func:`complex_loggamma`)."""
    return np.exp(complex_loggamma(z))
