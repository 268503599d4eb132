"""Separation-of-variables reference solutions for a single ball.

Far fields use the physical normalisation ``U^s ~ exp(i k r) / r * U_inf``
and depend only on ``cos(gamma) = xhat . theta``.
"""
import numpy as np
from scipy.special import eval_legendre, spherical_jn, spherical_yn


def _n_terms(x: float) -> int:
    return int(abs(x) + 4.05 * abs(x) ** (1 / 3) + 10)


def _h1(l, x, derivative=False):
    return spherical_jn(l, x, derivative) + 1j * spherical_yn(l, x, derivative)


def _sum(coef, kappa, cos_gamma):
    # high orders can overflow the Neumann functions; their coefficients vanish
    coef = np.where(np.isfinite(coef), coef, 0.0)
    cg = np.clip(np.asarray(cos_gamma, float), -1.0, 1.0)
    out = np.zeros(cg.shape, dtype=complex)
    for l, b in enumerate(coef):
        out += (2 * l + 1) * b * eval_legendre(l, cg)
    return (-1j / kappa) * out


def sound_soft_sphere_farfield(kappa: float, radius: float, cos_gamma, n_terms=None):
    """Far field of a sound-soft ball of the given radius centred at the origin."""
    x = kappa * radius
    l = np.arange(n_terms or _n_terms(x))
    with np.errstate(all="ignore"):
        coef = -spherical_jn(l, x) / _h1(l, x)
    return _sum(coef, kappa, cos_gamma)


def sound_soft_leading(kappa: float, radius: float) -> complex:
    """Monopole (``l = 0``) part of the sound-soft far field: ``-sin(kr)/k * exp(-i kr)``."""
    return -np.sin(kappa * radius) / kappa * np.exp(-1j * kappa * radius)


def penetrable_ball_farfield(kappa: float, radius: float, q: float, cos_gamma, n_terms=None):
    """Far field for ``(Delta + k^2 - q) u = 0`` with constant ``q`` inside the ball.

    The interior wavenumber ``sqrt(k^2 - q)`` may be imaginary; the spherical
    Bessel functions are evaluated at complex argument in that case.
    """
    k1 = np.sqrt(complex(kappa ** 2 - q))
    x, x1 = kappa * radius, k1 * radius
    l = np.arange(n_terms or _n_terms(max(abs(x), abs(x1))))
    with np.errstate(all="ignore"):
        j0, dj0 = spherical_jn(l, x), spherical_jn(l, x, True)
        j1, dj1 = spherical_jn(l, x1), spherical_jn(l, x1, True)
        h, dh = _h1(l, x), _h1(l, x, True)
        coef = (k1 * dj1 * j0 - kappa * dj0 * j1) / (kappa * dh * j1 - k1 * dj1 * h)
    return _sum(coef, kappa, cos_gamma)
