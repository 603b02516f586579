"""Closed-form reference values for the two exactly solvable model problems.

Radial degenerate diffusion (d = 2): the diffusion matrix is
I - eps*(xhat xhat^T) around a centre; the expected time spent in a small
disk of radius r before exiting the ball of radius 3/2 (started a distance
1/2 from the centre) reduces to a radial ODE

    (1 - eps) v'' + v'/rho = -1_{[0, r]}(rho),   v'(0) = 0,  v(3/2) = 0,

solvable by the integrating factor rho^{1/(1-eps)}.  Two independent code
paths are provided: the explicit evaluation of the resulting formula, and
numerical quadrature of the closed-form v'.

Sign-drift resolvent (d = 1): u'' - M sign(x) u' - mu u = -f on the line;
as f tightens to a point mass at the origin the solution tends to
exp(-nu |x|)/(2 nu) with nu^2 + M nu = mu, whose L1 norm is 1/nu^2.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .errors import ValidationError

OUTER_RADIUS = 1.5
_EPS_SMALL = 1e-10


def gamma_exponent(eps: float) -> float:
    """The quasi-norm exponent 2(1-eps)/(2-eps) attached to the radial example.

    Strictly decreasing from 1 (eps = 0) to 0 (eps -> 1); the exit value
    scales like r to the power 2/gamma, i.e. like |G|^{1/gamma} with
    |G| = pi r^2.
    """
    if not 0 <= eps < 1:
        raise ValidationError("eps must lie in [0, 1)")
    return 2.0 * (1.0 - eps) / (2.0 - eps)


def _check_radial_args(eps, r):
    if not 0 <= eps < 1:
        raise ValidationError("eps must lie in [0, 1)")
    if not 0 < r < 0.5:
        raise ValidationError("source radius must lie in (0, 1/2)")


def radial_slope(eps: float, r: float, rho) -> np.ndarray:
    """Closed-form v'(rho) from the integrating factor rho^{1/(1-eps)}."""
    _check_radial_args(eps, r)
    rho = np.asarray(rho, dtype=float)
    alpha = 1.0 / (1.0 - eps)
    inside = -rho / (2.0 - eps)
    with np.errstate(divide="ignore"):
        outside = -(r ** (alpha + 1.0)) * rho ** (-alpha) / (2.0 - eps)
    return np.where(rho <= r, inside, outside)


def radial_profile(eps: float, r: float, rho: float,
                   quadrature: bool = False) -> float:
    """v(rho) with v(3/2) = 0: expected occupation of the source disk.

    With ``quadrature`` the closed-form slope is integrated numerically
    (an independent path used to cross-check the explicit formula).
    """
    _check_radial_args(eps, r)
    if not 0 <= rho <= OUTER_RADIUS:
        raise ValidationError("rho must lie in [0, 3/2]")
    if quadrature:
        pieces = sorted({rho, min(max(r, rho), OUTER_RADIUS), OUTER_RADIUS})
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            val, _ = quad(lambda s: -radial_slope(eps, r, s), a, b,
                          epsabs=1e-13, epsrel=1e-13, limit=200)
            total += val
        return total
    alpha = 1.0 / (1.0 - eps)
    R = OUTER_RADIUS

    def v_outer(p):
        if abs(alpha - 1.0) < _EPS_SMALL:
            return 0.5 * r ** 2 * math.log(R / p)
        coeff = r ** (alpha + 1.0) / ((2.0 - eps) * (alpha - 1.0))
        return coeff * (p ** (1.0 - alpha) - R ** (1.0 - alpha))

    if rho >= r:
        return v_outer(rho)
    return v_outer(r) + (r ** 2 - rho ** 2) / (2.0 * (2.0 - eps))


def radial_exit_value(eps: float, r: float) -> float:
    """Occupation of the source disk seen from the evaluation point (rho = 1/2).

    Explicit formula with the eps -> 0 limit handled by its analytic value
    (r^2/2) log 3; proportional to r^{(2-eps)/(1-eps)} = r^{2/gamma}.
    """
    _check_radial_args(eps, r)
    if eps < _EPS_SMALL:
        return 0.5 * r ** 2 * math.log(3.0)
    e = eps
    return ((1.0 - e) / (e * (2.0 - e)) * 2.0 ** (e / (1.0 - e))
            * (1.0 - 3.0 ** (-e / (1.0 - e))) * r ** ((2.0 - e) / (1.0 - e)))


# ---------------------------------------------------------------------------
# sign-drift resolvent


def sign_drift_decay_rate(M: float, mu: float) -> float:
    """nu solving nu^2 + M nu = mu (written in its cancellation-free form)."""
    if not mu > 0:
        raise ValidationError("mu must be positive")
    if M < 0:
        raise ValidationError("M must be nonnegative")
    return 2.0 * mu / (math.sqrt(M * M + 4.0 * mu) + M)


def sign_drift_fundamental(M: float, mu: float, x) -> np.ndarray:
    """Point-source solution exp(-nu |x|)/(2 nu) of u'' - M sign(x) u' - mu u = -delta_0."""
    nu = sign_drift_decay_rate(M, mu)
    x = np.asarray(x, dtype=float)
    return np.exp(-nu * np.abs(x)) / (2.0 * nu)


def sign_drift_resolvent_l1(M: float, mu: float) -> float:
    """Limiting L1 norm 1/nu^2 of resolvent solutions as the source tightens.

    Equals (sqrt(M^2 + 4 mu) + M)^2 / (4 mu^2): bounded times 1/mu for large
    mu but only bounded times M^2/mu^2 for small mu, which is the two-regime
    decay the dichotomy checks look for.
    """
    nu = sign_drift_decay_rate(M, mu)
    return 1.0 / (nu * nu)
