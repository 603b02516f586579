"""Drift splitting, truncation levels, the threshold root, and resolvent
norm estimation with the two-regime decay check.

The estimated operator norm is a lower bound: the maximum of
||R_mu f||_p / ||f||_p over a finite bank of nonnegative test functions,
computed on a truncated domain with zero exterior data (which can only
lower the ratio, keeping the lower-bound semantics).  No claim is made
about the distance to the true norm; the decay shape in mu is what the
checks exercise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .fd import ResolventOperator
from .geometry import BALL, Domain, GridSpec, cell_weights
from .operators import OperatorSpec

PARABOLIC = "parabolic"
ELLIPTIC = "elliptic"

_BISECT_TOL = 1e-9


def split_drift(b_values, mu_cut: float):
    """Radial truncation b = b1 + b2 with |b1| <= mu_cut, b2 the excess.

    ``b_values`` has a trailing component axis; b2 vanishes wherever
    |b| <= mu_cut and is parallel to b elsewhere.
    """
    if mu_cut < 0:
        raise ValidationError("truncation level must be nonnegative")
    b = np.asarray(b_values, dtype=float)
    mag = np.sqrt(np.sum(b * b, axis=-1, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(mag > mu_cut, np.where(mag > 0, mu_cut / mag, 0.0), 1.0)
    b1 = b * scale
    return b1, b - b1


@dataclass(frozen=True)
class DriftField:
    """|b| sampled on a grid plus its behaviour outside the truncation.

    ``exterior_sup`` is sup |b| beyond the grid's domain: positive for
    globally non-decaying drifts (their excess norm is infinite below that
    level, which forces the exact jump answer), zero for compactly
    supported ones.
    """

    grid: GridSpec
    values: np.ndarray            # (*lattice, d) vector samples
    exterior_sup: float = 0.0

    @classmethod
    def from_function(cls, b_fn, grid: GridSpec, exterior_sup=0.0, t=0.0):
        pts = grid.points()
        vals = np.asarray(b_fn(t, pts), dtype=float)
        return cls(grid=grid, values=vals.reshape(grid.spatial_shape + (-1,)),
                   exterior_sup=float(exterior_sup))

    def magnitudes(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=-1))

    def sup(self) -> float:
        return max(float(self.magnitudes().max()), self.exterior_sup)

    def excess_norm(self, mu: float, q: float) -> float:
        """||(|b| - mu)_+||_{L_q}; infinite below the exterior level."""
        if mu < self.exterior_sup - 1e-15:
            return math.inf
        w = cell_weights(self.grid.domain, self.grid)
        excess = np.maximum(self.magnitudes() - mu, 0.0)
        return float(np.sum(w * excess ** q) ** (1.0 / q))


def mu_theta(drift: DriftField, theta: float, lam: float, q_exp: float,
             branch: str = PARABOLIC) -> float:
    """Smallest truncation level whose excess L_q norm meets the target.

    Parabolic target: theta * lam^{-1/(2d+2)} with q = d + 1; elliptic
    target: theta with q = d.  The map mu -> excess norm is continuous and
    nonincreasing on the sampled part and jumps from infinity at the
    exterior level, so bisection plus the exact jump rule settles it.
    """
    if theta <= 0 or lam <= 0:
        raise ValidationError("theta and lambda must be positive")
    d = drift.grid.d
    if branch == PARABOLIC:
        target = theta * lam ** (-1.0 / (2.0 * d + 2.0))
    elif branch == ELLIPTIC:
        target = theta
    else:
        raise ValidationError(f"unknown branch {branch!r}")
    if not np.isfinite(target) or target <= 0:
        raise NumericalError("excess-norm target is not positive")
    lo_floor = drift.exterior_sup
    if drift.excess_norm(lo_floor, q_exp) <= target:
        if lo_floor == 0.0 and drift.excess_norm(0.0, q_exp) <= target:
            return 0.0
        return lo_floor
    hi = drift.sup()
    if drift.excess_norm(hi, q_exp) > target:
        raise NumericalError("excess norm never reaches the target")
    lo = lo_floor
    scale = 1.0 + hi
    while hi - lo > _BISECT_TOL * scale:
        mid = 0.5 * (lo + hi)
        if drift.excess_norm(mid, q_exp) <= target:
            hi = mid
        else:
            lo = mid
    return float(hi)


def nu_theta(b2: DriftField, theta: float) -> float:
    """Equality choice ||b2||_{L_{d+2}}^{d+2} * theta^{-(d+1)}."""
    if theta <= 0:
        raise ValidationError("theta must be positive")
    d = b2.grid.d
    q = d + 2.0
    w = cell_weights(b2.grid.domain, b2.grid)
    norm_q = float(np.sum(w * b2.magnitudes() ** q))
    return norm_q * theta ** (-(d + 1.0))


def lambda_of_mu(K: float, mu_theta_fn, mu: float,
                 rel_tol: float = 1e-12) -> float:
    """Root of K*lam + mu_theta(lam)*sqrt(lam) = mu by bracketed bisection.

    The left side is continuous, nondecreasing, and vanishes at 0, so a
    root exists whenever the map is unbounded; a bounded map (K = 0 and
    mu_theta identically 0) has no root and is reported.
    """
    if mu <= 0:
        raise ValidationError("mu must be positive")

    def g(lam):
        return K * lam + mu_theta_fn(lam) * math.sqrt(lam)

    hi = 1.0
    for _ in range(300):
        if g(hi) >= mu:
            break
        hi *= 2.0
    else:
        raise NumericalError("threshold equation has no root "
                             "(degenerate drift data)")
    lo = 0.0
    for _ in range(300):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if g(mid) >= mu:
            hi = mid
        else:
            lo = mid
    return float(hi)


# ---------------------------------------------------------------------------
# test banks


class BumpFunction:
    """Normalized flat bump of a given width (an L1 delta approximant)."""

    time_independent = True

    def __init__(self, width, center=0.0):
        if width <= 0:
            raise ValidationError("width must be positive")
        self.width = float(width)
        self.center = float(center)

    def __call__(self, t, X):
        X = np.atleast_2d(X)
        inside = np.abs(X[:, 0] - self.center) < self.width / 2
        return inside.astype(float) / self.width

    def __repr__(self):
        return f"BumpFunction(width={self.width}, center={self.center})"


class SmoothBump:
    """cos^2 bump: compactly supported, C^1, unit mass."""

    time_independent = True

    def __init__(self, width, center=0.0):
        self.width = float(width)
        self.center = float(center)

    def __call__(self, t, X):
        X = np.atleast_2d(X)
        z = (X[:, 0] - self.center) / (self.width / 2)
        out = np.where(np.abs(z) < 1, np.cos(np.pi * z / 2) ** 2, 0.0)
        return out * (2.0 / self.width)

    def __repr__(self):
        return f"SmoothBump(width={self.width}, center={self.center})"


class OscillatoryEnvelope:
    """|sin(k x)| under a flat bump: nonnegative with internal structure."""

    time_independent = True

    def __init__(self, width, wavenumber, center=0.0):
        self.width = float(width)
        self.wavenumber = float(wavenumber)
        self.center = float(center)

    def __call__(self, t, X):
        X = np.atleast_2d(X)
        z = X[:, 0] - self.center
        inside = np.abs(z) < self.width / 2
        return np.where(inside, np.abs(np.sin(self.wavenumber * z)), 0.0)

    def __repr__(self):
        return (f"OscillatoryEnvelope(width={self.width}, "
                f"k={self.wavenumber}, center={self.center})")


def default_test_bank(min_width=0.08, centers=(0.0, 0.5, -1.0)):
    """Sixteen nonnegative members: flat and smooth bumps of several widths
    (narrowest ``min_width``), off-centre copies, and oscillatory envelopes."""
    widths = [min_width, 2 * min_width, 4 * min_width, 1.0, 2.0]
    bank = [BumpFunction(w) for w in widths]
    bank += [SmoothBump(w) for w in widths]
    bank += [BumpFunction(widths[1], center=c) for c in centers[1:]]
    bank += [SmoothBump(widths[2], center=centers[1])]
    bank += [OscillatoryEnvelope(2.0, 3.0), OscillatoryEnvelope(4.0, 7.0),
             OscillatoryEnvelope(1.0, 11.0)]
    return bank


# ---------------------------------------------------------------------------
# empirical resolvent norms


@dataclass
class NormEstimate:
    """Max bank ratio with the witnessing member's norms."""

    n_hat: float
    best_index: int
    norm_u: float
    norm_f: float
    ratios: list
    negative_part_flag: bool


def estimate_operator_norm(spec: OperatorSpec, mu: float, p: float,
                           domain: Domain, grid: GridSpec,
                           test_bank) -> NormEstimate:
    """Lower bound on the L_p -> L_p resolvent norm from a finite bank.

    One factorization of (mu - L) serves every bank member.  Ratios use
    u_+ only; a numerically negative part (impossible for f >= 0 under a
    monotone stencil) raises a flag rather than being clipped silently.
    """
    if len(test_bank) < 1:
        raise ValidationError("empty test bank")
    if domain.kind != BALL:
        raise ValidationError("norm estimation runs on ball truncations")
    op = ResolventOperator(spec, mu, grid)
    w = cell_weights(domain, grid)
    wa = w.ravel()
    ratios = []
    neg_flag = False
    best = (-math.inf, -1, 0.0, 0.0)
    for idx, f in enumerate(test_bank):
        fv = np.asarray(f(0.0, grid.points()), dtype=float)
        if fv.min() < -1e-15:
            raise ValidationError("test bank members must be nonnegative")
        try:
            u = op.apply(lambda X, _fv=f: _fv(0.0, X))
        except NumericalError as exc:
            raise NumericalError(f"bank member {idx} ({f!r}) failed: {exc}") \
                from exc
        uv = np.where(np.isfinite(u.values.ravel()), u.values.ravel(), 0.0)
        scale = float(np.abs(uv).max()) or 1.0
        if uv.min() < -1e-9 * scale:
            neg_flag = True
        u_plus = np.maximum(uv, 0.0)
        norm_u = float(np.sum(wa * u_plus ** p) ** (1.0 / p))
        norm_f = float(np.sum(wa * fv ** p) ** (1.0 / p))
        if norm_f == 0:
            raise ValidationError(f"bank member {idx} vanishes on the grid")
        ratio = norm_u / norm_f
        ratios.append(ratio)
        if ratio > best[0]:
            best = (ratio, idx, norm_u, norm_f)
    return NormEstimate(n_hat=best[0], best_index=best[1], norm_u=best[2],
                        norm_f=best[3], ratios=ratios,
                        negative_part_flag=neg_flag)


@dataclass
class DichotomyReport:
    """Per-mu resolvent norms with the two normalizations and the threshold."""

    mu_list: list
    norm_u: list
    norm_f: list
    n_hat: list
    mu_ratio: list
    mu2_ratio: list
    threshold: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, mu in enumerate(self.mu_list):
            yield {"mu": mu, "norm_u": self.norm_u[i],
                   "norm_f": self.norm_f[i], "n_hat": self.n_hat[i],
                   "mu_ratio": self.mu_ratio[i],
                   "mu2_ratio": self.mu2_ratio[i]}

    def to_json(self, path=None):
        payload = json.dumps({
            "mu": list(self.mu_list), "n_hat": list(self.n_hat),
            "mu_ratio": list(self.mu_ratio),
            "mu2_ratio": list(self.mu2_ratio),
            "threshold": self.threshold, "meta": self.meta,
        }, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload


def check_dichotomy(spec: OperatorSpec, p: float, mu_list, test_bank=None,
                    domain_factory=None, drift_sup=None) -> DichotomyReport:
    """Estimate resolvent norms across mu and record mu*N and mu^2*N.

    ``domain_factory(mu) -> (domain, grid)`` chooses the truncation per mu
    (wider for small mu, where the resolvent kernel decays slowly);
    ``drift_sup`` is sup |b| for the threshold (K+1) M^2 (sampled from the
    bank grids when omitted).
    """
    if test_bank is None:
        test_bank = default_test_bank()
    if domain_factory is None:
        raise ValidationError("a domain_factory(mu) is required")
    norms_u, norms_f, n_hats = [], [], []
    M_seen = 0.0
    for mu in mu_list:
        domain, grid = domain_factory(mu)
        est = estimate_operator_norm(spec, mu, p, domain, grid, test_bank)
        norms_u.append(est.norm_u)
        norms_f.append(est.norm_f)
        n_hats.append(est.n_hat)
        if drift_sup is None:
            b = spec.coeffs.eval_b(0.0, grid.points())
            M_seen = max(M_seen, float(np.linalg.norm(b, axis=1).max()))
    M = drift_sup if drift_sup is not None else M_seen
    threshold = (spec.K + 1.0) * M * M
    return DichotomyReport(
        mu_list=[float(m) for m in mu_list], norm_u=norms_u, norm_f=norms_f,
        n_hat=n_hats,
        mu_ratio=[m * n for m, n in zip(mu_list, n_hats)],
        mu2_ratio=[m * m * n for m, n in zip(mu_list, n_hats)],
        threshold=float(threshold),
        meta={"p": p, "M": M, "K": spec.K})
