"""Quasi-norms, distribution functions, tail fitting, and inequality checkers.

Conventions fixed here (they matter for fitted constants): |Du| is the
Euclidean norm of the gradient and |D^2 u| the Frobenius norm of the Hessian;
integrals are midpoint sums over node-centred cells clipped to the region
(exactly, for disks).  Inequality checkers report the smallest constant
making the checked bound an equality for the given instance; nothing more.

Ring rule: when an integration region coincides with the field's own solve
domain, nodes whose derivative stencils were one-sided (the outermost ring,
and the first/last time slabs for space-time fields) are excluded from
integrals of derived fields; strictly nested regions keep every node their
cells touch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, NumericalError, ValidationError
from .fd import GridFunction, apply_operator, discrete_derivatives
from .geometry import BALL, Domain, GridSpec, cell_weights, classify_boundary
from .operators import OperatorSpec


def _coerce_field(u, grid: GridSpec | None):
    if isinstance(u, GridFunction):
        return u.values, u.grid
    if grid is None:
        raise ValidationError("raw arrays need an explicit grid")
    return np.asarray(u, dtype=float), grid


def region_weights(region: Domain, grid: GridSpec) -> np.ndarray:
    """Cell measures of the region on the grid lattice (time axis first)."""
    return cell_weights(region, grid)


def lp_norm(u, p, region: Domain, grid: GridSpec | None = None,
            include=None) -> float:
    """(integral of |u|^p over the region)^{1/p}; for p < 1 the quasi-norm.

    ``include`` optionally masks nodes out of the integral (e.g. the
    one-sided ring).  NaN values under positive weight are an error.
    """
    if not p > 0:
        raise ValidationError("p must be positive")
    vals, grid = _coerce_field(u, grid)
    w = region_weights(region, grid)
    if include is not None:
        w = np.where(include, w, 0.0)
    active = w > 0
    va = vals[active]
    if not np.all(np.isfinite(va)):
        raise NumericalError("undefined field values inside the region; "
                             "mask them out explicitly")
    return float(np.sum(w[active] * np.abs(va) ** p) ** (1.0 / p))


def integral(u, region: Domain, grid: GridSpec | None = None,
             include=None) -> float:
    """Plain integral of u over the region (same cell rule as lp_norm)."""
    vals, grid = _coerce_field(u, grid)
    w = region_weights(region, grid)
    if include is not None:
        w = np.where(include, w, 0.0)
    active = w > 0
    va = vals[active]
    if not np.all(np.isfinite(va)):
        raise NumericalError("undefined field values inside the region")
    return float(np.sum(w[active] * va))


def sup_on(u, node_mask) -> float:
    """max |u| over a tagged node set (boolean lattice mask)."""
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u)
    if not np.any(node_mask):
        raise ValidationError("empty node set")
    sel = vals[node_mask]
    if not np.all(np.isfinite(sel)):
        raise NumericalError("undefined values on the node set")
    return float(np.abs(sel).max())


# ---------------------------------------------------------------------------
# distribution functions and tails


@dataclass
class TailData:
    """Superlevel-set measures F(lambda) at increasing levels."""

    lambdas: np.ndarray
    F: np.ndarray
    u00: float | None = None

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if np.any(self.lambdas <= 0) or np.any(np.diff(self.lambdas) <= 0):
            raise ValidationError("levels must be positive and increasing")
        if np.any(self.F < 0) or np.any(np.diff(self.F) > 1e-12):
            raise ValidationError("F must be nonnegative and nonincreasing")

    def to_json(self, path=None):
        payload = json.dumps({
            "lambdas": [float(v) for v in self.lambdas],
            "F": [float(v) for v in self.F],
            "u00": None if self.u00 is None else float(self.u00),
        }, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload


def distribution_function(u, lambdas, region: Domain,
                          grid: GridSpec | None = None, u00=None,
                          include=None) -> TailData:
    """Cell-counting measure of {u >= lambda} within the region, per level."""
    vals, grid = _coerce_field(u, grid)
    lambdas = np.asarray(lambdas, dtype=float)
    w = region_weights(region, grid)
    if include is not None:
        w = np.where(include, w, 0.0)
    active = w > 0
    va = vals[active]
    wa = w[active]
    # +inf values are legitimate here (superlevel sets remain well defined)
    if np.any(np.isnan(va)):
        raise NumericalError("undefined field values inside the region")
    F = np.array([float(np.sum(wa[va >= lam])) for lam in lambdas])
    return TailData(lambdas=lambdas, F=F, u00=u00)


@dataclass
class TailFit:
    gamma_hat: float
    constant: float
    n_points: int


def fit_tail_exponent(tail: TailData) -> TailFit:
    """Least-squares slope of log F against log lambda, negated.

    Uses the samples with F > 0; needs at least three and a non-flat F.
    """
    mask = tail.F > 0
    lam = tail.lambdas[mask]
    F = tail.F[mask]
    if len(F) < 3:
        raise ValidationError("need at least 3 samples with positive measure")
    if float(np.ptp(F)) == 0.0:
        raise DegenerateDataError("flat distribution function; no tail slope")
    x = np.log(lam)
    y = np.log(F)
    slope, intercept = np.polyfit(x, y, 1)
    return TailFit(gamma_hat=float(-slope), constant=float(math.exp(intercept)),
                   n_points=int(len(F)))


def layer_cake_quasinorm(tail: TailData, gamma_prime: float,
                         head_measure: float | None = None) -> float:
    """integral of |u|^{gamma'} recovered from tail data by layer-cake summation.

    The head (levels below the first sample) contributes at most
    head_measure * lambda_0^{gamma'} (head_measure defaults to F[0]); the
    tail beyond the last sample is extrapolated with the fitted exponent.
    """
    if not 0 < gamma_prime:
        raise ValidationError("gamma' must be positive")
    lam, F = tail.lambdas, tail.F
    head = (F[0] if head_measure is None else head_measure) * lam[0] ** gamma_prime
    g = gamma_prime
    body = float(np.trapezoid(g * lam ** (g - 1.0) * F, lam))
    fit = fit_tail_exponent(tail)
    tail_part = 0.0
    if fit.gamma_hat > g and F[-1] > 0:
        # integrate C lam^{-gamma_hat} * g lam^{g-1} beyond the last sample
        C = F[-1] * lam[-1] ** fit.gamma_hat
        tail_part = g * C * lam[-1] ** (g - fit.gamma_hat) / (fit.gamma_hat - g)
    return head + body + tail_part


# ---------------------------------------------------------------------------
# inequality checkers


@dataclass
class BoundReport:
    """One checked inequality instance.

    ``fitted_N`` is lhs divided by the unit-constant sum of the right-hand
    side terms: the smallest constant making the bound hold for this
    instance.  ``stderr`` propagates Monte Carlo uncertainty when present.
    """

    lhs: float
    rhs_terms: list
    gamma_used: float
    fitted_N: float
    stderr: float | None = None
    inconclusive: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.fitted_N

    def to_json(self, path=None):
        payload = json.dumps({
            "lhs": self.lhs,
            "rhs_terms": [[label, float(v)] for label, v in self.rhs_terms],
            "gamma_used": self.gamma_used,
            "fitted_N": self.fitted_N,
            "stderr": self.stderr,
            "inconclusive": self.inconclusive,
            "meta": self.meta,
        }, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload


def _make_report(lhs, rhs_terms, gamma) -> BoundReport:
    rhs_sum = sum(v for _, v in rhs_terms)
    if rhs_sum > 0:
        fitted = lhs / rhs_sum
    else:
        fitted = 0.0 if lhs == 0 else math.inf
    return BoundReport(lhs=float(lhs), rhs_terms=rhs_terms,
                       gamma_used=float(gamma), fitted_N=float(fitted))


def _interior_lattice(grid: GridSpec) -> np.ndarray:
    interior = grid.interior_mask()
    if grid.taxis is None:
        return interior
    return np.broadcast_to(interior, (grid.n_levels,) + interior.shape)


def _deriv_bound(u: GridFunction, spec: OperatorSpec, inner: Domain,
                 gamma: float, p_exp: float, derived_field: np.ndarray,
                 centered: np.ndarray, lu_values=None) -> BoundReport:
    grid = u.grid
    outer = grid.domain
    same = inner == outer
    ring_free = centered & _interior_lattice(grid)
    include = ring_free if same else np.isfinite(derived_field)
    lhs = integral(np.abs(derived_field) ** gamma, inner, grid,
                   include=include)
    if lu_values is None:
        lu = apply_operator(spec, u)
        lu_inc = ring_free
    else:
        lu = np.asarray(lu_values, dtype=float)
        lu_inc = np.isfinite(lu)
    lu_term = lp_norm(lu, p_exp, outer, grid, include=lu_inc) ** gamma
    tags = classify_boundary(outer, grid)
    sup_term = sup_on(u, tags.reduced) ** gamma
    return _make_report(lhs, [("lu_norm_pow_gamma", lu_term),
                              ("boundary_sup_pow_gamma", sup_term)], gamma)


def check_hessian_bound(u: GridFunction, spec: OperatorSpec, inner: Domain,
                        gamma: float, p_exp: float | None = None,
                        lu_values=None) -> BoundReport:
    """Check integral_inner |D^2 u|^gamma <= N ((integral |Lu|^p)^{gamma/p}
    + sup_boundary |u|^gamma) on the field's own solve domain.

    ``p_exp`` defaults to d for spatial fields, d + 1 for space-time fields.
    ``lu_values`` may supply the known right-hand side of a solve in place of
    the discrete estimate of L u.
    """
    if not 0 < gamma <= 1:
        raise ValidationError("gamma must lie in (0, 1]")
    grid = u.grid
    if p_exp is None:
        p_exp = grid.d + (1 if grid.taxis is not None else 0)
    der = discrete_derivatives(u)
    return _deriv_bound(u, spec, inner, gamma, p_exp,
                        der.hessian_frobenius(), der.centered, lu_values)


def check_gradient_bound(u: GridFunction, spec: OperatorSpec, inner: Domain,
                         gamma: float, p_exp: float | None = None,
                         lu_values=None) -> BoundReport:
    """Same as check_hessian_bound with |Du| in place of |D^2 u|."""
    if not 0 < gamma <= 1:
        raise ValidationError("gamma must lie in (0, 1]")
    grid = u.grid
    if p_exp is None:
        p_exp = grid.d + (1 if grid.taxis is not None else 0)
    der = discrete_derivatives(u)
    return _deriv_bound(u, spec, inner, gamma, p_exp,
                        der.grad_norm(), der.centered, lu_values)


def square_identity_residual(u: GridFunction, spec: OperatorSpec) -> float:
    """Max-norm residual of L(-u^2) = g - f with g = -2 u Lu - c u^2 and
    f = 2 a^{ij} (D_i u)(D_j u), over the centred interior.

    Vanishes identically when every stencil involved is exact (affine and
    bilinear u on binary-rational grids), and at second order in h for
    smooth u.
    """
    grid = u.grid
    der = discrete_derivatives(u)
    u2 = GridFunction(grid=grid, values=-(u.values ** 2))
    lu = apply_operator(spec, u)
    lu2 = apply_operator(spec, u2)
    pts = grid.points()

    def c_and_f(t, du_slab):
        A = spec.coeffs.eval_a(t, pts)
        c = spec.coeffs.eval_c(t, pts)
        du = du_slab.reshape(len(pts), grid.d)
        fq = 2.0 * np.einsum("nij,ni,nj->n", A, du, du)
        return c.reshape(grid.spatial_shape), fq.reshape(grid.spatial_shape)

    if grid.taxis is None:
        c, fq = c_and_f(0.0, der.du)
        resid = lu2 - (-2.0 * u.values * lu - c * u.values ** 2) + fq
        sel = der.centered
    else:
        resid = np.full(u.values.shape, np.nan)
        for m, t in enumerate(grid.taxis):
            c, fq = c_and_f(t, der.du[m])
            resid[m] = lu2[m] - (-2.0 * u.values[m] * lu[m]
                                 - c * u.values[m] ** 2) + fq
        sel = der.centered
    vals = resid[sel]
    if vals.size == 0:
        raise ValidationError("no centred interior nodes")
    return float(np.abs(vals).max())
