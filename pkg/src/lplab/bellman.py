"""Desk-scale 1-D solver for the extremal (Bellman) parabolic equation.

The equation is dt u + inf over {a in [delta, 1/delta], |b| <= K} of
(a u_xx + b u_x) + f = 0 on a 1-D cylinder with zero data on the terminal
slab and lateral boundary.  In one dimension the infimum is closed form:
a switches between delta and 1/delta with the sign of u_xx, and the drift
term contributes -K |u_x|.  The march is implicit backward Euler; every
step runs policy iteration: freeze the pointwise minimizing controls, solve
the linear step, recompute the controls, stop at a fixed point.  The |u_x|
term is discretized upwind against the sign of the optimal drift, which
keeps every frozen linear system an M-matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import PolicyIterationError, ValidationError
from .fd import GridFunction, SolveReport, _as_spacetime_fn, _factorize, solve_parabolic
from .geometry import CYLINDER, Domain, GridSpec

_FIXED_POINT_TOL = 1e-10
_MAX_SWEEPS = 100


@dataclass(frozen=True)
class BellmanProblem:
    """Control bounds and forcing for the 1-D extremal equation."""

    delta: float
    K: float
    f: object        # callable (t, X) -> values >= 0, or scalar
    grid: GridSpec

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValidationError("delta must lie in (0, 1]")
        if self.K < 0:
            raise ValidationError("K must be nonnegative")


def bellman_rhs_1d(u_xx, u_x, delta, K, f):
    """Pointwise infimum a*u_xx + b*u_x + f over the control box.

    a ranges over [delta, 1/delta] so the minimum is min(delta*u_xx,
    u_xx/delta); the drift contributes -K|u_x|.
    """
    u_xx = np.asarray(u_xx, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    val = np.minimum(delta * u_xx, u_xx / delta) - K * np.abs(u_x) + f
    return val if val.ndim else float(val)


def _optimal_controls(u, h, delta, K):
    """Per-node minimizing (a, b) from the current iterate.

    u includes the two boundary values; controls are for interior nodes.
    b is chosen over {-K, 0, K} against the upwind differences, so the
    selected drift term is exactly the one the assembled system applies.
    """
    uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2
    a = np.where(uxx >= 0, delta, 1.0 / delta)
    fwd = (u[2:] - u[1:-1]) / h     # coefficient of b+ term
    bwd = (u[1:-1] - u[:-2]) / h    # coefficient of b- term
    cand = np.stack([K * fwd, np.zeros_like(fwd), -K * bwd])
    b_choice = np.array([K, 0.0, -K])[np.argmin(cand, axis=0)]
    if K == 0:
        b_choice = np.zeros_like(b_choice)
    return a, b_choice


def _policy_matrix(a, b, h, k, n):
    """(I/k - W) for frozen controls; upwind drift keeps it an M-matrix."""
    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    wE = a / h ** 2 + bp / h
    wW = a / h ** 2 - bm / h
    center = -(wE + wW)
    diag = 1.0 / k - center
    return sp.diags([-wW[1:], diag, -wE[:-1]], offsets=[-1, 0, 1],
                    format="csc"), wE, wW


def solve_bellman_1d(problem: BellmanProblem, domain: Domain):
    """March the extremal equation backward with per-step policy iteration.

    Returns (GridFunction, SolveReport, max_sweeps).  Zero data on the
    terminal slab and lateral boundary; f must be nonnegative.
    """
    grid = problem.grid
    if domain.kind != CYLINDER or domain.d != 1:
        raise ValidationError("the extremal solver runs on 1-D cylinders")
    if grid.domain != domain or grid.taxis is None:
        raise ValidationError("grid does not cover the requested cylinder")
    interior = grid.interior_mask()
    n = int(interior.sum())
    xs = grid.axes[0]
    int_idx = np.flatnonzero(interior)
    # interior nodes are contiguous in 1-D; the two flanking nodes carry data
    lo, hi = int_idx[0], int_idx[-1]
    if not np.array_equal(int_idx, np.arange(lo, hi + 1)):
        raise ValidationError("interior nodes are not contiguous")
    pts = xs[int_idx][:, None]
    f_fn = _as_spacetime_fn(problem.f)
    h, k = grid.h, grid.k
    taxis = grid.taxis
    n_lev = len(taxis)
    values = np.full((n_lev, len(xs)), np.nan)
    values[-1, lo - 1:hi + 2] = 0.0
    u_next = np.zeros(n)
    u_ext = np.zeros(n + 2)     # with the two boundary values (zero data)
    max_sweeps = 0
    worst_res = 0.0
    for m in range(n_lev - 2, -1, -1):
        fvec = f_fn(taxis[m], pts)
        if np.any(fvec < -1e-14):
            raise ValidationError("f must be nonnegative")
        u_ext[1:-1] = u_next
        a, b = _optimal_controls(u_ext, h, problem.delta, problem.K)
        u_cur = u_next
        converged = False
        for sweep in range(1, _MAX_SWEEPS + 1):
            A, wE, wW = _policy_matrix(a, b, h, k, n)
            rhs = u_next / k + fvec
            u_new = _factorize(A).solve(rhs)
            u_ext[1:-1] = u_new
            a_new, b_new = _optimal_controls(u_ext, h, problem.delta,
                                             problem.K)
            scale = max(1.0, float(np.abs(u_new).max()))
            drift = float(np.abs(u_new - u_cur).max()) / scale
            policy_stable = np.array_equal(a_new, a) and np.array_equal(
                b_new, b)
            u_cur = u_new
            a, b = a_new, b_new
            if policy_stable or drift < _FIXED_POINT_TOL:
                max_sweeps = max(max_sweeps, sweep)
                converged = True
                break
        if not converged:
            raise PolicyIterationError(
                f"no fixed point within {_MAX_SWEEPS} sweeps at level {m}")
        # residual of the discrete extremal equation at the fixed point
        u_ext[1:-1] = u_cur
        uxx = (u_ext[2:] - 2 * u_ext[1:-1] + u_ext[:-2]) / h ** 2
        fwd = (u_ext[2:] - u_ext[1:-1]) / h
        bwd = (u_ext[1:-1] - u_ext[:-2]) / h
        hmin = np.minimum(problem.delta * uxx, uxx / problem.delta) \
            - problem.K * np.maximum.reduce([-fwd, bwd, np.zeros(n)])
        resid = (u_next - u_cur) / k + hmin + fvec
        worst_res = max(worst_res, float(np.abs(resid).max()))
        values[m, lo:hi + 1] = u_cur
        values[m, lo - 1] = 0.0
        values[m, hi + 1] = 0.0
        u_next = u_cur
    gf = GridFunction(grid=grid, values=values)
    report = SolveReport(residual_norm=worst_res, iterations=n_lev - 1,
                         monotone_scheme=True)
    return gf, report, max_sweeps


@dataclass
class SuboptimalityReport:
    """Nodewise comparison of the extremal solution against one linear solve."""

    ok: bool
    max_violation: float
    violation_location: tuple | None
    min_margin: float
    tolerance: float
    mc_ok: bool | None = None
    mc_margin: float | None = None


def check_suboptimality(u_bellman: GridFunction, spec, f, domain: Domain,
                        tolerance: float | None = None,
                        mc: dict | None = None) -> SuboptimalityReport:
    """Verify the extremal solution minorizes a linear solve with the same f.

    The linear problem is L u = -f with zero reduced-boundary data for any
    admissible frozen operator.  With ``mc`` a dict of simulation settings
    (n_paths, dt, seed), additionally checks that the Monte Carlo occupation
    estimate for that operator's diffusion is >= u_bellman(0 at the base
    point) minus three standard errors.
    """
    grid = u_bellman.grid
    if tolerance is None:
        tolerance = 10.0 * grid.h ** 2
    f_fn = _as_spacetime_fn(f)

    def neg_f(t, X):
        return -f_fn(t, X)

    u_lin, _ = solve_parabolic(spec, domain, neg_f, 0.0, grid)
    diff = u_bellman.values - u_lin.values
    valued = np.isfinite(diff)
    max_viol = float(np.max(diff[valued]))
    loc = None
    if max_viol > tolerance:
        flat = np.where(valued, diff, -np.inf).argmax()
        loc = np.unravel_index(flat, diff.shape)
    ok = max_viol <= tolerance
    min_margin = float(np.min((u_lin.values - u_bellman.values)[valued]))
    mc_ok = mc_margin = None
    if mc is not None:
        from .sde import SimConfig, sigma_from_operator, simulate_with_functionals
        cfg = SimConfig(sigma=sigma_from_operator(spec),
                        b=spec.coeffs.eval_b,
                        domain=domain,
                        dt=mc.get("dt", 1e-3), n_paths=mc.get("n_paths", 20000),
                        seed=mc.get("seed", 0))
        _, (est,) = simulate_with_functionals(cfg, [f_fn])
        u00 = u_bellman.at_tx(domain.t0, domain.x_center)
        mc_margin = float(est.mean + 3.0 * est.stderr - u00)
        mc_ok = bool(mc_margin >= 0.0)
    return SuboptimalityReport(ok=ok, max_violation=max_viol,
                               violation_location=loc, min_margin=min_margin,
                               tolerance=tolerance, mc_ok=mc_ok,
                               mc_margin=mc_margin)
