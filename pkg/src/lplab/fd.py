"""Finite-difference solvers for L u = rhs and the resolvent (mu - L)^{-1}.

Convention: every operation takes the right-hand side in the form
``L u = rhs``.  The spatial stencil is the 3-point second difference per
axis plus, in d = 2, a cross-derivative term realized through second
differences along the lattice diagonal matching the sign of a12 whenever
the off-diagonal dominance a11 >= |a12|, a22 >= |a12| holds (the stencil is
then monotone); otherwise the centred four-corner cross difference is used
and the scheme is flagged non-monotone.  First-order terms use centred
differences.  Time stepping is implicit backward Euler marching from the
terminal slab.  Linear systems are solved by direct sparse factorization.

Discontinuous coefficients are sampled at nodes, never averaged.
"""

from __future__ import annotations

import csv as _csv
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, SingularSystemError, ValidationError
from .geometry import BALL, CYLINDER, Domain, GridSpec
from .operators import OperatorSpec

_WEIGHT_TOL = 1e-12


@dataclass
class GridFunction:
    """A scalar field sampled on a grid's valued nodes (NaN elsewhere).

    For cylinders the value array carries the time axis first.
    """

    grid: GridSpec
    values: np.ndarray

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    def at_x(self, x) -> float:
        """Value at the lattice node nearest to the spatial point x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = tuple(int(round((x[i] - ax[0]) / self.grid.h))
                    for i, ax in enumerate(self.grid.axes))
        if self.grid.taxis is not None:
            raise ValidationError("space-time field: use at_tx")
        return float(self.values[idx])

    def at_tx(self, t, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = int(round((t - self.grid.taxis[0]) / self.grid.k))
        idx = tuple(int(round((x[i] - ax[0]) / self.grid.h))
                    for i, ax in enumerate(self.grid.axes))
        return float(self.values[(m,) + idx])

    def to_csv(self, path):
        """Write valued nodes as rows of coordinates followed by the value."""
        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            if self.grid.taxis is None:
                writer.writerow([f"x{i+1}" for i in range(self.grid.d)] + ["value"])
                pts = self.grid.points()
                vals = self.values.ravel()
                for p, v in zip(pts, vals):
                    if np.isfinite(v):
                        writer.writerow([f"{c:.12g}" for c in p] + [f"{v:.12g}"])
            else:
                writer.writerow(["t"] + [f"x{i+1}" for i in range(self.grid.d)]
                                + ["value"])
                pts = self.grid.points()
                for m, t in enumerate(self.grid.taxis):
                    vals = self.values[m].ravel()
                    for p, v in zip(pts, vals):
                        if np.isfinite(v):
                            writer.writerow([f"{t:.12g}"]
                                            + [f"{c:.12g}" for c in p]
                                            + [f"{v:.12g}"])


@dataclass
class SolveReport:
    """Solver diagnostics: max-norm residual of the discrete equation,
    number of linear-step solves, and whether the stencil was monotone."""

    residual_norm: float
    iterations: int
    monotone_scheme: bool

    def to_json(self, path=None):
        payload = json.dumps({
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "monotone_scheme": self.monotone_scheme,
        }, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload


# ---------------------------------------------------------------------------
# stencil assembly


class _Stencil:
    """Discrete spatial operator a D^2 + b D - c over one grid.

    ``W`` maps interior values, ``B`` maps boundary values; both act to give
    L_h u at interior nodes.  ``monotone`` records whether all off-centre
    stencil weights are nonnegative (so -W is an M-matrix).
    """

    def __init__(self, grid: GridSpec, spec: OperatorSpec, t: float = 0.0):
        self.grid = grid
        interior = grid.interior_mask()
        boundary = grid.boundary_mask()
        self.interior = interior
        self.boundary = boundary
        self.n_int = int(interior.sum())
        self.n_bdry = int(boundary.sum())
        if self.n_int == 0:
            raise ValidationError("grid resolves no interior nodes")
        shape = grid.spatial_shape
        flat_int = np.flatnonzero(interior.ravel())
        flat_bdry = np.flatnonzero(boundary.ravel())
        unknown_id = -np.ones(interior.size, dtype=np.int64)
        unknown_id[flat_int] = np.arange(self.n_int)
        bdry_id = -np.ones(interior.size, dtype=np.int64)
        bdry_id[flat_bdry] = np.arange(self.n_bdry)

        pts = grid.points()[flat_int]
        A = spec.coeffs.eval_a(t, pts)
        bvec = spec.coeffs.eval_b(t, pts)
        cval = spec.coeffs.eval_c(t, pts)
        ev_min = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, 1, 2))).min()
        if ev_min <= 0:
            raise ValidationError(
                f"diffusion matrix not positive definite (min eig {ev_min:g})")
        h = grid.h
        d = grid.d

        offsets, weights = [], []
        min_weight = np.inf
        dominance_ok = True
        if d == 1:
            a11 = A[:, 0, 0]
            wE = a11 / h ** 2 + bvec[:, 0] / (2 * h)
            wW = a11 / h ** 2 - bvec[:, 0] / (2 * h)
            offsets = [(1,), (-1,)]
            weights = [wE, wW]
            center = -2 * a11 / h ** 2 - cval
        else:
            a11, a22, a12 = A[:, 0, 0], A[:, 1, 1], A[:, 0, 1]
            c11 = a11 - np.abs(a12)
            c22 = a22 - np.abs(a12)
            dom = (c11 >= -_WEIGHT_TOL) & (c22 >= -_WEIGHT_TOL)
            dominance_ok = bool(dom.all())
            cd = np.where(dom, np.abs(a12), 0.0)
            ax1 = np.where(dom, c11, a11)
            ax2 = np.where(dom, c22, a22)
            sgn = np.sign(a12)
            wE = ax1 / h ** 2 + bvec[:, 0] / (2 * h)
            wW = ax1 / h ** 2 - bvec[:, 0] / (2 * h)
            wN = ax2 / h ** 2 + bvec[:, 1] / (2 * h)
            wS = ax2 / h ** 2 - bvec[:, 1] / (2 * h)
            # monotone diagonal second difference where dominance holds
            wPP = np.where(dom & (sgn > 0), cd / h ** 2, 0.0)
            wMM = wPP.copy()
            wPM = np.where(dom & (sgn < 0), cd / h ** 2, 0.0)
            wMP = wPM.copy()
            # centred four-corner cross difference elsewhere
            ndom = ~dom
            if ndom.any():
                corner = a12 / (2 * h ** 2)
                wPP = np.where(ndom, corner, wPP)
                wMM = np.where(ndom, corner, wMM)
                wPM = np.where(ndom, -corner, wPM)
                wMP = np.where(ndom, -corner, wMP)
            offsets = [(1, 0), (-1, 0), (0, 1), (0, -1),
                       (1, 1), (-1, -1), (1, -1), (-1, 1)]
            weights = [wE, wW, wN, wS, wPP, wMM, wPM, wMP]
            center = -(wE + wW + wN + wS + wPP + wMM + wPM + wMP) - cval

        multi = np.array(np.unravel_index(flat_int, shape)).T
        rows_W, cols_W, vals_W = [], [], []
        rows_B, cols_B, vals_B = [], [], []
        rng = np.arange(self.n_int)
        rows_W.append(rng)
        cols_W.append(rng)
        vals_W.append(center)
        for off, w in zip(offsets, weights):
            nb = multi + np.asarray(off)
            flat_nb = np.ravel_multi_index(nb.T, shape)
            uid = unknown_id[flat_nb]
            bid = bdry_id[flat_nb]
            if np.any((uid < 0) & (bid < 0)):
                raise NumericalError("stencil reaches an unvalued node")
            m_int = uid >= 0
            rows_W.append(rng[m_int])
            cols_W.append(uid[m_int])
            vals_W.append(w[m_int])
            m_bd = bid >= 0
            rows_B.append(rng[m_bd])
            cols_B.append(bid[m_bd])
            vals_B.append(w[m_bd])
            min_weight = min(min_weight, float(w.min()) if w.size else np.inf)
        self.W = sp.csr_matrix(
            (np.concatenate(vals_W), (np.concatenate(rows_W),
                                      np.concatenate(cols_W))),
            shape=(self.n_int, self.n_int))
        if rows_B and np.concatenate(rows_B).size:
            self.B = sp.csr_matrix(
                (np.concatenate(vals_B), (np.concatenate(rows_B),
                                          np.concatenate(cols_B))),
                shape=(self.n_int, self.n_bdry))
        else:
            self.B = sp.csr_matrix((self.n_int, self.n_bdry))
        self.monotone = bool(dominance_ok and min_weight >= -_WEIGHT_TOL
                             and cval.min() >= -_WEIGHT_TOL)
        self.flat_int = flat_int
        self.flat_bdry = flat_bdry
        self.points_int = pts
        self.points_bdry = grid.points()[flat_bdry]


def _factorize(mat: sp.spmatrix):
    try:
        lu = spla.splu(sp.csc_matrix(mat))
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    return lu


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"{what} produced non-finite values")
    return x


def _as_spatial_fn(f, d):
    """Normalize rhs/boundary input to a vectorized function of points."""
    if callable(f):
        def fn(X):
            X = np.atleast_2d(X)
            out = f(X)
            out = np.asarray(out, dtype=float)
            if out.shape != (len(X),):
                out = np.broadcast_to(out, (len(X),)).astype(float)
            return out
        return fn
    val = float(f)
    return lambda X: np.full(len(np.atleast_2d(X)), val)


def _as_spacetime_fn(f):
    """Normalize rhs/boundary input to a vectorized function of (t, points)."""
    if callable(f):
        def fn(t, X):
            X = np.atleast_2d(X)
            out = np.asarray(f(t, X), dtype=float)
            if out.shape != (len(X),):
                out = np.broadcast_to(out, (len(X),)).astype(float)
            return out
        return fn
    val = float(f)
    return lambda t, X: np.full(len(np.atleast_2d(X)), val)


def _empty_values(grid: GridSpec) -> np.ndarray:
    return np.full(grid.shape, np.nan)


# ---------------------------------------------------------------------------
# solves


def solve_elliptic(spec: OperatorSpec, domain: Domain, rhs, boundary_data,
                   grid: GridSpec):
    """Solve a^{ij} D_ij u + b^i D_i u - c u = rhs on a ball with Dirichlet data.

    Returns (GridFunction, SolveReport).
    """
    if domain.kind != BALL:
        raise ValidationError("solve_elliptic needs a ball domain")
    if grid.domain != domain:
        raise ValidationError("grid does not cover the requested domain")
    st = _Stencil(grid, spec, t=0.0)
    f_fn = _as_spatial_fn(rhs, grid.d)
    g_fn = _as_spatial_fn(boundary_data, grid.d)
    fvec = f_fn(st.points_int)
    gvec = g_fn(st.points_bdry)
    b_sys = fvec - st.B.dot(gvec)
    lu = _factorize(st.W)
    u = _check_finite(lu.solve(b_sys), "elliptic solve")
    scale = max(1.0, float(np.abs(b_sys).max()))
    residual = float(np.abs(st.W.dot(u) - b_sys).max()) / scale
    values = _empty_values(grid)
    flat = values.ravel()
    flat[st.flat_int] = u
    flat[st.flat_bdry] = gvec
    gf = GridFunction(grid=grid, values=flat.reshape(grid.spatial_shape))
    return gf, SolveReport(residual_norm=residual, iterations=1,
                           monotone_scheme=st.monotone)


def solve_parabolic(spec: OperatorSpec, domain: Domain, rhs, boundary_data,
                    grid: GridSpec):
    """Backward march for dt u + a^{ij} D_ij u + b^i D_i u - c u = rhs.

    Dirichlet data is prescribed on the terminal slab and the lateral
    surface; the march is implicit (one linear solve per level).
    """
    if domain.kind != CYLINDER:
        raise ValidationError("solve_parabolic needs a cylinder domain")
    if grid.domain != domain or grid.taxis is None:
        raise ValidationError("grid does not cover the requested cylinder")
    k = grid.k
    if not k > 0:
        raise ValidationError("time step must be positive")
    f_fn = _as_spacetime_fn(rhs)
    g_fn = _as_spacetime_fn(boundary_data)
    taxis = grid.taxis
    n_lev = len(taxis)
    time_dep = spec.time_dependent
    st = _Stencil(grid, spec, t=taxis[-1])
    n_int = st.n_int
    eye = sp.identity(n_int, format="csr")
    lu = None
    if not time_dep:
        lu = _factorize(eye / k - st.W)

    values = np.full((n_lev,) + grid.spatial_shape, np.nan)
    # terminal slab: data everywhere valued
    flat_T = values[-1].ravel()
    flat_T[st.flat_int] = g_fn(taxis[-1], st.points_int)
    flat_T[st.flat_bdry] = g_fn(taxis[-1], st.points_bdry)
    values[-1] = flat_T.reshape(grid.spatial_shape)

    u_next = values[-1].ravel()[st.flat_int].copy()
    worst_res = 0.0
    monotone = st.monotone
    for m in range(n_lev - 2, -1, -1):
        t = taxis[m]
        if time_dep:
            st = _Stencil(grid, spec, t=t)
            monotone = monotone and st.monotone
            lu = _factorize(eye / k - st.W)
        gvec = g_fn(t, st.points_bdry)
        fvec = f_fn(t, st.points_int)
        b_sys = u_next / k + st.B.dot(gvec) - fvec
        u = _check_finite(lu.solve(b_sys), "parabolic step")
        scale = max(1.0, float(np.abs(b_sys).max()))
        worst_res = max(worst_res, float(
            np.abs((eye / k - st.W).dot(u) - b_sys).max()) / scale)
        flat = values[m].ravel()
        flat[st.flat_int] = u
        flat[st.flat_bdry] = gvec
        values[m] = flat.reshape(grid.spatial_shape)
        u_next = u
    gf = GridFunction(grid=grid, values=values)
    return gf, SolveReport(residual_norm=worst_res, iterations=n_lev - 1,
                           monotone_scheme=monotone)


def apply_resolvent(spec: OperatorSpec, mu: float, f, domain: Domain,
                    grid: GridSpec):
    """Solve (mu - L) u = f with zero Dirichlet data.

    Elliptic on balls; backward-marching parabolic on cylinders.
    """
    if not mu > 0:
        raise ValidationError("mu must be positive")
    if domain.kind == BALL:
        st = _Stencil(grid, spec, t=0.0)
        f_fn = _as_spatial_fn(f, grid.d)
        fvec = f_fn(st.points_int)
        A = sp.identity(st.n_int, format="csr") * mu - st.W
        lu = _factorize(A)
        u = _check_finite(lu.solve(fvec), "resolvent solve")
        scale = max(1.0, float(np.abs(fvec).max()))
        residual = float(np.abs(A.dot(u) - fvec).max()) / scale
        values = _empty_values(grid)
        flat = values.ravel()
        flat[st.flat_int] = u
        flat[st.flat_bdry] = 0.0
        gf = GridFunction(grid=grid, values=flat.reshape(grid.spatial_shape))
        return gf, SolveReport(residual_norm=residual, iterations=1,
                               monotone_scheme=st.monotone)
    # cylinder: march (mu + 1/k) u^m - W u^m = f^m + u^{m+1}/k
    if grid.taxis is None:
        raise ValidationError("cylinder resolvent needs a space-time grid")
    k = grid.k
    taxis = grid.taxis
    n_lev = len(taxis)
    f_fn = _as_spacetime_fn(f)
    st = _Stencil(grid, spec, t=taxis[-1])
    eye = sp.identity(st.n_int, format="csr")
    lu = None
    if not spec.time_dependent:
        lu = _factorize(eye * (mu + 1.0 / k) - st.W)
    values = np.full((n_lev,) + grid.spatial_shape, np.nan)
    flat_T = values[-1].ravel()
    flat_T[st.flat_int] = 0.0
    flat_T[st.flat_bdry] = 0.0
    values[-1] = flat_T.reshape(grid.spatial_shape)
    u_next = np.zeros(st.n_int)
    worst_res = 0.0
    monotone = st.monotone
    for m in range(n_lev - 2, -1, -1):
        t = taxis[m]
        if spec.time_dependent:
            st = _Stencil(grid, spec, t=t)
            monotone = monotone and st.monotone
            lu = _factorize(eye * (mu + 1.0 / k) - st.W)
        fvec = f_fn(t, st.points_int)
        b_sys = fvec + u_next / k
        u = _check_finite(lu.solve(b_sys), "resolvent step")
        scale = max(1.0, float(np.abs(b_sys).max()))
        worst_res = max(worst_res, float(np.abs(
            (eye * (mu + 1.0 / k) - st.W).dot(u) - b_sys).max()) / scale)
        flat = values[m].ravel()
        flat[st.flat_int] = u
        flat[st.flat_bdry] = 0.0
        values[m] = flat.reshape(grid.spatial_shape)
        u_next = u
    gf = GridFunction(grid=grid, values=values)
    return gf, SolveReport(residual_norm=worst_res, iterations=n_lev - 1,
                           monotone_scheme=monotone)


class ResolventOperator:
    """A factorized (mu - L) on a ball grid, reusable across right-hand sides."""

    def __init__(self, spec: OperatorSpec, mu: float, grid: GridSpec):
        if grid.domain.kind != BALL:
            raise ValidationError("ResolventOperator expects a ball grid")
        if not mu > 0:
            raise ValidationError("mu must be positive")
        self.grid = grid
        self.mu = mu
        self.st = _Stencil(grid, spec, t=0.0)
        self.A = sp.identity(self.st.n_int, format="csr") * mu - self.st.W
        self.lu = _factorize(self.A)
        self.monotone = self.st.monotone

    def apply(self, f) -> GridFunction:
        fvec = _as_spatial_fn(f, self.grid.d)(self.st.points_int)
        u = _check_finite(self.lu.solve(fvec), "resolvent solve")
        values = _empty_values(self.grid)
        flat = values.ravel()
        flat[self.st.flat_int] = u
        flat[self.st.flat_bdry] = 0.0
        return GridFunction(grid=self.grid,
                            values=flat.reshape(self.grid.spatial_shape))


# ---------------------------------------------------------------------------
# discrete derivatives


def _shifted(vals, off, fill=np.nan):
    """Lattice array shifted by the integer offset, NaN-padded."""
    out = np.full_like(vals, fill)
    src = [slice(None)] * vals.ndim
    dst = [slice(None)] * vals.ndim
    for ax, s in enumerate(off):
        if s > 0:
            src[ax] = slice(s, None)
            dst[ax] = slice(None, -s)
        elif s < 0:
            src[ax] = slice(None, s)
            dst[ax] = slice(-s, None)
    out[tuple(dst)] = vals[tuple(src)]
    return out


def _axis_offset(ndim, axis, s):
    off = [0] * ndim
    off[axis] = s
    return tuple(off)


def _d1(vals, h, axis):
    """First derivative along ``axis``: centred, else one-sided second order.

    Returns (derivative, centred_mask); NaN where no stencil fits.
    """
    nd = vals.ndim
    vp = _shifted(vals, _axis_offset(nd, axis, 1))
    vm = _shifted(vals, _axis_offset(nd, axis, -1))
    vpp = _shifted(vals, _axis_offset(nd, axis, 2))
    vmm = _shifted(vals, _axis_offset(nd, axis, -2))
    ok0 = np.isfinite(vals)
    cen = ok0 & np.isfinite(vp) & np.isfinite(vm)
    fwd = ok0 & np.isfinite(vp) & np.isfinite(vpp) & ~cen
    bwd = ok0 & np.isfinite(vm) & np.isfinite(vmm) & ~cen & ~fwd
    out = np.full_like(vals, np.nan)
    out[cen] = (vp[cen] - vm[cen]) / (2 * h)
    out[fwd] = (-3 * vals[fwd] + 4 * vp[fwd] - vpp[fwd]) / (2 * h)
    out[bwd] = (3 * vals[bwd] - 4 * vm[bwd] + vmm[bwd]) / (2 * h)
    return out, cen


def _d2(vals, h, axis):
    """Second derivative along ``axis``: centred, else shifted 3-point."""
    nd = vals.ndim
    vp = _shifted(vals, _axis_offset(nd, axis, 1))
    vm = _shifted(vals, _axis_offset(nd, axis, -1))
    vpp = _shifted(vals, _axis_offset(nd, axis, 2))
    vmm = _shifted(vals, _axis_offset(nd, axis, -2))
    ok0 = np.isfinite(vals)
    cen = ok0 & np.isfinite(vp) & np.isfinite(vm)
    fwd = ok0 & np.isfinite(vp) & np.isfinite(vpp) & ~cen
    bwd = ok0 & np.isfinite(vm) & np.isfinite(vmm) & ~cen & ~fwd
    out = np.full_like(vals, np.nan)
    out[cen] = (vp[cen] - 2 * vals[cen] + vm[cen]) / h ** 2
    out[fwd] = (vals[fwd] - 2 * vp[fwd] + vpp[fwd]) / h ** 2
    out[bwd] = (vals[bwd] - 2 * vm[bwd] + vmm[bwd]) / h ** 2
    return out, cen


@dataclass
class DerivativeFields:
    """Discrete gradient and Hessian of a grid function.

    ``du`` has a trailing axis of length d; ``d2u`` a trailing (d, d).
    ``ut`` is the time derivative for space-time fields (else None).
    ``centered`` marks nodes where every spatial stencil was centred.
    """

    du: np.ndarray
    d2u: np.ndarray
    ut: np.ndarray | None
    centered: np.ndarray

    def grad_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.du ** 2, axis=-1))

    def hessian_frobenius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.d2u ** 2, axis=(-2, -1)))


def discrete_derivatives(u: GridFunction) -> DerivativeFields:
    """Centred second-order differences, one-sided at boundary-adjacent nodes.

    Cross derivatives are compositions of first-difference operators (exact
    on bilinear functions).
    """
    grid = u.grid
    d = grid.d
    vals = u.values
    has_t = grid.taxis is not None
    ax0 = 1 if has_t else 0
    for ax in grid.axes:
        if len(ax) < 3:
            raise ValidationError("need at least 3 nodes per axis")
    du = np.full(vals.shape + (d,), np.nan)
    d2u = np.full(vals.shape + (d, d), np.nan)
    centered = np.isfinite(vals)
    firsts = []
    for i in range(d):
        g, cen = _d1(vals, grid.h, ax0 + i)
        du[..., i] = g
        firsts.append(g)
        centered &= cen
        s, cen2 = _d2(vals, grid.h, ax0 + i)
        d2u[..., i, i] = s
        centered &= cen2
    for i in range(d):
        for j in range(i + 1, d):
            cross, cenc = _d1(firsts[i], grid.h, ax0 + j)
            d2u[..., i, j] = cross
            d2u[..., j, i] = cross
            centered &= cenc
    ut = None
    if has_t:
        ut, cent = _d1(vals, grid.k, 0)
        centered &= cent
    return DerivativeFields(du=du, d2u=d2u, ut=ut, centered=centered)


def apply_operator(spec: OperatorSpec, u: GridFunction) -> np.ndarray:
    """L u evaluated from discrete derivative fields (estimator form).

    Includes the time derivative for space-time fields.  NaN where
    derivatives are undefined.
    """
    grid = u.grid
    der = discrete_derivatives(u)
    pts = grid.points()
    nsp = len(pts)

    def level_lu(t, vals_slab, du, d2u):
        A = spec.coeffs.eval_a(t, pts)
        b = spec.coeffs.eval_b(t, pts)
        c = spec.coeffs.eval_c(t, pts)
        lu = np.einsum("nij,nij->n", A, d2u.reshape(nsp, grid.d, grid.d))
        lu += np.einsum("ni,ni->n", b, du.reshape(nsp, grid.d))
        lu -= c * vals_slab.ravel()
        return lu.reshape(grid.spatial_shape)

    if grid.taxis is None:
        return level_lu(0.0, u.values, der.du, der.d2u)
    out = np.full(u.values.shape, np.nan)
    for m, t in enumerate(grid.taxis):
        out[m] = level_lu(t, u.values[m], der.du[m], der.d2u[m]) + der.ut[m]
    return out
