"""Coefficient fields and operator-class validation.

An operator is ``L = [dt +] a^{ij} D_ij + b^i D_i - c`` acting on functions
of (t, x) or x.  Coefficient callables are vectorized: they take a scalar
time ``t`` and a point array ``X`` of shape (n, d) and return arrays of
shape (n, d, d), (n, d) and (n,) for a, b, c; time-independent fields ignore
``t``.  Measurable (discontinuous) coefficients are expected and are sampled
pointwise, never averaged.
"""

from __future__ import annotations

import csv as _csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# operator class kinds
CLASS_LOWER_ORDER = "lower_order"   # |b| + c <= K, c >= 0 (with a in S_delta)
CLASS_TRACE = "trace"               # tr a (+1 if time-dependent) <= K


@dataclass(frozen=True)
class CoefficientField:
    """Matrix/vector/scalar coefficient functions of (t, x)."""

    a: object
    b: object
    c: object
    d: int
    time_dependent: bool = False
    name: str = ""

    def eval_a(self, t, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        A = np.asarray(self.a(t, X), dtype=float)
        if A.shape != (len(X), self.d, self.d):
            raise ValidationError(f"a must return (n,{self.d},{self.d})")
        return A

    def eval_b(self, t, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = np.asarray(self.b(t, X), dtype=float)
        if B.shape != (len(X), self.d):
            raise ValidationError(f"b must return (n,{self.d})")
        return B

    def eval_c(self, t, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        C = np.asarray(self.c(t, X), dtype=float)
        if C.shape != (len(X),):
            raise ValidationError("c must return (n,)")
        return C


@dataclass(frozen=True)
class OperatorSpec:
    """A coefficient field together with its claimed operator class.

    ``delta`` is the ellipticity constant (eigenvalues of a within
    [delta, 1/delta]); ``K`` bounds the lower-order terms per ``class_kind``.
    """

    coeffs: CoefficientField
    delta: float
    K: float
    class_kind: str = CLASS_LOWER_ORDER

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValidationError("delta must lie in (0, 1]")
        if self.K < 0:
            raise ValidationError("K must be nonnegative")
        if self.class_kind not in (CLASS_LOWER_ORDER, CLASS_TRACE):
            raise ValidationError(f"unknown class kind {self.class_kind!r}")

    @property
    def d(self) -> int:
        return self.coeffs.d

    @property
    def time_dependent(self) -> bool:
        return self.coeffs.time_dependent


# ---------------------------------------------------------------------------
# pointwise checks

def check_s_delta(matrix, delta, tol=1e-12) -> bool:
    """True iff all eigenvalues of the symmetric matrix lie in [delta, 1/delta]."""
    if not 0 < delta <= 1:
        raise ValidationError("delta must lie in (0, 1]")
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("expected a square matrix")
    if not np.allclose(M, M.T, atol=1e-10, rtol=1e-10):
        raise ValidationError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(M)
    return bool(ev.min() >= delta - tol and ev.max() <= 1.0 / delta + tol)


@dataclass(frozen=True)
class ValidationReport:
    """Worst-case sampled constants and the pass/fail verdict for a claim."""

    min_eig: float
    max_eig: float
    max_drift_plus_c: float
    min_c: float
    max_trace: float
    passes: bool
    class_kind: str
    notes: str = ""

    def as_dict(self):
        return {
            "min_eig": self.min_eig, "max_eig": self.max_eig,
            "max_drift_plus_c": self.max_drift_plus_c, "min_c": self.min_c,
            "max_trace": self.max_trace, "passes": self.passes,
            "class_kind": self.class_kind, "notes": self.notes,
        }


def validate_operator(spec: OperatorSpec, sample_points, times=(0.0,),
                      tol=1e-9) -> ValidationReport:
    """Sample the coefficients and test the claimed operator class.

    ``sample_points`` is (n, d); for time-dependent coefficients every listed
    time is sampled.  The report is always produced; ``passes`` carries the
    verdict.
    """
    X = np.atleast_2d(np.asarray(sample_points, dtype=float))
    tlist = list(times) if spec.time_dependent else [times[0]]
    min_eig, max_eig = np.inf, -np.inf
    max_bc, min_c, max_tr = -np.inf, np.inf, -np.inf
    notes = []
    for t in tlist:
        A = spec.coeffs.eval_a(t, X)
        if not np.allclose(A, np.swapaxes(A, -1, -2), atol=1e-10):
            notes.append("a not symmetric at some sample")
        ev = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
        min_eig = min(min_eig, float(ev.min()))
        max_eig = max(max_eig, float(ev.max()))
        b = spec.coeffs.eval_b(t, X)
        c = spec.coeffs.eval_c(t, X)
        max_bc = max(max_bc, float((np.linalg.norm(b, axis=-1) + c).max()))
        min_c = min(min_c, float(c.min()))
        max_tr = max(max_tr, float(np.trace(A, axis1=-2, axis2=-1).max()))
    ok = min_eig >= spec.delta - tol
    if min_c < -tol:
        ok = False
        notes.append("c takes negative values")
    if spec.class_kind == CLASS_LOWER_ORDER:
        if max_eig > 1.0 / spec.delta + tol:
            ok = False
            notes.append("an eigenvalue of a exceeds 1/delta")
        if max_bc > spec.K + tol:
            ok = False
            notes.append("|b| + c exceeds K")
    else:
        # the trace class needs only the lower ellipticity bound plus the
        # trace budget (with the +1 slot for the time derivative)
        extra = 1.0 if spec.time_dependent else 0.0
        if max_tr + extra > spec.K + tol:
            ok = False
            notes.append("trace bound exceeds K")
    if any(n.startswith("a not symmetric") for n in notes):
        ok = False
    return ValidationReport(min_eig=min_eig, max_eig=max_eig,
                            max_drift_plus_c=max_bc, min_c=min_c,
                            max_trace=max_tr, passes=bool(ok),
                            class_kind=spec.class_kind,
                            notes="; ".join(notes))


def sample_points_with_midpoints(grid) -> np.ndarray:
    """Grid nodes plus cell midpoints (where pointwise conditions are checked)."""
    pts = [grid.points()]
    mids = tuple(0.5 * (ax[1:] + ax[:-1]) for ax in grid.axes)
    mesh = np.meshgrid(*mids, indexing="ij")
    pts.append(np.stack([m.ravel() for m in mesh], axis=-1))
    return np.concatenate(pts, axis=0)


# ---------------------------------------------------------------------------
# named coefficient families
#
# Coefficient callables are small classes (not closures) so that operator
# specs pickle cleanly into worker processes.


class ConstMatrix:
    def __init__(self, mat):
        self.mat = np.atleast_2d(np.asarray(mat, dtype=float))

    def __call__(self, t, X):
        return np.broadcast_to(self.mat, (len(X),) + self.mat.shape).copy()


class ConstVector:
    def __init__(self, vec):
        self.vec = np.atleast_1d(np.asarray(vec, dtype=float))

    def __call__(self, t, X):
        return np.broadcast_to(self.vec, (len(X),) + self.vec.shape).copy()


class ConstScalar:
    def __init__(self, val):
        self.val = float(val)

    def __call__(self, t, X):
        return np.full(len(X), self.val)


def laplacian(d) -> CoefficientField:
    """a = I, b = 0, c = 0."""
    return CoefficientField(a=ConstMatrix(np.eye(d)), b=ConstVector(np.zeros(d)),
                            c=ConstScalar(0.0), d=d, name="laplacian")


def constant_coefficients(a_mat, b_vec=None, c_val=0.0) -> CoefficientField:
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    d = a_mat.shape[0]
    b_vec = np.zeros(d) if b_vec is None else np.asarray(b_vec, dtype=float)
    return CoefficientField(a=ConstMatrix(a_mat), b=ConstVector(b_vec),
                            c=ConstScalar(c_val), d=d, name="constant")


def radial_degenerate_matrix(X, eps) -> np.ndarray:
    """I - eps * xhat xhat^T at each row of X (identity at the origin).

    Eigenvalues are {1 - eps, 1} away from the origin: the radial direction
    is damped, the tangential one is not.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    r2 = np.sum(X * X, axis=1)
    out = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    nz = r2 > 0
    if np.any(nz):
        xn = X[nz] / np.sqrt(r2[nz])[:, None]
        out[nz] -= eps * xn[:, :, None] * xn[:, None, :]
    return out


class RadialDegenerateA:
    def __init__(self, eps, shift):
        self.eps = float(eps)
        self.shift = np.asarray(shift, dtype=float)

    def __call__(self, t, X):
        return radial_degenerate_matrix(np.atleast_2d(X) - self.shift,
                                        self.eps)


def radial_degenerate(eps, shift=(0.5, 0.0)) -> CoefficientField:
    """Degenerate-radial diffusion in d = 2 centred at ``shift``; b = c = 0.

    The radial eigenvalue is 1 - eps, so the field belongs to the ellipticity
    class with delta = 1 - eps.
    """
    if not 0 <= eps < 1:
        raise ValidationError("eps must lie in [0, 1)")
    return CoefficientField(a=RadialDegenerateA(eps, shift),
                            b=ConstVector(np.zeros(2)), c=ConstScalar(0.0),
                            d=2, name=f"radial-degenerate(eps={eps})")


class RadialDegenerateSigma:
    """Closed-form sqrt(2 a) for the radial-degenerate field.

    sqrt(I - eps xhat xhat^T) = I - (1 - sqrt(1-eps)) xhat xhat^T, so the
    diffusion coefficient is sqrt(2) times that rank-one correction; much
    cheaper than the generic matrix square root in the path loop.
    """

    def __init__(self, eps, shift=(0.5, 0.0)):
        if not 0 <= eps < 1:
            raise ValidationError("eps must lie in [0, 1)")
        self.eps = float(eps)
        self.shift = np.asarray(shift, dtype=float)
        self.croot = 1.0 - math.sqrt(1.0 - eps)

    def __call__(self, t, X):
        X = np.atleast_2d(X) - self.shift
        n = len(X)
        r2 = np.sum(X * X, axis=1)
        out = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        nz = r2 > 0
        if np.any(nz):
            xn = X[nz] / np.sqrt(r2[nz])[:, None]
            out[nz] -= self.croot * xn[:, :, None] * xn[:, None, :]
        return math.sqrt(2.0) * out

    def apply(self, t, X, Z):
        """sigma(x) Z without materializing the matrices (path-loop hot spot)."""
        X = np.atleast_2d(X) - self.shift
        Z = np.atleast_2d(Z)
        r2 = np.sum(X * X, axis=1)
        safe = np.where(r2 > 0, r2, 1.0)
        xn = X / np.sqrt(safe)[:, None]
        xn[r2 == 0] = 0.0
        proj = np.sum(xn * Z, axis=1)[:, None] * xn
        return math.sqrt(2.0) * (Z - self.croot * proj)


def radial_degenerate_sigma(eps, shift=(0.5, 0.0)):
    return RadialDegenerateSigma(eps, shift)


class SignDriftB:
    def __init__(self, M):
        self.M = float(M)

    def __call__(self, t, X):
        return -self.M * np.sign(np.atleast_2d(X)[:, :1])


def sign_drift(M) -> CoefficientField:
    """d = 1: a = 1, b = -M sign(x), c = 0 (drift pushing toward the origin)."""
    return CoefficientField(a=ConstMatrix(np.eye(1)), b=SignDriftB(M),
                            c=ConstScalar(0.0), d=1,
                            name=f"sign-drift(M={M})")


class CheckerboardA:
    def __init__(self, delta, cell, d):
        self.delta = float(delta)
        self.cell = float(cell)
        self.d = int(d)

    def __call__(self, t, X):
        X = np.atleast_2d(X)
        parity = np.sum(np.floor(X / self.cell), axis=1).astype(np.int64) % 2
        val = np.where(parity == 0, self.delta, 1.0 / self.delta)
        return val[:, None, None] * np.eye(self.d)


def checkerboard(delta, cell=0.25, d=2) -> CoefficientField:
    """a alternates between delta*I and I/delta on a checkerboard of ``cell``."""
    if not 0 < delta <= 1:
        raise ValidationError("delta must lie in (0, 1]")
    return CoefficientField(a=CheckerboardA(delta, cell, d),
                            b=ConstVector(np.zeros(d)), c=ConstScalar(0.0),
                            d=d, name=f"checkerboard(delta={delta})")


def from_csv(path, d, time_dependent=False, name="") -> CoefficientField:
    """Tabulated coefficients: nearest-sample lookup.

    Column layout: the d (or 1+d, when time-dependent) coordinates, then the
    d*d entries of a row-major, then the d entries of b, then c.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header line
    if not rows:
        raise ValidationError(f"no data rows in {path}")
    table = np.asarray(rows)
    ncoord = d + (1 if time_dependent else 0)
    expected = ncoord + d * d + d + 1
    if table.shape[1] != expected:
        raise ValidationError(
            f"expected {expected} columns (coords, a row-major, b, c), "
            f"got {table.shape[1]}")
    coords = table[:, :ncoord]
    a_tab = table[:, ncoord:ncoord + d * d].reshape(-1, d, d)
    b_tab = table[:, ncoord + d * d:ncoord + d * d + d]
    c_tab = table[:, -1]
    lut = _NearestTable(coords, time_dependent)
    return CoefficientField(a=_TableLookup(lut, a_tab),
                            b=_TableLookup(lut, b_tab),
                            c=_TableLookup(lut, c_tab),
                            d=d, time_dependent=time_dependent,
                            name=name or f"csv:{path}")


class _NearestTable:
    def __init__(self, coords, time_dependent):
        from scipy.spatial import cKDTree
        self.tree = cKDTree(coords)
        self.time_dependent = time_dependent

    def query(self, t, X):
        X = np.atleast_2d(X)
        if self.time_dependent:
            q = np.concatenate([np.full((len(X), 1), float(t)), X], axis=1)
        else:
            q = X
        _, idx = self.tree.query(q)
        return idx


class _TableLookup:
    def __init__(self, lut, values):
        self.lut = lut
        self.values = values

    def __call__(self, t, X):
        return self.values[self.lut.query(t, X)]


# ---------------------------------------------------------------------------
# matrix square roots (for building diffusion coefficients sigma = sqrt(2a))

def spd_sqrt(A: np.ndarray) -> np.ndarray:
    """Symmetric square roots of a stack of SPD matrices, shape (n, d, d).

    Closed form for d <= 2; (d = 1: scalar sqrt; d = 2: (A + g I)/t with
    g = sqrt(det A), t = sqrt(tr A + 2 g)).
    """
    A = np.asarray(A, dtype=float)
    n, d, _ = A.shape
    if d == 1:
        return np.sqrt(A)
    if d == 2:
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        g = np.sqrt(np.maximum(det, 0.0))
        t = np.sqrt(A[:, 0, 0] + A[:, 1, 1] + 2.0 * g)
        out = A.copy()
        out[:, 0, 0] += g
        out[:, 1, 1] += g
        return out / t[:, None, None]
    raise ValidationError("spd_sqrt supports d <= 2")
