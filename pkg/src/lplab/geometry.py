"""Domains, tensor grids, node classification, and cell quadrature weights.

Domains are open balls ``B_r`` (d = 1 or 2) and space-time cylinders
``(0, rho) x B_r``, both optionally shifted.  Grids are uniform tensor
lattices that cover the domain closure; the discrete boundary is realized by
nearest-node snapping: a lattice node is *interior* when it lies strictly
inside the domain and *boundary* when it is not interior but is a stencil
neighbour (8-neighbourhood in 2-D) of an interior node.

Quadrature weights are node-centred cells clipped to the domain; for disks
the clipped cell area is computed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

BALL = "ball"
CYLINDER = "cylinder"


@dataclass(frozen=True)
class Domain:
    """An open ball or an open space-time cylinder.

    For balls ``center`` is the spatial centre.  For cylinders ``center``
    is the space-time corner ``(t0, x0)``: the cylinder occupies
    ``(t0, t0 + rho) x (B_r + x0)``.
    """

    kind: str
    r: float
    d: int
    rho: float | None = None
    center: tuple = ()

    def __post_init__(self):
        if self.kind not in (BALL, CYLINDER):
            raise ValidationError(f"unknown domain kind {self.kind!r}")
        if not self.r > 0:
            raise ValidationError("radius must be positive")
        if self.d not in (1, 2):
            raise ValidationError("only d = 1 and d = 2 are supported")
        if self.kind == CYLINDER:
            if self.rho is None or not self.rho > 0:
                raise ValidationError("cylinder height must be positive")
        center = tuple(float(v) for v in self.center) if self.center else ()
        expect = self.d + (1 if self.kind == CYLINDER else 0)
        if not center:
            center = (0.0,) * expect
        if len(center) != expect:
            raise ValidationError(
                f"center must have {expect} components, got {len(center)}")
        object.__setattr__(self, "center", center)

    # -- geometry helpers -------------------------------------------------
    @property
    def x_center(self) -> np.ndarray:
        """Spatial centre of the ball part."""
        if self.kind == BALL:
            return np.asarray(self.center)
        return np.asarray(self.center[1:])

    @property
    def t0(self) -> float:
        if self.kind != CYLINDER:
            raise ValidationError("t0 only defined for cylinders")
        return self.center[0]

    @property
    def t1(self) -> float:
        return self.t0 + self.rho

    def contains_x(self, x) -> np.ndarray:
        """Strict spatial membership |x - x0| < r.  ``x`` is (..., d)."""
        x = np.asarray(x, dtype=float)
        dx = x - self.x_center
        return np.sum(dx * dx, axis=-1) < self.r ** 2

    def contains(self, t, x=None):
        """Membership of a space-time point (cylinders) or a point (balls)."""
        if self.kind == BALL:
            if x is not None:
                raise ValidationError("ball membership takes a single point")
            return bool(self.contains_x(np.atleast_1d(t)))
        inside_t = (self.t0 < t) & (t < self.t1)
        return bool(inside_t and self.contains_x(np.atleast_1d(x)))


def make_domain(kind, r, rho=None, shift=None, d=None):
    """Construct a domain; dimensions are inferred from ``shift`` if not given.

    ``shift`` is the ball centre, or the space-time corner for cylinders.
    """
    if d is None:
        if shift is None:
            raise ValidationError("give either d or a shift to fix the dimension")
        n = len(shift)
        d = n - 1 if kind == CYLINDER else n
    center = tuple(shift) if shift is not None else ()
    return Domain(kind=kind, r=float(r), d=int(d),
                  rho=None if rho is None else float(rho), center=center)


def ball(r, center=None, d=None):
    if d is None:
        d = len(center) if center is not None else 1
    return make_domain(BALL, r, shift=center, d=d)


def cylinder(rho, r, corner=None, d=1):
    """C_{rho,r} shifted by ``corner`` = (t0, x0...)."""
    if corner is None:
        corner = (0.0,) * (d + 1)
    return make_domain(CYLINDER, r, rho=rho, shift=corner, d=d)


def parabolic_cylinder(r, corner=None, d=1):
    """The cylinder with height r^2 (height tied to the parabolic scaling)."""
    return cylinder(r * r, r, corner=corner, d=d)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor lattice covering a domain closure.

    ``axes`` are the spatial coordinate arrays (one per spatial dimension);
    ``taxis`` is the time level array for cylinders (None for balls).
    ``d1`` is the driving-noise dimension used by the SDE module.
    """

    domain: Domain
    axes: tuple
    h: float
    taxis: np.ndarray | None = None
    k: float | None = None
    d1: int | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def shape(self) -> tuple:
        """Lattice shape, time axis first for cylinders."""
        sp = tuple(len(ax) for ax in self.axes)
        if self.taxis is None:
            return sp
        return (len(self.taxis),) + sp

    @property
    def spatial_shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def n_levels(self) -> int:
        return 0 if self.taxis is None else len(self.taxis)

    @classmethod
    def cover(cls, domain: Domain, n: int, n_t: int | None = None, d1=None):
        """Cover ``domain`` with n cells across the spatial diameter.

        The lattice extends one step beyond the closure on each side so that
        every snapped boundary node exists.  For cylinders ``n_t`` time steps
        span the height (default: chosen so k is about h^2, capped at 4096).
        """
        if n < 4:
            raise ValidationError("need at least 4 cells across the diameter")
        h = 2.0 * domain.r / n
        c = domain.x_center
        axes = tuple(c[i] - domain.r - h + h * np.arange(n + 3)
                     for i in range(domain.d))
        taxis, k = None, None
        if domain.kind == CYLINDER:
            if n_t is None:
                n_t = min(4096, max(4, int(round(domain.rho / h ** 2))))
            if n_t < 1:
                raise ValidationError("need at least one time step")
            k = domain.rho / n_t
            taxis = domain.t0 + k * np.arange(n_t + 1)
        return cls(domain=domain, axes=axes, h=h, taxis=taxis, k=k,
                   d1=d1 if d1 is not None else domain.d)

    # -- node coordinates -------------------------------------------------
    def meshgrid(self):
        """Spatial coordinate arrays, lattice-shaped ('ij' indexing)."""
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self) -> np.ndarray:
        """All spatial lattice points, shape (n_nodes, d)."""
        key = "points"
        if key not in self._cache:
            mesh = self.meshgrid()
            self._cache[key] = np.stack([m.ravel() for m in mesh], axis=-1)
        return self._cache[key]

    # -- classification ---------------------------------------------------
    def interior_mask(self) -> np.ndarray:
        """Spatial lattice mask of strictly interior nodes."""
        key = "interior"
        if key not in self._cache:
            pts = self.points()
            self._cache[key] = self.domain.contains_x(pts).reshape(self.spatial_shape)
        return self._cache[key]

    def boundary_mask(self) -> np.ndarray:
        """Non-interior nodes adjacent (incl. diagonals) to an interior node."""
        key = "boundary"
        if key not in self._cache:
            interior = self.interior_mask()
            dil = _dilate(interior)
            self._cache[key] = dil & ~interior
        return self._cache[key]

    def valued_mask(self) -> np.ndarray:
        return self.interior_mask() | self.boundary_mask()

    def snapped_boundary_points(self) -> np.ndarray:
        return self.points()[self.boundary_mask().ravel()]


def _dilate(mask: np.ndarray) -> np.ndarray:
    """Dilation by one step in every lattice direction (diagonals included)."""
    out = mask.copy()
    if mask.ndim == 1:
        out[1:] |= mask[:-1]
        out[:-1] |= mask[1:]
        return out
    for si in (-1, 0, 1):
        for sj in (-1, 0, 1):
            if si == 0 and sj == 0:
                continue
            src = mask[max(si, 0) or None:min(si, 0) or None,
                       max(sj, 0) or None:min(sj, 0) or None]
            out[max(-si, 0) or None:min(-si, 0) or None,
                max(-sj, 0) or None:min(-sj, 0) or None] |= src
    return out


# boundary tags
LATERAL = "lateral"
TERMINAL = "terminal"
INITIAL = "initial"


@dataclass(frozen=True)
class BoundaryTags:
    """Tagged boundary node sets for a grid over a domain.

    ``lateral``/``terminal``/``initial`` are full-lattice masks (time axis
    first for cylinders).  ``reduced`` is lateral + terminal: the set where
    Dirichlet data determines a backward parabolic solution.  For balls only
    ``lateral`` (the snapped sphere) is populated and equals ``reduced``.
    """

    lateral: np.ndarray
    terminal: np.ndarray | None
    initial: np.ndarray | None

    @property
    def reduced(self) -> np.ndarray:
        if self.terminal is None:
            return self.lateral
        return self.lateral | self.terminal

    def tag_of(self, idx) -> str | None:
        if self.terminal is not None and self.terminal[idx]:
            return TERMINAL
        if self.lateral[idx]:
            return LATERAL
        if self.initial is not None and self.initial[idx]:
            return INITIAL
        return None


def classify_boundary(domain: Domain, grid: GridSpec) -> BoundaryTags:
    """Tag boundary nodes: lateral, terminal, or initial.

    The initial slab is not part of the reduced boundary.  Edge nodes on
    both the terminal slab and the lateral surface are tagged terminal
    (either tag would carry the same Dirichlet data; the choice is fixed for
    determinism).
    """
    if grid.domain != domain:
        raise ValidationError("grid was built for a different domain")
    sp_boundary = grid.boundary_mask()
    if domain.kind == BALL:
        return BoundaryTags(lateral=sp_boundary, terminal=None, initial=None)
    n_lev = grid.n_levels
    lateral = np.zeros((n_lev,) + grid.spatial_shape, dtype=bool)
    terminal = np.zeros_like(lateral)
    initial = np.zeros_like(lateral)
    lateral[:, sp_boundary] = True
    terminal[-1][grid.valued_mask()] = True
    lateral[-1] = False                      # terminal wins on the edge
    initial[0][grid.interior_mask()] = True
    return BoundaryTags(lateral=lateral, terminal=terminal, initial=initial)


# ---------------------------------------------------------------------------
# quadrature weights

def _circle_F(x, R):
    """Antiderivative of sqrt(R^2 - t^2) measured from -R."""
    x = np.clip(x, -R, R)
    s = np.sqrt(np.maximum(R * R - x * x, 0.0))
    return 0.5 * (x * s + R * R * (np.arcsin(np.clip(x / R, -1, 1)) + 0.5 * math.pi))


def _corner_area(X, Y, R):
    """Area of {x <= X, y <= Y} intersected with the disk of radius R at 0."""
    if X <= -R or Y <= -R:
        return 0.0
    X = min(X, R)
    if Y >= R:
        return 2.0 * float(_circle_F(X, R))
    xY = math.sqrt(max(R * R - Y * Y, 0.0))
    area = 0.0
    if Y >= 0.0:
        b1 = min(X, -xY)
        area += 2.0 * float(_circle_F(b1, R))
        if X > -xY:
            b2 = min(X, xY)
            area += Y * (b2 + xY) + float(_circle_F(b2, R) - _circle_F(-xY, R))
            if X > xY:
                area += 2.0 * float(_circle_F(X, R) - _circle_F(xY, R))
    else:
        if X > -xY:
            b2 = min(X, xY)
            area += Y * (b2 + xY) + float(_circle_F(b2, R) - _circle_F(-xY, R))
    return max(area, 0.0)


def disk_rect_area(cx, cy, R, x0, x1, y0, y1):
    """Exact area of [x0,x1] x [y0,y1] intersected with the disk ((cx,cy), R)."""
    a = (_corner_area(x1 - cx, y1 - cy, R) - _corner_area(x0 - cx, y1 - cy, R)
         - _corner_area(x1 - cx, y0 - cy, R) + _corner_area(x0 - cx, y0 - cy, R))
    return max(a, 0.0)


def interval_overlap(lo, hi, a, b):
    """Length of [lo,hi] ∩ [a,b], vectorized."""
    return np.maximum(0.0, np.minimum(hi, b) - np.maximum(lo, a))


def spatial_cell_weights(region: Domain, grid: GridSpec) -> np.ndarray:
    """Node-centred cell measures clipped to the *spatial* ball of ``region``.

    ``region`` may differ from the grid's own domain (e.g. an inner ball).
    Returns a spatial-lattice array of cell measures.
    """
    h = grid.h
    c = region.x_center
    r = region.r
    if grid.d == 1:
        xs = grid.axes[0]
        return interval_overlap(xs - h / 2, xs + h / 2, c[0] - r, c[0] + r)
    xs, ys = grid.axes
    w = np.zeros((len(xs), len(ys)))
    # cells fully inside: node within r - h*sqrt(1/2) of the centre
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    dist = np.hypot(X - c[0], Y - c[1])
    full = dist <= r - h
    w[full] = h * h
    rim = (~full) & (dist < r + h)
    for i, j in zip(*np.nonzero(rim)):
        w[i, j] = disk_rect_area(c[0], c[1], r,
                                 xs[i] - h / 2, xs[i] + h / 2,
                                 ys[j] - h / 2, ys[j] + h / 2)
    return w


def cell_weights(region: Domain, grid: GridSpec) -> np.ndarray:
    """Cell measures for integration of lattice functions over ``region``.

    For cylinders the result carries the time axis first and the time cells
    are clipped to the region's (t0, t1).
    """
    if region.kind == BALL:
        if grid.taxis is not None:
            raise ValidationError("spatial region but space-time grid; "
                                  "integrate a single slab instead")
        return spatial_cell_weights(region, grid)
    if grid.taxis is None:
        raise ValidationError("cylinder region needs a space-time grid")
    sp = spatial_cell_weights(ball(region.r, center=tuple(region.x_center),
                                   d=region.d), grid)
    k = grid.k
    tw = interval_overlap(grid.taxis - k / 2, grid.taxis + k / 2,
                          region.t0, region.t1)
    return tw.reshape((-1,) + (1,) * grid.d) * sp[None, ...]
