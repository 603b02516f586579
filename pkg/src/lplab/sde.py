"""Euler-Maruyama first-exit simulation and occupation functionals.

Reproducibility contract: path i draws its Gaussian increments from its own
counter-based stream keyed by (master seed, i), in fixed blocks, so the
ensemble is a pure function of the configuration: identical for any batch
split or worker count, and replayable.  Exit is recorded at the first grid
time at which (t, x) leaves the open domain (no bridge correction; the
O(sqrt(dt)) exit bias is controlled by choosing dt against the estimator's
stderr).  Occupation integrals are left-endpoint Riemann sums accumulated in
per-path step order; ensemble reductions use compensated summation, so they
are independent of reduction order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import BALL, CYLINDER, Domain

_BLOCK = 1024          # steps drawn per path per block (part of the stream layout)
_BATCH = 2048          # paths stepped together (constant-coefficient engine)
_BATCH_GENERAL = 16384  # wider batches amortize per-step overhead when
_BLOCK_GENERAL = 256    # coefficients vary (the stepper loops steps anyway)


def path_key(seed: int, index: int) -> np.ndarray:
    """Counter-based stream key of one path."""
    return np.array([np.uint64(seed), np.uint64(index)], dtype=np.uint64)


def path_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(counter=0, key=path_key(seed, index)))


@dataclass(frozen=True)
class SimConfig:
    """Diffusion, domain, step, path count and master seed for one ensemble.

    ``sigma`` is a constant (d, d1) array or a callable (t, X) -> (n, d, d1);
    ``b`` a constant (d,) array or a callable (t, X) -> (n, d).  ``start``
    (spatial) defaults to the ball centre / the cylinder's spatial centre;
    cylinder paths start at the cylinder's initial time.
    """

    sigma: object
    b: object
    domain: Domain
    dt: float
    n_paths: int
    seed: int
    start: tuple | None = None
    d1: int | None = None
    time_cap: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.n_paths < 1:
            raise ValidationError("need at least one path")
        d = self.domain.d
        if not callable(self.sigma):
            s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if s.shape[0] != d:
                raise ValidationError(f"sigma must have {d} rows")
            object.__setattr__(self, "sigma", s)
            if self.d1 is None:
                object.__setattr__(self, "d1", s.shape[1])
            elif self.d1 != s.shape[1]:
                raise ValidationError("d1 inconsistent with sigma")
        elif self.d1 is None:
            object.__setattr__(self, "d1", d)
        if self.d1 < d:
            raise ValidationError("driving dimension d1 must be >= d")
        if not callable(self.b) and self.b is not None:
            bv = np.atleast_1d(np.asarray(self.b, dtype=float))
            if bv.shape != (d,):
                raise ValidationError(f"b must have shape ({d},)")
            object.__setattr__(self, "b", bv)
        if self.start is not None:
            st = tuple(float(v) for v in self.start)
            if len(st) != d:
                raise ValidationError("start must be a spatial point")
            object.__setattr__(self, "start", st)

    @property
    def constant_coefficients(self) -> bool:
        return not callable(self.sigma) and not callable(self.b)

    def start_point(self) -> np.ndarray:
        if self.start is not None:
            return np.asarray(self.start, dtype=float)
        return self.domain.x_center.astype(float)

    def cap_time(self) -> float:
        if self.time_cap is not None:
            return self.time_cap
        if self.domain.kind == CYLINDER:
            return 10.0 * self.domain.rho
        # 10 * diameter^2 / delta with delta probed at the start point
        x0 = self.start_point()[None, :]
        if callable(self.sigma):
            s = np.asarray(self.sigma(0.0, x0))[0]
        else:
            s = self.sigma
        a = 0.5 * s @ s.T
        delta = float(np.linalg.eigvalsh(a).min())
        if delta <= 0:
            raise ValidationError("degenerate diffusion at the start point")
        return 10.0 * (2.0 * self.domain.r) ** 2 / delta


class OperatorSigma:
    """sigma = sqrt(2 a) (symmetric square root) of an operator's diffusion."""

    def __init__(self, spec):
        self.spec = spec

    def __call__(self, t, X):
        from .operators import spd_sqrt
        return spd_sqrt(2.0 * self.spec.coeffs.eval_a(t, np.atleast_2d(X)))


def sigma_from_operator(spec) -> OperatorSigma:
    return OperatorSigma(spec)


@dataclass
class PathEnsemble:
    """Per-path exit summaries plus the recipe to replay the paths."""

    config: SimConfig
    exit_steps: np.ndarray      # step index n with tau = n dt
    capped: np.ndarray          # paths stopped by the hard time cap
    x_final: np.ndarray         # position at tau (first outside point)

    @property
    def exit_times(self) -> np.ndarray:
        return self.exit_steps * self.config.dt

    @property
    def n_paths(self) -> int:
        return len(self.exit_steps)

    @property
    def n_capped(self) -> int:
        return int(self.capped.sum())

    def path_keys(self):
        return [path_key(self.config.seed, i) for i in range(self.n_paths)]

    def to_csv(self, path):
        import csv as _csv
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["path", "exit_step", "exit_time", "capped"]
                       + [f"x{i+1}" for i in range(self.config.domain.d)])
            for i in range(self.n_paths):
                w.writerow([i, int(self.exit_steps[i]),
                            f"{self.exit_times[i]:.12g}",
                            int(self.capped[i])]
                           + [f"{v:.12g}" for v in self.x_final[i]])


@dataclass
class OccupationEstimate:
    """Ensemble mean of a path functional with its standard error."""

    mean: float
    stderr: float
    n: int

    def to_json(self, path=None):
        payload = json.dumps({"mean": self.mean, "stderr": self.stderr,
                              "n": self.n}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload


def _estimate(values: np.ndarray) -> OccupationEstimate:
    n = len(values)
    mean = math.fsum(values) / n
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = math.inf
    return OccupationEstimate(mean=float(mean), stderr=float(stderr), n=n)


# ---------------------------------------------------------------------------
# core drivers


def _normalize_fs(fs):
    out = []
    for item in fs:
        if isinstance(item, tuple):
            f, K = item
        else:
            f, K = item, 0.0
        if K < 0:
            raise ValidationError("discount rate must be nonnegative")
        out.append((f, float(K)))
    return out


def _run_range(config: SimConfig, lo: int, hi: int, fs) -> dict:
    """Simulate paths lo..hi-1; returns per-path exit data and occupations."""
    d = config.domain.d
    d1 = config.d1
    dt = config.dt
    sdt = math.sqrt(dt)
    dom = config.domain
    is_cyl = dom.kind == CYLINDER
    t0 = dom.t0 if is_cyl else 0.0
    center = dom.x_center
    r2 = dom.r ** 2
    x0 = config.start_point()
    if float(np.sum((x0 - center) ** 2)) >= r2:
        raise ValidationError("start point is outside the domain")
    cap = config.cap_time()
    n_cap = max(1, int(math.ceil(cap / dt)))
    if is_cyl:
        n_cap = min(n_cap, int(math.ceil(dom.rho / dt)))
    fs = _normalize_fs(fs)
    n_fs = len(fs)
    const = config.constant_coefficients
    if const:
        sig_c = np.asarray(config.sigma, dtype=float)
        b_c = (np.zeros(d) if config.b is None
               else np.asarray(config.b, dtype=float))

    n = hi - lo
    exit_steps = np.zeros(n, dtype=np.int64)
    capped = np.zeros(n, dtype=bool)
    x_final = np.zeros((n, d))
    occ = np.zeros((n, n_fs))

    batch = _BATCH if const else _BATCH_GENERAL
    blk = _BLOCK if const else _BLOCK_GENERAL
    for blo in range(lo, hi, batch):
        bhi = min(blo + batch, hi)
        m = bhi - blo
        gens = [path_generator(config.seed, i) for i in range(blo, bhi)]
        x = np.broadcast_to(x0, (m, d)).copy()
        occ_c = np.zeros((m, n_fs))
        exit_b = np.zeros(m, dtype=np.int64)
        capped_b = np.zeros(m, dtype=bool)
        alive = np.arange(m)
        offset = 0
        while alive.size:
            na = alive.size
            block = min(blk, n_cap - offset)
            draws = np.empty((na, block, d1))
            for k, idx in enumerate(alive):
                draws[k] = gens[idx].standard_normal((block, d1))
            if const:
                inc = draws @ (sig_c.T * sdt)
                if np.any(b_c):
                    inc += b_c * dt
                inc[:, 0, :] += x[alive]
                xs = np.cumsum(inc, axis=1)
                # left endpoints for steps offset..offset+block-1
                P = np.concatenate([x[alive][:, None, :], xs[:, :-1, :]],
                                   axis=1)
                out = np.einsum("nbi,nbi->nb", xs - center, xs - center) >= r2
                exited = out.any(axis=1)
                first = np.where(exited, out.argmax(axis=1), block - 1)
                if n_fs:
                    tgrid = t0 + dt * (offset + np.arange(block))
                    for fi, (f, K) in enumerate(fs):
                        fv = _eval_f(f, tgrid, P)
                        w = dt * (np.exp(-K * (tgrid - t0)) if K else 1.0)
                        contrib = fv * w
                        contrib[:, 0] += occ_c[alive, fi]
                        s = np.cumsum(contrib, axis=1)
                        occ_c[alive, fi] = s[np.arange(na), first]
                rows = np.arange(na)
                x[alive] = xs[rows, first]
                idx_exit = alive[exited]
                exit_b[idx_exit] = offset + first[exited] + 1
                alive = alive[~exited]
                offset += block
            else:
                rows = alive.copy()
                rows_k = np.arange(na)
                sigma_call = callable(config.sigma)
                sigma_apply = getattr(config.sigma, "apply", None)
                b_call = callable(config.b)
                if n_fs:
                    pos_buf = np.zeros((na, block, d))
                    exit_local = np.full(na, block, dtype=np.int64)
                for j in range(block):
                    if rows.size == 0:
                        break
                    tn = t0 + dt * (offset + j)
                    xp = x[rows]
                    if n_fs:
                        pos_buf[rows_k, j] = xp
                    zz = draws[rows_k, j, :]
                    if sigma_apply is not None:
                        inc = sigma_apply(tn, xp, zz) * sdt
                    elif sigma_call:
                        sig = np.asarray(config.sigma(tn, xp))
                        inc = np.einsum("nij,nj->ni", sig, zz) * sdt
                    else:
                        inc = zz @ (config.sigma.T * sdt)
                    if config.b is not None:
                        bv = (np.asarray(config.b(tn, xp)) if b_call
                              else config.b)
                        inc = inc + bv * dt
                    xn = xp + inc
                    x[rows] = xn
                    dxc = xn - center
                    out = np.einsum("ni,ni->n", dxc, dxc) >= r2
                    if out.any():
                        idx_exit = rows[out]
                        exit_b[idx_exit] = offset + j + 1
                        if n_fs:
                            exit_local[rows_k[out]] = j + 1
                        keep = ~out
                        rows = rows[keep]
                        rows_k = rows_k[keep]
                if n_fs:
                    jj = np.arange(block)
                    live_mask = jj[None, :] < exit_local[:, None]
                    tgrid = t0 + dt * (offset + jj)
                    for fi, (f, K) in enumerate(fs):
                        fv = _eval_f(f, tgrid, pos_buf)
                        w = dt * (np.exp(-K * (tgrid - t0)) if K else 1.0)
                        occ_c[alive, fi] += np.sum(fv * w * live_mask, axis=1)
                offset += block
                alive = rows
            if offset >= n_cap and alive.size:
                exit_b[alive] = n_cap
                if not is_cyl or n_cap * dt < dom.rho:
                    capped_b[alive] = True
                alive = np.arange(0)
        exit_steps[blo - lo:bhi - lo] = exit_b
        capped[blo - lo:bhi - lo] = capped_b
        x_final[blo - lo:bhi - lo] = x
        occ[blo - lo:bhi - lo] = occ_c
    return {"exit_steps": exit_steps, "capped": capped,
            "x_final": x_final, "occ": occ}


def _eval_f(f, tgrid, P):
    """Evaluate f on a (paths, block, d) position array, one time per column."""
    na, block, d = P.shape
    if getattr(f, "time_independent", False):
        flat = _eval_f_single(f, tgrid[0], P.reshape(-1, d))
        return flat.reshape(na, block)
    vals = np.empty((na, block))
    for j in range(block):
        vals[:, j] = _eval_f_single(f, tgrid[j], P[:, j, :])
    return vals


def _eval_f_single(f, t, X):
    v = np.asarray(f(t, X), dtype=float)
    if v.shape != (len(X),):
        v = np.broadcast_to(v, (len(X),)).astype(float)
    if v.size and float(v.min()) < -1e-15:
        raise ValidationError("occupation functionals must be nonnegative")
    return v


def _simulate(config: SimConfig, fs, workers: int = 1):
    n = config.n_paths
    if workers and workers > 1 and n >= 4 * workers:
        chunk = (n + workers - 1) // workers
        ranges = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_range_star,
                                  [(config, lo, hi, fs) for lo, hi in ranges]))
        out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    else:
        out = _run_range(config, 0, n, fs)
    ens = PathEnsemble(config=config, exit_steps=out["exit_steps"],
                       capped=out["capped"], x_final=out["x_final"])
    return ens, out["occ"]


def _run_range_star(args):
    return _run_range(*args)


# ---------------------------------------------------------------------------
# public operations


def simulate_paths(config: SimConfig, workers: int = 1) -> PathEnsemble:
    """Run the ensemble to first exit; deterministic given the config."""
    ens, _ = _simulate(config, fs=[], workers=workers)
    return ens


def simulate_with_functionals(config: SimConfig, fs, workers: int = 1):
    """One pass returning the ensemble plus occupation estimates for each f.

    ``fs`` entries are callables f(t, X) -> values >= 0, or tuples
    (f, discount_rate).
    """
    ens, occ = _simulate(config, fs=fs, workers=workers)
    return ens, [_estimate(occ[:, i]) for i in range(occ.shape[1])]


def occupation_functional(ensemble: PathEnsemble, f,
                          workers: int = 1) -> OccupationEstimate:
    """Left-endpoint Riemann sum of f along each path up to exit, averaged.

    Replays the ensemble's paths (they are a pure function of the config).
    """
    ens2, est = simulate_with_functionals(ensemble.config, [f], workers=workers)
    if not np.array_equal(ens2.exit_steps, ensemble.exit_steps):
        raise NumericalError("replay diverged from the stored ensemble")
    return est[0]


def discounted_occupation(ensemble: PathEnsemble, f, K: float,
                          workers: int = 1) -> OccupationEstimate:
    """Occupation weighted by exp(-K (t - t_start)) along each path."""
    ens2, est = simulate_with_functionals(ensemble.config, [(f, K)],
                                          workers=workers)
    if not np.array_equal(ens2.exit_steps, ensemble.exit_steps):
        raise NumericalError("replay diverged from the stored ensemble")
    return est[0]


# ---------------------------------------------------------------------------
# occupation bound checking


class BallIndicator:
    """Indicator of a ball, with its quasi-norm available in closed form."""

    time_independent = True

    def __init__(self, r, center=(0.0, 0.0)):
        self.r = float(r)
        self.center = np.asarray(center, dtype=float)

    def __call__(self, t, X):
        dx = np.atleast_2d(X) - self.center
        return (np.sum(dx * dx, axis=1) < self.r ** 2).astype(float)

    def measure(self) -> float:
        d = len(self.center)
        return 2.0 * self.r if d == 1 else math.pi * self.r ** 2

    def quasi_norm(self, gamma: float) -> float:
        return self.measure() ** (1.0 / gamma)


class CylinderIndicator:
    """Indicator of a sub-cylinder (t_lo, t_hi) x ball, exact quasi-norm."""

    def __init__(self, t_lo, t_hi, r, center=(0.0,)):
        self.t_lo, self.t_hi = float(t_lo), float(t_hi)
        self.ball = BallIndicator(r, center)

    def __call__(self, t, X):
        inside_t = (self.t_lo < t) & (t < self.t_hi)
        return self.ball(t, X) * (1.0 if inside_t else 0.0)

    def measure(self) -> float:
        return (self.t_hi - self.t_lo) * self.ball.measure()

    def quasi_norm(self, gamma: float) -> float:
        return self.measure() ** (1.0 / gamma)


def _f_quasinorm(f, gamma, region: Domain, n_cells=384, subsamples=4) -> float:
    """(integral over region of f^gamma)^{1/gamma} by subsampled midpoint rule."""
    if hasattr(f, "quasi_norm"):
        return f.quasi_norm(gamma)
    from .geometry import GridSpec, cell_weights

    def spatial_qn(region_ball, tval):
        grid = GridSpec.cover(region_ball, n_cells)
        h = grid.h
        total = 0.0
        offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        if region_ball.d == 1:
            xs = grid.axes[0]
            w = cell_weights(region_ball, grid)
            for o in offs:
                pts = (xs + o * h)[:, None]
                total += np.sum(w * _eval_f_single(f, tval, pts) ** gamma)
            return total / subsamples
        w = cell_weights(region_ball, grid)
        X, Y = grid.meshgrid()
        for ox in offs:
            for oy in offs:
                pts = np.stack([(X + ox * h).ravel(), (Y + oy * h).ravel()],
                               axis=-1)
                vals = _eval_f_single(f, tval, pts) ** gamma
                total += np.sum(w.ravel() * vals)
        return total / subsamples ** 2

    if region.kind == BALL:
        return spatial_qn(region, 0.0) ** (1.0 / gamma)
    from .geometry import ball as _ball
    sball = _ball(region.r, center=tuple(region.x_center), d=region.d)
    n_t = 64
    k = region.rho / n_t
    tmids = region.t0 + (np.arange(n_t) + 0.5) * k
    total = sum(spatial_qn(sball, t) * k for t in tmids)
    return total ** (1.0 / gamma)


def check_occupation_bound(f, ensemble: PathEnsemble, gamma: float,
                           region: Domain, discount_K: float | None = None,
                           workers: int = 1, estimate=None):
    """Check (integral_region f^gamma)^{1/gamma} <= N * E integral f along paths.

    Returns a BoundReport whose fitted_N carries the Monte Carlo uncertainty
    of the denominator; an estimate consistent with zero is flagged
    inconclusive.  ``estimate`` may pass a precomputed OccupationEstimate.
    """
    from .estimates import BoundReport
    if not 0 < gamma <= 1:
        raise ValidationError("gamma must lie in (0, 1]")
    if estimate is None:
        if discount_K is None:
            estimate = occupation_functional(ensemble, f, workers=workers)
        else:
            estimate = discounted_occupation(ensemble, f, discount_K,
                                             workers=workers)
    lhs = _f_quasinorm(f, gamma, region)
    rhs = estimate.mean
    inconclusive = rhs <= 3.0 * estimate.stderr
    if rhs > 0:
        fitted = lhs / rhs
        stderr = fitted * estimate.stderr / rhs
    else:
        fitted, stderr = math.inf, math.inf
    return BoundReport(lhs=float(lhs),
                       rhs_terms=[("occupation_mean", float(rhs))],
                       gamma_used=float(gamma), fitted_N=float(fitted),
                       stderr=float(stderr), inconclusive=bool(inconclusive),
                       meta={"occupation_stderr": estimate.stderr,
                             "n_paths": estimate.n,
                             "n_capped": ensemble.n_capped})
