"""Named, reproducible experiments with manifest and CSV/JSON emission.

Every experiment is a pure function of (params, seed); outputs are written
with 12-significant-digit numeric formatting and no timestamps, so a rerun
with the same resolved configuration is byte-identical.  NaN is never
written: it raises instead.
"""

from __future__ import annotations

import csv as _csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .closed_forms import (gamma_exponent, radial_exit_value, radial_profile,
                           sign_drift_decay_rate, sign_drift_resolvent_l1)
from .errors import NumericalError, ValidationError
from .estimates import (check_gradient_bound, check_hessian_bound,
                        distribution_function, fit_tail_exponent,
                        square_identity_residual)
from .fd import GridFunction, solve_elliptic
from .geometry import GridSpec, ball, cylinder
from .operators import (CLASS_TRACE, CoefficientField, ConstScalar,
                        ConstVector, OperatorSpec, checkerboard, laplacian,
                        radial_degenerate, radial_degenerate_sigma,
                        sign_drift)
from .resolvent import (DriftField, check_dichotomy, default_test_bank,
                        mu_theta)
from .sde import (BallIndicator, CylinderIndicator, SimConfig,
                  check_occupation_bound, simulate_with_functionals)

ENV_OUT_DIR = "LAB_OUT_DIR"
DEFAULT_SEED = 2026


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x) or math.isinf(x):
        raise NumericalError("refusing to write a non-finite value")
    return f"{x:.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    defaults: dict
    runner: object
    sweep_param: str | None = None
    sweep_key: str | None = None


_REGISTRY: dict = {}


def register(name, defaults, sweep_param=None, sweep_key=None):
    def deco(fn):
        _REGISTRY[name] = ExperimentDef(name=name, defaults=defaults,
                                        runner=fn, sweep_param=sweep_param,
                                        sweep_key=sweep_key)
        return fn
    return deco


def registry() -> dict:
    return dict(_REGISTRY)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = DEFAULT_SEED
    out_dir: str | None = None

    def resolve(self):
        if self.experiment not in _REGISTRY:
            raise ValidationError(
                f"unknown experiment {self.experiment!r}; registered: "
                + ", ".join(sorted(_REGISTRY)))
        exp = _REGISTRY[self.experiment]
        unknown = set(self.params) - set(exp.defaults)
        if unknown:
            raise ValidationError(
                f"unknown parameters {sorted(unknown)} for {self.experiment}; "
                f"allowed: {sorted(exp.defaults)}")
        merged = dict(exp.defaults)
        merged.update(self.params)
        out = self.out_dir or os.environ.get(ENV_OUT_DIR) or "lab_out"
        return exp, merged, Path(out) / self.experiment


def config_hash(experiment, params, seed) -> str:
    blob = json.dumps({"experiment": experiment, "params": params,
                       "seed": seed}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_experiment(config: ExperimentConfig) -> dict:
    """Run a registered experiment; returns the manifest dictionary."""
    exp, params, out = config.resolve()
    out.mkdir(parents=True, exist_ok=True)
    result = exp.runner(params, config.seed, out)
    files = result.get("files", [])
    manifest = {
        "experiment": config.experiment,
        "params": params,
        "seed": config.seed,
        "config_hash": config_hash(config.experiment, params, config.seed),
        "version": __version__,
        "files": sorted(files),
        "summary": result.get("summary", {}),
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def convergence_sweep(config: ExperimentConfig, levels: int) -> dict:
    """Rerun an experiment across grid halvings and estimate the order.

    The experiment's sweep parameter doubles per level; the tracked summary
    scalar feeds a Richardson order estimate (needs three or more levels).
    Non-decreasing successive differences are flagged as non-convergent.
    """
    if levels < 2:
        raise ValidationError("need at least two levels for a sweep")
    exp, params, out = config.resolve()
    if exp.sweep_param is None or exp.sweep_key is None:
        raise ValidationError(f"{config.experiment} does not support sweeps")
    out.mkdir(parents=True, exist_ok=True)
    base = params[exp.sweep_param]
    values, ns = [], []
    for lev in range(levels):
        p = dict(params)
        p[exp.sweep_param] = base * 2 ** lev
        sub = out / f"level{lev}"
        sub.mkdir(parents=True, exist_ok=True)
        res = exp.runner(p, config.seed, sub)
        values.append(float(res["summary"][exp.sweep_key]))
        ns.append(p[exp.sweep_param])
    diffs = [abs(values[i + 1] - values[i]) for i in range(len(values) - 1)]
    orders = []
    for i in range(len(diffs) - 1):
        if diffs[i + 1] == 0:
            orders.append("")
        else:
            orders.append(math.log2(diffs[i] / diffs[i + 1]))
    convergent = all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1)) \
        if len(diffs) > 1 else True
    rows = []
    for i, (n, v) in enumerate(zip(ns, values)):
        rows.append([i, n, v,
                     diffs[i - 1] if i >= 1 else "",
                     orders[i - 2] if i >= 2 and orders[i - 2] != "" else ""])
    write_csv(out / "sweep.csv", ["level", exp.sweep_param, exp.sweep_key,
                                  "diff", "order"], rows)
    summary = {"values": values, "orders": [o for o in orders if o != ""],
               "convergent": convergent}
    _write_json(out / "sweep.json", summary)
    return summary


# ---------------------------------------------------------------------------
# experiment families (coefficient builders shared by several experiments)


def _family_spec(family, d, delta, eps):
    if family == "laplacian":
        return OperatorSpec(coeffs=laplacian(d), delta=1.0, K=0.0), -1.0
    if family == "checkerboard":
        return OperatorSpec(coeffs=checkerboard(delta, d=d), delta=delta,
                            K=0.0), -1.0
    if family == "radial":
        if d != 2:
            raise ValidationError("the radial family is two-dimensional")
        shift = (0.5, 0.0)
        spec = OperatorSpec(coeffs=radial_degenerate(eps, shift),
                            delta=1.0 - eps, K=0.0)
        ind = BallIndicator(0.25, shift)
        return spec, (lambda X, _i=ind: -_i(0.0, X))
    raise ValidationError(f"unknown family {family!r}")


class _SmoothWave:
    """Admissible smooth coefficient a(t,x) = mid + amp*sin(kx+p)*cos(wt+q)."""

    def __init__(self, mid, amp, k, p, w=0.0, q=0.0):
        self.mid, self.amp, self.k, self.p, self.w, self.q = \
            float(mid), float(amp), float(k), float(p), float(w), float(q)

    def value(self, t, X):
        X = np.atleast_2d(X)
        sp = np.sin(self.k * X[:, 0] + self.p)
        return self.mid + self.amp * sp * math.cos(self.w * t + self.q)


class _WaveA(_SmoothWave):
    def __call__(self, t, X):
        return self.value(t, X)[:, None, None] * np.eye(1)


class _WaveB(_SmoothWave):
    def __call__(self, t, X):
        return self.value(t, X)[:, None]


def random_admissible_spec(rng, delta, K) -> OperatorSpec:
    """A random 1-D operator with a(t,x) in [delta, 1/delta], |b| <= K, c = 0."""
    mid = 0.5 * (delta + 1.0 / delta)
    amp_max = 0.5 * (1.0 / delta - delta)
    a = _WaveA(mid, amp_max * rng.uniform(0.3, 1.0), rng.integers(1, 5),
               rng.uniform(0, 2 * math.pi), rng.uniform(0, 3.0),
               rng.uniform(0, 2 * math.pi))
    b = _WaveB(0.0, K * rng.uniform(0.3, 1.0), rng.integers(1, 5),
               rng.uniform(0, 2 * math.pi), rng.uniform(0, 3.0),
               rng.uniform(0, 2 * math.pi))
    coeffs = CoefficientField(a=a, b=b, c=ConstScalar(0.0), d=1,
                              time_dependent=True, name="random-admissible")
    return OperatorSpec(coeffs=coeffs, delta=delta, K=K)


class _NegBump:
    """rhs = -f with f a nonnegative smooth bump (for L u = -f problems)."""

    def __init__(self, height=1.0, width=1.0, center=0.0):
        self.h, self.w, self.c = float(height), float(width), float(center)

    def f(self, t, X):
        X = np.atleast_2d(X)
        z = (X[:, 0] - self.c) / (self.w / 2)
        return np.where(np.abs(z) < 1, self.h * np.cos(math.pi * z / 2) ** 2,
                        0.0)

    def __call__(self, t, X):
        return -self.f(t, X)


# ---------------------------------------------------------------------------
# 1. remark33-exit


@register("remark33-exit",
          defaults={"eps": 0.5, "r": 0.25, "n": 384, "mc": False,
                    "paths": 100000, "dt": 1e-4, "workers": 1},
          sweep_param="n", sweep_key="fd_value")
def run_remark33_exit(params, seed, out):
    eps, r = params["eps"], params["r"]
    closed = radial_exit_value(eps, r)
    ode = radial_profile(eps, r, 0.5, quadrature=True)
    shift = (0.5, 0.0)
    domain = ball(1.5, center=shift, d=2)
    spec = OperatorSpec(coeffs=radial_degenerate(eps, shift), delta=1.0 - eps,
                        K=0.0)
    grid = GridSpec.cover(domain, params["n"])
    ind = BallIndicator(r, shift)
    u, rep = solve_elliptic(spec, domain,
                            lambda X: -ind(0.0, X), 0.0, grid)
    fd_value = u.at_x((0.0, 0.0))
    header = ["eps", "r", "gamma", "closed_form", "ode_quadrature",
              "fd_value", "fd_rel_err", "monotone"]
    row = [eps, r, gamma_exponent(eps), closed, ode, fd_value,
           abs(fd_value - closed) / closed, rep.monotone_scheme]
    summary = {"closed_form": closed, "ode_quadrature": ode,
               "fd_value": fd_value,
               "fd_rel_err": abs(fd_value - closed) / closed}
    if params["mc"]:
        cfg = SimConfig(sigma=radial_degenerate_sigma(eps, shift), b=None,
                        domain=domain, dt=params["dt"],
                        n_paths=params["paths"], seed=seed,
                        start=(0.0, 0.0))
        ens, (est,) = simulate_with_functionals(cfg, [ind],
                                                workers=params["workers"])
        header += ["mc_mean", "mc_stderr", "mc_z", "mc_capped"]
        row += [est.mean, est.stderr, (est.mean - closed) / est.stderr,
                ens.n_capped]
        summary.update({"mc_mean": est.mean, "mc_stderr": est.stderr,
                        "mc_z": (est.mean - closed) / est.stderr})
    write_csv(out / "results.csv", header, [row])
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}


# ---------------------------------------------------------------------------
# 2. occupation-bound


@register("occupation-bound",
          defaults={"example": "remark33", "eps": 0.5,
                    "r_list": (0.125, 0.25, 0.375), "gamma": None,
                    "paths": 100000, "dt": 1e-3, "workers": 1})
def run_occupation_bound(params, seed, out):
    example = params["example"]
    rows, reports = [], []
    if example == "remark33":
        eps = params["eps"]
        gamma = params["gamma"] or gamma_exponent(eps)
        shift = (0.5, 0.0)
        domain = ball(1.5, center=shift, d=2)
        fs = [BallIndicator(r, shift) for r in params["r_list"]]
        cfg = SimConfig(sigma=radial_degenerate_sigma(eps, shift), b=None,
                        domain=domain, dt=params["dt"],
                        n_paths=params["paths"], seed=seed, start=(0.0, 0.0))
        ens, ests = simulate_with_functionals(cfg, fs,
                                              workers=params["workers"])
        for r, f, est in zip(params["r_list"], fs, ests):
            rep = check_occupation_bound(f, ens, gamma, domain, estimate=est)
            rows.append([r, gamma, rep.lhs, est.mean, est.stderr,
                         rep.fitted_N, rep.stderr, rep.inconclusive])
            reports.append(rep)
    elif example == "ball":
        domain = ball(1.0, center=(0.0, 0.0), d=2)
        gamma = params["gamma"] or 0.5
        f = BallIndicator(0.5, (0.0, 0.0))
        cfg = SimConfig(sigma=math.sqrt(2.0) * np.eye(2), b=None,
                        domain=domain, dt=params["dt"],
                        n_paths=params["paths"], seed=seed)
        ens, (est,) = simulate_with_functionals(cfg, [f],
                                                workers=params["workers"])
        rep = check_occupation_bound(f, ens, gamma, domain, estimate=est)
        rows.append([0.5, gamma, rep.lhs, est.mean, est.stderr, rep.fitted_N,
                     rep.stderr, rep.inconclusive])
        reports.append(rep)
    elif example == "cylinder":
        domain = cylinder(2.0, 1.0, d=1)
        gamma = params["gamma"] or 0.5
        f = CylinderIndicator(1.25, 1.75, 0.5, (0.0,))
        cfg = SimConfig(sigma=np.array([[math.sqrt(2.0)]]), b=None,
                        domain=domain, dt=params["dt"],
                        n_paths=params["paths"], seed=seed)
        ens, (est,) = simulate_with_functionals(cfg, [f],
                                                workers=params["workers"])
        rep = check_occupation_bound(f, ens, gamma,
                                     cylinder(1.0, 1.0, corner=(1.0, 0.0),
                                              d=1), estimate=est)
        rows.append([0.5, gamma, rep.lhs, est.mean, est.stderr, rep.fitted_N,
                     rep.stderr, rep.inconclusive])
        reports.append(rep)
    else:
        raise ValidationError(f"unknown example {example!r}")
    write_csv(out / "results.csv",
              ["r", "gamma", "lhs", "occ_mean", "occ_stderr", "fitted_N",
               "fitted_N_stderr", "inconclusive"], rows)
    summary = {"fitted_N": [float(r[5]) for r in rows],
               "inconclusive": any(bool(r[7]) for r in rows)}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary,
            "reports": reports}


# ---------------------------------------------------------------------------
# 3 & 4. hessian-gamma / gradient-gamma


def _bound_sweep(params, seed, out, kind):
    d = params["d"]
    family = params["family"]
    gamma = params["gamma"]
    spec, rhs = _family_spec(family, d, params["delta"], params["eps"])
    if family == "radial":
        domain = ball(1.5, center=(0.5, 0.0), d=2)
    else:
        domain = ball(1.0, center=(0.0,) * d, d=d)
    rows = []
    fitted_prev = None
    fitted_last = change = None
    for n in params["levels"]:
        grid = GridSpec.cover(domain, n)
        u, rep = solve_elliptic(spec, domain, rhs, 0.0, grid)
        checker = check_hessian_bound if kind == "hessian" else \
            check_gradient_bound
        br = checker(u, spec, domain, gamma)
        change = "" if fitted_prev is None else \
            abs(br.fitted_N - fitted_prev) / fitted_prev
        rows.append([n, grid.h, br.lhs, br.rhs_terms[0][1], br.rhs_terms[1][1],
                     br.fitted_N, change])
        fitted_prev = br.fitted_N
        fitted_last = br.fitted_N
    write_csv(out / "results.csv",
              ["n", "h", "lhs", "rhs_lu", "rhs_sup", "fitted_N",
               "rel_change"], rows)
    summary = {"fitted_N": fitted_last,
               "last_rel_change": float(change) if change != "" else None}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}


@register("hessian-gamma",
          defaults={"family": "laplacian", "d": 2, "delta": 0.2, "eps": 0.5,
                    "gamma": 0.5, "levels": (48, 96, 192)})
def run_hessian_gamma(params, seed, out):
    return _bound_sweep(params, seed, out, "hessian")


@register("gradient-gamma",
          defaults={"family": "laplacian", "d": 1, "delta": 0.2, "eps": 0.5,
                    "gamma": 0.5, "levels": (48, 96, 192)})
def run_gradient_gamma(params, seed, out):
    return _bound_sweep(params, seed, out, "gradient")


# ---------------------------------------------------------------------------
# 5. identity-22


class _SmoothTestU:
    def __call__(self, X):
        X = np.atleast_2d(X)
        out = np.sin(1.3 * X[:, 0] + 0.4)
        if X.shape[1] > 1:
            out = out * np.cos(0.9 * X[:, 1] - 0.2) + 0.3 * X[:, 1] ** 2 \
                * np.exp(-X[:, 0])
        return out


@register("identity-22",
          defaults={"case": "bilinear", "d": 2, "n": 32, "levels": 3},
          sweep_param="n", sweep_key="residual")
def run_identity_22(params, seed, out):
    d = params["d"]
    domain = ball(1.0, center=(0.0,) * d, d=d)
    spec = OperatorSpec(coeffs=laplacian(d), delta=1.0, K=0.0)
    case = params["case"]

    def u_fn(X):
        X = np.atleast_2d(X)
        if case == "affine":
            return 2.0 + X[:, 0] - (3.0 * X[:, 1] if d > 1 else 0.0)
        if case == "bilinear":
            if d == 1:
                return 1.0 + 0.5 * X[:, 0]
            return 2.0 + X[:, 0] - 3.0 * X[:, 1] + 1.5 * X[:, 0] * X[:, 1]
        if case == "smooth":
            return _SmoothTestU()(X)
        raise ValidationError(f"unknown case {case!r}")

    rows = []
    resids = []
    n = params["n"]
    for lev in range(params["levels"]):
        grid = GridSpec.cover(domain, n * 2 ** lev)
        vals = np.full(grid.spatial_shape, np.nan)
        mask = grid.valued_mask()
        pts = grid.points()[mask.ravel()]
        flat = vals.ravel()
        flat[mask.ravel()] = u_fn(pts)
        u = GridFunction(grid=grid, values=flat.reshape(grid.spatial_shape))
        res = square_identity_residual(u, spec)
        resids.append(res)
        rows.append([n * 2 ** lev, grid.h, res])
    orders = [math.log2(resids[i] / resids[i + 1])
              for i in range(len(resids) - 1)
              if resids[i] > 0 and resids[i + 1] > 0]
    write_csv(out / "results.csv", ["n", "h", "residual"], rows)
    summary = {"residual": resids[0], "residuals": resids, "orders": orders}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}


# ---------------------------------------------------------------------------
# 6. bellman-compare


@register("bellman-compare",
          defaults={"delta": 0.5, "K": 0.5, "n": 64, "n_t": 512,
                    "n_specs": 20, "f_height": 1.0})
def run_bellman_compare(params, seed, out):
    from .bellman import BellmanProblem, check_suboptimality, solve_bellman_1d
    domain = cylinder(2.0, 1.0, d=1)
    grid = GridSpec.cover(domain, params["n"], n_t=params["n_t"])
    bump = _NegBump(height=params["f_height"])
    problem = BellmanProblem(delta=params["delta"], K=params["K"],
                             f=bump.f, grid=grid)
    u_b, rep, sweeps = solve_bellman_1d(problem, domain)
    rng = np.random.default_rng(seed)
    rows = []
    all_ok = True
    for i in range(params["n_specs"]):
        spec = random_admissible_spec(rng, params["delta"], params["K"])
        sub = check_suboptimality(u_b, spec, bump.f, domain)
        rows.append([i, sub.max_violation, sub.tolerance, sub.ok])
        all_ok = all_ok and sub.ok
    write_csv(out / "results.csv",
              ["spec_index", "max_violation", "tolerance", "ok"], rows)
    u00 = u_b.at_tx(0.0, (0.0,))
    summary = {"u00": u00, "max_policy_sweeps": sweeps, "all_ok": all_ok,
               "residual_norm": rep.residual_norm}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}


# ---------------------------------------------------------------------------
# 7. dichotomy-56


def sign_drift_domain_factory(M, min_width, max_nodes=1400000):
    """Truncation radius tracking the resolvent decay rate, grid tied to the
    narrowest bank member."""

    def factory(mu):
        nu = sign_drift_decay_rate(M, mu)
        R = 9.0 / nu + 4.0
        h = min_width / 12.0
        n = int(math.ceil(2 * R / h))
        if n > max_nodes:
            n = max_nodes
        domain = ball(R, center=(0.0,), d=1)
        return domain, GridSpec.cover(domain, n)
    return factory


@register("dichotomy-56",
          defaults={"M": 3.0, "mu_list": (0.25, 1.0, 4.0, 16.0), "p": 1,
                    "min_width": 0.16, "branch": "elliptic"})
def run_dichotomy_56(params, seed, out):
    M = params["M"]
    spec = OperatorSpec(coeffs=sign_drift(M), delta=1.0, K=1.0,
                        class_kind=CLASS_TRACE)
    bank = default_test_bank(params["min_width"])
    factory = sign_drift_domain_factory(M, params["min_width"])
    mu_list = params["mu_list"]
    if np.isscalar(mu_list):
        mu_list = [float(mu_list)]
    report = check_dichotomy(spec, params["p"], list(mu_list),
                             test_bank=bank, domain_factory=factory,
                             drift_sup=M)
    rows = []
    for row in report.rows():
        exact = sign_drift_resolvent_l1(M, row["mu"])
        rows.append([row["mu"], row["norm_u"], row["norm_f"], row["n_hat"],
                     row["mu_ratio"], row["mu2_ratio"], exact,
                     (row["n_hat"] - exact) / exact])
    write_csv(out / "results.csv",
              ["mu", "norm_u", "norm_f", "n_hat", "mu_ratio", "mu2_ratio",
               "closed_form", "rel_err"], rows)
    report.to_json(out / "summary.json")
    summary = {"n_hat": report.n_hat, "mu_ratio": report.mu_ratio,
               "mu2_ratio": report.mu2_ratio, "threshold": report.threshold}
    return {"files": ["results.csv", "summary.json"], "summary": summary,
            "report": report}


# ---------------------------------------------------------------------------
# 8. mu-theta-table


class _BoxDrift:
    """|b| = amp inside the unit cube anchored at the origin."""

    def __init__(self, amp, d):
        self.amp, self.d = float(amp), int(d)

    def __call__(self, t, X):
        # half-open cube: the node-centred cells tile it exactly
        X = np.atleast_2d(X)
        inside = np.all((X >= 0.0) & (X < 1.0), axis=1)
        out = np.zeros((len(X), self.d))
        out[:, 0] = self.amp * inside
        return out


@register("mu-theta-table",
          defaults={"drift": "cube", "amp": 2.0, "R": 2.0, "n": 256,
                    "thetas": (0.25, 0.5, 1.0), "lams": (0.5, 1.0, 2.0),
                    "branch": "parabolic", "d": 1})
def run_mu_theta_table(params, seed, out):
    d = params["d"]
    domain = ball(params["R"], center=(0.5,) * d, d=d)
    grid = GridSpec.cover(domain, params["n"])
    if params["drift"] == "cube":
        fn = _BoxDrift(params["amp"], d)
        drift = DriftField.from_function(fn, grid, exterior_sup=0.0)
    elif params["drift"] == "constant":
        fn = ConstVector([params["amp"]] + [0.0] * (d - 1))
        drift = DriftField.from_function(fn, grid,
                                         exterior_sup=params["amp"])
    else:
        raise ValidationError(f"unknown drift {params['drift']!r}")
    q = d + 1 if params["branch"] == "parabolic" else d
    rows = []
    for theta in params["thetas"]:
        for lam in params["lams"]:
            mu = mu_theta(drift, theta, lam, q, branch=params["branch"])
            rows.append([theta, lam, mu])
    write_csv(out / "results.csv", ["theta", "lambda", "mu_theta"], rows)
    summary = {"mu_theta": [float(r[2]) for r in rows]}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}


# ---------------------------------------------------------------------------
# 9. tail-exponent


class _InverseRadius:
    def __call__(self, X):
        X = np.atleast_2d(X)
        r = np.sqrt(np.sum(X * X, axis=1))
        return np.where(r > 0, 1.0 / np.maximum(r, 1e-300), np.inf)


@register("tail-exponent",
          defaults={"field": "inverse-radius", "n": 512,
                    "lam_lo": 2.0, "lam_hi": 32.0, "n_lam": 9})
def run_tail_exponent(params, seed, out):
    domain = ball(1.0, center=(0.0, 0.0), d=2)
    grid = GridSpec.cover(domain, params["n"])
    if params["field"] == "inverse-radius":
        vals = _InverseRadius()(grid.points()).reshape(grid.spatial_shape)
    else:
        raise ValidationError(f"unknown field {params['field']!r}")
    lams = np.geomspace(params["lam_lo"], params["lam_hi"], params["n_lam"])
    tail = distribution_function(vals, lams, domain, grid)
    fit = fit_tail_exponent(tail)
    rows = [[lam, F] for lam, F in zip(tail.lambdas, tail.F)]
    write_csv(out / "results.csv", ["lambda", "F"], rows)
    summary = {"gamma_hat": fit.gamma_hat, "constant": fit.constant}
    _write_json(out / "summary.json", summary)
    return {"files": ["results.csv", "summary.json"], "summary": summary}
