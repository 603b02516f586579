"""Acceptance suite: every criterion at its stated tolerance.

Each check prints one line

    ACCEPTANCE <id>: PASS|FAIL - <measured values>

(visible with ``pytest -rA`` or ``-s``).  The Monte Carlo criteria pin their
seeds; step sizes follow the standing rule that the first-exit overshoot
bias stays below one standard error of the estimator, which makes the
exit-time checks the slow part of the suite (several minutes each).
"""

import math

import numpy as np
import pytest

import lplab.sde as sdemod
from lplab.bellman import BellmanProblem, check_suboptimality, solve_bellman_1d
from lplab.closed_forms import (gamma_exponent, radial_exit_value,
                                radial_profile, sign_drift_decay_rate,
                                sign_drift_resolvent_l1)
from lplab.errors import NumericalError
from lplab.estimates import (check_gradient_bound, check_hessian_bound,
                             square_identity_residual)
from lplab.fd import GridFunction, solve_elliptic, solve_parabolic
from lplab.geometry import GridSpec, ball, cylinder
from lplab.operators import (CLASS_TRACE, CoefficientField, ConstScalar,
                             OperatorSpec, checkerboard, constant_coefficients,
                             laplacian, radial_degenerate,
                             radial_degenerate_sigma, sign_drift)
from lplab.resolvent import (BumpFunction, DriftField, check_dichotomy,
                             default_test_bank, lambda_of_mu, mu_theta,
                             split_drift)
from lplab.sde import (BallIndicator, CylinderIndicator, SimConfig,
                       check_occupation_bound, simulate_paths,
                       simulate_with_functionals)

SEED = 42
SQRT2 = math.sqrt(2.0)
EXIT_VALUE = 1.0 / 72.0
RADIAL_SHIFT = (0.5, 0.0)
RADIAL_DOMAIN = ball(1.5, center=RADIAL_SHIFT, d=2)
RADIAL_SPEC = OperatorSpec(coeffs=radial_degenerate(0.5, RADIAL_SHIFT),
                           delta=0.5, K=0.0)


def report(cid, ok, detail):
    print(f"ACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


# ---------------------------------------------------------------------------
# shared Monte Carlo ensembles


@pytest.fixture(scope="module")
def radial_mc():
    """One ensemble of the degenerate-radial diffusion, started at the
    origin, with occupation estimates of the centred disks of several radii
    (criterion 1 uses r = 1/4; criterion 2 the whole family).

    Pinned: 1e5 paths, dt = 1e-4, seed 42.
    """
    rs = (0.0625, 0.125, 0.25, 0.375)
    fs = [BallIndicator(r, RADIAL_SHIFT) for r in rs]
    cfg = SimConfig(sigma=radial_degenerate_sigma(0.5, RADIAL_SHIFT), b=None,
                    domain=RADIAL_DOMAIN, dt=1e-4, n_paths=100000, seed=SEED,
                    start=(0.0, 0.0))
    ens, ests = simulate_with_functionals(cfg, fs, workers=2)
    return ens, dict(zip(rs, ests)), dict(zip(rs, fs))


# ---------------------------------------------------------------------------
# criterion 1: the exit value three ways


def test_criterion_1_closed_forms():
    closed = radial_exit_value(0.5, 0.25)
    quad = radial_profile(0.5, 0.25, 0.5, quadrature=True)
    ok = (abs(closed - EXIT_VALUE) < 1e-10
          and abs(quad - EXIT_VALUE) < 1e-10
          and abs(closed - quad) < 1e-10)
    assert report("1-closed-form",
                  ok, f"formula={closed:.12f} quadrature={quad:.12f} "
                      f"target={EXIT_VALUE:.12f}")


def test_criterion_1_fd_solve():
    grid = GridSpec.cover(RADIAL_DOMAIN, 384)   # h = 1/128
    ind = BallIndicator(0.25, RADIAL_SHIFT)
    u, rep = solve_elliptic(RADIAL_SPEC, RADIAL_DOMAIN,
                            lambda X: -ind(0.0, X), 0.0, grid)
    val = u.at_x((0.0, 0.0))
    rel = abs(val - EXIT_VALUE) / EXIT_VALUE
    ok = rel < 0.02 and rep.monotone_scheme
    assert report("1-fd", ok,
                  f"u(0)={val:.6f} rel_err={rel:.4%} (tolerance 2%)")


def test_criterion_1_monte_carlo(radial_mc):
    ens, ests, _ = radial_mc
    est = ests[0.25]
    z = (est.mean - EXIT_VALUE) / est.stderr
    ok = abs(z) <= 3.0 and ens.n_capped == 0
    assert report("1-mc", ok,
                  f"occ={est.mean:.6f} stderr={est.stderr:.2e} z={z:+.2f} "
                  f"(1e5 paths, dt=1e-4, seed {SEED})")


# ---------------------------------------------------------------------------
# criterion 2: gamma degeneration


def test_criterion_2_gamma_formula():
    eps = np.linspace(0.0, 0.999, 500)
    exact = 2.0 * (1.0 - eps) / (2.0 - eps)
    got = np.array([gamma_exponent(e) for e in eps])
    ok = np.array_equal(got, exact)
    assert report("2-gamma-formula", ok,
                  "gamma(eps) matches 2(1-eps)/(2-eps) exactly on a grid "
                  "of 500 points")


def test_criterion_2_fitted_stability(radial_mc):
    _, ests, fs = radial_mc
    gamma = gamma_exponent(0.5)
    fitted = {}
    for r in (0.125, 0.25, 0.375):
        rep = check_occupation_bound(fs[r], None, gamma, RADIAL_DOMAIN,
                                     estimate=ests[r])
        fitted[r] = rep.fitted_N
    vals = list(fitted.values())
    spread = (max(vals) - min(vals)) / min(vals)
    ok = spread < 0.25
    assert report("2-stability", ok,
                  f"fitted_N={['%.3f' % v for v in vals]} spread={spread:.2%}"
                  " (tolerance 25%)")


@pytest.mark.xfail(
    strict=True,
    reason="spec defect: with r in {1/8, 1/4, 3/8} the exact growth of the "
           "fitted constant at gamma = 0.95 is (3)^(2/gamma(1/2) - 2/0.95) "
           "= 2.67x; a 4x growth is impossible on this radius set for any "
           "admissible gamma (see decisions ledger)")
def test_criterion_2_large_gamma_growth(radial_mc):
    _, ests, fs = radial_mc
    fitted = {}
    for r in (0.125, 0.25, 0.375):
        rep = check_occupation_bound(fs[r], None, 0.95, RADIAL_DOMAIN,
                                     estimate=ests[r])
        fitted[r] = rep.fitted_N
    monotone = fitted[0.125] > fitted[0.25] > fitted[0.375]
    growth = fitted[0.125] / fitted[0.375]
    ok = monotone and growth >= 4.0
    assert report("2-large-gamma", ok,
                  f"growth over r in {{1/8..3/8}} = {growth:.2f}x "
                  f"(monotone={monotone}); criterion demands >= 4x")


def test_criterion_2_large_gamma_effect_wide_window(radial_mc):
    # the unbounded-growth effect itself, demonstrated on a wider radius
    # window (1/16 .. 3/8, radius ratio 6) where the exact factor is
    # 6^{2/gamma - 2/0.95} = 4.96
    _, ests, fs = radial_mc
    fitted = {}
    for r in (0.0625, 0.375):
        rep = check_occupation_bound(fs[r], None, 0.95, RADIAL_DOMAIN,
                                     estimate=ests[r])
        fitted[r] = rep.fitted_N
    growth = fitted[0.0625] / fitted[0.375]
    ok = growth >= 4.0
    assert report("2-large-gamma-wide", ok,
                  f"growth over r in {{1/16..3/8}} = {growth:.2f}x >= 4x")


# ---------------------------------------------------------------------------
# criterion 3: the sign-drift dichotomy


def _dichotomy(mu_list, min_width):
    spec = OperatorSpec(coeffs=sign_drift(3.0), delta=1.0, K=1.0,
                        class_kind=CLASS_TRACE)
    from lplab.experiments import sign_drift_domain_factory
    return check_dichotomy(spec, 1.0, mu_list,
                           test_bank=default_test_bank(min_width),
                           domain_factory=sign_drift_domain_factory(
                               3.0, min_width),
                           drift_sup=3.0)


def test_criterion_3_match_under_refinement():
    mus = [0.25, 1.0, 4.0, 16.0]
    errs = {}
    for mw in (0.04, 0.02):
        rep = _dichotomy(mus, mw)
        errs[mw] = [abs(n - sign_drift_resolvent_l1(3.0, mu))
                    / sign_drift_resolvent_l1(3.0, mu)
                    for mu, n in zip(mus, rep.n_hat)]
    refined = all(e2 <= e1 + 1e-3 for e1, e2 in zip(errs[0.04], errs[0.02]))
    within = all(e < 0.05 for e in errs[0.02])
    ok = refined and within
    assert report("3-refinement", ok,
                  "rel errs at bump width 0.02: "
                  + ", ".join(f"{e:.3%}" for e in errs[0.02])
                  + f" (5% tolerance); decreasing with width: {refined}")


def test_criterion_3_asymptotic_brackets():
    rep = _dichotomy([100.0, 0.01], 0.16)
    mu_ratio = rep.mu_ratio[0]
    mu2_ratio = rep.mu2_ratio[1]
    ok = 0.9 <= mu_ratio <= 1.3 and 0.9 * 9.0 <= mu2_ratio <= 1.3 * 9.0
    assert report("3-brackets", ok,
                  f"mu*N at mu=100: {mu_ratio:.4f} in [0.9, 1.3]; "
                  f"mu^2*N at mu=0.01: {mu2_ratio:.4f} in [8.1, 11.7]")


# ---------------------------------------------------------------------------
# criterion 4: trivial exit times (the slow one)


def test_criterion_4_trivial_exit_times():
    # dt chosen so the overshoot bias (0.5826 sigma sqrt(dt) barrier shift)
    # stays below one standard error at 1e5 paths
    cfg1 = SimConfig(sigma=np.array([[SQRT2]]), b=None,
                     domain=ball(1.0, center=(0.0,), d=1), dt=2.4e-6,
                     n_paths=100000, seed=SEED)
    ens1 = simulate_paths(cfg1, workers=2)
    m1 = ens1.exit_times.mean()
    se1 = ens1.exit_times.std(ddof=1) / math.sqrt(ens1.n_paths)
    z1 = (m1 - 0.5) / se1

    cfg2 = SimConfig(sigma=SQRT2 * np.eye(2), b=None,
                     domain=ball(1.0, center=(0.0, 0.0), d=2), dt=1.8e-6,
                     n_paths=100000, seed=SEED)
    ens2 = simulate_paths(cfg2, workers=2)
    m2 = ens2.exit_times.mean()
    se2 = ens2.exit_times.std(ddof=1) / math.sqrt(ens2.n_paths)
    z2 = (m2 - 0.25) / se2

    ok = abs(z1) <= 3.0 and abs(z2) <= 3.0
    assert report("4-exit-times", ok,
                  f"d=1: mean={m1:.6f} z={z1:+.2f} (dt=2.4e-6); "
                  f"d=2: mean={m2:.6f} z={z2:+.2f} (dt=1.8e-6); "
                  "1e5 paths each")


# ---------------------------------------------------------------------------
# criterion 5: the locked inequality suite


class _SmoothA:
    def __call__(self, t, X):
        X = np.atleast_2d(X)
        n = len(X)
        A = np.zeros((n, 2, 2))
        A[:, 0, 0] = 1.0 + 0.3 * np.sin(X[:, 0] + X[:, 1])
        A[:, 1, 1] = 1.0 + 0.2 * np.cos(X[:, 0] - X[:, 1])
        A[:, 0, 1] = A[:, 1, 0] = 0.1 * np.sin(X[:, 0]) * np.cos(X[:, 1])
        return A


class _ZeroV:
    def __call__(self, t, X):
        return np.zeros((len(np.atleast_2d(X)), 2))


class _TimeWaveA1:
    def __call__(self, t, X):
        X = np.atleast_2d(X)
        val = 1.0 + 0.3 * np.sin(2.0 * X[:, 0]) * math.cos(t)
        return val[:, None, None] * np.eye(1)


class _ZeroV1:
    def __call__(self, t, X):
        return np.zeros((len(np.atleast_2d(X)), 1))


class _BumpRhs:
    """rhs = -cos^2 bump in x (nonnegative forcing of the dual problem)."""

    def __init__(self, width=1.0):
        self.w = width

    def __call__(self, *args):
        X = np.atleast_2d(args[-1])
        z = X[:, 0] / (self.w / 2)
        return -np.where(np.abs(z) < 1, np.cos(math.pi * z / 2) ** 2, 0.0)


SMOOTH2 = OperatorSpec(
    coeffs=CoefficientField(a=_SmoothA(), b=_ZeroV(), c=ConstScalar(0.1),
                            d=2), delta=0.5, K=0.1)
TIMEWAVE1 = OperatorSpec(
    coeffs=CoefficientField(a=_TimeWaveA1(), b=_ZeroV1(), c=ConstScalar(0.0),
                            d=1, time_dependent=True), delta=0.7, K=0.0)

RADIAL_RHS = BallIndicator(0.25, RADIAL_SHIFT)

DETERMINISTIC_PAIRS = [
    # (label, kind, spec, domain builder args, rhs, gamma, levels, parabolic)
    ("H1-laplacian-d2", "hessian", OperatorSpec(coeffs=laplacian(2),
                                                delta=1.0, K=0.0),
     ball(1.0, center=(0.0, 0.0), d=2), -1.0, 0.5, (64, 128), False),
    ("H2-smooth-d2", "hessian", SMOOTH2,
     ball(1.0, center=(0.0, 0.0), d=2), -1.0, 0.5, (48, 96), False),
    ("H3-checkerboard-d2", "hessian",
     OperatorSpec(coeffs=checkerboard(0.2), delta=0.2, K=0.0),
     ball(1.0, center=(0.0, 0.0), d=2), -1.0, 0.5, (64, 128), False),
    ("H4-degenerate-radial", "hessian", RADIAL_SPEC, RADIAL_DOMAIN,
     lambda X: -RADIAL_RHS(0.0, X), 0.5, (96, 192), False),
    ("H5-parabolic-d1", "hessian",
     OperatorSpec(coeffs=laplacian(1), delta=1.0, K=0.0),
     cylinder(1.0, 1.0, d=1), _BumpRhs(), 0.5, (24, 48), True),
    ("G6-laplacian-d1", "gradient",
     OperatorSpec(coeffs=laplacian(1), delta=1.0, K=0.0),
     ball(1.0, center=(0.0,), d=1), -1.0, 0.5, (128, 256), False),
    ("G7-checkerboard-d1", "gradient",
     OperatorSpec(coeffs=checkerboard(0.3, d=1), delta=0.3, K=0.0),
     ball(1.0, center=(0.0,), d=1), -1.0, 0.5, (128, 256), False),
    ("G8-timewave-parabolic", "gradient", TIMEWAVE1,
     cylinder(2.0, 1.0, d=1), _BumpRhs(), 0.5, (24, 48), True),
]


def test_criterion_5_locked_suite():
    failures = []
    details = []
    for (label, kind, spec, domain, rhs, gamma, levels,
         parabolic) in DETERMINISTIC_PAIRS:
        checker = check_hessian_bound if kind == "hessian" else \
            check_gradient_bound
        inner = domain
        if label == "G8-timewave-parabolic":
            inner = cylinder(1.0, 1.0, corner=(1.0, 0.0), d=1)
        reports = []
        for n in levels:
            grid = GridSpec.cover(domain, n)
            if parabolic:
                u, _ = solve_parabolic(spec, domain, rhs, 0.0, grid)
            else:
                u, _ = solve_elliptic(spec, domain, rhs, 0.0, grid)
            reports.append(checker(u, spec, inner, gamma))
        change = abs(reports[1].fitted_N - reports[0].fitted_N) \
            / reports[0].fitted_N
        holds = (np.isfinite(reports[1].fitted_N)
                 and reports[1].lhs <= 1.10 * reports[0].fitted_N
                 * sum(v for _, v in reports[1].rhs_terms))
        details.append(f"{label}: N={reports[1].fitted_N:.3f} "
                       f"change={change:.2%}")
        if change >= 0.10 or not holds:
            failures.append(label)

    # Monte Carlo members: agreement across a dt halving within 3 combined
    # stderr, and the bound holds with the coarse fitted constant
    mc_members = [
        ("O9-cylinder", cylinder(2.0, 1.0, d=1), np.array([[SQRT2]]),
         CylinderIndicator(1.25, 1.75, 0.5, (0.0,)),
         cylinder(0.5, 0.5, corner=(1.25, 0.0), d=1), 0.5, (1e-3, 5e-4),
         None),
        ("O10-radial-ball", RADIAL_DOMAIN,
         radial_degenerate_sigma(0.5, RADIAL_SHIFT),
         BallIndicator(0.25, RADIAL_SHIFT), RADIAL_DOMAIN,
         gamma_exponent(0.5), (5e-4, 2.5e-4), (0.0, 0.0)),
    ]
    for label, dom, sigma, f, region, gamma, dts, start in mc_members:
        out = []
        for dt in dts:
            cfg = SimConfig(sigma=sigma, b=None, domain=dom, dt=dt,
                            n_paths=20000, seed=SEED, start=start)
            ens, (est,) = simulate_with_functionals(cfg, [f], workers=2)
            rep = check_occupation_bound(f, ens, gamma, region, estimate=est)
            out.append(rep)
        gap = abs(out[0].fitted_N - out[1].fitted_N)
        tol = 3.0 * math.hypot(out[0].stderr, out[1].stderr)
        details.append(f"{label}: N={out[1].fitted_N:.3f} gap={gap:.3f} "
                       f"tol={tol:.3f}")
        if gap > tol or out[1].inconclusive:
            failures.append(label)

    ok = not failures
    assert report("5-locked-suite", ok,
                  "; ".join(details) + (f"; FAILING: {failures}" if failures
                                        else " (10 pairs)"))


# ---------------------------------------------------------------------------
# criterion 6: the square identity


def test_criterion_6_identity():
    dom2 = ball(1.0, center=(0.0, 0.0), d=2)
    spec2 = OperatorSpec(coeffs=laplacian(2), delta=1.0, K=0.0)

    def bilinear(X):
        return 2.0 + X[:, 0] - 3.0 * X[:, 1] + 1.5 * X[:, 0] * X[:, 1]

    grid = GridSpec.cover(dom2, 32)
    vals = np.full(grid.spatial_shape, np.nan)
    mask = grid.valued_mask()
    vals.ravel()[mask.ravel()] = bilinear(grid.points()[mask.ravel()])
    u_quad = GridFunction(grid=grid, values=vals)
    exact_resid = square_identity_residual(u_quad, spec2)

    resids = []
    for n in (16, 32, 64):
        g = GridSpec.cover(dom2, n)
        v = np.full(g.spatial_shape, np.nan)
        m = g.valued_mask()
        pts = g.points()[m.ravel()]
        v.ravel()[m.ravel()] = np.sin(1.3 * pts[:, 0]) * np.cos(
            0.9 * pts[:, 1])
        resids.append(square_identity_residual(
            GridFunction(grid=g, values=v), spec2))
    orders = [math.log2(resids[i] / resids[i + 1]) for i in range(2)]
    ok = exact_resid == 0.0 and min(orders) >= 1.8
    assert report("6-identity", ok,
                  f"quadratic residual={exact_resid!r}; smooth orders="
                  f"{['%.2f' % o for o in orders]} (need >= 1.8)")


# ---------------------------------------------------------------------------
# criterion 7: extremal-solution properties


def test_criterion_7_bellman():
    from lplab.experiments import random_admissible_spec

    class BumpF:
        def __call__(self, t, X):
            x = np.atleast_2d(X)[:, 0]
            return np.where(np.abs(x) < 0.5, np.cos(math.pi * x) ** 2, 0.0)

    dom = cylinder(2.0, 1.0, d=1)
    grid = GridSpec.cover(dom, 64, n_t=512)
    prob = BellmanProblem(delta=0.5, K=0.5, f=BumpF(), grid=grid)
    u_b, _, sweeps = solve_bellman_1d(prob, dom)
    nonneg = np.nanmin(u_b.values) >= 0.0

    rng = np.random.default_rng(SEED)
    tol = 10.0 * grid.h ** 2
    worst = -math.inf
    all_ok = True
    for _ in range(20):
        spec = random_admissible_spec(rng, 0.5, 0.5)
        sub = check_suboptimality(u_b, spec, BumpF(), dom, tolerance=tol)
        worst = max(worst, sub.max_violation)
        all_ok = all_ok and sub.ok

    # degenerate control set reproduces the linear march
    grid_d = GridSpec.cover(dom, 48, n_t=256)
    prob_d = BellmanProblem(delta=1.0, K=0.0, f=BumpF(), grid=grid_d)
    u_d, _, _ = solve_bellman_1d(prob_d, dom)
    spec_d = OperatorSpec(coeffs=constant_coefficients([[1.0]]), delta=1.0,
                          K=0.0)
    u_l, _ = solve_parabolic(spec_d, dom,
                             lambda t, X: -BumpF()(t, X), 0.0, grid_d)
    sel = np.isfinite(u_d.values)
    degen_gap = float(np.abs(u_d.values[sel] - u_l.values[sel]).max())

    ok = nonneg and all_ok and degen_gap < 1e-8
    assert report("7-bellman", ok,
                  f"u>=0: {nonneg}; 20 comparisons max violation "
                  f"{worst:.2e} (tol {tol:.2e}); degenerate gap "
                  f"{degen_gap:.2e} (tol 1e-8); sweeps<={sweeps}")


# ---------------------------------------------------------------------------
# criterion 8: resolvent algebra


class _CubeBump1:
    def __call__(self, t, X):
        X = np.atleast_2d(X)
        inside = (X[:, 0] >= 0.0) & (X[:, 0] < 1.0)
        out = np.zeros_like(X)
        out[:, 0] = 2.0 * inside
        return out


def test_criterion_8_resolvent_algebra():
    rng = np.random.default_rng(SEED)
    b = rng.normal(size=(500, 2)) * 4.0
    b1, b2 = split_drift(b, 1.7)
    recon = np.max(np.abs(b1 + b2 - b))
    cap = np.max(np.linalg.norm(b1, axis=1)) - 1.7

    dom = ball(2.0, center=(0.5,), d=1)
    grid = GridSpec.cover(dom, 512)
    drift = DriftField.from_function(_CubeBump1(), grid, exterior_sup=0.0)
    mu_t = mu_theta(drift, theta=0.5, lam=1.0, q_exp=2.0, branch="parabolic")

    lam_lin_err = max(abs(lambda_of_mu(1.0, lambda l: 0.0, mu) - mu) / mu
                      for mu in (1e-3, 1.0, 1e3))
    M = 2.5
    lam_sqrt_err = max(
        abs(lambda_of_mu(0.0, lambda l: M, mu) - mu * mu / (M * M))
        / (mu * mu / (M * M)) for mu in (1e-3, 1.0, 1e3))

    K, nu = 1.0, 0.7
    Mb = 2.0
    kappa = K + nu + 1.0
    bounds_ok = True
    for mu in np.geomspace(1e-3, 1e3, 41):
        lam = lambda_of_mu(K, lambda l: nu * math.sqrt(l) + Mb, mu)
        if mu >= kappa * Mb * Mb:
            bounds_ok &= lam >= mu / kappa * (1 - 1e-9)
        else:
            bounds_ok &= lam >= mu * mu / (kappa ** 2 * Mb * Mb) * (1 - 1e-9)

    ok = (recon < 1e-12 and cap < 1e-12
          and abs(mu_t - 1.5) < 1e-6
          and lam_lin_err < 1e-10 and lam_sqrt_err < 1e-10
          and bounds_ok)
    assert report("8-resolvent-algebra", ok,
                  f"split recon {recon:.1e}; cap excess {cap:.1e}; "
                  f"mu_theta={mu_t:.8f} (want 1.5); lambda(mu) errs "
                  f"{lam_lin_err:.1e}/{lam_sqrt_err:.1e}; "
                  f"threshold bounds hold: {bounds_ok}")


# ---------------------------------------------------------------------------
# criterion 9: byte-identical reruns regardless of worker count


def test_criterion_9_determinism():
    """Per-path streams are keyed by (seed, index), so an ensemble is a pure
    function of its configuration; checking a 2000-path run across worker
    counts, batch splits and reruns pins the whole scheme (every larger run
    is an extension of this prefix, verified as well)."""
    configs = {
        "radial-occupation": SimConfig(
            sigma=radial_degenerate_sigma(0.5, RADIAL_SHIFT), b=None,
            domain=RADIAL_DOMAIN, dt=1e-3, n_paths=2000, seed=SEED,
            start=(0.0, 0.0)),
        "interval-exit": SimConfig(
            sigma=np.array([[SQRT2]]), b=None,
            domain=ball(1.0, center=(0.0,), d=1), dt=1e-4, n_paths=2000,
            seed=SEED),
        "disk-exit": SimConfig(
            sigma=SQRT2 * np.eye(2), b=None,
            domain=ball(1.0, center=(0.0, 0.0), d=2), dt=1e-4, n_paths=2000,
            seed=SEED),
    }
    ok = True
    notes = []
    for name, cfg in configs.items():
        f = BallIndicator(0.25, tuple(cfg.domain.x_center))
        runs = []
        for workers in (1, 2, 1):
            ens, (est,) = simulate_with_functionals(cfg, [f],
                                                    workers=workers)
            runs.append((ens, est))
        base_ens, base_est = runs[0]
        same = all(np.array_equal(e.exit_steps, base_ens.exit_steps)
                   and np.array_equal(e.x_final, base_ens.x_final)
                   and est.mean == base_est.mean
                   and est.stderr == base_est.stderr
                   for e, est in runs[1:])
        bigger = simulate_paths(
            sdemod.replace(cfg, n_paths=3000))
        prefix = np.array_equal(bigger.exit_steps[:2000],
                                base_ens.exit_steps)
        ok = ok and same and prefix
        notes.append(f"{name}: workers/rerun identical={same}, "
                     f"prefix stable={prefix}")
    assert report("9-determinism", ok, "; ".join(notes))
