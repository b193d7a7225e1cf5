"""End-to-end acceptance gate.

Each criterion prints a single PASS/FAIL line (visible with pytest -s, or in
the captured output on failure) before asserting.  The noiseless recovery
runs are shared by criteria 1, 2, and 8 through a module-scoped fixture;
the full module takes a few hours on one core.
"""

import numpy as np
import pytest

from robust_sosp import (
    CorruptionPlan,
    ExperimentConfig,
    OracleSuite,
    ProblemSpec,
    SolverParams,
    corrupt,
    covariance_bound_gradient,
    covariance_bound_hessian,
    find_sosp,
    generate_ground_truth,
    robust_mean_estimate,
    robust_oracles,
    run_experiment,
    SensingSample,
    sample_clean,
    sample_gradient,
    sample_hessian,
    sample_objective,
    stack_samples,
)

D, R, N = 10, 1, 4000
SPECTRUM = (1.0,)
GAMMA = 36.0
EPS = 0.05
STRATEGIES = ("random_replacement", "large_outliers", "counterexample")
SEEDS = tuple(range(10))


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE CRITERION {num}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


def _config(seed: int, strategy: str, eps: float = EPS, sigma: float = 0.0) -> ExperimentConfig:
    return ExperimentConfig.from_dict({
        "d": D, "r": R, "n": N, "spectrum": list(SPECTRUM), "sigma": sigma,
        "eps": eps, "strategy": strategy, "seed": seed, "iota": 1e-6,
    })


@pytest.fixture(scope="module")
def noiseless_runs():
    """10 seeds x 3 strategies of the full noiseless pipeline."""
    out = {}
    for strategy in STRATEGIES:
        out[strategy] = [
            (seed, run_experiment(_config(seed, strategy))) for seed in SEEDS
        ]
    return out


def test_criterion_1_exact_recovery_noiseless(noiseless_runs):
    details = []
    ok = True
    for strategy in STRATEGIES:
        errs = [rep.frob_error for _, rep in noiseless_runs[strategy]]
        hits = sum(e <= 1e-5 for e in errs)
        ok = ok and hits >= 9
        details.append(f"{strategy}: {hits}/10 runs with error <= 1e-5 "
                       f"(max {max(errs):.2e})")
    _verdict(1, ok, "; ".join(details))


def test_criterion_2_counterexample_regression(noiseless_runs):
    # rebuild the seed-0 counterexample instance exactly as run_experiment does
    ss = np.random.SeedSequence(0)
    truth_ss, data_ss, corrupt_ss, _ = ss.spawn(4)
    truth = generate_ground_truth(D, SPECTRUM, np.random.default_rng(truth_ss))
    clean = sample_clean(truth, N, 0.0, np.random.default_rng(data_ss))
    plan = CorruptionPlan(strategy="counterexample", eps=EPS)
    samples, _, _ = corrupt(clean, plan, truth, np.random.default_rng(corrupt_ss))
    spec = ProblemSpec(d=D, r=R, Gamma=GAMMA, sigma_r_star=1.0, eps=EPS)

    # (a) gradient-only baseline stalls: every sample gradient is exactly 0
    U0 = np.zeros((D, R))
    grads_zero = all(np.all(sample_gradient(U0, s) == 0.0) for s in samples)

    # (b) the naive mean of {y_i A_i} carries no signal
    A, y = stack_samples(samples)
    naive = np.einsum("n,nij->ij", y, A) / len(samples)
    m_norm = float(np.linalg.norm(truth.M_star, "fro"))
    cancelled = float(np.linalg.norm(naive, "fro")) <= 0.2 * m_norm

    # (c) the robust Hessian at 0 still sees the negative curvature
    H = robust_oracles(samples, EPS, spec).hess(np.zeros(D * R))
    lam = float(np.linalg.eigvalsh(H)[0])
    curvature = lam <= -1.0  # population value is -2 * sigma*_1 = -2

    # and the full pipeline recovers on these instances (criterion-1 runs)
    hits = sum(rep.frob_error <= 1e-5 for _, rep in noiseless_runs["counterexample"])
    _verdict(2, grads_zero and cancelled and curvature and hits >= 9,
             f"grads zero: {grads_zero}; naive-mean norm ratio "
             f"{np.linalg.norm(naive, 'fro') / m_norm:.3f} <= 0.2: {cancelled}; "
             f"robust lambda_min {lam:.3f} <= -1; recovery {hits}/10")


def test_criterion_3_noisy_error_scaling():
    kappa = GAMMA / 1.0
    sigma = 0.1 * R * GAMMA
    errs = {}
    for eps in (0.01, 0.04):
        errs[eps] = [run_experiment(_config(s, "random_replacement",
                                            eps=eps, sigma=sigma)).frob_error
                     for s in range(5)]
    bounds_ok = all(e <= 10 * kappa * sigma * np.sqrt(eps)
                    for eps, es in errs.items() for e in es)
    ratio = float(np.mean([b / a for a, b in zip(errs[0.01], errs[0.04])]))
    ratio_ok = 1.0 <= ratio <= 4.0

    # high-noise regime switches to the spectral branch
    sigma_hi = 2 * R * GAMMA
    spectral_ok = True
    spectral_errs = []
    for s in range(3):
        rep = run_experiment(_config(s, "random_replacement", eps=0.04, sigma=sigma_hi))
        spectral_errs.append(rep.frob_error)
        spectral_ok = spectral_ok and rep.branch == "spectral"
        spectral_ok = spectral_ok and rep.frob_error <= 8 * sigma_hi * np.sqrt(0.04)
    _verdict(3, bounds_ok and ratio_ok and spectral_ok,
             f"errors eps=0.01 {[f'{e:.3f}' for e in errs[0.01]]}, "
             f"eps=0.04 {[f'{e:.3f}' for e in errs[0.04]]}, mean ratio {ratio:.2f} "
             f"in [1, 4]: {ratio_ok}; spectral errors "
             f"{[f'{e:.1f}' for e in spectral_errs]} <= {8 * sigma_hi * 0.2:.1f}: "
             f"{spectral_ok}")


def _num_grad(U, s, h=1e-6):
    g = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        Up, Um = U.copy(), U.copy()
        Up[idx] += h
        Um[idx] -= h
        g[idx] = (sample_objective(Up, s) - sample_objective(Um, s)) / (2 * h)
    return g


def _num_hess(U, s, h=1e-4):
    d, r = U.shape
    H = np.zeros((d * r, d * r))
    for j, idx in enumerate(np.ndindex(*reversed(U.shape))):
        col, row = idx
        Up, Um = U.copy(), U.copy()
        Up[row, col] += h
        Um[row, col] -= h
        diff = _num_grad(Up, s, h) - _num_grad(Um, s, h)
        H[:, j] = diff.ravel(order="F") / (2 * h)
    return H


def test_criterion_4_derivative_exactness():
    rng = np.random.default_rng(42)
    worst_g, worst_h = 0.0, 0.0
    for _ in range(50):
        d = int(rng.integers(2, 6))
        r = int(rng.integers(1, min(3, d) + 1))
        s = SensingSample(A=rng.standard_normal((d, d)),
                          y=float(rng.standard_normal()))
        U = rng.standard_normal((d, r))
        g = sample_gradient(U, s)
        scale_g = max(1.0, float(np.abs(g).max()))
        worst_g = max(worst_g, float(np.abs(g - _num_grad(U, s)).max()) / scale_g)
        H = sample_hessian(U, s)
        scale_h = max(1.0, float(np.abs(H).max()))
        worst_h = max(worst_h, float(np.abs(H - _num_hess(U, s)).max()) / scale_h)
    ok = worst_g <= 1e-5 and worst_h <= 1e-5
    _verdict(4, ok, f"worst relative error: gradient {worst_g:.2e}, "
                    f"Hessian {worst_h:.2e} (limit 1e-5, 50 instances)")


def test_criterion_5_covariance_bounds():
    rng = np.random.default_rng(7)
    d, r, n = 4, 2, 100_000
    truth = generate_ground_truth(d, (1.0, 0.5), rng)
    gamma = 36.0
    worst_g, worst_h = 0.0, 0.0
    for sigma in (0.0, 0.5):
        for _ in range(20):
            U = rng.standard_normal((d, r))
            U *= np.sqrt(rng.uniform(0.05, 1.0) * gamma) / np.linalg.norm(U, 2)
            A = rng.standard_normal((n, d, d))
            y = np.einsum("nij,ij->n", A, truth.M_star)
            if sigma:
                y = y + sigma * rng.standard_normal(n)
            B = A + A.transpose(0, 2, 1)
            resid = np.einsum("nij,ij->n", A, U @ U.T) - y
            G = resid[:, None, None] * (B @ U)
            cloud = G.transpose(0, 2, 1).reshape(n, d * r)
            C = cloud - cloud.mean(0)
            mc_g = float(np.linalg.eigvalsh(C.T @ C / n)[-1])
            worst_g = max(worst_g, mc_g / covariance_bound_gradient(U, truth.M_star, sigma))
            BU = B @ U
            vbu = BU.transpose(0, 2, 1).reshape(n, d * r)
            H = np.zeros((n, d * r, d * r))
            for j in range(r):
                H[:, j * d:(j + 1) * d, j * d:(j + 1) * d] = resid[:, None, None] * B
            H += vbu[:, :, None] * vbu[:, None, :]
            hc = H.reshape(n, (d * r) ** 2)
            Ch = hc - hc.mean(0)
            mc_h = float(np.linalg.eigvalsh(Ch.T @ Ch / n)[-1])
            worst_h = max(worst_h, mc_h / covariance_bound_hessian(U, truth.M_star, sigma))
    # the gradient bound is attained in the rank-1 large-norm limit, so the
    # Monte-Carlo estimate gets a 5% finite-sample allowance
    ok = worst_g <= 1.05 and worst_h <= 1.05
    _verdict(5, ok, f"worst MC/bound ratio: gradient {worst_g:.4f}, "
                    f"Hessian {worst_h:.4f} (limit 1.05, n=1e5, 20 U x 2 noise levels)")


def test_criterion_6_robust_mean_contract():
    k, n = 10, 2000
    detail = []
    ok = True
    for eps in (0.02, 0.05, 0.1):
        err_hits, mass_ok = 0, True
        for seed in range(20):
            rng = np.random.default_rng(seed)
            mu = rng.standard_normal(k)
            pts = mu + rng.standard_normal((n, k))
            m = int(eps * n)
            u = rng.standard_normal(k)
            pts[:m] = mu + 100.0 * u / np.linalg.norm(u)
            clean_mean = pts[m:].mean(axis=0)
            est = robust_mean_estimate(pts, eps)
            if np.linalg.norm(est.mean - clean_mean) <= 4 * np.sqrt(eps):
                err_hits += 1
            mass_ok = mass_ok and est.weights[:m].sum() / est.weights.sum() <= 2 * eps
        ok = ok and err_hits >= 19 and mass_ok
        detail.append(f"eps={eps}: {err_hits}/20 within 4*sqrt(eps), "
                      f"outlier mass <= 2 eps: {mass_ok}")
    _verdict(6, ok, "; ".join(detail))


def test_criterion_7_solver_properties():
    # nonconvex double well: saddle at the origin, minima at x2 = +/- 1
    def f(x):
        return x[0] ** 2 - 0.5 * x[1] ** 2 + 0.25 * x[1] ** 4

    def grad(x):
        return np.array([2.0 * x[0], -x[1] + x[1] ** 3])

    def hess(x):
        return np.diag([2.0, -1.0 + 3.0 * x[1] ** 2])

    L_g, L_H = 12.0, 12.0
    params = SolverParams(eps_g=1e-3, eps_H=0.05, L_g=L_g, L_H=L_H,
                          max_iters=10_000, f_range=10.0, seed=3)
    x0 = np.array([1.0, 0.05])
    trace = find_sosp(x0, OracleSuite(grad=grad, hess=hess), params)
    decrease_ok, order_ok = True, True
    for rec in trace.records:
        pre = x0 if rec.index == 0 else trace.records[rec.index - 1].x
        if rec.kind == "gradient":
            decrease_ok = decrease_ok and (
                f(pre) - f(rec.x) >= rec.grad_norm ** 2 / (6 * L_g) - 1e-12)
        if rec.kind == "curvature":
            order_ok = order_ok and rec.grad_norm <= params.eps_g
    final = trace.x_final
    cert_ok = (np.linalg.norm(grad(final)) <= params.eps_g + 1e-9
               and np.linalg.eigvalsh(hess(final))[0] >= -params.eps_H - 1e-9)

    # pure saddle: first move is the curvature step with exact displacement
    def sf(x):
        return 0.5 * (x[0] ** 2 - x[1] ** 2)

    # one iteration is enough: the objective is unbounded below, so the
    # solver would otherwise ride the gradient out of any region
    sp = SolverParams(eps_g=0.1, eps_H=0.25, L_g=1.0, L_H=1.0,
                      max_iters=1, f_range=100.0, seed=0)
    strace = find_sosp(np.zeros(2),
                       OracleSuite(grad=lambda x: np.array([x[0], -x[1]]),
                                   hess=lambda x: np.diag([1.0, -1.0])), sp)
    first = strace.records[0]
    saddle_ok = (first.kind == "curvature"
                 and abs(abs(first.x[1]) - 2 * sp.eps_H / sp.L_H) <= 1e-12
                 and first.x[0] == 0.0)
    _verdict(7, decrease_ok and order_ok and cert_ok and saddle_ok,
             f"gradient-step decrease >= g^2/(6 L_g): {decrease_ok}; curvature "
             f"only at small gradient: {order_ok}; termination certificate: "
             f"{cert_ok}; saddle escape displacement 2 eps_H/L_H: {saddle_ok}")


def test_criterion_8_region_and_contraction(noiseless_runs):
    region_ok, contraction_ok = True, True
    radius = np.sqrt(1.0) / 3.0  # strict-saddle radius (1/3) sigma*_r^(1/2)
    worst_op2 = 0.0
    for strategy in STRATEGIES:
        for _, rep in noiseless_runs[strategy]:
            dists = []
            for row in rep.rows:
                if row["phase"] == "global":
                    op2 = row["opnorm_U"] ** 2
                    worst_op2 = max(worst_op2, op2)
                    region_ok = region_ok and op2 <= GAMMA + 1e-9
                elif row["phase"] == "refine":
                    dists.append(row["dist_opt"])
            inside = False
            for prev, cur in zip(dists, dists[1:]):
                if inside or prev <= radius:
                    inside = True
                    contraction_ok = contraction_ok and cur <= prev * (1 + 1e-9) + 1e-12
    _verdict(8, region_ok and contraction_ok,
             f"max ||U||_op^2 over global phases {worst_op2:.2f} <= {GAMMA}: "
             f"{region_ok}; refine distance monotone inside radius {radius:.3f}: "
             f"{contraction_ok}")
