import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import REF_INIT, reference_interp
from lpigrad import (
    Dataset,
    ExactGradient,
    InnerStall,
    InterpolationConfig,
    NonFinite,
    OracleCallCounter,
    PolyGradientProblem,
    Trace,
    catalyst_run,
    fgm_run,
    fgm_y_step,
    gd_run,
    generate_linear_regression,
    inexact_sandwich_check,
    lpi_gd_run,
    random_poly_gradient_problem,
    sgd_run,
    sup_norm_error,
)


def half_square(n=5):
    """F(theta) = |theta|^2 / 2 in two parameters."""
    ds = Dataset(np.linspace(0.2, 0.8, n), None, 0.1)
    return PolyGradientProblem(ds, 0, np.ones((2, 1)), np.zeros((2, 1)))


# --- GD / SGD ----------------------------------------------------------------


def test_gd_single_step_on_half_square():
    t = gd_run(half_square(), [0.7, -2.0], K=1)
    assert_allclose(t.thetas[-1], [0.0, 0.0], atol=1e-15)


def test_zero_iterations_record_only_start(ref_problem, ref_lpi):
    for t in (
        gd_run(ref_problem, [0.4], 0),
        sgd_run(ref_problem, [0.4], 0, step=1.0),
        lpi_gd_run(ref_problem, [0.4], None, 0, gradient=ref_lpi(100)),
    ):
        assert len(t) == 1 and t.final.k == 0 and t.final.oracle_calls == 0


def test_gd_linear_contraction():
    prob = generate_linear_regression(n=300, seed=12)
    c = prob.smoothness_constants()
    w_star = prob.optimal_parameter()[0][0]
    d = np.abs(gd_run(prob, [1.7], 50).thetas[:, 0] - w_star)
    # one ulp of theta shifts a ratio by ~1e-17 / d; keep d where that is below the slack
    resolved = d[:-1] > 1e-5
    assert resolved.sum() >= 20
    ratios = d[1:][resolved] / d[:-1][resolved]
    assert np.all(ratios <= 1 - c.mu / c.L1 + 1e-10)


def test_gd_oracle_accounting(ref_problem):
    t = gd_run(ref_problem, [0.0], 7, step=1.0)
    assert list(t.oracle_calls) == [1000 * k for k in range(8)]


def test_sgd_full_batch_equals_gd(ref_problem):
    g = gd_run(ref_problem, [0.9], 50, step=1.0)
    s = sgd_run(ref_problem, [0.9], 50, step=1.0, full_batch=True)
    assert np.max(np.abs(g.thetas - s.thetas)) <= 1e-12


def test_sgd_is_deterministic_given_seed(ref_problem):
    a = sgd_run(ref_problem, [0.4], 30, step=1.0, seed=5)
    b = sgd_run(ref_problem, [0.4], 30, step=1.0, seed=5)
    np.testing.assert_array_equal(a.thetas, b.thetas)
    c = sgd_run(ref_problem, [0.4], 30, step=1.0, seed=6)
    assert not np.array_equal(a.thetas, c.thetas)


def test_sgd_reference_setup_close_to_gd(ref_problem):
    g = gd_run(ref_problem, [REF_INIT], 200, step=1.0)
    s = sgd_run(ref_problem, [REF_INIT], 200, step=1.0, batch_size=500)
    assert abs(s.final.objective - g.final.objective) <= 0.1 * g.final.objective
    assert s.final.oracle_calls == 200 * 500


def test_divergence_raises_nonfinite(ref_problem):
    with pytest.raises(NonFinite):
        gd_run(ref_problem, [0.4], 200, step=50.0)


# --- LPI-GD ------------------------------------------------------------------


def test_lpi_gd_equals_gd_for_polynomial_data():
    prob = random_poly_gradient_problem(d=2, p=2, degree=1, n=60, seed=4)
    cfg = InterpolationConfig(d=2, m=20, h=0.1, l=1)
    a = lpi_gd_run(prob, [1.0, -1.0], cfg, 30)
    b = gd_run(prob, [1.0, -1.0], 30)
    assert np.max(np.abs(a.thetas - b.thetas)) <= 1e-6
    assert list(a.oracle_calls) == [400 * k for k in range(31)]


def test_lpi_gd_reference_objective_non_increasing(ref_problem, ref_lpi):
    F = lpi_gd_run(ref_problem, [REF_INIT], None, 200, step=1.0, gradient=ref_lpi(500)).objectives
    assert np.all(np.diff(F[1:]) <= 0)


def test_lpi_gd_reference_close_to_gd(ref_problem, ref_lpi):
    t = lpi_gd_run(ref_problem, [REF_INIT], None, 200, step=1.0, gradient=ref_lpi(500))
    g = gd_run(ref_problem, [REF_INIT], 200, step=1.0)
    assert t.final.objective <= 1.1 * g.final.objective


def test_lpi_gd_uses_weight_cache(tmp_path, ref_problem):
    cfg = reference_interp(200)
    a = lpi_gd_run(ref_problem, [0.2], cfg, 5, cache_dir=tmp_path)
    assert len(list(tmp_path.iterdir())) == 1
    b = lpi_gd_run(ref_problem, [0.2], cfg, 5, cache_dir=tmp_path)
    np.testing.assert_array_equal(a.thetas, b.thetas)


# --- reduction identities ----------------------------------------------------


def test_fixed_momentum_zero_is_lpi_gd(ref_problem, ref_lpi):
    a = fgm_run(ref_problem, [0.8], None, mode="fixed_momentum", momentum=0.0, K=50, step=1.0, gradient=ref_lpi(250))
    b = lpi_gd_run(ref_problem, [0.8], None, 50, step=1.0, gradient=ref_lpi(250))
    assert np.max(np.abs(a.thetas - b.thetas)) <= 1e-12


def test_fixed_beta_zero_without_curvature_is_lpi_gd(ref_problem, ref_lpi):
    a = catalyst_run(ref_problem, [0.8], None, 50, mode="fixed_beta", beta=0.0, kappa=0.0, step=1.0, gradient=ref_lpi(250))
    b = lpi_gd_run(ref_problem, [0.8], None, 50, step=1.0, gradient=ref_lpi(250))
    assert np.max(np.abs(a.thetas - b.thetas)) <= 1e-12


# --- Catalyst ----------------------------------------------------------------


@pytest.mark.parametrize("eps_target", [1e-4, 1e-6, 1e-8])
def test_catalyst_theoretical_converges(eps_target):
    prob = generate_linear_regression(n=1000, margin=0.01, noise_std=0.0, seed=3)
    c = prob.smoothness_constants()
    _, f_star = prob.optimal_parameter()
    gap0 = prob.objective([REF_INIT]) - f_star
    # outer budget from the linear rate 18 sigma (1 - rho)^(k+1) gap0 with rho = 1 / (3 sqrt(sigma))
    rho = 1 / (3 * math.sqrt(c.sigma))
    K = math.ceil(math.log(eps_target / (18 * c.sigma * gap0)) / math.log(1 - rho))
    t = catalyst_run(prob, [REF_INIT], reference_interp(500), K, mode="theoretical")
    assert t.final.objective - f_star <= eps_target
    assert len(t.extras["inner_iterations"]) == K


def test_catalyst_inner_stall(ref_problem, ref_lpi):
    with pytest.raises(InnerStall):
        catalyst_run(ref_problem, [REF_INIT], None, 5, mode="theoretical", max_inner=0, gradient=ref_lpi(100))


def test_catalyst_reference_parity(ref_problem, ref_lpi):
    c = catalyst_run(ref_problem, [REF_INIT], None, 200, mode="fixed_beta", beta=0.99, step=1.0, gradient=ref_lpi(500))
    l = lpi_gd_run(ref_problem, [REF_INIT], None, 200, step=1.0, gradient=ref_lpi(500))
    assert abs(c.final.objective - l.final.objective) <= 1e-3 * l.final.objective


# --- fast gradient method ----------------------------------------------------


@pytest.mark.parametrize("eps_target", [1e-3, 1e-6, 1e-9])
def test_fgm_theoretical_with_exact_gradients(eps_target):
    prob = generate_linear_regression(n=1000, margin=0.01, noise_std=0.05, seed=3)
    _, f_star = prob.optimal_parameter()
    exact = ExactGradient(prob)
    t = fgm_run(prob, [REF_INIT], None, mode="theoretical", eps_target=eps_target, gradient=exact)
    L = t.config["L"]
    y_K = fgm_y_step(t.thetas[-1], exact(t.thetas[-1]), L)
    assert prob.objective(y_K) - f_star <= eps_target


def test_fgm_theoretical_history_invariants(ref_problem, ref_lpi):
    t = fgm_run(ref_problem, [REF_INIT], None, mode="theoretical", K=25, gradient=ref_lpi(500))
    ex = t.extras
    L, mu, th0 = t.config["L"], t.config["mu"], np.array([REF_INIT])
    assert ex["alpha"][0] == pytest.approx(L / (L - mu))
    for k, z in enumerate(ex["z"]):
        a, th, g = ex["alpha"][: k + 1], ex["theta"][: k + 1], ex["g"][: k + 1]
        grad_H = L * (z - th0) + sum(ai * (gi + mu * (z - ti)) for ai, ti, gi in zip(a, th, g))
        assert np.max(np.abs(grad_H)) <= 1e-10
        assert 0 < ex["tau"][k] < 1
    assert np.all(np.diff(ex["A"]) > 0)


def test_fgm_momentum_faster_than_lpi_gd_on_reference(ref_problem, ref_lpi):
    _, f_star = ref_problem.optimal_parameter()
    f = fgm_run(ref_problem, [REF_INIT], None, momentum=0.2, K=200, step=1.0, gradient=ref_lpi(500))
    l = lpi_gd_run(ref_problem, [REF_INIT], None, 200, step=1.0, gradient=ref_lpi(500))
    thr = f_star + 1e-3 * (l.objectives[0] - f_star)
    assert f.iterations_to(thr) is not None
    assert l.iterations_to(thr) is None or f.iterations_to(thr) < l.iterations_to(thr)


@pytest.mark.parametrize("seed", range(10))
def test_fgm_momentum_never_slower_than_lpi_gd(seed, ref_lpi):
    prob = generate_linear_regression(n=1000, margin=0.01, noise_std=0.05, seed=seed)
    from lpigrad import LPIGradient

    grad = LPIGradient(prob, reference_interp(500))
    _, f_star = prob.optimal_parameter()
    f = fgm_run(prob, [REF_INIT], None, momentum=0.2, K=200, step=1.0, gradient=grad)
    l = lpi_gd_run(prob, [REF_INIT], None, 200, step=1.0, gradient=grad)
    thr = f_star + 1e-3 * (l.objectives[0] - f_star)
    kf, kl = f.iterations_to(thr), l.iterations_to(thr)
    if kl is not None:
        assert kf is not None and kf <= kl


def test_fgm_requires_budget(ref_problem, ref_lpi):
    with pytest.raises(ValueError):
        fgm_run(ref_problem, [0.4], None, mode="fixed_momentum", gradient=ref_lpi(100))
    with pytest.raises(ValueError):
        fgm_run(ref_problem, [0.4], None, mode="theoretical", gradient=ref_lpi(100))


# --- inexact-oracle sandwich -------------------------------------------------


def test_sandwich_exact_gradients_no_violations(ref_problem):
    c = ref_problem.smoothness_constants()
    rng = np.random.default_rng(0)
    pairs = rng.uniform(-1, 2, size=(100, 2, 1))
    exact = ExactGradient(ref_problem)
    rep = inexact_sandwich_check(ref_problem, pairs, exact, c.L1, c.mu, 0.0)
    assert rep.passed and rep.n_pairs == 100


def test_sandwich_detects_biased_gradient():
    # F(w) = w^2 / 2 with mu = L = 1; bias b breaks the lower bound once |d| b > |d|^2 / 2
    ds = Dataset(np.array([0.5]), None, 0.1)
    prob = PolyGradientProblem(ds, 0, np.ones((1, 1)), np.zeros((1, 1)))
    b = 0.3
    biased = lambda th: ExactGradient(prob)(th) + b  # noqa: E731
    ok = inexact_sandwich_check(prob, [([0.0], [0.5])], biased, 1.0, 1.0, 0.0)
    # d = -0.5: G = 0.125 + 0.15 exceeds the upper bound L/2 d^2 = 0.125
    assert not ok.passed
    bad = inexact_sandwich_check(prob, [([1.0], [0.0])], biased, 1.0, 1.0, 0.0)
    # d = 1: G = 0.5 - 0.3 = 0.2 < mu/2 = 0.5
    assert bad.violations and bad.violations[0][0] == 0
    fine = inexact_sandwich_check(prob, [([1.0], [0.0])], ExactGradient(prob), 1.0, 1.0, 0.0)
    assert fine.passed


def test_sandwich_lpi_reference(ref_problem, ref_lpi):
    c = ref_problem.smoothness_constants()
    grad = ref_lpi(500)
    rng = np.random.default_rng(1)
    pairs = rng.uniform(-1, 2, size=(50, 2, 1))
    errs = [sup_norm_error(ref_problem, t2, grad.grid, grad.config, dataset=ref_problem.dataset) for _, t2 in pairs]
    dmax = max(float(np.linalg.norm(t1 - t2)) for t1, t2 in pairs)
    rep = inexact_sandwich_check(ref_problem, pairs, grad, c.L1, c.mu, max(errs) * dmax)
    assert rep.passed


# --- traces ------------------------------------------------------------------


def test_trace_round_trips(tmp_path, ref_problem):
    t = sgd_run(ref_problem, [0.1], 12, step=1.0, seed=2)
    t.to_csv(tmp_path / "t.csv")
    back = Trace.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.objectives, t.objectives)
    np.testing.assert_array_equal(back.thetas, t.thetas)
    np.testing.assert_array_equal(back.oracle_calls, t.oracle_calls)
    t.to_json(tmp_path / "t.json")
    j = Trace.from_json(tmp_path / "t.json")
    np.testing.assert_array_equal(j.objectives, t.objectives)
    assert j.config["method"] == "sgd" and j.seed == 2


def test_trace_enforces_monotone_records():
    t = Trace()
    t.append(0, [0.0], 1.0, 0, 0.0)
    with pytest.raises(ValueError):
        t.append(0, [0.0], 1.0, 0, 0.0)
    with pytest.raises(ValueError):
        t.append(1, [0.0], 1.0, -1, 0.0)


def test_counter_shared_across_runs(ref_problem):
    c = OracleCallCounter()
    gd_run(ref_problem, [0.4], 3, step=1.0, counter=c)
    gd_run(ref_problem, [0.4], 2, step=1.0, counter=c)
    assert c.calls == 5000
