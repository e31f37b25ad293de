import numpy as np
import pytest
from numpy.testing import assert_allclose

from lpigrad import (
    Dataset,
    InterpolationConfig,
    LPIGradient,
    OracleCallCounter,
    SampleGradientOracle,
    batch_weights,
    exact_full_gradient,
    grid_points,
    grid_size_for_accuracy,
    interpolate,
    lpi_gradient,
    minibatch_gradient,
    random_poly_gradient_problem,
    sup_norm_error,
)
from lpigrad.errors import DomainViolation, GridSizeOverflow
from lpigrad.oracles import default_probes, load_dataset_csv, save_dataset_csv


class LeastSquares(SampleGradientOracle):
    """g(x; w) = 2 x (w x - y) with fixed labels keyed by position."""

    p = 1
    d = 1

    def __init__(self, slope):
        self.slope = slope

    def gradient(self, points, theta):
        x = np.asarray(points, dtype=float)[:, 0]
        return (2 * x * (theta[0] * x - self.slope * x))[:, None]


class Fn(SampleGradientOracle):
    def __init__(self, f, d=1):
        self.f = f
        self.d = d
        self.p = 1

    def gradient(self, points, theta):
        return self.f(np.asarray(points, dtype=float))[:, None]


# --- dataset -----------------------------------------------------------------


def test_dataset_validates_margin():
    Dataset(np.array([[0.1], [0.9]]), None, 0.1)
    with pytest.raises(DomainViolation, match="point 1"):
        Dataset(np.array([[0.2], [0.95]]), None, 0.1)
    with pytest.raises(ValueError):
        Dataset(np.array([[0.5]]), None, 0.6)


def test_dataset_hash_depends_on_content():
    a = Dataset(np.array([0.2, 0.3]), np.array([1.0, 2.0]), 0.1)
    b = Dataset(np.array([0.2, 0.3]), np.array([1.0, 2.0]), 0.1)
    c = Dataset(np.array([0.2, 0.3]), np.array([1.0, 2.5]), 0.1)
    assert a.hash == b.hash != c.hash
    assert a.points.shape == (2, 1)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.uniform(0.05, 0.95, size=(10, 2)), rng.normal(size=10), 0.05)
    save_dataset_csv(ds, tmp_path / "d.csv")
    back = load_dataset_csv(tmp_path / "d.csv", 0.05)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_csv_rejection_names_first_bad_row(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x_1,label\n0.5,1\n0.3,2\n0.999,3\n0.0,4\n")
    with pytest.raises(DomainViolation, match="row 3"):
        load_dataset_csv(path, 0.01)
    path.write_text("a,b\n0.5,1\n")
    with pytest.raises(ValueError, match="header"):
        load_dataset_csv(path, 0.01)


# --- exact and minibatch gradients -------------------------------------------


def test_exact_gradient_hand_value():
    ds = Dataset(np.array([[0.5]]), None, 0.1)

    class G(SampleGradientOracle):
        p = 1
        d = 1

        def gradient(self, points, theta):
            # f = (w x - 1)^2 scaled so that x = 0.5 plays the role of x = 1, y = 1
            return (2 * (2 * points[:, 0]) * (theta[0] * 2 * points[:, 0] - 1.0))[:, None]

    c = OracleCallCounter()
    assert_allclose(exact_full_gradient(ds, [0.0], G(), c), [-2.0])
    assert c.calls == 1


def test_exact_gradient_vanishes_at_least_squares_optimum():
    prob = random_poly_gradient_problem(d=1, p=3, degree=2, n=50, seed=2)
    theta, _ = prob.optimal_parameter()
    assert np.max(np.abs(exact_full_gradient(prob.dataset, theta, prob))) <= 1e-10


def test_exact_gradient_invariant_under_duplication():
    prob = random_poly_gradient_problem(d=2, p=2, degree=1, n=30, seed=3)
    ds = prob.dataset
    twice = Dataset(np.vstack([ds.points, ds.points]), None, ds.margin)
    th = np.array([0.3, -1.2])
    assert_allclose(exact_full_gradient(twice, th, prob), exact_full_gradient(ds, th, prob), atol=1e-14)


def test_minibatch_full_batch_and_determinism():
    prob = random_poly_gradient_problem(d=1, p=2, degree=1, n=40, seed=5)
    ds, th = prob.dataset, np.array([0.5, 0.1])
    full = minibatch_gradient(ds, th, prob, ds.n, None, full_batch=True)
    np.testing.assert_array_equal(full, exact_full_gradient(ds, th, prob))
    a = minibatch_gradient(ds, th, prob, 7, np.random.default_rng(9))
    b = minibatch_gradient(ds, th, prob, 7, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        minibatch_gradient(ds, th, prob, 41, np.random.default_rng(0))


def test_minibatch_is_unbiased():
    ds = Dataset(np.array([[0.2], [0.5], [0.9]]), None, 0.1)
    oracle = Fn(lambda x: x[:, 0] ** 2)
    rng = np.random.default_rng(0)
    c = OracleCallCounter()
    draws = np.array([minibatch_gradient(ds, [0.0], oracle, 1, rng, c)[0] for _ in range(100_000)])
    exact = exact_full_gradient(ds, [0.0], oracle)[0]
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - exact) <= 3 * se
    assert c.calls == 100_000


# --- interpolated gradient ---------------------------------------------------


def _lpi_setup(prob, m=40, h=0.1, l=1):
    cfg = InterpolationConfig(d=prob.d, m=m, h=h, l=l)
    grid = grid_points(cfg)
    return cfg, grid, batch_weights(prob.dataset.points, grid, cfg)


def test_lpi_gradient_constant_in_data():
    prob = random_poly_gradient_problem(d=1, p=2, degree=0, n=60, seed=1)
    cfg, grid, w = _lpi_setup(prob)
    th = np.array([0.7, -0.4])
    assert_allclose(lpi_gradient(prob.dataset, th, prob, grid, w), exact_full_gradient(prob.dataset, th, prob), atol=1e-8)


@pytest.mark.parametrize("d,l", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_lpi_gradient_polynomial_in_data(d, l):
    prob = random_poly_gradient_problem(d=d, p=3, degree=l, n=80, seed=d + l)
    cfg, grid, w = _lpi_setup(prob, m=20, h=0.1, l=l)
    th = np.random.default_rng(0).normal(size=3)
    assert_allclose(lpi_gradient(prob.dataset, th, prob, grid, w), exact_full_gradient(prob.dataset, th, prob), atol=1e-8)


def test_lpi_gradient_single_point_equals_interpolate():
    ds = Dataset(np.array([[0.42]]), None, 0.1)
    oracle = Fn(lambda x: np.sin(5 * x[:, 0]))
    cfg = InterpolationConfig(d=1, m=30, h=0.1, l=1)
    grid = grid_points(cfg)
    w = batch_weights(ds.points, grid, cfg)
    expect = interpolate(oracle.gradient(grid.points, None)[:, 0], w[0])
    assert lpi_gradient(ds, None, oracle, grid, w)[0] == pytest.approx(expect, abs=1e-12)


def test_lpi_gradient_matches_average_of_interpolants():
    prob = random_poly_gradient_problem(d=2, p=2, degree=3, n=30, seed=8)
    cfg, grid, w = _lpi_setup(prob, m=15, h=0.1, l=1)
    th = np.array([0.2, 0.9])
    G = prob.gradient(grid.points, th)
    avg = np.mean([interpolate(G, w[i]) for i in range(len(w))], axis=0)
    assert_allclose(lpi_gradient(prob.dataset, th, prob, grid, w), avg, atol=1e-12)


def test_lpi_gradient_is_linear_in_oracle_values():
    ds = Dataset(np.random.default_rng(0).uniform(0.1, 0.9, size=(20, 1)), None, 0.1)
    cfg = InterpolationConfig(d=1, m=30, h=0.1, l=1)
    grid = grid_points(cfg)
    w = batch_weights(ds.points, grid, cfg)
    f1, f2 = Fn(lambda x: np.cos(3 * x[:, 0])), Fn(lambda x: x[:, 0] ** 3)
    comb = Fn(lambda x: 2 * np.cos(3 * x[:, 0]) - 0.5 * x[:, 0] ** 3)
    lhs = lpi_gradient(ds, None, comb, grid, w)
    rhs = 2 * lpi_gradient(ds, None, f1, grid, w) - 0.5 * lpi_gradient(ds, None, f2, grid, w)
    assert_allclose(lhs, rhs, atol=1e-12)


def test_oracle_accounting():
    prob = random_poly_gradient_problem(d=2, p=2, degree=1, n=37, seed=0)
    cfg = InterpolationConfig(d=2, m=12, h=0.1, l=1)
    provider = LPIGradient(prob, cfg)
    c = OracleCallCounter()
    for _ in range(3):
        provider(np.zeros(2), c)
    assert c.calls == 3 * 144
    c = OracleCallCounter()
    for _ in range(4):
        exact_full_gradient(prob.dataset, np.zeros(2), prob, c)
    assert c.calls == 4 * 37
    with pytest.raises(ValueError):
        c.add(-1)


def test_lpi_gradient_rejects_points_outside_bandwidth():
    ds = Dataset(np.array([[0.1], [0.5]]), None, 0.05)
    cfg = InterpolationConfig(d=1, m=40, h=0.15, l=1)
    grid = grid_points(cfg)
    oracle = Fn(lambda x: x[:, 0])
    with pytest.raises(DomainViolation):
        lpi_gradient(ds, None, oracle, grid, [])


# --- sup-norm error ----------------------------------------------------------


def test_sup_norm_error_vanishes_for_reproducible_functions():
    cfg = InterpolationConfig(d=1, m=50, h=0.1, l=1)
    grid = grid_points(cfg)
    assert sup_norm_error(Fn(lambda x: np.full(len(x), 2.0)), None, grid, cfg) <= 1e-8
    assert sup_norm_error(Fn(lambda x: 3 * x[:, 0] - 1), None, grid, cfg) <= 1e-8


def test_sup_norm_error_m50_to_m100_does_not_increase():
    sine = Fn(lambda x: np.sin(6 * x[:, 0]))
    errs = []
    for m in (50, 100):
        cfg = InterpolationConfig(d=1, m=m, h=0.1, l=1)
        errs.append(sup_norm_error(sine, None, grid_points(cfg), cfg))
    assert errs[1] <= errs[0]


def test_sup_norm_error_non_increasing_over_resolution_sequence():
    sine = Fn(lambda x: np.sin(6 * x[:, 0]))
    errs = []
    for m in (25, 50, 100, 200):
        cfg = InterpolationConfig(d=1, m=m, h=0.1, l=1)
        errs.append(sup_norm_error(sine, None, grid_points(cfg), cfg))
    assert all(b <= a for a, b in zip(errs, errs[1:])), errs


def test_default_probes_lie_in_admissible_box():
    cfg = InterpolationConfig(d=2, m=10, h=0.2, l=1)
    pts = default_probes(cfg)
    assert pts.shape == (512, 2)
    assert pts.min() >= 0.2 and pts.max() <= 0.8


# --- grid sizing -------------------------------------------------------------


def test_grid_size_for_accuracy():
    assert grid_size_for_accuracy(0.01, 2, 1) == 10
    assert grid_size_for_accuracy(1.0, 3.7, 1) == 1
    assert grid_size_for_accuracy(0.01, 1, 1, C=2) == 200
    with pytest.raises(GridSizeOverflow):
        grid_size_for_accuracy(1e-12, 1, 1)
    with pytest.raises(GridSizeOverflow):
        grid_size_for_accuracy(1e-4, 1, 2)
    with pytest.raises(ValueError):
        grid_size_for_accuracy(0.0, 1, 1)
