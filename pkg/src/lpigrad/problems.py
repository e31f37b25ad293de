"""Test problems whose per-sample gradients are defined on the whole data domain."""

import json
import math
from collections import OrderedDict

import numpy as np

from .errors import DomainViolation
from .lpi_core import basis_vector, enumerate_multi_indices
from .oracles import Dataset, SampleGradientOracle, load_dataset_csv, save_dataset_csv
from .optimizers.schedules import SmoothnessConstants

LABEL_RULES = ("noiseless_model", "noisy_model")


def _theta(theta):
    return np.asarray(theta, dtype=np.float64).reshape(-1)


class LinearRegressionProblem(SampleGradientOracle):
    """One-dimensional least squares ``F(w) = mean((w x_i - y_i)^2)``.

    Labels were generated as ``y = w_init x + noise``. Off the dataset (e.g. at
    grid points) the label is the model value ``w_init x``, plus deterministic
    per-point noise when ``label_rule == "noisy_model"``.
    """

    p = 1
    d = 1

    def __init__(self, dataset, w_init, noise_std, seed, label_rule="noiseless_model"):
        if dataset.d != 1 or dataset.labels is None:
            raise ValueError("linear regression needs a labelled 1-D dataset")
        if label_rule not in LABEL_RULES:
            raise ValueError(f"unknown label rule {label_rule!r}")
        self.dataset = dataset
        self.w_init = float(w_init)
        self.noise_std = float(noise_std)
        self.seed = int(seed)
        self.label_rule = label_rule
        x = dataset.points[:, 0]
        order = np.argsort(x, kind="stable")
        self._sorted_x = x[order]
        self._sorted_y = dataset.labels[order]
        self._label_cache = OrderedDict()

    @property
    def x(self):
        return self.dataset.points[:, 0]

    @property
    def y(self):
        return self.dataset.labels

    def _off_data_noise(self, pts):
        bits = pts.view(np.uint64)
        return np.array(
            [np.random.default_rng([self.seed, 0x6C6162656C, int(b)]).standard_normal() for b in bits]
        ) * self.noise_std

    def labels_at(self, pts):
        """Label at each 1-D point: stored label on the dataset, model label elsewhere."""
        pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1)
        key = pts.tobytes()
        hit = self._label_cache.get(key)
        if hit is not None:
            return hit
        pos = np.clip(np.searchsorted(self._sorted_x, pts), 0, len(self._sorted_x) - 1)
        on_data = self._sorted_x[pos] == pts
        labels = self.w_init * pts
        if self.label_rule == "noisy_model" and self.noise_std > 0 and (~on_data).any():
            labels[~on_data] += self._off_data_noise(pts[~on_data])
        labels[on_data] = self._sorted_y[pos[on_data]]
        labels.setflags(write=False)
        self._label_cache[key] = labels
        if len(self._label_cache) > 16:
            self._label_cache.popitem(last=False)
        return labels

    def gradient(self, points, theta):
        pts = np.asarray(points, dtype=np.float64).reshape(-1)
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise DomainViolation("linear-regression gradients are defined on [0, 1] only")
        w = _theta(theta)[0]
        lab = self.labels_at(pts)
        return (2.0 * pts * (w * pts - lab))[:, None]

    def sample_loss(self, point, theta):
        x = float(np.asarray(point).reshape(-1)[0])
        w = _theta(theta)[0]
        lab = self.labels_at(np.array([x]))[0]
        return (w * x - lab) ** 2

    def objective(self, theta):
        w = _theta(theta)[0]
        r = w * self.x - self.y
        return float(np.mean(r * r))

    def optimal_parameter(self):
        """Closed-form ``w* = sum x y / sum x^2`` and ``F(w*)``."""
        sxx = float(np.sum(self.x * self.x))
        if sxx <= 0:
            raise ValueError("sum of squared features must be positive")
        w = float(np.sum(self.x * self.y)) / sxx
        return np.array([w]), self.objective([w])

    def smoothness_constants(self, eta=2.0, theta_range=(-1.0, 2.0), n_probe=257):
        """``L1 = 2 max x^2``, ``mu = 2 mean x^2`` and a probed data-Hoelder constant.

        ``L2`` is the largest second difference quotient of ``g(.; w)`` over a
        uniform probe grid in [0, 1] and ``w`` at the ends of ``theta_range``
        (``g`` is affine in ``w``, so the ends dominate).
        """
        x = self.x
        L1 = 2.0 * float(np.max(x * x))
        mu = 2.0 * float(np.mean(x * x))
        t = np.linspace(0.0, 1.0, n_probe)
        step = t[1] - t[0]
        L2 = 0.0
        for w in theta_range:
            g = self.gradient(t[:, None], [w])[:, 0]
            second = np.abs(g[2:] - 2.0 * g[1:-1] + g[:-2]) / step**2
            L2 = max(L2, float(second.max()))
        return SmoothnessConstants(L1=L1, L2=L2, eta=eta, mu=mu)

    def sidecar(self):
        return {
            "w_init": self.w_init,
            "noise_std": self.noise_std,
            "seed": self.seed,
            "label_rule": self.label_rule,
            "margin": self.dataset.margin,
        }

    def save(self, csv_path, json_path):
        save_dataset_csv(self.dataset, csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path, json_path):
        with open(json_path) as fh:
            meta = json.load(fh)
        ds = load_dataset_csv(csv_path, meta["margin"])
        return cls(ds, meta["w_init"], meta["noise_std"], meta["seed"], meta.get("label_rule", "noiseless_model"))


def generate_linear_regression(n=1000, margin=0.01, noise_std=0.05, seed=0, label_rule="noiseless_model"):
    """Synthetic problem: ``x ~ U[margin, 1-margin]``, ``w_init ~ U(0, 1)``, ``y = w_init x + N(0, noise_std^2)``."""
    if n < 1 or not 0 < margin < 0.5:
        raise ValueError("need n >= 1 and margin in (0, 1/2)")
    rng = np.random.default_rng(seed)
    w_init = rng.uniform(0.0, 1.0)
    x = rng.uniform(margin, 1.0 - margin, size=n)
    noise = rng.normal(0.0, noise_std, size=n) if noise_std > 0 else np.zeros(n)
    y = w_init * x + noise
    return LinearRegressionProblem(Dataset(x[:, None], y, margin), w_init, noise_std, seed, label_rule)


class PolyGradientProblem(SampleGradientOracle):
    """Separable quadratic loss with polynomial dependence on the data.

    ``f(x; theta) = sum_i a_i(x) theta_i^2 / 2 - b_i(x) theta_i`` so that
    ``g_i(x; theta) = a_i(x) theta_i - b_i(x)``, a polynomial in ``x`` of total
    degree at most ``degree``. Coefficient tables have shape ``(p, M)`` over
    :func:`enumerate_multi_indices` of ``(d, degree)``.
    """

    def __init__(self, dataset, degree, a_coef, b_coef):
        self.dataset = dataset
        self.d = dataset.d
        self.degree = int(degree)
        self.indices = enumerate_multi_indices(self.d, self.degree)
        self.a_coef = np.asarray(a_coef, dtype=np.float64)
        self.b_coef = np.asarray(b_coef, dtype=np.float64)
        if self.a_coef.shape != self.b_coef.shape or self.a_coef.shape[1] != len(self.indices):
            raise ValueError("coefficient tables must both have shape (p, M)")
        self.p = self.a_coef.shape[0]

    def _monomials(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        # plain monomials x^s (basis_vector divides by s!)
        return basis_vector(pts, self.indices) / self.indices.inv_factorials

    def _ab(self, points):
        mono = self._monomials(points)
        return mono @ self.a_coef.T, mono @ self.b_coef.T

    def gradient(self, points, theta):
        a, b = self._ab(points)
        return a * _theta(theta)[None, :] - b

    def sample_loss(self, point, theta):
        a, b = self._ab(np.asarray(point, dtype=np.float64).reshape(1, self.d))
        t = _theta(theta)
        return float(np.sum(0.5 * a[0] * t * t - b[0] * t))

    def objective(self, theta):
        a, b = self._ab(self.dataset.points)
        t = _theta(theta)
        return float(np.mean(np.sum(0.5 * a * t * t - b * t, axis=1)))

    def optimal_parameter(self):
        a, b = self._ab(self.dataset.points)
        theta = b.mean(axis=0) / a.mean(axis=0)
        return theta, self.objective(theta)

    def smoothness_constants(self):
        a, _ = self._ab(self.dataset.points)
        L1 = float(a.max())
        mu = float(a.mean(axis=0).min())
        # degree-l polynomials have constant l-th derivatives
        return SmoothnessConstants(L1=L1, L2=0.0, eta=float(self.degree + 1), mu=mu)


def random_poly_gradient_problem(d=1, p=2, degree=1, n=200, margin=0.1, seed=0):
    """Random :class:`PolyGradientProblem` with ``a_i(x) >= 1/2`` on the unit cube."""
    rng = np.random.default_rng(seed)
    M = math.comb(degree + d, d)
    a = rng.uniform(-1.0, 1.0, size=(p, M))
    if M > 1:
        a[:, 1:] *= 0.5 / np.abs(a[:, 1:]).sum(axis=1, keepdims=True)
    a[:, 0] = 1.0
    b = rng.uniform(-1.0, 1.0, size=(p, M))
    pts = rng.uniform(margin, 1.0 - margin, size=(n, d))
    return PolyGradientProblem(Dataset(pts, None, margin), degree, a, b)
