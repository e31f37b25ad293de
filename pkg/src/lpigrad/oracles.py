"""Gradient oracles and oracle-call accounting.

One oracle call is the evaluation of all ``p`` partial derivatives of the
per-sample loss at one data-space point for one parameter vector. Exact full
gradients therefore cost ``n`` calls, minibatches ``b`` calls, and an
interpolated (LPI) gradient ``m**d`` calls regardless of ``n``.
"""

import csv
import hashlib
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .errors import DomainViolation, GridSizeOverflow
from .lpi_core import (
    WeightTable,
    batch_weights,
    cache_filename,
    cache_key,
    check_domain,
    grid_points,
    load_weight_table,
    save_weight_table,
)

DEFAULT_MAX_GRID = 10**7
N_LOW_DISCREPANCY_PROBES = 512


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` points in ``[margin, 1 - margin]^d`` with optional scalar labels."""

    points: np.ndarray
    labels: np.ndarray | None
    margin: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")
        if not 0.0 < self.margin < 0.5:
            raise ValueError(f"margin must lie in (0, 1/2), got {self.margin}")
        bad = np.any((pts < self.margin) | (pts > 1.0 - self.margin), axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise DomainViolation(f"point {i} = {pts[i].tolist()} lies outside [{self.margin}, {1 - self.margin}]^d")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.float64).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError(f"{lab.shape[0]} labels for {pts.shape[0]} points")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @cached_property
    def hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        if self.labels is not None:
            h.update(b"labels")
            h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(repr(float(self.margin)).encode())
        return h.hexdigest()


def load_dataset_csv(path, margin):
    """Read a dataset from CSV with header ``x_1,...,x_d[,label]``.

    Raises
    ------
    DomainViolation
        Naming the first data row (1-based, header excluded) outside
        ``[margin, 1 - margin]^d``.
    ValueError
        On a malformed header or row.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        has_label = bool(header) and header[-1] == "label"
        feat = header[:-1] if has_label else header
        expected = [f"x_{j}" for j in range(1, len(feat) + 1)]
        if not feat or feat != expected:
            raise ValueError(f"{path}: header must be x_1..x_d[,label], got {header}")
        points, labels = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}: row {row_no} is not numeric: {row}") from None
            x = vals[: len(feat)]
            if any(not (margin <= v <= 1.0 - margin) for v in x):
                raise DomainViolation(f"{path}: row {row_no} = {x} lies outside [{margin}, {1 - margin}]^d")
            points.append(x)
            if has_label:
                labels.append(vals[-1])
    if not points:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(points), np.array(labels) if has_label else None, margin)


def save_dataset_csv(ds, path):
    d = ds.d
    header = [f"x_{j}" for j in range(1, d + 1)] + (["label"] if ds.labels is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = list(ds.points[i])
            if ds.labels is not None:
                row.append(ds.labels[i])
            w.writerow([f"{v:.17g}" for v in row])


class SampleGradientOracle:
    """Per-sample gradient ``g(y; theta)`` evaluable anywhere in ``[0, 1]^d``.

    Subclasses implement :meth:`gradient`. Evaluation must be deterministic.
    """

    p: int
    d: int

    def gradient(self, points, theta):
        """Gradients at ``points`` (shape ``(k, d)``); returns shape ``(k, p)``."""
        raise NotImplementedError

    def eval(self, y, theta, i):
        y = np.asarray(y, dtype=np.float64).reshape(1, self.d)
        return float(self.gradient(y, theta)[0, i])


@dataclass
class OracleCallCounter:
    calls: int = 0

    def add(self, k):
        if k < 0:
            raise ValueError("oracle call increments must be non-negative")
        self.calls += int(k)


def _count(counter, k):
    if counter is not None:
        counter.add(k)


def exact_full_gradient(ds, theta, oracle, counter=None):
    g = oracle.gradient(ds.points, theta)
    _count(counter, ds.n)
    return g.mean(axis=0)


def minibatch_gradient(ds, theta, oracle, batch_size, rng, counter=None, full_batch=False):
    """Average gradient over ``batch_size`` indices drawn with replacement.

    With ``full_batch=True`` the sample is replaced by the whole index set in
    order (``batch_size`` must then equal ``n``), which reproduces
    :func:`exact_full_gradient` bit for bit.
    """
    n = ds.n
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size must lie in [1, {n}], got {batch_size}")
    if full_batch:
        if batch_size != n:
            raise ValueError("full-batch mode needs batch_size == n")
        return exact_full_gradient(ds, theta, oracle, counter)
    idx = rng.integers(0, n, size=batch_size)
    g = oracle.gradient(ds.points[idx], theta)
    _count(counter, batch_size)
    return g.mean(axis=0)


def _as_table(weights, n_grid):
    if isinstance(weights, WeightTable):
        return weights
    weights = list(weights)
    if not weights:
        return WeightTable(np.zeros((0, 1)), [0], [], [], n_grid)
    x = np.stack([np.asarray(w.x, dtype=np.float64).reshape(-1) for w in weights])
    sizes = [len(w.indices) for w in weights]
    return WeightTable(
        x,
        np.concatenate([[0], np.cumsum(sizes)]),
        np.concatenate([w.indices for w in weights]),
        np.concatenate([w.values for w in weights]),
        n_grid,
    )


def lpi_gradient(ds, theta, oracle, grid, weights, counter=None):
    """Interpolated full gradient.

    Evaluates the oracle once at every grid point, interpolates each
    coordinate to every data point with the precomputed ``weights`` and
    averages over the data points.
    """
    check_domain(ds.points, grid.config.h)
    table = _as_table(weights, len(grid))
    if len(table) != ds.n:
        raise ValueError(f"weights cover {len(table)} points, dataset has {ds.n}")
    G = oracle.gradient(grid.points, theta)
    _count(counter, len(grid))
    return table.grid_means @ G


def default_probes(config, dataset=None, n_probes=N_LOW_DISCREPANCY_PROBES):
    """Dataset points plus a Halton sequence mapped into ``[h, 1-h]^d``."""
    h = config.h
    halton = qmc.Halton(d=config.d, scramble=False).random(n_probes)
    pts = h + (1.0 - 2.0 * h) * halton
    if dataset is not None:
        inside = np.all((dataset.points >= h) & (dataset.points <= 1.0 - h), axis=1)
        pts = np.concatenate([dataset.points[inside], pts])
    return pts


def sup_norm_error(oracle, theta, grid, config, probe_points=None, dataset=None):
    """Largest interpolation error over probe points and coordinates.

    A finite maximum, hence a lower bound on the true supremum over
    ``[h, 1-h]^d``. Probes default to :func:`default_probes`.
    """
    if probe_points is None:
        probe_points = default_probes(config, dataset)
    probes = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    table = batch_weights(probes, grid, config)
    approx = table.apply(oracle.gradient(grid.points, theta))
    exact = oracle.gradient(probes, theta)
    return float(np.max(np.abs(approx - exact)))


def grid_size_for_accuracy(delta, eta, d, C=1.0, max_grid=DEFAULT_MAX_GRID):
    """Per-axis resolution ``ceil(C * (1/delta)**(1/eta))``.

    ``C`` is a problem constant that must be supplied by the caller; results
    are only as meaningful as that constant.

    Raises
    ------
    GridSizeOverflow
        If ``m**d`` would exceed ``max_grid``.
    """
    if not (delta > 0 and eta > 0 and C > 0):
        raise ValueError("delta, eta and C must be positive")
    val = C * (1.0 / delta) ** (1.0 / eta)
    if not math.isfinite(val) or val > max_grid:
        raise GridSizeOverflow(f"grid resolution {val:g} per axis exceeds the maximum grid size {max_grid}")
    # shave rounding noise so exact powers (e.g. 100**0.5) are not bumped up
    m = max(1, math.ceil(val * (1.0 - 1e-12)))
    if m**d > max_grid:
        raise GridSizeOverflow(f"grid of {m}^{d} points exceeds the maximum grid size {max_grid}")
    return m


def dataset_weights(ds, config, cache_dir=None):
    """Batch weights for every dataset point, optionally read from / written to a cache."""
    path = None
    if cache_dir is not None:
        key = cache_key(ds.hash, config)
        path = os.path.join(cache_dir, cache_filename(key))
        table = load_weight_table(path, key)
        if table is not None:
            return table
    table = batch_weights(ds.points, grid_points(config), config)
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        save_weight_table(path, key, table)
    return table


class ExactGradient:
    """Full-gradient provider: ``n`` oracle calls per evaluation."""

    def __init__(self, problem):
        self.problem = problem

    def __call__(self, theta, counter=None):
        return exact_full_gradient(self.problem.dataset, theta, self.problem, counter)


class LPIGradient:
    """Interpolated-gradient provider with weights computed once up front."""

    def __init__(self, problem, config, weights=None, cache_dir=None):
        self.problem = problem
        self.config = config
        self.grid = grid_points(config)
        check_domain(problem.dataset.points, config.h)
        if weights is None:
            weights = dataset_weights(problem.dataset, config, cache_dir)
        self.weights = _as_table(weights, config.n_grid)

    @property
    def calls_per_eval(self):
        return self.config.n_grid

    def __call__(self, theta, counter=None):
        return lpi_gradient(self.problem.dataset, theta, self.problem, self.grid, self.weights, counter)
