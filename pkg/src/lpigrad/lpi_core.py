"""Local polynomial interpolation on a uniform grid.

The level weight of grid point ``y`` at evaluation point ``x`` is the first
component of::

    (1 / (m h)^d) * prod_j K((y_j - x_j) / h) * B(x)^{-1} U((y - x) / h)

where ``U(u) = [u^s / s! : |s| <= l]`` and ``B(x)`` is the kernel-weighted
moment matrix of ``U`` over the grid. Because ``B`` is symmetric this equals
``scale * K * U(u) . v`` with ``v = B^{-1} e_1``, which is what every code path
here computes.
"""

import hashlib
import io
import itertools
import json
import math
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from ._kernels import PIVOT_RTOL, ldl_solve, pattern_weights
from .errors import DomainViolation, MissingValue, SingularMoment

KERNELS = ("rectangular", "epanechnikov")
GRID_CONVENTIONS = ("upper", "cellcenter")

# Slack used when checking that points lie in [h, 1 - h]^d.
_DOMAIN_SLACK = 1e-12
# Offsets are quantized at this resolution to detect coincident window patterns.
_PATTERN_RESOLUTION = 1e-12


@dataclass(frozen=True)
class MultiIndexSet:
    """All ``s`` in Z_+^d with ``|s| <= l`` in graded-lexicographic order."""

    d: int
    l: int
    indices: tuple

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    @cached_property
    def exponents(self):
        return np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.d)

    @cached_property
    def inv_factorials(self):
        return np.array([1.0 / math.prod(math.factorial(e) for e in s) for s in self.indices])


def enumerate_multi_indices(d, l):
    """Multi-indices of total degree at most ``l`` in ``d`` variables.

    Ordered by total degree, then reverse-lexicographically within a degree,
    so the zero tuple comes first and ``(1, 0)`` precedes ``(0, 1)``.
    """
    if d < 1 or l < 0:
        raise ValueError(f"need d >= 1 and l >= 0, got d={d}, l={l}")
    out = []
    for deg in range(l + 1):
        level = [s for s in itertools.product(range(deg + 1), repeat=d) if sum(s) == deg]
        out.extend(sorted(level, reverse=True))
    return MultiIndexSet(d=d, l=l, indices=tuple(out))


def basis_vector(u, idx):
    """Evaluate ``U(u) = [u^s / s! : s in idx]``.

    ``u`` may be a single point of shape ``(d,)`` or a stack ``(k, d)``; the
    result has shape ``(M,)`` or ``(k, M)`` respectively.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != idx.d:
        raise ValueError(f"point dimension {u.shape[1]} does not match multi-index dimension {idx.d}")
    powers = np.prod(u[:, None, :] ** idx.exponents[None, :, :], axis=2)
    out = powers * idx.inv_factorials
    return out[0] if single else out


def kernel_eval(kind, u):
    """Kernel value at ``u``; both kernels are supported on [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    if kind == "rectangular":
        out = (np.abs(u) <= 1.0).astype(np.float64)
    elif kind == "epanechnikov":
        out = np.maximum(0.0, 0.75 * (1.0 - u * u))
    else:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class InterpolationConfig:
    """Grid resolution, bandwidth, polynomial order and kernel.

    Parameters
    ----------
    d : int
        Data dimension.
    m : int
        Grid points per axis; the grid has ``m**d`` points.
    h : float
        Kernel bandwidth in (0, 1/2). Evaluation points must lie in
        ``[h, 1 - h]^d``.
    l : int
        Local polynomial order.
    kernel : {"rectangular", "epanechnikov"}
    ridge : float
        Non-negative value added to the diagonal of the moment matrix.
    grid_convention : {"upper", "cellcenter"}
        Per-axis points ``j/m`` or ``(j - 1/2)/m`` for ``j = 1..m``.

    Notes
    -----
    A window ``[x - h, x + h]`` spans ``2 m h`` grid spacings and hence holds
    at least ``floor(2 m h)`` grid points per axis, so ``2 m h >= l + 1`` is
    enforced to keep the moment matrix invertible.
    """

    d: int
    m: int
    h: float
    l: int = 1
    kernel: str = "rectangular"
    ridge: float = 0.0
    grid_convention: str = "upper"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0.0 < self.h < 0.5:
            raise ValueError(f"bandwidth h must lie in (0, 1/2), got {self.h}")
        if int(self.l) != self.l or self.l < 0:
            raise ValueError(f"l must be a non-negative integer, got {self.l}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if self.grid_convention not in GRID_CONVENTIONS:
            raise ValueError(f"unknown grid convention {self.grid_convention!r}")
        if not self.ridge >= 0.0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        if 2.0 * self.m * self.h < self.l + 1 - 1e-12:
            raise ValueError(
                f"window too narrow: 2*m*h = {2 * self.m * self.h:g} < l + 1 = {self.l + 1}; "
                "increase m or h"
            )

    @property
    def n_grid(self):
        return self.m**self.d

    @property
    def scale(self):
        return 1.0 / (self.m * self.h) ** self.d

    @cached_property
    def multi_indices(self):
        return enumerate_multi_indices(self.d, self.l)

    @cached_property
    def axis_points(self):
        if self.grid_convention == "upper":
            return np.arange(1, self.m + 1, dtype=np.float64) / self.m
        return (np.arange(self.m, dtype=np.float64) + 0.5) / self.m

    def key(self):
        """Plain-dict description, used for cache keys and config snapshots."""
        return {
            "d": self.d,
            "m": self.m,
            "h": self.h,
            "l": self.l,
            "kernel": self.kernel,
            "ridge": self.ridge,
            "grid_convention": self.grid_convention,
        }


@dataclass(frozen=True)
class Grid:
    """The ``m**d`` grid points, row-major over axes (last axis fastest)."""

    config: InterpolationConfig
    points: np.ndarray = field(repr=False)

    def __len__(self):
        return self.points.shape[0]


def grid_points(config):
    axes = [config.axis_points] * config.d
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=1)
    pts.setflags(write=False)
    return Grid(config=config, points=pts)


@dataclass(frozen=True)
class WeightSet:
    """Nonzero-support level weights of one evaluation point.

    ``indices`` are flat grid indices (row-major), ``values`` the matching
    weights. Grid points outside the kernel support are not stored.
    """

    x: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    @property
    def support_count(self):
        return int(np.count_nonzero(self.values))

    def as_dict(self):
        return dict(zip(self.indices.tolist(), self.values.tolist()))

    def dense(self, n_grid):
        out = np.zeros(n_grid)
        out[self.indices] = self.values
        return out


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _as_points(xs, d):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1 and d == 1 and xs.size != 1:
        xs = xs[:, None]
    xs = np.atleast_2d(xs)
    if xs.size == 0:
        return np.zeros((0, d))
    if xs.shape[1] != d:
        raise ValueError(f"points have dimension {xs.shape[1]}, config expects {d}")
    return xs


def check_domain(xs, h):
    """Raise :class:`DomainViolation` unless every point lies in ``[h, 1-h]^d``."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        return
    bad = np.any((xs < h - _DOMAIN_SLACK) | (xs > 1.0 - h + _DOMAIN_SLACK), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainViolation(f"point {i} = {xs[i].tolist()} lies outside [{h}, {1 - h}]^d")


def moment_matrix(x, grid, config):
    """``B(x) + ridge * I``, summed directly over every grid point."""
    x = np.asarray(x, dtype=np.float64).reshape(config.d)
    u = (grid.points - x) / config.h
    k = np.prod(kernel_eval(config.kernel, u), axis=1) * config.scale
    U = basis_vector(u, config.multi_indices)
    B = (U * k[:, None]).T @ U
    B = 0.5 * (B + B.T)
    B += config.ridge * np.eye(B.shape[0])
    return B


def interpolation_weights(x, grid, config):
    """Level weights of a single point, computed directly from the definition."""
    x = np.asarray(x, dtype=np.float64).reshape(config.d)
    check_domain(x[None, :], config.h)
    u = (grid.points - x) / config.h
    k = np.prod(kernel_eval(config.kernel, u), axis=1)
    support = np.flatnonzero(k > 0.0)
    B = moment_matrix(x, grid, config)
    e1 = np.zeros(B.shape[0])
    e1[0] = 1.0
    v, ok = ldl_solve(B, e1, PIVOT_RTOL)
    if not ok:
        raise SingularMoment(f"moment matrix at x={x.tolist()} is singular; widen the bandwidth")
    U = basis_vector(u[support], config.multi_indices)
    values = config.scale * k[support] * (U @ v)
    return WeightSet(x=_frozen(x.copy()), indices=_frozen(support.astype(np.int64)), values=_frozen(values))


def interpolate(values, weights):
    """Weighted sum ``sum_y values[y] * w_y`` over the weight support.

    ``values`` is either a mapping from flat grid index to value or an array
    indexed by flat grid index (a 2-D array interpolates every column).
    """
    if isinstance(values, Mapping):
        try:
            vals = np.array([values[i] for i in weights.indices.tolist()], dtype=np.float64)
        except KeyError as exc:
            raise MissingValue(f"no value for grid point {exc.args[0]}") from None
    else:
        values = np.asarray(values, dtype=np.float64)
        if weights.indices.size and weights.indices.max() >= values.shape[0]:
            raise MissingValue(f"value array of length {values.shape[0]} misses grid point {weights.indices.max()}")
        vals = values[weights.indices]
    if vals.ndim == 1:
        return float(weights.values @ vals)
    return weights.values @ vals


class WeightTable(Sequence):
    """Weights of many evaluation points in compressed-row form.

    Behaves as a read-only sequence of :class:`WeightSet`.
    """

    def __init__(self, x, indptr, indices, values, n_grid):
        self.x = _frozen(np.asarray(x, dtype=np.float64))
        self.indptr = _frozen(np.asarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.asarray(indices, dtype=np.int64))
        self.values = _frozen(np.asarray(values, dtype=np.float64))
        self.n_grid = int(n_grid)

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        a, b = self.indptr[i], self.indptr[i + 1]
        return WeightSet(x=self.x[i], indices=self.indices[a:b], values=self.values[a:b])

    @cached_property
    def grid_means(self):
        """Average weight of every grid point over the evaluation points."""
        n = len(self)
        if n == 0:
            return np.zeros(self.n_grid)
        return np.bincount(self.indices, weights=self.values, minlength=self.n_grid) / n

    def apply(self, grid_values):
        """Interpolate grid values at every evaluation point.

        ``grid_values`` has shape ``(n_grid,)`` or ``(n_grid, p)``.
        """
        grid_values = np.asarray(grid_values, dtype=np.float64)
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        prods = self.values[:, None] * grid_values[self.indices].reshape(self.indices.size, -1)
        out = np.stack(
            [np.bincount(rows, weights=prods[:, c], minlength=len(self)) for c in range(prods.shape[1])],
            axis=1,
        )
        return out[:, 0] if grid_values.ndim == 1 else out


def _axis_windows(xs, config):
    """Per-axis kernel windows for every point.

    Returns start index, active count, left-aligned offsets and kernel values,
    each with a leading ``(n, d)`` shape.
    """
    m, h = config.m, config.h
    axis = config.axis_points
    shift = 1.0 if config.grid_convention == "upper" else 0.5
    width = int(math.ceil(2.0 * m * h)) + 3
    j0 = np.floor(m * (xs - h) - shift).astype(np.int64) - 1
    j = j0[..., None] + np.arange(width)
    valid = (j >= 0) & (j < m)
    u = (axis[np.clip(j, 0, m - 1)] - xs[..., None]) / h
    kv = np.where(valid, kernel_eval(config.kernel, u), 0.0)
    active = kv > 0.0
    counts = active.sum(axis=-1)
    lo = np.argmax(active, axis=-1)
    start = np.take_along_axis(j, lo[..., None], axis=-1)[..., 0]
    W = max(int(counts.max()), 1)
    take = np.clip(lo[..., None] + np.arange(W), 0, width - 1)
    keep = np.arange(W) < counts[..., None]
    offs = np.where(keep, np.take_along_axis(u, take, axis=-1), 0.0)
    kvals = np.where(keep, np.take_along_axis(kv, take, axis=-1), 0.0)
    return start, counts, offs, kvals


def batch_weights(xs, grid, config, use_numba=None):
    """Level weights for many evaluation points.

    Per-axis kernel windows are computed once per point and axis. Points whose
    windows have the same offset pattern (same active counts and, to 1e-12,
    the same first offset on every axis) share one moment-matrix
    factorization, with weights reused up to a shift of grid indices.

    Returns
    -------
    WeightTable
        Element ``i`` equals ``interpolation_weights(xs[i], grid, config)``
        up to rounding.

    Raises
    ------
    SingularMoment
        With ``.index`` set to the first offending point.
    """
    d, m = config.d, config.m
    xs = _as_points(xs, d)
    n = xs.shape[0]
    if n == 0:
        return WeightTable(np.zeros((0, d)), np.zeros(1, np.int64), [], [], config.n_grid)
    check_domain(xs, config.h)
    start, counts, offs, kvals = _axis_windows(xs, config)
    W = offs.shape[-1]

    key = np.concatenate([counts, np.rint(offs[..., 0] / _PATTERN_RESOLUTION).astype(np.int64)], axis=1)
    _, rep, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    mi = config.multi_indices
    pat_values, ok = pattern_weights(
        offs[rep], kvals[rep], counts[rep], mi.exponents, mi.inv_factorials, config.scale, config.ridge,
        use_numba=use_numba,
    )
    if not ok.all():
        bad = np.flatnonzero(~ok[inverse])[0]
        raise SingularMoment(
            f"moment matrix at point {bad} = {xs[bad].tolist()} is singular; widen the bandwidth", index=int(bad)
        )

    local = np.indices((W,) * d).reshape(d, -1).T
    mask = np.all(local[None, :, :] < counts[:, None, :], axis=2)
    strides = m ** np.arange(d - 1, -1, -1, dtype=np.int64)
    gidx = (start[:, None, :] + local[None, :, :]) @ strides
    vals = pat_values[inverse]
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))])
    return WeightTable(xs, indptr, gidx[mask], vals[mask], config.n_grid)


# --- on-disk weight cache -------------------------------------------------

CACHE_MAGIC = b"LPIGRADW"
CACHE_VERSION = 1


def cache_key(dataset_hash, config):
    key = {"dataset": dataset_hash, **config.key(), "version": CACHE_VERSION}
    return key


def cache_filename(key):
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]
    return f"weights-{digest}.lpiw"


def save_weight_table(path, key, table):
    """Write ``table`` to ``path`` under ``key`` (magic header + npz payload)."""
    buf = io.BytesIO()
    np.savez(
        buf,
        key=np.frombuffer(json.dumps(key, sort_keys=True).encode(), dtype=np.uint8),
        x=table.x,
        indptr=table.indptr,
        indices=table.indices,
        values=table.values,
        n_grid=np.array(table.n_grid),
    )
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_weight_table(path, key):
    """Load a cached table, or ``None`` if absent, stale or unreadable."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError:
        return None
    head = len(CACHE_MAGIC) + 4
    if len(blob) < head or blob[: len(CACHE_MAGIC)] != CACHE_MAGIC:
        return None
    (version,) = struct.unpack("<I", blob[len(CACHE_MAGIC) : head])
    if version != CACHE_VERSION:
        return None
    try:
        with np.load(io.BytesIO(blob[head:])) as z:
            stored = json.loads(z["key"].tobytes().decode())
            if stored != json.loads(json.dumps(key, sort_keys=True)):
                return None
            return WeightTable(z["x"], z["indptr"], z["indices"], z["values"], int(z["n_grid"]))
    except Exception:
        return None
