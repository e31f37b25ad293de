"""Optimization loops: GD, SGD, LPI-GD, Catalyst-accelerated LPI-GD and the
inexact-oracle fast gradient method.

A *problem* is any object with ``dataset``, ``p``, ``gradient(points, theta)``,
``objective(theta)`` and ``smoothness_constants()``; ``optimal_parameter()`` is
needed where a schedule depends on ``F*`` or ``theta*``. All runs default to
the step ``1/L1`` and return a :class:`Trace` with one record per (outer)
iteration, starting from ``theta_0``.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InnerStall, NonFinite
from ..oracles import ExactGradient, LPIGradient, OracleCallCounter, minibatch_gradient
from .schedules import (
    CATALYST_EPS_CONSTANT,
    FgmState,
    catalyst_alpha_next,
    catalyst_beta,
    catalyst_epsilon_schedule,
    fgm_iteration_count,
    fgm_y_step,
    fgm_z_step,
    inexact_oracle_params,
    inner_stop_check,
)
from .trace import Trace

# Abort when the objective exceeds this multiple of its initial value.
BLOWUP_FACTOR = 1e12
_ROUNDING_SLACK = 8.0 * np.finfo(float).eps


class _Recorder:
    def __init__(self, problem, theta0, counter, config, seed=None):
        self.problem = problem
        self.counter = counter if counter is not None else OracleCallCounter()
        self.trace = Trace(config=config, seed=seed)
        self.t0 = time.perf_counter()
        self.F0 = problem.objective(theta0)
        if not math.isfinite(self.F0):
            raise NonFinite(f"initial objective is {self.F0}")
        self.trace.append(0, theta0, self.F0, self.counter.calls, 0.0)

    def record(self, k, theta):
        F = self.problem.objective(theta)
        if not (math.isfinite(F) and np.all(np.isfinite(theta))):
            raise NonFinite(f"non-finite iterate or objective at iteration {k}")
        if self.F0 > 0 and F > BLOWUP_FACTOR * self.F0:
            raise NonFinite(f"objective {F:g} at iteration {k} exceeds {BLOWUP_FACTOR:g} x initial objective")
        self.trace.append(k, theta, F, self.counter.calls, time.perf_counter() - self.t0)
        return F


def _theta0(theta0):
    return np.array(theta0, dtype=np.float64).reshape(-1)


def _default_step(problem, step):
    if step is None:
        return 1.0 / problem.smoothness_constants().L1
    return float(step)


def _lpi_provider(problem, config, gradient, cache_dir=None):
    if gradient is not None:
        return gradient
    if config is None:
        raise ValueError("pass an InterpolationConfig or a gradient provider")
    return LPIGradient(problem, config, cache_dir=cache_dir)


def _snapshot(method, config, **params):
    snap = {"method": method, **params}
    if config is not None:
        snap["interpolation"] = config.key()
    return snap


def _descent(problem, theta0, K, step, grad, counter, snapshot):
    if K < 0:
        raise ValueError("K must be non-negative")
    theta = _theta0(theta0)
    rec = _Recorder(problem, theta, counter, snapshot, snapshot.get("seed"))
    for k in range(1, K + 1):
        theta = theta - step * grad(theta, rec.counter)
        rec.record(k, theta)
    return rec.trace


def gd_run(problem, theta0, K, step=None, counter=None):
    """Gradient descent with exact full gradients (``n`` calls per step)."""
    step = _default_step(problem, step)
    return _descent(problem, theta0, K, step, ExactGradient(problem), counter, _snapshot("gd", None, step=step, K=K))


def sgd_run(problem, theta0, K, step=None, batch_size=500, seed=0, full_batch=False, counter=None):
    """Minibatch SGD; indices drawn uniformly with replacement from ``default_rng(seed)``.

    ``full_batch=True`` uses every index each step and reproduces :func:`gd_run`.
    """
    step = _default_step(problem, step)
    ds = problem.dataset
    batch_size = ds.n if full_batch else int(batch_size)
    rng = np.random.default_rng(seed)

    def grad(theta, c):
        return minibatch_gradient(ds, theta, problem, batch_size, rng, c, full_batch=full_batch)

    snap = _snapshot("sgd", None, step=step, K=K, batch_size=batch_size, full_batch=full_batch, seed=seed)
    return _descent(problem, theta0, K, step, grad, counter, snap)


def lpi_gd_run(problem, theta0, config, K, step=None, delta_target=None, counter=None, gradient=None, cache_dir=None):
    """LPI-GD: descent on the interpolated gradient (``m**d`` calls per step).

    Weights for the dataset points are computed once (or read from
    ``cache_dir``) and reused every iteration. ``delta_target`` is the sup-norm
    accuracy the grid was sized for; it is recorded, not enforced.
    """
    step = _default_step(problem, step)
    grad = _lpi_provider(problem, config, gradient, cache_dir)
    snap = _snapshot("lpi_gd", config, step=step, K=K, delta_target=delta_target)
    return _descent(problem, theta0, K, step, grad, counter, snap)


def _f_star(problem, f_star):
    if f_star is not None:
        return float(f_star)
    return float(problem.optimal_parameter()[1])


def catalyst_run(
    problem,
    theta0,
    config,
    K_outer,
    mode="theoretical",
    beta=0.99,
    kappa=None,
    step=None,
    inner_budget=1,
    max_inner=100_000,
    eps_constant=CATALYST_EPS_CONSTANT,
    delta=0.0,
    f_star=None,
    counter=None,
    gradient=None,
    cache_dir=None,
):
    """Catalyst outer loop around LPI-GD.

    Each outer step approximately minimizes the surrogate
    ``F(theta) + kappa/2 ||theta - z||^2`` with LPI-GD warm-started at the
    previous outer iterate. The inner step is ``1 / (1/step + kappa)``, i.e.
    ``1/(L1 + kappa)`` under the default step.

    ``mode="theoretical"``: ``kappa = L1 - mu``; the inner loop runs until
    ``(||grad|| + delta sqrt(p))**2 / (2 (mu + kappa)) <= eps_k`` with
    ``eps_k = eps_constant (F(theta_0) - F*) (1 - 1/(3 sqrt(sigma)))**k``; the
    extrapolation uses the ``alpha_k`` / ``beta_k`` recursion.

    ``mode="fixed_beta"``: ``inner_budget`` inner steps per outer step and
    ``z_k = theta_k + beta (theta_k - theta_{k-1})``. ``kappa`` defaults to
    ``L1 - mu`` here as well.

    Raises
    ------
    InnerStall
        If a theoretical inner loop exceeds ``max_inner`` steps.
    """
    if mode not in ("theoretical", "fixed_beta"):
        raise ValueError(f"unknown catalyst mode {mode!r}")
    if K_outer < 0:
        raise ValueError("K_outer must be non-negative")
    consts = problem.smoothness_constants()
    step = _default_step(problem, step)
    if kappa is None:
        kappa = consts.L1 - consts.mu
    kappa = float(kappa)
    inner_step = step if kappa == 0.0 else 1.0 / (1.0 / step + kappa)
    grad = _lpi_provider(problem, config, gradient, cache_dir)

    snap = _snapshot("catalyst_lpi", config, mode=mode, step=step, inner_step=inner_step, kappa=kappa, K=K_outer)
    theta = _theta0(theta0)
    rec = _Recorder(problem, theta, counter, snap)
    z = theta.copy()
    inner_counts = []

    if mode == "fixed_beta":
        snap.update(beta=beta, inner_budget=inner_budget)
        for k in range(1, K_outer + 1):
            prev = theta
            for _ in range(inner_budget):
                theta = theta - inner_step * (grad(theta, rec.counter) + kappa * (theta - z))
            inner_counts.append(inner_budget)
            rec.record(k, theta)
            z = theta + beta * (theta - prev)
    else:
        mu_h = consts.mu + kappa
        q = consts.mu / mu_h
        alpha = math.sqrt(q)
        gap0 = max(rec.F0 - _f_star(problem, f_star), np.finfo(float).tiny)
        slack = delta * math.sqrt(theta.size)
        snap.update(q=q, eps_constant=eps_constant, delta=delta, gap0=gap0)
        for k in range(1, K_outer + 1):
            eps_k = catalyst_epsilon_schedule(k, consts.sigma, gap0, eps_constant)
            prev = theta
            for j in range(max_inner + 1):
                g = grad(theta, rec.counter) + kappa * (theta - z)
                if inner_stop_check(float(np.linalg.norm(g)) + slack, mu_h, eps_k):
                    break
                if j == max_inner:
                    raise InnerStall(f"outer step {k}: inner loop did not certify eps_k={eps_k:g} in {max_inner} steps")
                theta = theta - inner_step * g
            inner_counts.append(j)
            rec.record(k, theta)
            alpha_next = catalyst_alpha_next(alpha, q)
            z = theta + catalyst_beta(alpha, alpha_next) * (theta - prev)
            alpha = alpha_next
    rec.trace.extras["inner_iterations"] = inner_counts
    return rec.trace


def fgm_run(
    problem,
    theta0,
    config,
    mode="fixed_momentum",
    momentum=0.2,
    K=None,
    eps_target=None,
    step=None,
    L=None,
    counter=None,
    gradient=None,
    cache_dir=None,
):
    """Fast gradient method on the interpolated gradient.

    ``mode="theoretical"`` runs the estimate-sequence method with inexact
    oracle ``(F, LPI gradient)``: ``y_k = theta_k - g_k / L``, ``z_k`` the
    minimizer of the accumulated lower model, ``theta_{k+1} = tau_k z_k +
    (1 - tau_k) y_k``. ``L`` defaults to the inexact-oracle constant
    ``L1^2 + 2 - mu/2`` and ``K`` to :func:`fgm_iteration_count` for
    ``eps_target``. ``extras`` holds the full ``(alpha, theta, g, y)`` history.

    ``mode="fixed_momentum"`` is the practical variant
    ``v_k = theta_k + momentum (theta_k - theta_{k-1})``,
    ``theta_{k+1} = v_k - step * grad(v_k)``; ``K`` is required.
    """
    if mode not in ("theoretical", "fixed_momentum"):
        raise ValueError(f"unknown fgm mode {mode!r}")
    grad = _lpi_provider(problem, config, gradient, cache_dir)
    theta = _theta0(theta0)

    if mode == "fixed_momentum":
        if K is None:
            raise ValueError("fixed_momentum mode needs an iteration budget K")
        step = _default_step(problem, step)
        snap = _snapshot("fgm_lpi", config, mode=mode, momentum=momentum, step=step, K=K)
        rec = _Recorder(problem, theta, counter, snap)
        prev = theta
        for k in range(1, K + 1):
            v = theta + momentum * (theta - prev)
            prev = theta
            theta = v - step * grad(v, rec.counter)
            rec.record(k, theta)
        return rec.trace

    consts = problem.smoothness_constants()
    delta_lemma, L_lemma = inexact_oracle_params(consts, theta.size)
    L = L_lemma if L is None else float(L)
    if K is None:
        if eps_target is None:
            raise ValueError("theoretical mode needs K or eps_target")
        theta_star = np.asarray(problem.optimal_parameter()[0], dtype=np.float64).reshape(-1)
        dist0_sq = float(np.sum((theta_star - theta) ** 2))
        K = fgm_iteration_count(consts.sigma, consts.L1, max(dist0_sq, np.finfo(float).tiny), eps_target)
    state = FgmState(L=L, mu=consts.mu, theta0=theta)
    snap = _snapshot(
        "fgm_lpi", config, mode=mode, L=L, mu=consts.mu, delta=delta_lemma, K=K, eps_target=eps_target
    )
    rec = _Recorder(problem, theta, counter, snap)
    hist = {"alpha": [], "A": [], "tau": [], "theta": [], "g": [], "y": [], "z": []}
    for k in range(K):
        g = grad(theta, rec.counter)
        y = fgm_y_step(theta, g, L)
        hist["alpha"].append(state.alpha)
        hist["theta"].append(theta.copy())
        hist["g"].append(np.asarray(g, dtype=np.float64).copy())
        state.fold(theta, g)
        z = fgm_z_step(state)
        hist["A"].append(state.A)
        tau = state.advance()
        hist["tau"].append(tau)
        hist["y"].append(y)
        hist["z"].append(z)
        theta = tau * z + (1.0 - tau) * y
        rec.record(k + 1, theta)
    rec.trace.extras.update(hist)
    rec.trace.extras["y_objectives"] = [problem.objective(y) for y in hist["y"]]
    return rec.trace


@dataclass
class SandwichReport:
    """Outcome of :func:`inexact_sandwich_check`; ``violations`` lists
    ``(pair index, G, lower bound, upper bound)``."""

    n_pairs: int
    violations: list = field(default_factory=list)
    G: np.ndarray = None

    @property
    def passed(self):
        return not self.violations


def inexact_sandwich_check(problem, pairs, g_provider, L, mu, delta_allow):
    """Check ``mu/2 |d|^2 - delta <= G(t1, t2) <= L/2 |d|^2 + delta`` for each pair.

    ``G(t1, t2) = F(t1) - F(t2) - <g(t2), t1 - t2>`` with ``g`` supplied by
    ``g_provider(theta)``; ``delta_allow`` is a scalar or one value per pair.
    Both bounds are widened by a few ulps of the terms entering ``G``.
    """
    pairs = list(pairs)
    allow = np.broadcast_to(np.asarray(delta_allow, dtype=np.float64), (len(pairs),))
    report = SandwichReport(n_pairs=len(pairs))
    G_all = np.empty(len(pairs))
    for i, (t1, t2) in enumerate(pairs):
        t1, t2 = _theta0(t1), _theta0(t2)
        diff = t1 - t2
        sq = float(diff @ diff)
        F1, F2 = problem.objective(t1), problem.objective(t2)
        lin = float(np.asarray(g_provider(t2)).reshape(-1) @ diff)
        G = F1 - F2 - lin
        G_all[i] = G
        lower = 0.5 * mu * sq - allow[i]
        upper = 0.5 * L * sq + allow[i]
        # rounding in G is relative to the terms it cancels
        tol = _ROUNDING_SLACK * (abs(F1) + abs(F2) + abs(lin))
        if not lower - tol <= G <= upper + tol:
            report.violations.append((i, G, lower, upper))
    report.G = G_all
    return report
