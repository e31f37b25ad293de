"""Step-size, accuracy and coefficient schedules for the LPI methods.

Every logarithm is natural.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCurvature

CATALYST_EPS_CONSTANT = 2.0 / 9.0
_TIE_RTOL = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class SmoothnessConstants:
    """Curvature and data-smoothness constants of a problem.

    ``L1`` bounds the parameter-Lipschitz constant of the per-sample gradient,
    ``mu`` the strong-convexity constant, ``(eta, L2)`` the Hoelder class of
    the gradient as a function of the data.
    """

    L1: float
    L2: float
    eta: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.L1 >= self.mu:
            raise ValueError(f"need L1 >= mu, got L1={self.L1}, mu={self.mu}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.L2 >= 0:
            raise ValueError(f"L2 must be non-negative, got {self.L2}")

    @property
    def sigma(self):
        return self.L1 / self.mu

    @property
    def l(self):
        return math.ceil(self.eta) - 1


def lpi_iteration_count(consts, gap0, p, eps):
    """Iterations of LPI-GD for accuracy ``eps``: ``ceil(sigma * log((gap0 + p/(2 mu)) / eps))``, at least 1."""
    if not eps > 0 or gap0 < 0:
        raise ValueError("need eps > 0 and gap0 >= 0")
    val = consts.sigma * math.log((gap0 + p / (2.0 * consts.mu)) / eps)
    return max(math.ceil(val), 1)


def lpi_delta_schedule(eps, p):
    """Per-iteration sup-norm accuracy ``sqrt(eps / p)``."""
    if not eps > 0 or p < 1:
        raise ValueError("need eps > 0 and p >= 1")
    return math.sqrt(eps / p)


def catalyst_alpha_next(alpha_prev, q):
    """Root in (0, 1) of ``a^2 = (1 - a) alpha_prev^2 + q a``."""
    a2 = alpha_prev * alpha_prev
    b = a2 - q
    disc = math.sqrt(b * b + 4.0 * a2)
    # pick the cancellation-free form of the positive root
    if b > 0:
        return 2.0 * a2 / (b + disc)
    return 0.5 * (disc - b)


def catalyst_beta(alpha_prev, alpha):
    return alpha_prev * (1.0 - alpha_prev) / (alpha_prev * alpha_prev + alpha)


def catalyst_epsilon_schedule(k, sigma, gap0, constant=CATALYST_EPS_CONSTANT):
    """Inner accuracy ``constant * gap0 * (1 - 1/(3 sqrt(sigma)))**k``."""
    if sigma < 1 or not gap0 > 0:
        raise ValueError("need sigma >= 1 and gap0 > 0")
    return constant * gap0 * (1.0 - 1.0 / (3.0 * math.sqrt(sigma))) ** k


def inner_stop_check(grad_norm, mu_h, eps_k):
    """True when ``grad_norm**2 / (2 mu_h) <= eps_k``.

    Under ``mu_h``-strong convexity the left side bounds ``h(theta) - h*``.
    Ties within a few ulps count as satisfied.
    """
    if not mu_h > 0:
        raise ValueError("mu_h must be positive")
    return grad_norm * grad_norm / (2.0 * mu_h) <= eps_k * (1.0 + _TIE_RTOL)


def inexact_oracle_params(consts, p):
    """``(delta, L) = (p (1 - 1/sigma)^2, L1^2 + 2 - mu/2)``."""
    delta = p * (1.0 - 1.0 / consts.sigma) ** 2
    L = consts.L1**2 + 2.0 - consts.mu / 2.0
    return delta, L


def fgm_delta_requirement(eps, p, sigma):
    if not eps > 0:
        raise ValueError("eps must be positive")
    return eps / (2.0 * math.sqrt(p) * (1.0 + sigma))


def fgm_iteration_count(sigma, L1, dist0_sq, eps):
    """``ceil(2 sqrt(sigma) log(L1 * dist0_sq / eps))``, at least 1."""
    if not eps > 0 or not dist0_sq > 0:
        raise ValueError("need eps > 0 and dist0_sq > 0")
    arg = L1 * dist0_sq / eps
    if arg <= 1.0:
        return 1
    return max(math.ceil(2.0 * math.sqrt(sigma) * math.log(arg)), 1)


@dataclass
class FgmState:
    """Recursion variables of the inexact-oracle fast gradient method.

    ``theta_sum`` and ``grad_sum`` hold ``sum_i alpha_i theta_i`` and
    ``sum_i alpha_i g_i`` over the iterations folded in so far.
    """

    L: float
    mu: float
    theta0: np.ndarray
    alpha: float = 0.0
    A: float = 0.0
    k: int = -1
    theta_sum: np.ndarray = None
    grad_sum: np.ndarray = None

    def __post_init__(self):
        if not self.L > self.mu:
            raise DegenerateCurvature(f"need L > mu, got L={self.L}, mu={self.mu}")
        self.theta0 = np.asarray(self.theta0, dtype=np.float64).reshape(-1)
        if self.theta_sum is None:
            self.theta_sum = np.zeros_like(self.theta0)
        if self.grad_sum is None:
            self.grad_sum = np.zeros_like(self.theta0)
        if self.k < 0:
            self.alpha = self.L / (self.L - self.mu)
            self.A = self.alpha
            self.k = 0

    def fold(self, theta, g):
        """Add ``alpha_k * theta_k`` and ``alpha_k * g_k`` to the running sums."""
        self.theta_sum = self.theta_sum + self.alpha * np.asarray(theta, dtype=np.float64)
        self.grad_sum = self.grad_sum + self.alpha * np.asarray(g, dtype=np.float64)

    def advance(self):
        alpha, A, tau = fgm_coefficients(self)
        self.alpha, self.A, self.k = alpha, A, self.k + 1
        return tau


def fgm_coefficients(state):
    """``(alpha_{k+1}, A_{k+1}, tau_k)`` from the linear recurrence ``(L - mu) alpha_{k+1} = A_k mu + L``."""
    L, mu = state.L, state.mu
    if L == mu:
        raise DegenerateCurvature("L == mu makes the coefficient recurrence undefined")
    alpha = (state.A * mu + L) / (L - mu)
    A = state.A + alpha
    return alpha, A, alpha / A


def fgm_y_step(theta, g, L):
    if not L > 0:
        raise ValueError("L must be positive")
    return np.asarray(theta, dtype=np.float64) - np.asarray(g, dtype=np.float64) / L


def fgm_z_step(state):
    """Minimizer of the estimate function ``L d(theta) + sum_i alpha_i [<g_i, theta - theta_i> + mu/2 ||theta - theta_i||^2]``."""
    return (state.L * state.theta0 + state.mu * state.theta_sum - state.grad_sum) / (state.L + state.mu * state.A)
