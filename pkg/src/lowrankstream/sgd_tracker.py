"""First-order stochastic-gradient subspace tracker.

Same projection step as the second-order tracker, but the subspace is moved
along the negative gradient of the per-sample loss

    f_t(L) = 0.5 ||P_w(y_t - L q[t])||^2 + (lam / 2t) ||L||_F^2
             + (lam / 2) ||q[t]||^2

with the inverse step size grown geometrically (backtracking) until the
quadratic model around the evaluation point majorizes f_t at the candidate.
Optional Nesterov extrapolation reuses the previous two iterates; the plain
variant (momentum fixed at 1) is the one with convergence guarantees.
Restricted to the infinite-memory setting (theta = 1): the loss above is
only defined there.
"""
from __future__ import annotations

import numpy as np

from .data import MaskedVector
from .exceptions import ConfigError, NonconvergenceError
from .matrix_tracker import project_coefficients

# guards the accept test against float noise when the gradient is ~0
_ACCEPT_SLACK = 1e-12


def loss_f(L, obs: MaskedVector, q, lam, t) -> float:
    """Per-sample loss f_t at subspace L."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    r = obs.values - L[obs.indices] @ q if obs.n_observed else np.zeros(0)
    return float(
        0.5 * (r @ r)
        + 0.5 * lam / t * np.sum(L * L)
        + 0.5 * lam * (q @ q)
    )


def grad_f(L, obs: MaskedVector, q, lam, t) -> np.ndarray:
    """Gradient of f_t: -P_w(y_t - L q) q' + (lam/t) L."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    g = (lam / t) * L
    if obs.n_observed:
        r = obs.values - L[obs.indices] @ q
        g[obs.indices] -= r[:, None] * q
    return g


def majorizer_value(candidate, anchor, f_anchor, grad_anchor, mu) -> float:
    """Quadratic model Q_{mu,t}(candidate, anchor) built from f_t at the anchor."""
    d = candidate - anchor
    return float(f_anchor + np.sum(d * grad_anchor) + 0.5 * mu * np.sum(d * d))


def momentum_next(k: float) -> float:
    """Nesterov momentum recursion k -> (1 + sqrt(1 + 4 k^2)) / 2."""
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * k * k))


class SgdTracker:
    """Online SGD subspace tracker with backtracking and optional acceleration.

    Parameters mirror the second-order tracker where they overlap; ``lam``
    is fixed for the whole run.  ``eta`` (> 1) is the backtracking growth
    factor and ``mu0`` the initial inverse-step-size denominator.
    ``momentum_restart`` resets the momentum scalar when the per-sample loss
    increases over a trailing window (off by default so runs match the plain
    recursion).
    """

    def __init__(self, ambient_dim, rank, lam=1.0, eta=2.0, mu0=1.0,
                 accelerated=False, momentum_restart=False, restart_window=100,
                 seed=0, max_backtracks=100):
        if ambient_dim < 1 or rank < 1:
            raise ConfigError("ambient_dim and rank must be positive")
        if eta <= 1.0:
            raise ConfigError(f"eta must exceed 1, got {eta}")
        if mu0 <= 0.0:
            raise ConfigError(f"mu0 must be positive, got {mu0}")
        self.ambient_dim = int(ambient_dim)
        self.rank = int(rank)
        self.lam = float(lam)
        self.eta = float(eta)
        self.accelerated = bool(accelerated)
        self.momentum_restart = bool(momentum_restart)
        self.restart_window = int(restart_window)
        self.max_backtracks = int(max_backtracks)
        rng = np.random.default_rng(seed)
        self.L = rng.normal(0.0, 1.0 / np.sqrt(ambient_dim),
                            size=(ambient_dim, rank))
        self.L_prev = self.L.copy()
        self.L_tilde = self.L.copy()
        self.k = 1.0
        self.mu = float(mu0)
        self.t = 0
        self._loss_window = []

    def backtracking_step(self, obs: MaskedVector, q) -> np.ndarray:
        """Grow mu until the majorizer dominates f_t at the candidate; move."""
        t = self.t
        anchor = self.L_tilde
        f_anchor = loss_f(anchor, obs, q, self.lam, t)
        grad = grad_f(anchor, obs, q, self.lam, t)
        slack = _ACCEPT_SLACK * max(1.0, abs(f_anchor))
        mu = self.mu
        for _ in range(self.max_backtracks + 1):
            candidate = anchor - grad / mu
            f_cand = loss_f(candidate, obs, q, self.lam, t)
            if f_cand <= majorizer_value(candidate, anchor, f_anchor, grad, mu) + slack:
                self.mu = mu
                return candidate
            mu *= self.eta
        raise NonconvergenceError(
            f"backtracking exceeded {self.max_backtracks} growth steps",
            last_objective=f_cand, iterations=self.max_backtracks,
        )

    def extrapolate(self) -> np.ndarray:
        """Advance the momentum recursion and form the next evaluation point."""
        k_next = momentum_next(self.k)
        self.L_tilde = self.L + ((self.k - 1.0) / k_next) * (self.L - self.L_prev)
        self.k = k_next
        return self.L_tilde

    def step(self, obs: MaskedVector):
        """Process one observation; returns (q, x_hat) with x_hat = L[t] q[t]."""
        if obs.ambient_dim != self.ambient_dim:
            raise ConfigError(
                f"observation has dimension {obs.ambient_dim}, "
                f"tracker expects {self.ambient_dim}"
            )
        self.t += 1
        q = project_coefficients(self.L, obs, self.lam)
        candidate = self.backtracking_step(obs, q)
        self.L_prev = self.L
        self.L = candidate
        if self.accelerated:
            if self.momentum_restart:
                self._maybe_restart(obs, q)
            self.extrapolate()
        else:
            self.L_tilde = self.L
        return q, self.L @ q

    def _maybe_restart(self, obs, q):
        cur = loss_f(self.L, obs, q, self.lam, self.t)
        self._loss_window.append(cur)
        if len(self._loss_window) > self.restart_window:
            self._loss_window.pop(0)
            older = self._loss_window[: self.restart_window // 2]
            newer = self._loss_window[self.restart_window // 2:]
            if np.mean(newer) > np.mean(older):
                self.k = 1.0
                self._loss_window.clear()

    def run(self, stream):
        for obs in stream:
            q, x_hat = self.step(obs)
            yield obs, q, x_hat
