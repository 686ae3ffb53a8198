"""Second-order alternating recursive-LS subspace tracker with missing data.

Per incoming observation the tracker ridge-projects onto the previous
subspace, folds the projection into per-row Gram/cross accumulators with
forgetting factor ``theta``, and re-solves every subspace row.  With
``theta == 1`` and a fixed regularizer the row solves admit the rank-one
recursive-LS shortcut (``mode="rls"``) whose per-step cost is
O(|omega_t| rho^2) instead of O(P rho^3).

The direct path stores the accumulators G as a (rho, rho, P) stack so the
compiled kernel can sweep the row axis contiguously; the numpy fallback
operates on the same arrays.  Row subproblems are independent, so any row
ordering (or the fused kernel) yields the same subspace.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .data import MaskedVector
from .exceptions import ConfigError, SingularSystemError, UnsupportedModeError


def lambda_heuristic(ambient_dim: int, effective_window: float, pi: float,
                     sigma: float) -> float:
    """Noise-adaptive ridge weight (sqrt(P) + sqrt(t_e)) * sqrt(pi) * sigma."""
    return (np.sqrt(ambient_dim) + np.sqrt(effective_window)) * np.sqrt(pi) * sigma


def project_coefficients(L: np.ndarray, obs: MaskedVector, lam: float) -> np.ndarray:
    """Ridge projection coefficients q solving (lam*I + L' Omega L) q = L' P_w(y).

    Raises :class:`SingularSystemError` when ``lam == 0`` and the observed
    normal matrix is singular; use ``lam > 0`` in that case.
    """
    L = np.asarray(L, dtype=np.float64)
    rho = L.shape[1]
    Lo = L[obs.indices]
    A = Lo.T @ Lo
    A[np.diag_indices_from(A)] += lam
    b = Lo.T @ obs.values
    try:
        if lam > 0:
            return sla.cho_solve(sla.cho_factor(A, lower=True), b)
        return np.linalg.solve(A, b)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        raise SingularSystemError(
            "observed normal matrix is singular; use lambda > 0"
        ) from None


class MatrixTracker:
    """Streaming subspace tracker (alternating recursive LS).

    Parameters
    ----------
    ambient_dim, rank : int
        Observation dimension P and subspace width rho.
    theta : float
        Forgetting factor in (0, 1]; 1 means infinite memory.
    lam : float
        Ridge weight; the current value when ``lambda_policy="fixed"``.
    lambda_policy : {"fixed", "noise_adaptive"}
        ``"noise_adaptive"`` recomputes lam each step from ``sigma``/``pi``
        and the effective window; requires theta close to 1 semantics only in
        the sense that lam then grows with t.
    mode : {"direct", "rls"}
        ``"rls"`` enables the recursive-LS fast path; it requires
        ``theta == 1`` and a fixed lam and maintains the per-row inverses.
    seed : int
        Seed for the random initial subspace (entries N(0, 1/P)).
    backend : {"auto", "numba", "numpy"}
        Row-update implementation for the direct path.
    """

    def __init__(self, ambient_dim, rank, theta=1.0, lam=1.0,
                 lambda_policy="fixed", sigma=None, pi=None, mode="direct",
                 seed=0, backend="auto"):
        if ambient_dim < 1 or rank < 1:
            raise ConfigError("ambient_dim and rank must be positive")
        if not (0.0 < theta <= 1.0):
            raise ConfigError(f"theta must be in (0, 1], got {theta}")
        if lambda_policy not in ("fixed", "noise_adaptive"):
            raise ConfigError(f"unknown lambda_policy {lambda_policy!r}")
        if lambda_policy == "noise_adaptive" and (sigma is None or pi is None):
            raise ConfigError("noise_adaptive policy needs sigma and pi")
        if mode not in ("direct", "rls"):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == "rls":
            if theta != 1.0:
                raise UnsupportedModeError(
                    "RLS path needs theta == 1; with theta < 1 the per-row "
                    "normal matrix is no longer a rank-one update"
                )
            if lambda_policy != "fixed":
                raise UnsupportedModeError(
                    "RLS path needs a fixed lambda (inverses are recursive)"
                )
            if lam <= 0:
                raise ConfigError("RLS path needs lam > 0")
        if backend not in ("auto", "numba", "numpy"):
            raise ConfigError(f"unknown backend {backend!r}")
        if backend == "numba" and not _kernels.HAVE_NUMBA:
            raise ConfigError("numba backend requested but numba is missing")
        if backend == "auto":
            backend = "numba" if _kernels.HAVE_NUMBA else "numpy"

        self.ambient_dim = int(ambient_dim)
        self.rank = int(rank)
        self.theta = float(theta)
        self.lam = float(lam)
        self.lambda_policy = lambda_policy
        self.sigma = sigma
        self.pi = pi
        self.mode = mode
        self.backend = backend
        self.t = 0
        self.effective_window = 0.0

        rng = np.random.default_rng(seed)
        P, rho = self.ambient_dim, self.rank
        # subspace transpose, (rho, P): row axis contiguous for the kernel
        self._LT = np.ascontiguousarray(
            rng.normal(0.0, 1.0 / np.sqrt(P), size=(P, rho)).T
        )
        self._s = np.zeros((rho, P))
        if mode == "direct":
            self._G = np.zeros((rho, rho, P))
            self._ws = np.empty((rho, rho, P))
            self._hinv = np.empty((rho, rho, P))
            self._acc = np.empty(P)
            self._Lnew = np.empty((rho, P))
            self._wmask = np.zeros(P)
            self._M = None
        else:
            self._G = None
            self._M = np.broadcast_to(
                np.eye(rho) / lam, (P, rho, rho)
            ).copy()

    # -- state views ------------------------------------------------------
    @property
    def L(self) -> np.ndarray:
        """Current subspace estimate, shape (P, rho)."""
        return self._LT.T.copy()

    @property
    def s(self) -> np.ndarray:
        return self._s.T.copy()

    @property
    def G(self) -> np.ndarray:
        """Gram accumulators as a (P, rho, rho) stack (direct mode only)."""
        if self._G is None:
            raise UnsupportedModeError("G is not maintained on the RLS path")
        return np.ascontiguousarray(self._G.transpose(2, 0, 1))

    @property
    def M(self) -> np.ndarray:
        """Per-row inverses H_p^{-1} (RLS mode only), shape (P, rho, rho)."""
        if self._M is None:
            raise UnsupportedModeError("M is only maintained on the RLS path")
        return self._M.copy()

    # -- stepping ---------------------------------------------------------
    def _begin_step(self, obs):
        if obs.ambient_dim != self.ambient_dim:
            raise ConfigError(
                f"observation has dimension {obs.ambient_dim}, "
                f"tracker expects {self.ambient_dim}"
            )
        self.t += 1
        self.effective_window = self.theta * self.effective_window + 1.0
        if self.lambda_policy == "noise_adaptive":
            self.lam = lambda_heuristic(
                self.ambient_dim, self.effective_window, self.pi, self.sigma
            )

    def step(self, obs: MaskedVector):
        """Process one observation; returns (q, x_hat) with x_hat = L[t] q[t]."""
        if self.mode == "rls":
            return self.rls_step(obs)
        self._begin_step(obs)
        if self.backend == "numba" and self.lam > 0:
            q = np.empty(self.rank)
            self._wmask.fill(0.0)
            self._wmask[obs.indices] = 1.0
            _kernels.matrix_step_direct(
                self._G, self._s, self._LT, self._Lnew, self._ws, self._hinv,
                self._acc, obs.values, obs.indices, self._wmask,
                self.theta, self.lam, q,
            )
            self._LT, self._Lnew = self._Lnew, self._LT
        else:
            q = project_coefficients(self._LT.T, obs, self.lam)
            self._G *= self.theta
            if obs.indices.size:
                self._G[:, :, obs.indices] += np.outer(q, q)[:, :, None]
            self._s *= self.theta
            if obs.indices.size:
                self._s[:, obs.indices] += q[:, None] * obs.values
            H = np.ascontiguousarray(self._G.transpose(2, 0, 1))
            H[:, np.arange(self.rank), np.arange(self.rank)] += self.lam
            try:
                Lnew = np.linalg.solve(H, self._s.T[..., None])[..., 0]
            except np.linalg.LinAlgError:
                raise SingularSystemError(
                    "row normal matrix is singular; use lambda > 0"
                ) from None
            self._LT = np.ascontiguousarray(Lnew.T)
        x_hat = self._LT.T @ q
        return q, x_hat

    def rls_step(self, obs: MaskedVector):
        """Recursive-LS fast path (theta == 1, fixed lambda)."""
        if self.mode != "rls":
            raise UnsupportedModeError(
                "tracker was not built in RLS mode"
            )
        self._begin_step(obs)
        idx = obs.indices
        first = self.t == 1
        if first:
            # rows not yet observed solve to zero (s_p = 0); discard the
            # random init once it has produced q[1]
            q = project_coefficients(self._LT.T, obs, self.lam)
            self._LT = np.zeros_like(self._LT)
        else:
            q = project_coefficients(self._LT.T, obs, self.lam)
        if idx.size:
            self._s[:, idx] += q[:, None] * obs.values
            Msub = self._M[idx]
            Mq = Msub @ q
            denom = 1.0 + Mq @ q
            self._M[idx] = Msub - Mq[:, :, None] * (Mq[:, None, :] / denom[:, None, None])
            rows = np.einsum("kij,jk->ki", self._M[idx], self._s[:, idx])
            self._LT[:, idx] = rows.T
        x_hat = self._LT.T @ q
        return q, x_hat

    def run(self, stream):
        """Iterate step() over a stream of observations; yields (obs, q, x_hat)."""
        for obs in stream:
            q, x_hat = self.step(obs)
            yield obs, q, x_hat


# -- diagnostic costs (O(t) per call; meant for checkpoints) ---------------

def _loss_terms(L, history, lam):
    for obs in history:
        if obs.n_observed == 0:
            yield obs, np.zeros(L.shape[1]), 0.0
            continue
        q = project_coefficients(L, obs, lam)
        r = obs.values - L[obs.indices] @ q
        yield obs, q, 0.5 * (r @ r) + 0.5 * lam * (q @ q)


def average_cost(L, history, lam, theta=1.0):
    """Normalized target cost C_t(L) for theta == 1.

    C_t = (1/t) sum_tau min_q g_tau(L, q) + (lam / 2t) ||L||_F^2 with
    g_tau the ridge-regularized masked fit.
    """
    if theta != 1.0:
        raise ConfigError("average_cost is defined for theta == 1 only")
    history = list(history)
    if not history:
        raise ConfigError("average_cost needs a nonempty history")
    t = len(history)
    total = sum(term for _, _, term in _loss_terms(L, history, lam))
    return total / t + 0.5 * lam * float(np.sum(L * L)) / t


def average_cost_gradient(L, history, lam):
    """Gradient of C_t at L (Danskin: q re-solved per column at L)."""
    history = list(history)
    if not history:
        raise ConfigError("average_cost_gradient needs a nonempty history")
    t = len(history)
    g = np.zeros_like(L)
    for obs, q, _ in _loss_terms(L, history, lam):
        if obs.n_observed == 0:
            continue
        r = obs.values - L[obs.indices] @ q
        g[obs.indices] -= r[:, None] * q
    return (g + lam * L) / t


def surrogate_cost(L, history, q_history, lam):
    """Upper-bound cost C_hat_t(L) using the recorded per-step coefficients."""
    history = list(history)
    q_history = list(q_history)
    if not history or len(history) != len(q_history):
        raise ConfigError("need matching nonempty histories")
    t = len(history)
    total = 0.0
    for obs, q in zip(history, q_history):
        if obs.n_observed:
            r = obs.values - L[obs.indices] @ q
            total += 0.5 * (r @ r)
        total += 0.5 * lam * (q @ q)
    return total / t + 0.5 * lam * float(np.sum(L * L)) / t
