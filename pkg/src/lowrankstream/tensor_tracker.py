"""Online SGD PARAFAC decomposition and imputation of streaming slices.

Each incoming slice is fit by the closed-form ridge solve for the slice
coefficients against the current factor pair (A, B); the factors then take
one stochastic-gradient step on

    fbar_t(A, B) = 0.5 ||W_t o (Y_t - A diag(g[t]) B')||_F^2
                   + (lam / 2t) (||A||_F^2 + ||B||_F^2) + (lam / 2) ||g[t]||^2

where W_t is the binary observation mask.  Both factor updates read the
pre-step A and B; the returned imputation uses the post-step factors.  The
third factor can be completed afterwards against frozen A, B by re-solving
each retained (or revisited) slice.

Per-slice cost is O(|W_t| Rhat^2), dominated by the coefficient solve.
"""
from __future__ import annotations

import numpy as np

from .data import MaskedSlice
from .exceptions import ConfigError, SingularSystemError

__all__ = [
    "gamma_solve", "grad_A", "grad_B", "impute", "tensor_loss",
    "finalize_C", "completion_dof_ok", "TensorTracker",
    "average_cost", "average_cost_gradient",
]


def gamma_solve(A, B, slc: MaskedSlice, lam) -> np.ndarray:
    """Closed-form slice coefficients.

    Solves ``[lam I + sum_(m,n) z z'] g = sum_(m,n) Y(m,n) z`` over the
    observed cells, with ``z = A_row(m) * B_row(n)`` (entrywise).
    """
    R = A.shape[1]
    if slc.n_observed == 0:
        if lam > 0:
            return np.zeros(R)
        raise SingularSystemError("empty slice with lam == 0")
    Z = A[slc.rows] * B[slc.cols]
    gram = Z.T @ Z
    gram[np.diag_indices_from(gram)] += lam
    rhs = Z.T @ slc.values
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "observed design is singular; use lam > 0"
        ) from None


def _masked_residual(A, B, gamma, slc):
    # residual on the observed cells only, length |Omega_t|
    Z = A[slc.rows] * B[slc.cols]
    return slc.values - Z @ gamma


def grad_A(A, B, gamma, slc: MaskedSlice, lam, t) -> np.ndarray:
    """Gradient of fbar_t with respect to A."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    g = (lam / t) * A
    if slc.n_observed:
        e = _masked_residual(A, B, gamma, slc)
        np.subtract.at(g, slc.rows, e[:, None] * (B[slc.cols] * gamma))
    return g


def grad_B(A, B, gamma, slc: MaskedSlice, lam, t) -> np.ndarray:
    """Gradient of fbar_t with respect to B (transposed-residual mirror)."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    g = (lam / t) * B
    if slc.n_observed:
        e = _masked_residual(A, B, gamma, slc)
        np.subtract.at(g, slc.cols, e[:, None] * (A[slc.rows] * gamma))
    return g


def impute(A, B, gamma) -> np.ndarray:
    """Dense slice reconstruction A diag(gamma) B'."""
    return (A * gamma) @ B.T


def tensor_loss(A, B, gamma, slc: MaskedSlice, lam, t) -> float:
    """Value of fbar_t (masked fit + factor and coefficient ridges)."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    e = _masked_residual(A, B, gamma, slc) if slc.n_observed else np.zeros(0)
    return float(
        0.5 * (e @ e)
        + 0.5 * lam / t * (np.sum(A * A) + np.sum(B * B))
        + 0.5 * lam * (gamma @ gamma)
    )


def finalize_C(A, B, slices, lam) -> np.ndarray:
    """Rows of the third factor, re-solved against frozen A, B.

    The triple (A, B, C) is the low-rank approximation of the whole stream.
    """
    rows = [gamma_solve(A, B, slc, lam) for slc in slices]
    if not rows:
        return np.zeros((0, A.shape[1]))
    return np.vstack(rows)


def completion_dof_ok(M, N, T, R_hat, observe_prob) -> bool:
    """Degrees-of-freedom sanity gate: observed samples vs model unknowns."""
    return observe_prob * M * N * T >= R_hat * (M + N + T)


class TensorTracker:
    """Streaming PARAFAC tracker.

    Parameters
    ----------
    dims : (int, int)
        Slice shape (M, N).
    rank_bound : int
        Factor width Rhat (an upper bound on the true rank).
    lam : float, optional
        Ridge weight.  When omitted, ``sigma`` and ``pi`` must be given and
        lam defaults to sqrt(2 M N pi) * sigma.
    mu_bar : float
        Step-size denominator; the step size is 1 / mu_bar.
    step_mode : {"constant", "linear"}
        ``"linear"`` grows the denominator as mu_bar * t, which matches the
        linear-growth hypothesis of the convergence analysis.
    retain_slices : bool
        Keep processed slices in memory so :meth:`finalize_C` can run
        without a second pass over the source.
    """

    def __init__(self, dims, rank_bound, lam=None, sigma=None, pi=None,
                 mu_bar=100.0, step_mode="constant", retain_slices=False,
                 seed=0):
        M, N = int(dims[0]), int(dims[1])
        if M < 1 or N < 1 or rank_bound < 1:
            raise ConfigError("dims and rank_bound must be positive")
        if step_mode not in ("constant", "linear"):
            raise ConfigError(f"unknown step_mode {step_mode!r}")
        if mu_bar <= 0:
            raise ConfigError("mu_bar must be positive")
        if lam is None:
            if sigma is None or pi is None:
                raise ConfigError("either lam or both sigma and pi required")
            lam = np.sqrt(2.0 * M * N * pi) * sigma
        self.dims = (M, N)
        self.rank_bound = int(rank_bound)
        self.lam = float(lam)
        self.mu_bar0 = float(mu_bar)
        self.step_mode = step_mode
        self.retain_slices = bool(retain_slices)
        self.t = 0
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(self.rank_bound)
        self.A = rng.standard_normal((M, self.rank_bound)) * scale
        self.B = rng.standard_normal((N, self.rank_bound)) * scale
        self.C_rows = []
        self._retained = []

    def _mu_bar(self, t):
        if self.step_mode == "constant":
            return self.mu_bar0
        return self.mu_bar0 * t

    def step(self, slc: MaskedSlice):
        """Process one slice; returns (gamma, X_hat) with post-update factors."""
        if slc.dims != self.dims:
            raise ConfigError(
                f"slice dims {slc.dims} do not match tracker dims {self.dims}"
            )
        self.t += 1
        t = self.t
        mu_bar = self._mu_bar(t)
        A, B = self.A, self.B
        gamma = gamma_solve(A, B, slc, self.lam)
        shrink = 1.0 - self.lam / (t * mu_bar)
        scatter_A = np.zeros_like(A)
        scatter_B = np.zeros_like(B)
        if slc.n_observed:
            e = _masked_residual(A, B, gamma, slc)
            np.add.at(scatter_A, slc.rows, e[:, None] * (B[slc.cols] * gamma))
            np.add.at(scatter_B, slc.cols, e[:, None] * (A[slc.rows] * gamma))
        self.A = shrink * A + scatter_A / mu_bar
        self.B = shrink * B + scatter_B / mu_bar
        self.C_rows.append(gamma)
        if self.retain_slices:
            self._retained.append(slc)
        return gamma, impute(self.A, self.B, gamma)

    def finalize_C(self, slices=None, lam=None) -> np.ndarray:
        """Complete the third factor against the frozen current A, B."""
        if slices is None:
            if not self.retain_slices:
                raise ConfigError(
                    "slice source is not revisitable and retention is "
                    "disabled; pass the slices explicitly or construct the "
                    "tracker with retain_slices=True"
                )
            slices = self._retained
        return finalize_C(self.A, self.B, slices,
                          self.lam if lam is None else lam)

    def run(self, stream):
        for slc in stream:
            gamma, X_hat = self.step(slc)
            yield slc, gamma, X_hat


# -- diagnostic cost and gradient (O(t) per call) ---------------------------

def average_cost(A, B, slices, lam) -> float:
    """Normalized cost with per-slice coefficients re-solved at (A, B)."""
    slices = list(slices)
    if not slices:
        raise ConfigError("average_cost needs a nonempty history")
    t = len(slices)
    total = 0.0
    for slc in slices:
        g = gamma_solve(A, B, slc, lam)
        e = _masked_residual(A, B, g, slc) if slc.n_observed else np.zeros(0)
        total += 0.5 * (e @ e) + 0.5 * lam * (g @ g)
    reg = 0.5 * lam * (np.sum(A * A) + np.sum(B * B))
    return (total + reg) / t


def average_cost_gradient(A, B, slices, lam):
    """Gradient of the normalized cost (Danskin over the slice coefficients)."""
    slices = list(slices)
    if not slices:
        raise ConfigError("average_cost_gradient needs a nonempty history")
    t = len(slices)
    gA = np.zeros_like(A)
    gB = np.zeros_like(B)
    for slc in slices:
        g = gamma_solve(A, B, slc, lam)
        if not slc.n_observed:
            continue
        e = _masked_residual(A, B, g, slc)
        np.subtract.at(gA, slc.rows, e[:, None] * (B[slc.cols] * g))
        np.subtract.at(gB, slc.cols, e[:, None] * (A[slc.rows] * g))
    return (gA + lam * A) / t, (gB + lam * B) / t
