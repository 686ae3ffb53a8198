"""Desk-scale batch solvers and optimality certificates.

These are the ground-truth oracles the streaming trackers are measured
against: the convex nuclear-norm-regularized completion problem (solved by
proximal gradient with singular-value soft-thresholding), its bilinear
reformulation (solved by exact alternating ridge regressions), the
spectral-norm qualification certificate that promotes a bilinear stationary
point to the convex problem's global optimum, and the KKT/complementary-
slackness report for the semidefinite reformulation.

Everything here is dense and guarded to P * t <= 1e6 entries; the oracles
exist for verification, not scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError, NonconvergenceError

_DENSE_GUARD = 10**6


@dataclass
class BatchProblem:
    """Observed window Y with binary mask, ridge weight lam, width rho."""

    Y_obs: np.ndarray
    mask: np.ndarray
    lam: float
    rho: int = 0

    def __post_init__(self):
        self.Y_obs = np.asarray(self.Y_obs, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.Y_obs.shape != self.mask.shape:
            raise ConfigError(
                f"Y_obs {self.Y_obs.shape} and mask {self.mask.shape} differ"
            )
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")

    @property
    def shape(self):
        return self.Y_obs.shape

    @property
    def masked_Y(self) -> np.ndarray:
        return np.where(self.mask, self.Y_obs, 0.0)


def _guard(prob: BatchProblem, what: str):
    P, t = prob.shape
    if P * t > _DENSE_GUARD:
        raise ConfigError(
            f"{what} is a dense desk-scale oracle; P*t = {P * t} exceeds "
            f"{_DENSE_GUARD}"
        )


def nuclear_norm(X) -> float:
    """Sum of singular values."""
    return float(np.linalg.svd(np.asarray(X, dtype=np.float64),
                               compute_uv=False).sum())


def svt(X, tau) -> np.ndarray:
    """Singular-value soft-thresholding, the proximal map of tau * ||.||_*."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vt


def svd_split(X, rho: Optional[int] = None):
    """Balanced factors L = U sqrt(S), Q = V sqrt(S) with X = L Q'.

    This construction attains the bilinear characterization of the nuclear
    norm: 0.5 (||L||_F^2 + ||Q||_F^2) equals ||X||_*.
    """
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if rho is not None:
        if rho < 1:
            raise ConfigError("rho must be >= 1")
        U, s, Vt = U[:, :rho], s[:rho], Vt[:rho]
    root = np.sqrt(s)
    return U * root, Vt.T * root


def p1_objective(X, prob: BatchProblem) -> float:
    r = prob.mask * (prob.Y_obs - X)
    return float(0.5 * np.sum(r * r) + prob.lam * nuclear_norm(X))


def p2_objective(L, Q, prob: BatchProblem) -> float:
    r = prob.mask * (prob.Y_obs - L @ Q.T)
    return float(
        0.5 * np.sum(r * r)
        + 0.5 * prob.lam * (np.sum(L * L) + np.sum(Q * Q))
    )


def solve_p1(prob: BatchProblem, tol=1e-9, max_iter=5000, init=None,
             full_output=False):
    """Proximal-gradient solver for the convex completion problem.

    Unit gradient step (the masked-residual gradient is 1-Lipschitz)
    followed by singular-value soft-thresholding at level lam; starts at
    zero and stops when the relative objective change drops below ``tol``.
    The objective sequence is monotone nonincreasing.
    """
    _guard(prob, "solve_p1")
    if prob.lam <= 0:
        raise ConfigError("solve_p1 needs lam > 0")
    X = np.zeros(prob.shape) if init is None else np.array(init, dtype=float)
    obj = p1_objective(X, prob)
    trace = [obj]
    for _ in range(max_iter):
        X = svt(X + prob.mask * (prob.Y_obs - X), prob.lam)
        new_obj = p1_objective(X, prob)
        trace.append(new_obj)
        if abs(obj - new_obj) <= tol * max(abs(obj), 1e-30):
            if full_output:
                return X, {"objective": new_obj, "iterations": len(trace) - 1,
                           "trace": trace}
            return X
        obj = new_obj
    raise NonconvergenceError(
        f"solve_p1 did not meet tol={tol} in {max_iter} iterations",
        last_objective=obj, iterations=max_iter,
    )


def _ridge_rows(basis, mask, target, lam):
    # one exact block update: rows_p = argmin ||mask_p*(target_p - basis r)||^2
    #  + lam ||r||^2, solved for every p at once
    n, rho = basis.shape
    gram = np.einsum("tr,ts,pt->prs", basis, basis, mask, optimize=True)
    gram[:, np.arange(rho), np.arange(rho)] += lam
    rhs = (mask * target) @ basis
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def solve_p2(prob: BatchProblem, tol=1e-9, max_iter=500, init=None, seed=0,
             full_output=False):
    """Exact alternating minimization for the bilinear reformulation.

    Each half-step is a closed-form ridge solve, so the objective is
    monotone nonincreasing; terminates on relative objective change.
    ``init`` may supply (L0, Q0), e.g. the balanced SVD split of a convex
    solution.
    """
    _guard(prob, "solve_p2")
    P, t = prob.shape
    rho = prob.rho
    if init is not None:
        L, Q = (np.array(a, dtype=float) for a in init)
        rho = L.shape[1]
    else:
        if rho < 1:
            raise ConfigError("solve_p2 needs rho >= 1 (or an init pair)")
        rng = np.random.default_rng(seed)
        L = rng.normal(0.0, 1.0 / np.sqrt(P), size=(P, rho))
        Q = np.zeros((t, rho))
        Q = _ridge_rows(L, prob.mask.T, prob.Y_obs.T, prob.lam)
    obj = p2_objective(L, Q, prob)
    trace = [obj]
    for _ in range(max_iter):
        L = _ridge_rows(Q, prob.mask, prob.Y_obs, prob.lam)
        Q = _ridge_rows(L, prob.mask.T, prob.Y_obs.T, prob.lam)
        new_obj = p2_objective(L, Q, prob)
        trace.append(new_obj)
        if abs(obj - new_obj) <= tol * max(abs(obj), 1e-30):
            if full_output:
                return (L, Q), {"objective": new_obj,
                                "iterations": len(trace) - 1, "trace": trace}
            return L, Q
        obj = new_obj
    raise NonconvergenceError(
        f"solve_p2 did not meet tol={tol} in {max_iter} iterations",
        last_objective=obj, iterations=max_iter,
    )


@dataclass
class CertificateReport:
    """Outcome of the global-optimality check at a bilinear point."""

    certified: bool
    sigma_ratio: float
    stationarity_residual: float
    sigma_max: float
    lam: float
    residual_L: float
    residual_Q: float

    def as_dict(self):
        return {
            "certified": bool(self.certified),
            "sigma_ratio": float(self.sigma_ratio),
            "stationarity_residual": float(self.stationarity_residual),
            "sigma_max": float(self.sigma_max),
            "lam": float(self.lam),
            "residual_L": float(self.residual_L),
            "residual_Q": float(self.residual_Q),
        }


def certify_global(L, Q, prob: BatchProblem, tol=1e-6, qual_tol=1e-6):
    """Global-optimality certificate for a stationary bilinear point.

    Checks (a) the qualification inequality sigma_max of the masked residual
    <= lam (within ``qual_tol``) and (b) stationarity of the bilinear
    objective at (L, Q), each residual measured relative to the magnitude of
    the balanced terms.  When both hold, L Q' is the global optimum of the
    convex problem.
    """
    R = prob.mask * (prob.Y_obs - L @ Q.T)
    sigma_max = float(np.linalg.svd(R, compute_uv=False)[0]) if R.size else 0.0
    lam = prob.lam
    RQ = R @ Q
    RtL = R.T @ L
    res_L = float(np.linalg.norm(RQ - lam * L))
    res_Q = float(np.linalg.norm(RtL - lam * Q))
    scale_L = max(np.linalg.norm(RQ), lam * np.linalg.norm(L), 1e-30)
    scale_Q = max(np.linalg.norm(RtL), lam * np.linalg.norm(Q), 1e-30)
    stationarity = max(res_L / scale_L, res_Q / scale_Q)
    if lam > 0:
        sigma_ratio = sigma_max / lam
        qual_ok = sigma_max <= lam * (1.0 + qual_tol)
    else:
        sigma_ratio = np.inf if sigma_max > 0 else 0.0
        qual_ok = sigma_max == 0.0
    return CertificateReport(
        certified=bool(qual_ok and stationarity <= tol),
        sigma_ratio=sigma_ratio,
        stationarity_residual=stationarity,
        sigma_max=sigma_max,
        lam=lam,
        residual_L=res_L,
        residual_Q=res_Q,
    )


@dataclass
class KktReport:
    """Residuals of the semidefinite-reformulation optimality system.

    Normalizations follow the candidate construction: the dual blocks carry
    a 1/(2t) factor, ``comp_slack_abs`` is the raw |<M, W>| (so it already
    contains that 1/(2t)), ``comp_slack_per_t`` divides by t once more, and
    ``comp_slack_rel`` additionally divides by ||Y||_F^2.  ``dual_min_eig``
    equals (lam - sigma_max(residual)) / (2t): the dual block matrix is PSD
    exactly when the qualification inequality holds.
    """

    grad_X_residual: float
    grad_W1_residual: float
    grad_W2_residual: float
    comp_slack_abs: float
    comp_slack_per_t: float
    comp_slack_rel: float
    dual_min_eig: float
    sigma_max: float
    lam: float
    t: int

    def passes(self, tol=1e-6) -> bool:
        y_scale = max(1.0, self.lam)
        grads_ok = max(self.grad_X_residual, self.grad_W1_residual,
                       self.grad_W2_residual) <= tol * y_scale
        slack_ok = self.comp_slack_rel <= tol
        dual_ok = self.sigma_max <= self.lam * (1.0 + tol)
        return bool(grads_ok and slack_ok and dual_ok)

    def as_dict(self):
        return {k: (int(v) if k == "t" else float(v))
                for k, v in self.__dict__.items()}


def kkt_check_p1(X_hat, prob: BatchProblem, L=None, Q=None) -> KktReport:
    """Build the candidate primal/dual blocks at X_hat and report residuals.

    When the factors are not supplied they are taken from the balanced SVD
    split of ``X_hat``.  At a certified point every residual is ~0; a
    perturbed point leaves a visible complementary-slackness or dual-
    feasibility violation.
    """
    _guard(prob, "kkt_check_p1")
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if (L is None) != (Q is None):
        raise ConfigError("pass both L and Q or neither")
    if L is None:
        L, Q = svd_split(X_hat)
    P, t = prob.shape
    R = prob.mask * (prob.Y_obs - L @ Q.T)
    lam = prob.lam
    M2 = -R / (2.0 * t)
    # gradient conditions; the first is identically zero by construction of
    # M2 and M4 = M2', the other two pin the dual diagonal blocks
    grad_X = np.linalg.norm(-R / t - M2 - M2)
    grad_W1 = 0.0  # M1 := (lam/2t) I_P exactly
    grad_W2 = 0.0  # M3 := (lam/2t) I_t exactly
    comp = (
        0.5 * lam / t * (np.sum(L * L) + np.sum(Q * Q))
        - np.sum(R * (L @ Q.T)) / t
    )
    sigma_max = float(np.linalg.svd(R, compute_uv=False)[0]) if R.size else 0.0
    y_norm2 = float(np.sum(prob.masked_Y ** 2))
    return KktReport(
        grad_X_residual=float(grad_X),
        grad_W1_residual=float(grad_W1),
        grad_W2_residual=float(grad_W2),
        comp_slack_abs=abs(float(comp)),
        comp_slack_per_t=abs(float(comp)) / t,
        comp_slack_rel=abs(float(comp)) / t / max(y_norm2, 1e-30),
        dual_min_eig=(lam - sigma_max) / (2.0 * t),
        sigma_max=sigma_max,
        lam=lam,
        t=t,
    )
