"""Compiled hot loops.

The subspace-update kernel keeps the per-row Gram accumulators in a
(rank, rank, P) "structure of arrays" layout so every inner loop runs over
the contiguous row axis and vectorizes; that keeps the per-step cost profile
flop-dominated across the whole rank range instead of dispatch-dominated.
Each row update factors H_p = G_p + lam*I (Cholesky), forms H_p^{-1} by
dense identity solves, and applies it; the inverse is a per-step temporary,
never part of the tracker state.

Import is optional: callers fall back to the numpy implementations when
numba is unavailable.
"""
import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def matrix_step_direct(G, s, LT, Lnew_T, ws, hinv, acc, y_obs, idx, wmask,
                       theta, lam, q):
    """One Algorithm-1 step on the theta<1 (direct) path.

    In place: decays and rank-one-updates G (rho, rho, P) and s (rho, P),
    solves the ridge system for q from LT = L[t-1]' (rho, P), and writes the
    new subspace transpose into Lnew_T.  ws/hinv/acc are reusable
    workspaces of shapes (rho, rho, P), (rho, rho, P), (P,).
    """
    rho = G.shape[0]
    P = G.shape[2]
    k = idx.shape[0]
    # ridge system for the projection coefficients, on the previous subspace
    A0 = np.empty((rho, rho))
    for i in range(rho):
        for j in range(i + 1):
            accv = 0.0
            for t in range(k):
                p = idx[t]
                accv += LT[i, p] * LT[j, p]
            A0[i, j] = accv
            A0[j, i] = accv
        A0[i, i] += lam
    rhs = np.empty(rho)
    for i in range(rho):
        accv = 0.0
        for t in range(k):
            accv += LT[i, idx[t]] * y_obs[t]
        rhs[i] = accv
    C = np.empty((rho, rho))
    for i in range(rho):
        for j in range(i + 1):
            accv = A0[i, j]
            for m in range(j):
                accv -= C[i, m] * C[j, m]
            if i == j:
                C[i, i] = np.sqrt(accv)
            else:
                C[i, j] = accv / C[j, j]
    z = np.empty(rho)
    for i in range(rho):
        accv = rhs[i]
        for m in range(i):
            accv -= C[i, m] * z[m]
        z[i] = accv / C[i, i]
    for i in range(rho - 1, -1, -1):
        accv = z[i]
        for m in range(i + 1, rho):
            accv -= C[m, i] * q[m]
        q[i] = accv / C[i, i]
    # decay s and scatter the new observations
    for i in range(rho):
        qi = q[i]
        for p in range(P):
            s[i, p] = theta * s[i, p]
        for t in range(k):
            s[i, idx[t]] += y_obs[t] * qi
    # batched Cholesky of H = theta*G + w qq' + lam I; G updated on first touch
    for j in range(rho):
        qq = q[j] * q[j]
        for p in range(P):
            g = theta * G[j, j, p] + wmask[p] * qq
            G[j, j, p] = g
            acc[p] = g + lam
        for m in range(j):
            for p in range(P):
                acc[p] -= ws[j, m, p] * ws[j, m, p]
        for p in range(P):
            ws[j, j, p] = np.sqrt(acc[p])
        for i in range(j + 1, rho):
            qq = q[i] * q[j]
            for p in range(P):
                g = theta * G[i, j, p] + wmask[p] * qq
                G[i, j, p] = g
                G[j, i, p] = g
                acc[p] = g
            for m in range(j):
                for p in range(P):
                    acc[p] -= ws[i, m, p] * ws[j, m, p]
            for p in range(P):
                ws[i, j, p] = acc[p] / ws[j, j, p]
    # H^{-1}, column by column
    for j in range(rho):
        for i in range(rho):
            v = 1.0 if i == j else 0.0
            for p in range(P):
                hinv[i, j, p] = v
        for i in range(rho):
            for m in range(i):
                for p in range(P):
                    hinv[i, j, p] -= ws[i, m, p] * hinv[m, j, p]
            for p in range(P):
                hinv[i, j, p] /= ws[i, i, p]
        for i in range(rho - 1, -1, -1):
            for m in range(i + 1, rho):
                for p in range(P):
                    hinv[i, j, p] -= ws[m, i, p] * hinv[m, j, p]
            for p in range(P):
                hinv[i, j, p] /= ws[i, i, p]
    # new subspace rows: l_p = H_p^{-1} s_p
    for i in range(rho):
        for p in range(P):
            acc[p] = 0.0
        for m in range(rho):
            for p in range(P):
                acc[p] += hinv[i, m, p] * s[m, p]
        for p in range(P):
            Lnew_T[i, p] = acc[p]


@njit(cache=True)
def lasso_cd_pass(R, RtR_diag, o, resid, lam):
    """One cyclic coordinate-descent sweep for ||y - R o||^2 + lam*||o||_1.

    ``resid`` holds y - R o and is kept consistent; returns the largest
    coordinate change of the sweep.
    """
    F = o.shape[0]
    L = resid.shape[0]
    max_delta = 0.0
    for f in range(F):
        nrm = RtR_diag[f]
        if nrm == 0.0:
            continue
        old = o[f]
        rho_f = 0.0
        for l in range(L):
            rho_f += R[l, f] * resid[l]
        rho_f += nrm * old
        # printed objective has no 1/2 factor: threshold at lam/2
        if rho_f > lam / 2.0:
            new = (rho_f - lam / 2.0) / nrm
        elif rho_f < -lam / 2.0:
            new = (rho_f + lam / 2.0) / nrm
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            for l in range(L):
                resid[l] -= delta * R[l, f]
            o[f] = new
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
    return max_delta
