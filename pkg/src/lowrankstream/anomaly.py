"""Residual-based sparse anomaly estimation over a routing matrix.

The flow anomaly vector is recovered from per-link residuals (observed link
count minus its low-rank imputation) by solving the printed-scale lasso

    min_o ||y_res - R o||^2 + lam_o ||o||_1

with cyclic coordinate descent (warm-started across time).  Detection and
false-alarm rates follow the running-average set definitions over
(flow, time) pairs at a prescribed magnitude threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from . import _kernels
from .data import MaskedSlice
from .exceptions import ConfigError, NonconvergenceError


@dataclass
class RoutingMatrix:
    """Link-by-flow routing fractions with human-readable labels."""

    R: np.ndarray
    link_labels: list
    flow_labels: list

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64)
        if self.R.ndim != 2:
            raise ConfigError("routing matrix must be 2-D")
        if len(self.link_labels) != self.R.shape[0]:
            raise ConfigError("link label count mismatch")
        if len(self.flow_labels) != self.R.shape[1]:
            raise ConfigError("flow label count mismatch")
        if self.R.min() < 0.0 or self.R.max() > 1.0:
            raise ConfigError("routing fractions must lie in [0, 1]")
        if np.any(np.abs(self.R).sum(axis=0) == 0.0):
            raise ConfigError("every flow must traverse at least one link")

    @property
    def n_links(self):
        return self.R.shape[0]

    @property
    def n_flows(self):
        return self.R.shape[1]


def lasso_kkt_residual(R, y, o, lam_o) -> float:
    """Max violation of the stationarity conditions of the printed objective."""
    corr = 2.0 * R.T @ (y - R @ o)
    active = o != 0
    viol = np.maximum(np.abs(corr) - lam_o, 0.0)
    out = viol[~active].max(initial=0.0)
    if np.any(active):
        out = max(out, np.abs(corr[active] - lam_o * np.sign(o[active])).max())
    return float(out)


def lasso_solve(R, y_res, lambda_o, tol=1e-10, max_iter=10000, x0=None):
    """Cyclic coordinate descent for ||y - R o||^2 + lambda_o ||o||_1.

    Sweeps until the largest coordinate change is below ``tol`` and the KKT
    residual of the current point is below ``10 * tol``.
    """
    if lambda_o < 0:
        raise ConfigError(f"lambda_o must be >= 0, got {lambda_o}")
    R = np.ascontiguousarray(R, dtype=np.float64)
    y_res = np.asarray(y_res, dtype=np.float64)
    o = np.zeros(R.shape[1]) if x0 is None else np.array(x0, dtype=float)
    resid = y_res - R @ o
    col_norms = np.ascontiguousarray((R * R).sum(axis=0))
    for _ in range(max_iter):
        delta = _kernels.lasso_cd_pass(R, col_norms, o, resid, lambda_o)
        if delta <= tol and lasso_kkt_residual(R, y_res, o, lambda_o) <= 10 * tol:
            return o
    raise NonconvergenceError(
        f"lasso_solve did not meet tol={tol} in {max_iter} sweeps",
        iterations=max_iter,
    )


def residual_vector(slice_obs: MaskedSlice, slice_hat, link_map):
    """Per-link residuals between observed counts and their imputation.

    ``link_map`` assigns each link an (i, j) cell of the slice.  Unobserved
    links contribute a zero residual (the imputed value stands in for the
    measurement) and are flagged False in the returned mask.
    """
    slice_hat = np.asarray(slice_hat)
    obs_mask = slice_obs.mask()
    obs_dense = slice_obs.dense()
    n_links = len(link_map)
    y_res = np.zeros(n_links)
    observed = np.zeros(n_links, dtype=bool)
    for ell, (i, j) in enumerate(link_map):
        if obs_mask[i, j]:
            y_res[ell] = obs_dense[i, j] - slice_hat[i, j]
            observed[ell] = True
    return y_res, observed


def detection_rates(true_O, est_O, xi):
    """Running detection and false-alarm rates over (time, flow) pairs.

    An entry belongs to the anomaly set when its magnitude reaches ``xi``.
    Returns (1, 0) conventionally when there are no true anomalies and no
    declared ones outside the (empty) truth set.
    """
    true_O = np.asarray(true_O)
    est_O = np.asarray(est_O)
    if true_O.shape != est_O.shape:
        raise ConfigError("true and estimated histories must share a shape")
    S_true = np.abs(true_O) >= xi
    S_est = np.abs(est_O) >= xi
    n_true = int(S_true.sum())
    n_null = int((~S_true).sum())
    p_d = float((S_true & S_est).sum() / n_true) if n_true else 1.0
    p_fa = float(((~S_true) & S_est).sum() / n_null) if n_null else 0.0
    return p_d, p_fa


@dataclass
class AnomalyEstimate:
    """Sparse anomaly estimate at one time step with its declared support."""

    t: int
    o_hat: np.ndarray
    xi: float
    support: np.ndarray = None

    def __post_init__(self):
        self.o_hat = np.asarray(self.o_hat, dtype=np.float64)
        expected = np.flatnonzero(np.abs(self.o_hat) >= self.xi)
        if self.support is None:
            self.support = expected
        else:
            self.support = np.asarray(self.support, dtype=np.int64)
            if not np.array_equal(np.sort(self.support), expected):
                raise ConfigError("support inconsistent with o_hat and xi")


def median_abs_threshold(estimate_history, factor=3.0) -> float:
    """Default support threshold: factor times the pooled median magnitude."""
    pooled = np.abs(np.asarray(estimate_history)).ravel()
    if pooled.size == 0:
        return np.inf
    return float(factor * np.median(pooled))


class AnomalyDetector:
    """Pipelines residual formation and the lasso across a slice stream."""

    def __init__(self, routing: RoutingMatrix, link_map, lambda_o,
                 xi: Optional[float] = None, tol=1e-8, max_iter=10000):
        self.routing = routing
        self.link_map = list(link_map)
        if len(self.link_map) != routing.n_links:
            raise ConfigError("link_map length must match routing links")
        self.lambda_o = float(lambda_o)
        self.xi = xi
        self.tol = tol
        self.max_iter = max_iter
        self._warm = None
        self._history = []

    def process(self, slice_obs: MaskedSlice, slice_hat) -> AnomalyEstimate:
        y_res, observed = residual_vector(slice_obs, slice_hat, self.link_map)
        R = self.routing.R[observed]
        o_hat = np.zeros(self.routing.n_flows)
        if R.shape[0]:
            keep = (R * R).sum(axis=0) > 0
            if keep.any():
                warm = None if self._warm is None else self._warm[keep]
                sol = lasso_solve(R[:, keep], y_res[observed], self.lambda_o,
                                  tol=self.tol, max_iter=self.max_iter,
                                  x0=warm)
                o_hat[keep] = sol
        self._warm = o_hat
        self._history.append(np.abs(o_hat))
        if len(self._history) > 200:
            self._history.pop(0)
        xi = self.xi if self.xi is not None else median_abs_threshold(self._history)
        return AnomalyEstimate(slice_obs.t, o_hat, xi)


def internet2_like_network():
    """Small deterministic network at the scale of a national backbone.

    11 nodes, 15 bidirectional core edges (30 directed links) plus one
    self-link per node for intra-node flows: 41 links total.  Flows are all
    121 ordered node pairs routed on hop-count shortest paths.

    Returns (RoutingMatrix, link_map) where link_map gives each link's
    (i, j) cell in an 11 x 11 traffic slice.
    """
    n_nodes = 11
    edges = [(i, (i + 1) % n_nodes) for i in range(n_nodes)]
    edges += [(0, 5), (2, 7), (3, 9), (1, 6)]
    graph = nx.Graph(edges)
    links = [(i, i) for i in range(n_nodes)]
    for u, v in edges:
        links.append((u, v))
        links.append((v, u))
    link_index = {cell: ell for ell, cell in enumerate(links)}
    flows = [(a, b) for a in range(n_nodes) for b in range(n_nodes)]
    R = np.zeros((len(links), len(flows)))
    paths = dict(nx.all_pairs_shortest_path(graph))
    for f, (a, b) in enumerate(flows):
        if a == b:
            R[link_index[(a, a)], f] = 1.0
            continue
        path = paths[a][b]
        for u, v in zip(path[:-1], path[1:]):
            R[link_index[(u, v)], f] = 1.0
    routing = RoutingMatrix(
        R,
        link_labels=[f"{u}->{v}" for u, v in links],
        flow_labels=[f"{a}->{b}" for a, b in flows],
    )
    return routing, links
