"""Observation types and seeded synthetic-data generators.

Index convention: observed coordinates are 0-based everywhere in memory.
The CSV formats are 1-based; :mod:`lowrankstream.stream_io` is the only
place that mapping happens.

Randomness comes from ``numpy.random.default_rng`` (PCG64).  Streams are
fully determined by the config seed: per time step the generator draws, in
this order, the projection coefficients, the dense noise vector/matrix, and
the Bernoulli sampling mask.  The noise draw happens even when ``sigma == 0``
so that the mask sequence does not depend on the noise level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .exceptions import ConfigError


@dataclass
class MaskedVector:
    """One time step of a partially observed vector stream.

    ``indices`` holds the observed coordinates (0-based, strictly
    increasing); ``values`` the matching observed entries.  An empty index
    set is legal and represents a fully missing time step.
    """

    t: int
    indices: np.ndarray
    values: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.t < 1:
            raise ConfigError(f"time index must be >= 1, got {self.t}")
        if self.indices.ndim != 1 or self.values.ndim != 1:
            raise ConfigError("indices and values must be 1-D")
        if self.indices.size != self.values.size:
            raise ConfigError(
                f"{self.indices.size} indices but {self.values.size} values"
            )
        if self.indices.size:
            if self.indices[0] < 0 or self.indices[-1] >= self.ambient_dim:
                raise ConfigError(
                    f"indices must lie in [0, {self.ambient_dim}), got "
                    f"range [{self.indices[0]}, {self.indices[-1]}]"
                )
            if np.any(np.diff(self.indices) <= 0):
                raise ConfigError("indices must be strictly increasing")

    @property
    def n_observed(self) -> int:
        return int(self.indices.size)

    def dense(self) -> np.ndarray:
        """Observed entries scattered into a dense vector, zeros elsewhere."""
        out = np.zeros(self.ambient_dim)
        out[self.indices] = self.values
        return out


@dataclass
class MaskedSlice:
    """One partially observed matrix slice of a third-order tensor stream."""

    t: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    dims: tuple

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.dims = (int(self.dims[0]), int(self.dims[1]))
        m, n = self.dims
        if self.t < 1:
            raise ConfigError(f"time index must be >= 1, got {self.t}")
        if not (self.rows.size == self.cols.size == self.values.size):
            raise ConfigError("rows, cols and values must have equal length")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= m:
                raise ConfigError(f"row index out of range [0, {m})")
            if self.cols.min() < 0 or self.cols.max() >= n:
                raise ConfigError(f"col index out of range [0, {n})")
            flat = self.rows * n + self.cols
            if np.unique(flat).size != flat.size:
                raise ConfigError("duplicate (row, col) pair in slice")

    @property
    def n_observed(self) -> int:
        return int(self.values.size)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.dims, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dims)
        out[self.rows, self.cols] = self.values
        return out


@dataclass
class SynthMatrixConfig:
    """Generator settings for the synthetic matrix-stream protocol.

    ``change_at``, when set, switches the underlying subspace at that time
    step; ``change_mode`` selects a full redraw (default) or an additive
    perturbation that keeps the entry scale.
    """

    P: int
    r: int
    sigma: float
    pi: float
    seed: int
    change_at: Optional[int] = None
    change_mode: str = "redraw"

    def __post_init__(self):
        if not (0.0 < self.pi <= 1.0):
            raise ConfigError(f"pi must be in (0, 1], got {self.pi}")
        if self.r > self.P or self.r < 1:
            raise ConfigError(f"need 1 <= r <= P, got r={self.r}, P={self.P}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.change_mode not in ("redraw", "perturb"):
            raise ConfigError(f"unknown change_mode {self.change_mode!r}")


@dataclass
class SynthTensorConfig:
    """Generator settings for the synthetic tensor-slice protocol."""

    M: int
    N: int
    R: int
    sigma: float
    pi: float
    seed: int

    def __post_init__(self):
        if not (0.0 < self.pi <= 1.0):
            raise ConfigError(f"pi must be in (0, 1], got {self.pi}")
        if self.R > min(self.M, self.N) or self.R < 1:
            raise ConfigError(
                f"need 1 <= R <= min(M, N), got R={self.R}, "
                f"M={self.M}, N={self.N}"
            )
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")


def gen_matrix_stream(cfg: SynthMatrixConfig, horizon: int):
    """Yield ``(MaskedVector, true_x)`` pairs for ``t = 1..horizon``.

    The signal is ``x_t = U w_t`` with ``U`` entries i.i.d. normal with
    variance ``1/P``, coefficients ``w_t`` standard normal, additive noise
    with standard deviation ``sigma``, and each coordinate observed
    independently with probability ``pi``.
    """
    if horizon < 0:
        raise ConfigError(f"horizon must be >= 0, got {horizon}")
    rng = np.random.default_rng(cfg.seed)
    scale = 1.0 / np.sqrt(cfg.P)
    U = rng.normal(0.0, scale, size=(cfg.P, cfg.r))
    for t in range(1, horizon + 1):
        if cfg.change_at is not None and t == cfg.change_at:
            fresh = rng.normal(0.0, scale, size=(cfg.P, cfg.r))
            if cfg.change_mode == "redraw":
                U = fresh
            else:
                # keep the per-entry variance at 1/P after the bump
                U = (U + fresh) / np.sqrt(2.0)
        w = rng.standard_normal(cfg.r)
        noise = rng.standard_normal(cfg.P) * cfg.sigma
        mask = rng.random(cfg.P) < cfg.pi
        x = U @ w
        y = x + noise
        idx = np.flatnonzero(mask)
        yield MaskedVector(t, idx, y[idx], cfg.P), x


def gen_tensor_stream(cfg: SynthTensorConfig, horizon: int):
    """Yield ``(MaskedSlice, true_X)`` pairs for ``t = 1..horizon``.

    Slices are ``X_t = A diag(g_t) B'`` with factor columns drawn once as
    standard normal vectors and per-slice coefficients ``g_t`` standard
    normal; entries are observed independently with probability ``pi``.
    """
    if horizon < 0:
        raise ConfigError(f"horizon must be >= 0, got {horizon}")
    rng = np.random.default_rng(cfg.seed)
    A = rng.standard_normal((cfg.M, cfg.R))
    B = rng.standard_normal((cfg.N, cfg.R))
    for t in range(1, horizon + 1):
        g = rng.standard_normal(cfg.R)
        noise = rng.standard_normal((cfg.M, cfg.N)) * cfg.sigma
        mask = rng.random((cfg.M, cfg.N)) < cfg.pi
        X = (A * g) @ B.T
        Y = X + noise
        rows, cols = np.nonzero(mask)
        yield MaskedSlice(t, rows, cols, Y[rows, cols], (cfg.M, cfg.N)), X
