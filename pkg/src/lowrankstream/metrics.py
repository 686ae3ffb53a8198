"""Estimation-error metrics used by the experiment runners."""
from __future__ import annotations

import numpy as np


class RunningRelativeError:
    """Running average of per-step relative errors ||x_hat - x|| / ||x||.

    Steps with a zero-norm ground truth contribute zero (they cannot be
    scored) but still count toward the average length.
    """

    def __init__(self):
        self._total = 0.0
        self._count = 0

    def update(self, x_hat: np.ndarray, x_true: np.ndarray) -> float:
        denom = np.linalg.norm(x_true)
        if denom > 0:
            self._total += np.linalg.norm(x_hat - x_true) / denom
        self._count += 1
        return self.value

    @property
    def value(self) -> float:
        if self._count == 0:
            return float("nan")
        return self._total / self._count


def slice_relative_error(X_hat: np.ndarray, X_true: np.ndarray) -> float:
    """Per-slice relative Frobenius error used for tensor runs."""
    denom = np.linalg.norm(X_true)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(X_hat - X_true) / denom)
