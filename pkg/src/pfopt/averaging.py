"""Streaming weighted iterate averaging with a best-ratio selection index.

The tracker consumes one (x_t, eta_t) pair per optimization step and
maintains, in O(d) memory, the weighted average

    x_bar(t) = (sum_{i<t} eta_i * x_i) / (sum_{i<t} eta_i)

frozen at the step tau maximizing the ratio (sum_{i<t} eta_i) / eta_t. The
candidate ratio at step t uses the weight sum strictly before the current
term; ties keep the earliest index (strict-improvement rule).
"""

from __future__ import annotations

import numpy as np


class AverageTracker:
    """Streams (iterate, step size) pairs and freezes the best-ratio average."""

    __slots__ = ("dim", "count", "weight_sum", "weighted_x", "best_ratio", "tau", "_snapshot")

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.count = 0
        self.weight_sum = 0.0
        self.weighted_x = np.zeros(dim, dtype=np.float64)
        self.best_ratio = 0.0
        self.tau: int | None = None
        self._snapshot: np.ndarray | None = None

    def observe(self, x: np.ndarray, eta: float) -> None:
        """Record one step. Must be called in step order with that step's eta."""
        if eta <= 0.0:
            raise ValueError(f"eta must be positive, got {eta}")
        if x.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {x.shape}")
        ratio = self.weight_sum / eta
        if ratio > self.best_ratio:
            self.best_ratio = ratio
            self.tau = self.count
            self._snapshot = self.weighted_x / self.weight_sum
        self.weight_sum += eta
        self.weighted_x += eta * x
        self.count += 1

    def current_average(self) -> tuple[int, np.ndarray]:
        """Return the frozen (tau, x_bar); errors before any candidate exists."""
        if self.tau is None or self._snapshot is None:
            raise RuntimeError("no averaged iterate yet: need at least two observations")
        return self.tau, self._snapshot.copy()
