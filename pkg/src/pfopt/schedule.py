"""Learning-rate multiplier schedules layered on top of optimizer steps.

The multiplier scales the applied step only; it never feeds back into the
distance-calibrated step-size recursion of the parameter-free kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SCHEDULE_KINDS = ("constant", "cosine", "cosine_warmup")


@dataclass(frozen=True)
class Schedule:
    """Multiplier schedule over ``total_steps`` steps.

    constant:       1 everywhere.
    cosine:         floor + (1 - floor) * (1 + cos(pi * t / (T-1))) / 2.
    cosine_warmup:  (t+1)/W for t < W, then the cosine arc over the remainder.

    The warmup ramp starts at 1/W rather than 0 so step 0 still moves the
    iterate; a zero first step would freeze the distance-based step size at
    its seed forever under a constant gradient.
    """

    kind: str = "constant"
    total_steps: int = 1
    warmup_steps: int = 0
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("warmup_steps must satisfy 0 <= W < total_steps")
        if not 0.0 <= self.floor <= 1.0:
            raise ValueError("floor must lie in [0, 1]")


def multiplier(sched: Schedule, t: int) -> float:
    """Multiplier at step ``t``; requires 0 <= t < total_steps."""
    T = sched.total_steps
    if not 0 <= t < T:
        raise ValueError(f"step {t} outside [0, {T})")
    if sched.kind == "constant":
        return 1.0
    if sched.kind == "cosine":
        if T == 1:
            return 1.0
        phase = t / (T - 1)
        return sched.floor + (1.0 - sched.floor) * 0.5 * (1.0 + math.cos(math.pi * phase))
    # cosine_warmup
    W = sched.warmup_steps
    if t < W:
        # clamped from below so the multiplier stays >= floor everywhere
        return max((t + 1) / W, sched.floor)
    span = T - 1 - W
    if span <= 0:
        return 1.0
    phase = (t - W) / span
    return sched.floor + (1.0 - sched.floor) * 0.5 * (1.0 + math.cos(math.pi * phase))
