"""Convergence-certificate quantities computed from a recorded run history,
plus empirical rate-slope fits across horizons.

The report collects, at the averaging index tau of a finished run:

    d_tau      = max_{t<=tau} ||x_t - x_star||_inf
    d_bar_tau  = max_{t<=tau} ||x_t - x_star||_2
    s_tau_l2   = ||s_tau||_2 (preconditioner diagonal at tau)
    theta      = log(60 log(6 tau) / delta)
    l_hat      = max_t ||g_t||_2 (empirical stand-in for the oracle bound)
    bound_core = (d_tau^2 sqrt(d) s_tau_l2
                  + d_bar_tau eta0 sqrt(theta s_tau_l2^2 + l_hat^2 theta^2))
                 / (T eta0) * log(eta_T / eta0)

bound_core is the bracketed certificate expression with no hidden constant
applied, so callers can check that gap / bound_core stays bounded across T
(a ratio test) instead of asserting an unknowable constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def theta(t: int, delta_conf: float) -> float:
    """Concentration factor log(60 * log(6 t) / delta); natural logs, t >= 1."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0.0 < delta_conf <= 1.0:
        raise ValueError("delta_conf must lie in (0, 1]")
    return math.log(60.0 * math.log(6.0 * t) / delta_conf)


@dataclass
class RunHistory:
    """Per-step scalar observables of one run.

    Iterate-indexed arrays (length T+1, final entry is the last iterate):
    eta, dist_x0, and the distances to x_star when a minimizer is known.
    Step-indexed arrays (length T): r, grad_l2, s_l2.
    """

    dim: int
    eta: np.ndarray
    r: np.ndarray
    grad_l2: np.ndarray
    s_l2: np.ndarray
    dist_x0: np.ndarray
    dist_xstar_inf: np.ndarray | None = None
    dist_xstar_l2: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.grad_l2)


@dataclass
class TheoremReport:
    """Certificate quantities at tau; distance/gap fields are None without a minimizer."""

    tau: int
    total_steps: int
    theta: float
    s_tau_l2: float
    l_hat: float
    eta0: float
    eta_final: float
    log_eta_ratio: float
    has_minimizer: bool
    d_tau: float | None = None
    d_bar_tau: float | None = None
    gap: float | None = None
    bound_core: float | None = None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "total_steps": self.total_steps,
            "theta": self.theta,
            "s_tau_l2": self.s_tau_l2,
            "l_hat": self.l_hat,
            "eta0": self.eta0,
            "eta_final": self.eta_final,
            "log_eta_ratio": self.log_eta_ratio,
            "has_minimizer": self.has_minimizer,
            "d_tau": self.d_tau,
            "d_bar_tau": self.d_bar_tau,
            "gap": self.gap,
            "bound_core": self.bound_core,
        }


def theorem_report(history: RunHistory, tau: int, total_steps: int, eta0: float,
                   delta_conf: float = 0.1, gap: float | None = None) -> TheoremReport:
    """Evaluate every certificate factor exactly as written.

    ``tau`` may equal the step count (the averaging candidate at the final
    iterate); the preconditioner snapshot is then taken at the last executed
    step.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    s_idx = min(tau, history.steps - 1)
    s_tau = float(history.s_l2[s_idx])
    th = theta(tau, delta_conf)
    l_hat = float(np.max(history.grad_l2))
    eta_final = float(history.eta[-1])
    log_eta_ratio = math.log(eta_final / eta0)

    if history.dist_xstar_inf is None or history.dist_xstar_l2 is None:
        return TheoremReport(
            tau=tau, total_steps=total_steps, theta=th, s_tau_l2=s_tau, l_hat=l_hat,
            eta0=eta0, eta_final=eta_final, log_eta_ratio=log_eta_ratio, has_minimizer=False,
        )

    d_tau = float(np.max(history.dist_xstar_inf[: tau + 1]))
    d_bar = float(np.max(history.dist_xstar_l2[: tau + 1]))
    core = (
        (d_tau ** 2 * math.sqrt(history.dim) * s_tau
         + d_bar * eta0 * math.sqrt(th * s_tau ** 2 + l_hat ** 2 * th ** 2))
        / (total_steps * eta0)
    ) * log_eta_ratio
    return TheoremReport(
        tau=tau, total_steps=total_steps, theta=th, s_tau_l2=s_tau, l_hat=l_hat,
        eta0=eta0, eta_final=eta_final, log_eta_ratio=log_eta_ratio, has_minimizer=True,
        d_tau=d_tau, d_bar_tau=d_bar, gap=gap, bound_core=core,
    )


@dataclass
class RateFit:
    """Least-squares line through (log T, log gap); alpha_hat = -slope - 1/2."""

    points: list[tuple[int, float]]
    slope: float
    intercept: float
    alpha_hat: float


def rate_fit(points: list[tuple[int, float]]) -> RateFit:
    """Fit the empirical convergence-rate slope from (horizon, gap) pairs."""
    if len(points) < 3:
        raise ValueError("need at least 3 (T, gap) points")
    horizons = np.array([p[0] for p in points], dtype=np.float64)
    gaps = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(np.diff(horizons) <= 0):
        raise ValueError("horizons must be strictly increasing")
    if np.any(gaps <= 0):
        raise ValueError("gaps must be positive")
    slope, intercept = np.polyfit(np.log(horizons), np.log(gaps), 1)
    return RateFit(points=list(points), slope=float(slope), intercept=float(intercept),
                   alpha_hat=float(-slope - 0.5))
