"""Optimizer kernels: parameter-free adaptive methods and tuned baselines.

The parameter-free (++) kernels calibrate their scalar step size from the
distance traveled since initialization instead of a tuned learning rate:

    r_t   = ||x_t - x0||_2 / sqrt(d)
    eta_t = max(eta_{t-1}, c * r_t),   eta_{-1} = eps

with eps a tiny seed (default rule: eps = eta0 * (1 + ||x0||_2^2)) and c a
base factor that defaults to 1 and is never applied to eps itself.

adagradpp (per step, in this order):
    update eta;  s_t = (sum_{k<=t} g_k^2)^(1/2)  entrywise;
    x <- x - lr_mult * eta_t * g_t / (delta + s_t)

adampp (case 1 / case 2):
    update eta;  beta_{1t} = beta1 * lam^t;  m <- beta_{1t} m + (1-beta_{1t}) g
    case 1: s_t as in adagradpp
    case 2: v <- beta2 v + (1-beta2) g^2;  v_max <- max(v_max, v) when the
            running max is on (off gives the simplified variant v_max <- v);
            s_t = sqrt((t+1) * v_max)
    x <- x - lr_mult * eta_t * m / (delta + s_t)
    decoupled decay (adamwpp): additionally x <- x - lr_mult * eta_t * wd * x_old

Baselines (all take a tuned lr): sgd, adagrad, adam (bias correction on by
default, switchable off for the textbook moving-average form), adamw
(decoupled decay), adagrad_norm (lr plays the role of the distance bound D),
and dog, whose step size is max(eps, max_{i<=t} ||x_i - x0||_2) over the root
of cumulative squared gradient norms.

The schedule multiplier lr_mult scales the applied step only; the eta
recursion always sees the raw normalized distance. Kernels never mutate the
iterate array in place: each step binds a fresh array to ``state.x`` so that
callers may keep references to earlier iterates.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pfopt.vec import as_vector, preconditioned_div

ALGORITHMS = (
    "adagradpp", "adampp_case1", "adampp_case2", "adamwpp",
    "sgd", "adagrad", "adagrad_norm", "dog", "adam", "adamw",
)
PARAMETER_FREE = ("adagradpp", "adampp_case1", "adampp_case2", "adamwpp")
BASELINES_NEEDING_LR = ("sgd", "adagrad", "adagrad_norm", "adam", "adamw")
ETA0_RULES = ("absolute", "scaled_by_init")
DECAY_MODES = ("none", "coupled", "decoupled")


@dataclass
class OptimizerConfig:
    algorithm: str
    eta0: float = 1e-6
    eta0_rule: str = "scaled_by_init"
    delta: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    lam: float = 1.0
    base_factor: float = 1.0
    lr: float | None = None
    weight_decay: float = 0.0
    decay_mode: str = "none"
    amsgrad_max: bool = True
    bias_correction: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be positive")
        if self.eta0_rule not in ETA0_RULES:
            raise ValueError(f"unknown eta0_rule {self.eta0_rule!r}")
        if self.delta < 0.0:
            raise ValueError("delta must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.base_factor <= 0.0:
            raise ValueError("base_factor must be positive")
        if self.lr is not None and self.lr <= 0.0:
            raise ValueError("lr must be positive when set")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")
        if self.decay_mode not in DECAY_MODES:
            raise ValueError(f"unknown decay_mode {self.decay_mode!r}")
        if self.algorithm in ("adamwpp", "adamw") and self.decay_mode == "none":
            self.decay_mode = "decoupled"
        if self.algorithm in ("adampp_case1", "adampp_case2", "adamwpp"):
            if self.beta1 >= math.sqrt(self.beta2):
                warnings.warn(
                    "beta1 >= sqrt(beta2): the convergence analysis assumes "
                    "beta1 < sqrt(beta2)", RuntimeWarning, stacklevel=2)


@dataclass
class OptimizerState:
    """Per-run mutable state; one state per run, single-threaded stepping."""

    t: int
    x: np.ndarray
    x0: np.ndarray
    eta: float
    r: float = 0.0
    sum_sq: np.ndarray = field(default=None)   # cumulative g^2 (case-1 family)
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    v_max: np.ndarray = field(default=None)
    s: np.ndarray = field(default=None)        # preconditioner diagonal after the last step
    gsq_sum: float = 0.0                       # cumulative ||g||_2^2 (dog, adagrad_norm)
    dist_max: float = 0.0                      # max_i ||x_i - x0||_2 (dog)

    @property
    def dim(self) -> int:
        return self.x.shape[0]


def resolve_eta0(cfg: OptimizerConfig, x0: np.ndarray) -> float:
    """Seed step size eps, optionally scaled by 1 + ||x0||_2^2."""
    if cfg.eta0_rule == "absolute":
        return cfg.eta0
    return cfg.eta0 * (1.0 + float(x0 @ x0))


def init_state(cfg: OptimizerConfig, x0) -> OptimizerState:
    x0 = as_vector(x0)
    d = x0.shape[0]
    if cfg.algorithm in BASELINES_NEEDING_LR:
        if cfg.lr is None:
            raise ValueError(f"{cfg.algorithm} requires lr")
        eta = cfg.lr
    else:
        eta = resolve_eta0(cfg, x0)
    zeros = lambda: np.zeros(d, dtype=np.float64)
    return OptimizerState(
        t=0, x=x0.copy(), x0=x0, eta=eta,
        sum_sq=zeros(), m=zeros(), v=zeros(), v_max=zeros(), s=zeros(),
    )


def beta1_at(cfg: OptimizerConfig, t: int) -> float:
    """First-moment coefficient beta_{1t} = beta1 * lam^t (equals beta1 when lam = 1)."""
    return cfg.beta1 * cfg.lam ** t


def update_eta(state: OptimizerState, base_factor: float = 1.0) -> float:
    """Distance-calibrated step size: eta <- max(eta, c * ||x - x0||_2 / sqrt(d))."""
    r = float(np.linalg.norm(state.x - state.x0)) / math.sqrt(state.dim)
    state.r = r
    state.eta = max(state.eta, base_factor * r)
    return state.eta


def _check_gradient(state: OptimizerState, g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.x.shape:
        raise ValueError(f"gradient shape {g.shape} does not match iterate shape {state.x.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient")
    return g


def step_adagradpp(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    g = _check_gradient(state, g)
    eta = update_eta(state, cfg.base_factor)
    state.sum_sq += g * g
    s = np.sqrt(state.sum_sq)
    state.s = s
    state.x = state.x - (lr_mult * eta) * preconditioned_div(g, s, cfg.delta)
    state.t += 1
    return state.x


def step_adampp(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0,
                case: str | None = None) -> np.ndarray:
    if case is None:
        case = "case1" if cfg.algorithm == "adampp_case1" else "case2"
    if case not in ("case1", "case2"):
        raise ValueError(f"unknown case {case!r}")
    g = _check_gradient(state, g)
    eta = update_eta(state, cfg.base_factor)
    b1t = beta1_at(cfg, state.t)
    state.m = b1t * state.m + (1.0 - b1t) * g
    if case == "case1":
        state.sum_sq += g * g
        s = np.sqrt(state.sum_sq)
    else:
        state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (g * g)
        state.v_max = np.maximum(state.v_max, state.v) if cfg.amsgrad_max else state.v.copy()
        s = np.sqrt((state.t + 1) * state.v_max)
    state.s = s
    x_old = state.x
    x_new = x_old - (lr_mult * eta) * preconditioned_div(state.m, s, cfg.delta)
    if cfg.decay_mode == "decoupled" and cfg.weight_decay > 0.0:
        x_new = x_new - (lr_mult * eta * cfg.weight_decay) * x_old
    state.x = x_new
    state.t += 1
    return state.x


def step_sgd(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    if cfg.lr is None:
        raise ValueError("sgd requires lr")
    g = _check_gradient(state, g)
    state.x = state.x - (lr_mult * cfg.lr) * g
    state.t += 1
    return state.x


def step_adagrad(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    if cfg.lr is None:
        raise ValueError("adagrad requires lr")
    g = _check_gradient(state, g)
    state.sum_sq += g * g
    s = np.sqrt(state.sum_sq)
    state.s = s
    state.x = state.x - (lr_mult * cfg.lr) * preconditioned_div(g, s, cfg.delta)
    state.t += 1
    return state.x


def _adam_core(state: OptimizerState, cfg: OptimizerConfig, g) -> np.ndarray:
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (g * g)
    if cfg.bias_correction:
        m_hat = state.m / (1.0 - cfg.beta1 ** (state.t + 1))
        v_hat = state.v / (1.0 - cfg.beta2 ** (state.t + 1))
    else:
        m_hat, v_hat = state.m, state.v
    s = np.sqrt(v_hat)
    state.s = s
    return m_hat / (s + cfg.delta)


def step_adam(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    if cfg.lr is None:
        raise ValueError("adam requires lr")
    g = _check_gradient(state, g)
    direction = _adam_core(state, cfg, g)
    state.x = state.x - (lr_mult * cfg.lr) * direction
    state.t += 1
    return state.x


def step_adamw(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    if cfg.lr is None:
        raise ValueError("adamw requires lr")
    g = _check_gradient(state, g)
    direction = _adam_core(state, cfg, g)
    x_old = state.x
    state.x = x_old - (lr_mult * cfg.lr) * direction - (lr_mult * cfg.lr * cfg.weight_decay) * x_old
    state.t += 1
    return state.x


def step_dog(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    g = _check_gradient(state, g)
    dist = float(np.linalg.norm(state.x - state.x0))
    state.r = dist / math.sqrt(state.dim)
    state.dist_max = max(state.dist_max, dist)
    # state.eta holds the nondecreasing distance surrogate max(eps, max_i dist_i).
    state.eta = max(state.eta, dist)
    state.gsq_sum += float(g @ g)
    denom = math.sqrt(state.gsq_sum)
    if denom == 0.0:
        if state.eta == 0.0:
            raise ZeroDivisionError("dog: zero gradient accumulator with zero eps")
        state.t += 1
        return state.x
    state.x = state.x - (lr_mult * state.eta) * (g / denom)
    state.t += 1
    return state.x


def step_adagrad_norm(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    if cfg.lr is None:
        raise ValueError("adagrad_norm requires lr (the distance bound D)")
    g = _check_gradient(state, g)
    state.gsq_sum += float(g @ g)
    denom = math.sqrt(state.gsq_sum)
    if denom == 0.0:
        state.t += 1
        return state.x
    state.eta = cfg.lr / denom
    state.x = state.x - (lr_mult * state.eta) * g
    state.t += 1
    return state.x


_STEP_FUNCS = {
    "adagradpp": step_adagradpp,
    "adampp_case1": step_adampp,
    "adampp_case2": step_adampp,
    "adamwpp": step_adampp,
    "sgd": step_sgd,
    "adagrad": step_adagrad,
    "adagrad_norm": step_adagrad_norm,
    "dog": step_dog,
    "adam": step_adam,
    "adamw": step_adamw,
}


def step(state: OptimizerState, cfg: OptimizerConfig, g, lr_mult: float = 1.0) -> np.ndarray:
    """Dispatch one optimization step for cfg.algorithm."""
    return _STEP_FUNCS[cfg.algorithm](state, cfg, g, lr_mult)


def closing_eta(state: OptimizerState, cfg: OptimizerConfig) -> float:
    """Step size the final iterate would receive; used to close the weighted average."""
    if cfg.algorithm in PARAMETER_FREE:
        return update_eta(state, cfg.base_factor)
    if cfg.algorithm == "dog":
        dist = float(np.linalg.norm(state.x - state.x0))
        state.eta = max(state.eta, dist)
    return state.eta


def state_to_dict(state: OptimizerState) -> dict:
    """Exact snapshot of every accumulator and counter (JSON round-trippable)."""
    return {
        "t": state.t,
        "x": state.x.tolist(),
        "x0": state.x0.tolist(),
        "eta": state.eta,
        "r": state.r,
        "sum_sq": state.sum_sq.tolist(),
        "m": state.m.tolist(),
        "v": state.v.tolist(),
        "v_max": state.v_max.tolist(),
        "s": state.s.tolist(),
        "gsq_sum": state.gsq_sum,
        "dist_max": state.dist_max,
    }


def state_from_dict(d: dict) -> OptimizerState:
    arr = lambda key: np.array(d[key], dtype=np.float64)
    return OptimizerState(
        t=int(d["t"]), x=arr("x"), x0=arr("x0"), eta=float(d["eta"]), r=float(d["r"]),
        sum_sq=arr("sum_sq"), m=arr("m"), v=arr("v"), v_max=arr("v_max"), s=arr("s"),
        gsq_sum=float(d["gsq_sum"]), dist_max=float(d["dist_max"]),
    )


def save_state(state: OptimizerState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state), indent=2, sort_keys=True) + "\n")


def load_state(path: str | Path) -> OptimizerState:
    return state_from_dict(json.loads(Path(path).read_text()))
