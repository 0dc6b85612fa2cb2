"""Convex benchmark problems with seeded stochastic gradient oracles.

Each problem exposes ``loss`` and ``gradient`` (the full gradient, with any
coupled L2 term folded in) and, when it is built from samples, a
``batch_gradient``. ``stochastic_gradient`` wraps these behind a noise model
whose draws are a deterministic function of (seed, step index), so every run
is exactly reproducible.

Problem menu:

    quadratic      f(x) = x'Ax/2 - b'x, A = M'M + mu*I (PSD)
    least_squares  f(x) = ||Xx - y||^2 / (2m)
    logistic       f(w) = mean log(1 + exp(-y_i <w, x_i>)), labels in {-1,+1}
    abs_sum        f(x) = ||x||_1, subgradient sign(x) with sign(0) = 0
    tiny_mlp       squared loss of a fixed two-layer tanh network (nonconvex,
                   exists only to exercise optimizers off the convex menu)

All kinds accept ``l2_reg`` adding l2_reg*||x||^2/2 to the loss and l2_reg*x
to every (full or batch) gradient; this is the coupled flavor of weight
decay, the decoupled flavor lives optimizer-side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROBLEM_KINDS = ("quadratic", "least_squares", "logistic", "abs_sum", "tiny_mlp")
NOISE_KINDS = ("none", "additive_gaussian", "minibatch")
MLP_HIDDEN = 16


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Stable logistic function via sigma(z) = (1 + tanh(z/2)) / 2.
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Independent generator keyed by (seed, step index)."""
    return np.random.default_rng([int(seed), int(step)])


class Problem:
    """Base class; subclasses fill in loss/gradient and sample structure."""

    kind = "base"

    def __init__(self, dim: int, l2_reg: float = 0.0, meta: dict | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if l2_reg < 0.0:
            raise ValueError("l2_reg must be >= 0")
        self.dim = int(dim)
        self.l2_reg = float(l2_reg)
        self.meta = dict(meta or {})

    # Number of samples behind the objective; None when there is no
    # per-sample decomposition (quadratic, abs_sum).
    n_samples: int | None = None

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"expected x of length {self.dim}, got shape {x.shape}")
        return x

    def loss(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_gradient(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise ValueError(f"{self.kind} has no per-sample structure for minibatch sampling")

    def _reg_loss(self, x: np.ndarray) -> float:
        return 0.5 * self.l2_reg * float(x @ x) if self.l2_reg else 0.0

    def _reg_grad(self, x: np.ndarray) -> np.ndarray:
        return self.l2_reg * x if self.l2_reg else np.zeros_like(x)

    def data_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "l2_reg": self.l2_reg,
            "meta": self.meta,
            "data": self.data_dict(),
        }

    def with_l2_reg(self, l2_reg: float) -> "Problem":
        """Same problem with a different coupled-decay coefficient."""
        d = self.to_dict()
        d["l2_reg"] = float(l2_reg)
        return problem_from_dict(d)


class QuadraticProblem(Problem):
    kind = "quadratic"

    def __init__(self, A: np.ndarray, b: np.ndarray, l2_reg: float = 0.0, meta: dict | None = None):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError("A must be square and b must match its size")
        if not np.allclose(A, A.T, atol=1e-10):
            raise ValueError("A must be symmetric")
        super().__init__(A.shape[0], l2_reg, meta)
        self.A = A
        self.b = b

    def loss(self, x):
        x = self._check_x(x)
        return 0.5 * float(x @ (self.A @ x)) - float(self.b @ x) + self._reg_loss(x)

    def gradient(self, x):
        x = self._check_x(x)
        return self.A @ x - self.b + self._reg_grad(x)

    def data_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


class LeastSquaresProblem(Problem):
    kind = "least_squares"

    def __init__(self, X: np.ndarray, y: np.ndarray, l2_reg: float = 0.0, meta: dict | None = None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (m, d) and y must be (m,)")
        super().__init__(X.shape[1], l2_reg, meta)
        self.X = X
        self.y = y
        self.n_samples = X.shape[0]

    def loss(self, x):
        x = self._check_x(x)
        r = self.X @ x - self.y
        return 0.5 * float(r @ r) / self.n_samples + self._reg_loss(x)

    def gradient(self, x):
        x = self._check_x(x)
        r = self.X @ x - self.y
        return self.X.T @ r / self.n_samples + self._reg_grad(x)

    def batch_gradient(self, x, idx):
        x = self._check_x(x)
        Xb = self.X[idx]
        rb = Xb @ x - self.y[idx]
        return Xb.T @ rb / len(idx) + self._reg_grad(x)

    def data_dict(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}


class LogisticProblem(Problem):
    kind = "logistic"

    def __init__(self, X: np.ndarray, y: np.ndarray, l2_reg: float = 0.0, meta: dict | None = None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (m, d) and y must be (m,)")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        super().__init__(X.shape[1], l2_reg, meta)
        self.X = X
        self.y = y
        self.n_samples = X.shape[0]

    def loss(self, x):
        x = self._check_x(x)
        margins = self.y * (self.X @ x)
        return float(np.mean(np.logaddexp(0.0, -margins))) + self._reg_loss(x)

    def gradient(self, x):
        x = self._check_x(x)
        margins = self.y * (self.X @ x)
        w = self.y * _sigmoid(-margins)
        return -(self.X.T @ w) / self.n_samples + self._reg_grad(x)

    def batch_gradient(self, x, idx):
        x = self._check_x(x)
        Xb, yb = self.X[idx], self.y[idx]
        w = yb * _sigmoid(-(yb * (Xb @ x)))
        return -(Xb.T @ w) / len(idx) + self._reg_grad(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        p = _sigmoid(self.X @ x)
        D = p * (1.0 - p)
        return (self.X.T * D) @ self.X / self.n_samples + self.l2_reg * np.eye(self.dim)

    def data_dict(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}


class AbsSumProblem(Problem):
    kind = "abs_sum"

    def __init__(self, dim: int, l2_reg: float = 0.0, meta: dict | None = None):
        super().__init__(dim, l2_reg, meta)

    def loss(self, x):
        x = self._check_x(x)
        return float(np.sum(np.abs(x))) + self._reg_loss(x)

    def gradient(self, x):
        # Subgradient convention sign(0) = 0: symmetric and valid.
        x = self._check_x(x)
        return np.sign(x) + self._reg_grad(x)

    def data_dict(self):
        return {}


class TinyMLPProblem(Problem):
    """Squared loss of a d_in -> hidden tanh -> 1 network on a fixed dataset.

    The optimization variable packs (W1, b1, w2, b2) into one flat vector:
    dim = hidden * d_in + hidden + hidden + 1. Gradients are hand-coded
    backpropagation. No minimizer is computed for this kind.
    """

    kind = "tiny_mlp"

    def __init__(self, X: np.ndarray, y: np.ndarray, l2_reg: float = 0.0,
                 hidden: int = MLP_HIDDEN, meta: dict | None = None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (m, d_in) and y must be (m,)")
        self.d_in = X.shape[1]
        self.hidden = int(hidden)
        dim = self.hidden * self.d_in + 2 * self.hidden + 1
        super().__init__(dim, l2_reg, meta)
        self.X = X
        self.y = y
        self.n_samples = X.shape[0]

    def unpack(self, x: np.ndarray):
        h, din = self.hidden, self.d_in
        W1 = x[: h * din].reshape(h, din)
        b1 = x[h * din: h * din + h]
        w2 = x[h * din + h: h * din + 2 * h]
        b2 = x[-1]
        return W1, b1, w2, b2

    def predict(self, x: np.ndarray, X: np.ndarray) -> np.ndarray:
        W1, b1, w2, b2 = self.unpack(self._check_x(x))
        return np.tanh(X @ W1.T + b1) @ w2 + b2

    def loss(self, x):
        x = self._check_x(x)
        r = self.predict(x, self.X) - self.y
        return 0.5 * float(r @ r) / self.n_samples + self._reg_loss(x)

    def _backprop(self, x: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        W1, b1, w2, b2 = self.unpack(x)
        H = np.tanh(X @ W1.T + b1)
        dpred = (H @ w2 + b2 - y) / len(y)
        dw2 = H.T @ dpred
        db2 = dpred.sum()
        dZ = np.outer(dpred, w2) * (1.0 - H * H)
        dW1 = dZ.T @ X
        db1 = dZ.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dw2, [db2]]) + self._reg_grad(x)

    def gradient(self, x):
        x = self._check_x(x)
        return self._backprop(x, self.X, self.y)

    def batch_gradient(self, x, idx):
        x = self._check_x(x)
        return self._backprop(x, self.X[idx], self.y[idx])

    def data_dict(self):
        return {"X": self.X.tolist(), "y": self.y.tolist(), "hidden": self.hidden}


@dataclass(frozen=True)
class NoiseModel:
    """Seeded oracle noise; sampling depends only on (seed, step index)."""

    kind: str = "none"
    sigma: float = 0.0
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def stochastic_gradient(problem: Problem, noise: NoiseModel, x: np.ndarray, step: int) -> np.ndarray:
    """One oracle call G(x) at the given step; E[G(x) | x] is a subgradient."""
    if noise.kind == "none":
        return problem.gradient(x)
    if noise.kind == "additive_gaussian":
        rng = step_rng(noise.seed, step)
        return problem.gradient(x) + noise.sigma * rng.standard_normal(problem.dim)
    # minibatch: indices i.i.d. uniform with replacement
    if problem.n_samples is None:
        raise ValueError(f"minibatch sampling needs a sample-based problem, not {problem.kind}")
    if noise.batch_size > problem.n_samples:
        raise ValueError("batch_size exceeds the number of samples")
    rng = step_rng(noise.seed, step)
    idx = rng.integers(0, problem.n_samples, size=noise.batch_size)
    return problem.batch_gradient(x, idx)


@dataclass(frozen=True)
class Minimizer:
    """Certified minimizer: tolerance is the measured ||grad f(x_star)||_2."""

    x_star: np.ndarray
    f_star: float
    method: str
    tolerance: float


def solve_minimizer(problem: Problem, newton_tol: float = 1e-10, newton_max_iter: int = 500) -> Minimizer:
    """Exact or high-precision minimizer for the convex problem kinds."""
    if problem.kind == "quadratic":
        H = problem.A + problem.l2_reg * np.eye(problem.dim)
        x_star = _solve_spd(H, problem.b)
    elif problem.kind == "least_squares":
        H = problem.X.T @ problem.X / problem.n_samples + problem.l2_reg * np.eye(problem.dim)
        rhs = problem.X.T @ problem.y / problem.n_samples
        x_star = _solve_spd(H, rhs)
    elif problem.kind == "logistic":
        x_star = _newton_logistic(problem, newton_tol, newton_max_iter)
    elif problem.kind == "abs_sum":
        x_star = np.zeros(problem.dim)
    else:
        raise ValueError(f"no minimizer available for problem kind {problem.kind!r}")

    grad_norm = float(np.linalg.norm(problem.gradient(x_star)))
    method = "newton" if problem.kind == "logistic" else "closed_form"
    if method == "closed_form":
        scale = 1.0 + float(np.linalg.norm(x_star))
        if grad_norm > 1e-6 * scale:
            raise ValueError(
                f"closed-form solve left gradient norm {grad_norm:.3e}; "
                "the system is ill-conditioned, set l2_reg > 0"
            )
    return Minimizer(x_star=x_star, f_star=problem.loss(x_star), method=method, tolerance=grad_norm)


def _solve_spd(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular normal equations: set l2_reg > 0") from exc


def _newton_logistic(problem: LogisticProblem, tol: float, max_iter: int) -> np.ndarray:
    w = np.zeros(problem.dim)
    f = problem.loss(w)
    for _ in range(max_iter):
        g = problem.gradient(w)
        if float(np.linalg.norm(g)) <= tol:
            return w
        H = problem.hessian(w)
        try:
            direction = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular Hessian in Newton solve: set l2_reg > 0") from exc
        # Backtracking line search (Armijo).
        slope = float(g @ direction)
        alpha = 1.0
        while alpha > 1e-18:
            w_new = w + alpha * direction
            f_new = problem.loss(w_new)
            if f_new <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise ValueError("Newton line search stalled; the objective may be unbounded, set l2_reg > 0")
        w, f = w_new, f_new
    raise ValueError(f"Newton did not reach ||grad|| <= {tol} within {max_iter} iterations")


def make_synthetic(kind: str, d: int, m: int, seed: int, *, l2_reg: float = 0.0,
                   mu: float = 0.1, condition: float | None = None,
                   margin: float = 2.0, noise_std: float = 0.1) -> Problem:
    """Deterministic-in-seed synthetic problem generator.

    quadratic:      A = M'M/m + mu*I from Gaussian M; pass ``condition`` to pick
                    mu so that cond(A) hits the target. The achieved condition
                    number is recorded in ``meta``.
    least_squares:  y = X w_true + noise_std * z.
    logistic:       two Gaussian blobs at +/- margin/2 along a random unit
                    direction, labels alternating so both classes are present.
    tiny_mlp:       targets from a random teacher network of the same shape
                    plus noise_std * z; ``d`` is the input dimension.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be >= 1")
    if kind not in PROBLEM_KINDS:
        raise ValueError(f"unknown problem kind {kind!r}")
    rng = np.random.default_rng(seed)

    if kind == "quadratic":
        M = rng.standard_normal((m, d))
        B = M.T @ M / m
        eigs = np.linalg.eigvalsh(B)
        lmin, lmax = float(eigs[0]), float(eigs[-1])
        if condition is not None:
            if condition <= 1.0:
                raise ValueError("condition must be > 1")
            mu_eff = (lmax - condition * lmin) / (condition - 1.0)
            if mu_eff >= 0.0:
                A = B + mu_eff * np.eye(d)
            else:
                # The sampled spectrum is flatter than the target; impose the
                # spectrum directly (still M'M form: any PSD matrix is).
                mu_eff = 0.0
                q, _ = np.linalg.qr(M.T @ M if m < d else M[:d].T)
                lams = np.geomspace(max(lmax, 1.0) / condition, max(lmax, 1.0), d)
                A = (q * lams) @ q.T
                A = 0.5 * (A + A.T)
        else:
            mu_eff = mu
            A = B + mu_eff * np.eye(d)
        eigs = np.linalg.eigvalsh(A)
        cond = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else np.inf
        b = A @ rng.standard_normal(d)
        return QuadraticProblem(A, b, l2_reg, meta={"seed": seed, "mu": mu_eff, "condition": cond})

    if kind == "least_squares":
        X = rng.standard_normal((m, d))
        w_true = rng.standard_normal(d)
        y = X @ w_true + noise_std * rng.standard_normal(m)
        return LeastSquaresProblem(X, y, l2_reg, meta={"seed": seed})

    if kind == "logistic":
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        X = np.outer(y, 0.5 * margin * u) + rng.standard_normal((m, d))
        return LogisticProblem(X, y, l2_reg, meta={"seed": seed, "margin": margin})

    if kind == "abs_sum":
        return AbsSumProblem(d, l2_reg, meta={"seed": seed})

    # tiny_mlp: d is the input dimension, the parameter vector is larger
    X = rng.standard_normal((m, d))
    n_params = MLP_HIDDEN * d + 2 * MLP_HIDDEN + 1
    teacher = 0.5 * rng.standard_normal(n_params)
    prob = TinyMLPProblem(X, np.zeros(m), l2_reg, meta={"seed": seed})
    y = prob.predict(teacher, X) + noise_std * rng.standard_normal(m)
    return TinyMLPProblem(X, y, l2_reg, meta={"seed": seed})


def problem_from_dict(d: dict) -> Problem:
    kind, data = d["kind"], d["data"]
    l2_reg, meta = d.get("l2_reg", 0.0), d.get("meta")
    if kind == "quadratic":
        return QuadraticProblem(np.array(data["A"]), np.array(data["b"]), l2_reg, meta)
    if kind == "least_squares":
        return LeastSquaresProblem(np.array(data["X"]), np.array(data["y"]), l2_reg, meta)
    if kind == "logistic":
        return LogisticProblem(np.array(data["X"]), np.array(data["y"]), l2_reg, meta)
    if kind == "abs_sum":
        return AbsSumProblem(d["dim"], l2_reg, meta)
    if kind == "tiny_mlp":
        return TinyMLPProblem(np.array(data["X"]), np.array(data["y"]), l2_reg,
                              data.get("hidden", MLP_HIDDEN), meta)
    raise ValueError(f"unknown problem kind {kind!r}")


def save_problem(problem: Problem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(problem.to_dict(), indent=2, sort_keys=True) + "\n")


def load_problem(path: str | Path) -> Problem:
    return problem_from_dict(json.loads(Path(path).read_text()))
