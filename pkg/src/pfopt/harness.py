"""Experiment runner: seeded (problem x optimizer x schedule) loops with
traces, summaries, grid searches, and ablation sweeps.

A run is fully determined by its config: every random draw is keyed by an
explicit seed, so repeated runs produce byte-identical CSV traces and JSON
summaries, and parallel sweeps equal sequential ones. Wall-clock time is
reported on the in-memory summary but kept out of the serialized JSON for
exactly that reason.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pfopt.averaging import AverageTracker
from pfopt.diagnostics import RateFit, RunHistory, TheoremReport, rate_fit, theorem_report
from pfopt.optim import (
    PARAMETER_FREE, OptimizerConfig, OptimizerState, closing_eta, init_state, step,
)
from pfopt.problems import (
    Minimizer, NoiseModel, Problem, load_problem, make_synthetic, solve_minimizer,
    stochastic_gradient,
)
from pfopt.schedule import Schedule, multiplier

DIVERGE_LIMIT = 1e30
SOLVABLE_KINDS = ("quadratic", "least_squares", "logistic", "abs_sum")
TRACE_HEADER = "step,loss,eta,r,grad_l2,s_l2,dist_x0,dist_xstar_inf,lr_mult"

ETA0_SWEEP = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
BASE_FACTOR_SWEEP = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)

_DEFAULTS = {
    "problem": {
        "kind": None, "d": 10, "m": 100, "seed": None, "l2_reg": 0.0, "path": None,
        "mu": 0.1, "condition": None, "margin": 2.0, "noise_std": 0.1,
    },
    "noise": {"kind": "none", "sigma": 0.0, "batch_size": 1, "seed": None},
    "init": {"kind": "zeros", "scale": 1.0, "seed": None},
    "optimizer": {
        "algorithm": None, "eta0": 1e-6, "eta0_rule": "scaled_by_init", "delta": 1e-8,
        "beta1": 0.9, "beta2": 0.999, "lam": 1.0, "base_factor": 1.0, "lr": None,
        "weight_decay": 0.0, "decay_mode": "none", "amsgrad_max": True,
        "bias_correction": True,
    },
    "schedule": {"kind": "constant", "warmup_steps": 0, "floor": 0.0},
    "total_steps": None,
    "eval_every": 1,
    "run_seed": 0,
    "conf_delta": 0.1,
    "output_dir": None,
}


def normalize_config(raw: dict) -> dict:
    """Merge a raw config over the defaults, fill derived seeds, reject typos."""
    out = copy.deepcopy(_DEFAULTS)
    for key, val in raw.items():
        if key not in out:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ValueError(f"config key {key!r} must be a mapping")
            for sub, subval in val.items():
                if sub not in out[key]:
                    raise ValueError(f"unknown config key {key}.{sub}")
                out[key][sub] = subval
        else:
            out[key] = val
    if out["problem"]["kind"] is None:
        raise ValueError("problem.kind is required")
    if out["optimizer"]["algorithm"] is None:
        raise ValueError("optimizer.algorithm is required")
    if out["total_steps"] is None or int(out["total_steps"]) < 2:
        raise ValueError("total_steps must be an integer >= 2")
    if int(out["eval_every"]) < 1:
        raise ValueError("eval_every must be >= 1")
    run_seed = int(out["run_seed"])
    for section in ("problem", "noise", "init"):
        if out[section]["seed"] is None:
            out[section]["seed"] = run_seed
    # Resolve the optimizer config once so derived fields (decay_mode) land
    # in the hashed dict.
    opt = OptimizerConfig(**out["optimizer"])
    out["optimizer"] = {k: getattr(opt, k) for k in _DEFAULTS["optimizer"]}
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    noise: NoiseModel
    optimizer: OptimizerConfig
    schedule: Schedule
    total_steps: int
    eval_every: int
    run_seed: int
    conf_delta: float
    output_dir: str | None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        norm = normalize_config(raw)
        total_steps = int(norm["total_steps"])
        sched = Schedule(
            kind=norm["schedule"]["kind"], total_steps=total_steps,
            warmup_steps=int(norm["schedule"]["warmup_steps"]),
            floor=float(norm["schedule"]["floor"]),
        )
        noise = NoiseModel(
            kind=norm["noise"]["kind"], sigma=float(norm["noise"]["sigma"]),
            batch_size=int(norm["noise"]["batch_size"]), seed=int(norm["noise"]["seed"]),
        )
        return cls(
            raw=norm, noise=noise, optimizer=OptimizerConfig(**norm["optimizer"]),
            schedule=sched, total_steps=total_steps, eval_every=int(norm["eval_every"]),
            run_seed=int(norm["run_seed"]), conf_delta=float(norm["conf_delta"]),
            output_dir=norm["output_dir"],
        )

    @property
    def config_hash(self) -> str:
        ident = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def apply_override(raw: dict, dotted: str, value) -> dict:
    """Return a copy of ``raw`` with the dotted key set to ``value``."""
    out = copy.deepcopy(raw)
    node = out
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return out


def build_problem(config: ExperimentConfig) -> Problem:
    spec = config.raw["problem"]
    if spec["path"]:
        problem = load_problem(spec["path"])
    else:
        problem = make_synthetic(
            spec["kind"], int(spec["d"]), int(spec["m"]), int(spec["seed"]),
            l2_reg=float(spec["l2_reg"]), mu=float(spec["mu"]),
            condition=spec["condition"], margin=float(spec["margin"]),
            noise_std=float(spec["noise_std"]),
        )
    if config.optimizer.decay_mode == "coupled" and config.optimizer.weight_decay > 0.0:
        problem = problem.with_l2_reg(problem.l2_reg + config.optimizer.weight_decay)
    return problem


def build_x0(config: ExperimentConfig, dim: int) -> np.ndarray:
    spec = config.raw["init"]
    kind, scale = spec["kind"], float(spec["scale"])
    if kind == "zeros":
        return np.zeros(dim)
    if kind == "ones":
        return scale * np.ones(dim)
    if kind == "gaussian":
        rng = np.random.default_rng(int(spec["seed"]))
        return scale * rng.standard_normal(dim)
    raise ValueError(f"unknown init kind {kind!r}")


@dataclass
class TraceRecord:
    step: int
    loss: float
    eta: float
    r: float
    grad_l2: float
    s_l2: float
    dist_x0: float
    dist_xstar_inf: float | None
    lr_mult: float


@dataclass
class RunSummary:
    config_hash: str
    algorithm: str
    total_steps: int
    steps_completed: int
    final_loss: float | None
    f_star: float | None
    gap_final: float | None
    gap_avg: float | None
    tau: int | None
    eta0: float
    eta_final: float
    diverged: bool
    diverged_step: int | None
    theorem: TheoremReport | None
    l_analytic: float | None
    wall_seconds: float

    def to_json_dict(self) -> dict:
        # wall_seconds is intentionally absent: summaries must be
        # byte-identical across repeated runs of the same config.
        return {
            "config_hash": self.config_hash,
            "algorithm": self.algorithm,
            "total_steps": self.total_steps,
            "steps_completed": self.steps_completed,
            "final_loss": _json_safe(self.final_loss),
            "f_star": _json_safe(self.f_star),
            "gap_final": _json_safe(self.gap_final),
            "gap_avg": _json_safe(self.gap_avg),
            "tau": self.tau,
            "eta0": self.eta0,
            "eta_final": self.eta_final,
            "diverged": self.diverged,
            "diverged_step": self.diverged_step,
            "theorem": {k: _json_safe(v) for k, v in self.theorem.to_dict().items()}
            if self.theorem else None,
            "l_analytic": _json_safe(self.l_analytic),
        }


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class RunResult:
    config: ExperimentConfig
    summary: RunSummary
    trace: list[TraceRecord]
    history: RunHistory
    state: OptimizerState
    minimizer: Minimizer | None
    x_bar: np.ndarray | None


def _safe_loss(problem: Problem, x: np.ndarray) -> float | None:
    if not np.all(np.isfinite(x)):
        return None
    value = problem.loss(x)
    return value if math.isfinite(value) else None


def run(config: ExperimentConfig) -> RunResult:
    """Execute one fully seeded run. Pure: no files are written here."""
    t_start = time.perf_counter()
    problem = build_problem(config)
    minimizer = solve_minimizer(problem) if problem.kind in SOLVABLE_KINDS else None
    x0 = build_x0(config, problem.dim)
    ocfg = config.optimizer
    state = init_state(ocfg, x0)
    eta0 = state.eta
    tracker = AverageTracker(problem.dim)
    T = config.total_steps
    d = problem.dim
    sqrt_d = math.sqrt(d)
    x_star = minimizer.x_star if minimizer else None

    eta_hist = np.zeros(T + 1)
    r_hist = np.zeros(T)
    grad_hist = np.zeros(T)
    s_hist = np.zeros(T)
    dist0_hist = np.zeros(T + 1)
    dxi_hist = np.zeros(T + 1) if minimizer else None
    dx2_hist = np.zeros(T + 1) if minimizer else None

    trace: list[TraceRecord] = []
    diverged = False
    diverged_step: int | None = None
    steps_done = 0

    for t in range(T):
        lm = multiplier(config.schedule, t)
        x_t = state.x
        g = stochastic_gradient(problem, config.noise, x_t, t)
        if not np.all(np.isfinite(g)):
            diverged, diverged_step = True, t
            break
        dist0 = float(np.linalg.norm(x_t - x0))
        r_t = dist0 / sqrt_d
        dxi = float(np.max(np.abs(x_t - x_star))) if minimizer else None
        is_eval = (t % config.eval_every == 0) or (t == T - 1)
        if is_eval:
            loss_t = problem.loss(x_t)
            if not math.isfinite(loss_t) or abs(loss_t) > DIVERGE_LIMIT:
                diverged, diverged_step = True, t
                break

        step(state, ocfg, g, lm)
        tracker.observe(x_t, state.eta)

        eta_hist[t] = state.eta
        r_hist[t] = r_t
        grad_hist[t] = np.linalg.norm(g)
        s_hist[t] = np.linalg.norm(state.s)
        dist0_hist[t] = dist0
        if minimizer:
            dxi_hist[t] = dxi
            dx2_hist[t] = np.linalg.norm(x_t - x_star)
        if is_eval:
            trace.append(TraceRecord(
                step=t, loss=loss_t, eta=state.eta, r=r_t, grad_l2=float(grad_hist[t]),
                s_l2=float(s_hist[t]), dist_x0=dist0, dist_xstar_inf=dxi, lr_mult=lm,
            ))
        steps_done = t + 1

        x_abs_max = float(np.max(np.abs(state.x)))
        if not math.isfinite(x_abs_max) or x_abs_max > DIVERGE_LIMIT:
            diverged, diverged_step = True, t
            break

    completed = not diverged and steps_done == T
    if completed:
        # Close the weighted average at the final iterate with the step size
        # it would receive, so the averaging index can land on the full run.
        eta_T = closing_eta(state, ocfg)
        x_final = state.x
        eta_hist[T] = eta_T
        dist0_hist[T] = float(np.linalg.norm(x_final - x0))
        if minimizer:
            dxi_hist[T] = float(np.max(np.abs(x_final - x_star)))
            dx2_hist[T] = float(np.linalg.norm(x_final - x_star))
        tracker.observe(x_final, eta_T)
        n_iterates = T + 1
    else:
        n_iterates = steps_done

    history = RunHistory(
        dim=d,
        eta=eta_hist[:n_iterates],
        r=r_hist[:steps_done],
        grad_l2=grad_hist[:steps_done],
        s_l2=s_hist[:steps_done],
        dist_x0=dist0_hist[:n_iterates],
        dist_xstar_inf=dxi_hist[:n_iterates] if minimizer else None,
        dist_xstar_l2=dx2_hist[:n_iterates] if minimizer else None,
    )

    tau: int | None = None
    x_bar: np.ndarray | None = None
    try:
        tau, x_bar = tracker.current_average()
    except RuntimeError:
        pass

    f_star = minimizer.f_star if minimizer else None
    final_loss = _safe_loss(problem, state.x)
    gap_final = final_loss - f_star if (final_loss is not None and f_star is not None) else None
    gap_avg = None
    if x_bar is not None and f_star is not None:
        avg_loss = _safe_loss(problem, x_bar)
        gap_avg = avg_loss - f_star if avg_loss is not None else None

    theorem: TheoremReport | None = None
    if completed and tau is not None and tau >= 1:
        theorem = theorem_report(history, tau, T, eta0,
                                 delta_conf=config.conf_delta, gap=gap_avg)

    summary = RunSummary(
        config_hash=config.config_hash,
        algorithm=ocfg.algorithm,
        total_steps=T,
        steps_completed=steps_done,
        final_loss=final_loss,
        f_star=f_star,
        gap_final=gap_final,
        gap_avg=gap_avg,
        tau=tau,
        eta0=eta0,
        eta_final=float(eta_hist[n_iterates - 1]) if n_iterates else eta0,
        diverged=diverged,
        diverged_step=diverged_step,
        theorem=theorem,
        # abs_sum subgradients are globally bounded by sqrt(d); report the
        # analytic bound next to the empirical l_hat.
        l_analytic=math.sqrt(d) if problem.kind == "abs_sum" else None,
        wall_seconds=time.perf_counter() - t_start,
    )
    return RunResult(config=config, summary=summary, trace=trace, history=history,
                     state=state, minimizer=minimizer, x_bar=x_bar)


def run_raw(raw: dict) -> RunResult:
    return run(ExperimentConfig.from_dict(raw))


def execute(raw: dict, out_dir: str | Path) -> RunResult:
    """Run one config and emit its CSV trace and JSON summary into out_dir."""
    result = run_raw(raw)
    out_dir = Path(out_dir)
    write_trace_csv(result.trace, out_dir / "trace.csv")
    write_summary_json(result.summary, out_dir / "summary.json")
    return result


# ---------------------------------------------------------------------------
# Trace / summary serialization
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_trace_csv(trace: list[TraceRecord], path: str | Path) -> None:
    """CSV trace with a fixed header; floats carry 17 significant digits."""
    lines = [TRACE_HEADER]
    for rec in trace:
        dstar = "" if rec.dist_xstar_inf is None else _fmt(rec.dist_xstar_inf)
        lines.append(",".join([
            str(rec.step), _fmt(rec.loss), _fmt(rec.eta), _fmt(rec.r),
            _fmt(rec.grad_l2), _fmt(rec.s_l2), _fmt(rec.dist_x0), dstar,
            _fmt(rec.lr_mult),
        ]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_trace_csv(path: str | Path) -> list[TraceRecord]:
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != TRACE_HEADER:
        raise ValueError(f"unexpected trace header in {path}")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        records.append(TraceRecord(
            step=int(parts[0]), loss=float(parts[1]), eta=float(parts[2]),
            r=float(parts[3]), grad_l2=float(parts[4]), s_l2=float(parts[5]),
            dist_x0=float(parts[6]),
            dist_xstar_inf=float(parts[7]) if parts[7] else None,
            lr_mult=float(parts[8]),
        ))
    return records


def write_summary_json(summary: RunSummary, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(summary.to_json_dict(), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(blob + "\n")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    value: float
    summary: RunSummary


@dataclass
class SweepResult:
    param: str
    rows: list[SweepRow]
    footer: dict

    def ranked(self) -> list[SweepRow]:
        """Rows sorted by final gap; diverged runs last."""
        def key(row: SweepRow):
            gap = row.summary.gap_final
            if gap is None or not math.isfinite(gap):
                gap = math.inf
            return (1 if row.summary.diverged else 0, gap)
        return sorted(self.rows, key=key)


def _map_runs(configs: list[ExperimentConfig], jobs: int) -> list[RunResult]:
    if jobs <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, configs))


def _sweep(raw: dict, param: str, values, jobs: int) -> list[SweepRow]:
    configs = [ExperimentConfig.from_dict(apply_override(raw, param, v)) for v in values]
    results = _map_runs(configs, jobs)
    return [SweepRow(value=v, summary=res.summary) for v, res in zip(values, results)]


def grid_search(raw: dict, param: str, values, jobs: int = 1) -> SweepResult:
    """One run per value with shared seeds; rows ranked by final gap."""
    if not values:
        raise ValueError("values must be nonempty")
    result = SweepResult(param=param, rows=_sweep(raw, param, list(values), jobs), footer={})
    result.rows = result.ranked()
    return result


def _require_parameter_free(raw: dict) -> None:
    algo = raw.get("optimizer", {}).get("algorithm")
    if algo not in PARAMETER_FREE:
        raise ValueError(f"ablation requires a parameter-free optimizer, got {algo!r}")


def ablation_eta0(raw: dict, values=None, jobs: int = 1) -> SweepResult:
    """Sweep the seed step size in absolute mode, everything else fixed."""
    _require_parameter_free(raw)
    values = list(ETA0_SWEEP if values is None else values)
    raw = apply_override(raw, "optimizer.eta0_rule", "absolute")
    rows = _sweep(raw, "optimizer.eta0", values, jobs)
    # Relative spread of final gaps over the small-seed range (eta0 <= 0.1);
    # large seeds are excluded since only they are expected to degrade.
    eligible = [row.summary.gap_final for row in rows
                if row.value <= 0.1 and not row.summary.diverged
                and row.summary.gap_final is not None and row.summary.gap_final > 0]
    spread = max(eligible) / min(eligible) if len(eligible) >= 2 else None
    return SweepResult(param="optimizer.eta0", rows=rows,
                       footer={"final_gap_spread_eta0_le_0.1": spread})


def ablation_base_factor(raw: dict, values=None, jobs: int = 1) -> SweepResult:
    """Sweep the base factor multiplying the normalized distance."""
    _require_parameter_free(raw)
    values = list(BASE_FACTOR_SWEEP if values is None else values)
    rows = _sweep(raw, "optimizer.base_factor", values, jobs)
    return SweepResult(param="optimizer.base_factor", rows=rows, footer={})


@dataclass
class HorizonResult:
    points: list[tuple[int, float]]
    rows: list[SweepRow]
    fit: RateFit | None


def run_horizons(raw: dict, steps: list[int], jobs: int = 1) -> HorizonResult:
    """Run the same config at several horizons and fit the gap-vs-T slope."""
    steps = sorted(int(s) for s in steps)
    rows = _sweep(raw, "total_steps", steps, jobs)
    points = [(int(row.value), row.summary.gap_avg) for row in rows
              if row.summary.gap_avg is not None and row.summary.gap_avg > 0
              and not row.summary.diverged]
    fit = rate_fit(points) if len(points) >= 3 else None
    return HorizonResult(points=points, rows=rows, fit=fit)


def write_sweep_csv(result: SweepResult, path: str | Path, ranked: bool = False) -> None:
    """Delimited sweep table; footer scalars appear as '# key = value' lines."""
    label = result.param.rsplit(".", 1)[-1]
    lines = [f"{label},final_loss,gap_final,gap_avg,tau,eta_final,diverged,diverged_step"]
    rows = result.ranked() if ranked else result.rows
    for row in rows:
        s = row.summary
        lines.append(",".join([
            _fmt(float(row.value)),
            "" if s.final_loss is None else _fmt(s.final_loss),
            "" if s.gap_final is None else _fmt(s.gap_final),
            "" if s.gap_avg is None else _fmt(s.gap_avg),
            "" if s.tau is None else str(s.tau),
            _fmt(s.eta_final),
            str(s.diverged).lower(),
            "" if s.diverged_step is None else str(s.diverged_step),
        ]))
    for key, value in result.footer.items():
        rendered = "" if value is None else _fmt(float(value))
        lines.append(f"# {key} = {rendered}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def write_sweep_json(result: SweepResult, path: str | Path) -> None:
    payload = {
        "param": result.param,
        "rows": [{"value": row.value, **row.summary.to_json_dict()} for row in result.rows],
        "footer": {k: _json_safe(v) for k, v in result.footer.items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_rates_csv(result: HorizonResult, path: str | Path) -> None:
    lines = ["total_steps,gap"]
    for T, gap in result.points:
        lines.append(f"{T},{_fmt(gap)}")
    if result.fit is not None:
        lines.append(f"# slope = {_fmt(result.fit.slope)}")
        lines.append(f"# intercept = {_fmt(result.fit.intercept)}")
        lines.append(f"# alpha_hat = {_fmt(result.fit.alpha_hat)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
