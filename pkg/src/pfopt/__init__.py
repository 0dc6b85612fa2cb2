"""Parameter-free adaptive optimization toolkit.

Optimizer kernels whose step size is calibrated from the distance traveled
since initialization (AdaGrad++, Adam++, AdamW++) next to tuned baselines
(SGD, AdaGrad, AdaGrad-Norm, DoG, Adam, AdamW), convex benchmark problems
with seeded stochastic gradient oracles, weighted iterate averaging,
convergence-certificate diagnostics, and a deterministic experiment harness
with a CLI.
"""

from pfopt.averaging import AverageTracker
from pfopt.diagnostics import RateFit, RunHistory, TheoremReport, rate_fit, theorem_report, theta
from pfopt.harness import (
    ExperimentConfig, HorizonResult, RunResult, RunSummary, SweepResult, TraceRecord,
    ablation_base_factor, ablation_eta0, apply_override, execute, grid_search, run,
    run_horizons, run_raw, write_summary_json, write_trace_csv,
)
from pfopt.optim import (
    ALGORITHMS, PARAMETER_FREE, OptimizerConfig, OptimizerState, beta1_at, init_state,
    load_state, save_state, step, step_adagrad, step_adagrad_norm, step_adagradpp,
    step_adam, step_adampp, step_adamw, step_dog, step_sgd, update_eta,
)
from pfopt.problems import (
    Minimizer, NoiseModel, Problem, load_problem, make_synthetic, save_problem,
    solve_minimizer, stochastic_gradient,
)
from pfopt.schedule import Schedule, multiplier

__version__ = "0.1.0"
