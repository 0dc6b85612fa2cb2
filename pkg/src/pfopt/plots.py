"""Matplotlib rendering of traces, sweep tables, and rate fits to image files.

Figures sit alongside the delimited outputs of the CLI report path; they are
a convenience view and carry no acceptance weight, so nothing here feeds back
into the harness.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 (backend must be pinned first)
import numpy as np  # noqa: E402

from pfopt.diagnostics import RateFit  # noqa: E402
from pfopt.harness import HorizonResult, SweepResult, TraceRecord  # noqa: E402


def render_trace_figures(trace: list[TraceRecord], out_dir: str | Path,
                         stem: str = "trace") -> list[Path]:
    """Loss curve and step-size curve for one run; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = [rec.step for rec in trace]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    losses = [rec.loss for rec in trace]
    if all(v > 0 for v in losses):
        ax.semilogy(steps, losses)
    else:
        ax.plot(steps, losses)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    path = out_dir / f"{stem}_loss.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(steps, [max(rec.eta, 1e-300) for rec in trace], label="eta")
    ax.semilogy(steps, [max(rec.r, 1e-300) for rec in trace], label="r", alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.set_title("step size and normalized distance")
    ax.legend()
    ax.grid(True, alpha=0.3)
    path = out_dir / f"{stem}_eta.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_sweep_figure(result: SweepResult, out_path: str | Path) -> Path:
    """Final gap against the swept value; diverged runs are marked with x."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    label = result.param.rsplit(".", 1)[-1]
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = [(r.value, r.summary.gap_avg) for r in result.rows
          if not r.summary.diverged and r.summary.gap_avg is not None and r.summary.gap_avg > 0]
    bad = [r.value for r in result.rows if r.summary.diverged]
    if ok:
        xs, ys = zip(*ok)
        ax.loglog(xs, ys, "o-", label="gap at averaged iterate")
    if bad:
        ymin = min(y for _, y in ok) if ok else 1.0
        ax.loglog(bad, [ymin] * len(bad), "x", color="red", label="diverged")
    ax.set_xlabel(label)
    ax.set_ylabel("gap")
    ax.set_title(f"sweep over {label}")
    if ok or bad:
        ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_rates_figure(result: HorizonResult, out_path: str | Path) -> Path:
    """Log-log gap versus horizon with the fitted rate line."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    if result.points:
        horizons, gaps = zip(*result.points)
        ax.loglog(horizons, gaps, "o", label="measured gap")
        fit: RateFit | None = result.fit
        if fit is not None:
            ts = np.geomspace(min(horizons), max(horizons), 50)
            ax.loglog(ts, np.exp(fit.intercept) * ts ** fit.slope, "--",
                      label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("total steps")
    ax.set_ylabel("gap at averaged iterate")
    ax.set_title("convergence rate")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path
