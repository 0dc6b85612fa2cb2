"""Command-line entry point.

Subcommands:
    run          one seeded run: CSV trace + JSON summary (+ figures)
    grid         grid search over one dotted config key
    ablate-eta0  sweep the seed step size (absolute mode)
    ablate-base  sweep the base factor on the normalized distance
    rates        same config at several horizons + rate-slope fit
    plot         render figures from an existing trace CSV

Every subcommand reads a JSON config document; ``--set key=value`` overrides
individual dotted keys (values are parsed as JSON, falling back to strings).
Exit code is 0 unless --strict is given and a run diverged.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pfopt import harness


def _load_config(path: str, overrides: list[str]) -> dict:
    raw = json.loads(Path(path).read_text())
    for item in overrides or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        raw = harness.apply_override(raw, key.strip(), value)
    return raw


def _out_dir(args, config: harness.ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path("runs") / config.config_hash[:12]


def _parse_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _finish(diverged: bool, strict: bool) -> int:
    return 1 if (strict and diverged) else 0


def cmd_run(args) -> int:
    raw = _load_config(args.config, args.set)
    config = harness.ExperimentConfig.from_dict(raw)
    out = _out_dir(args, config)
    result = harness.execute(raw, out)
    if args.figures:
        from pfopt import plots
        plots.render_trace_figures(result.trace, out / "figures")
    s = result.summary
    print(f"run {s.config_hash[:12]}: algorithm={s.algorithm} steps={s.steps_completed}"
          f"/{s.total_steps} final_loss={s.final_loss} gap_avg={s.gap_avg} tau={s.tau}"
          f" diverged={s.diverged}")
    print(f"outputs in {out}")
    return _finish(s.diverged, args.strict)


def _emit_sweep(result: harness.SweepResult, out: Path, figures: bool, ranked: bool) -> None:
    harness.write_sweep_csv(result, out / "sweep.csv", ranked=ranked)
    harness.write_sweep_json(result, out / "sweep.json")
    if figures:
        from pfopt import plots
        plots.render_sweep_figure(result, out / "figures" / "sweep.png")
    label = result.param.rsplit(".", 1)[-1]
    for row in (result.ranked() if ranked else result.rows):
        s = row.summary
        print(f"{label}={row.value:g} gap_final={s.gap_final} gap_avg={s.gap_avg}"
              f" diverged={s.diverged}")
    for key, value in result.footer.items():
        print(f"{key} = {value}")
    print(f"outputs in {out}")


def cmd_grid(args) -> int:
    raw = _load_config(args.config, args.set)
    result = harness.grid_search(raw, args.param, _parse_values(args.values), jobs=args.jobs)
    out = _out_dir(args, harness.ExperimentConfig.from_dict(raw))
    _emit_sweep(result, out, args.figures, ranked=True)
    return _finish(any(r.summary.diverged for r in result.rows), args.strict)


def cmd_ablate_eta0(args) -> int:
    raw = _load_config(args.config, args.set)
    values = _parse_values(args.values) if args.values else None
    result = harness.ablation_eta0(raw, values, jobs=args.jobs)
    out = _out_dir(args, harness.ExperimentConfig.from_dict(raw))
    _emit_sweep(result, out, args.figures, ranked=False)
    return _finish(any(r.summary.diverged for r in result.rows), args.strict)


def cmd_ablate_base(args) -> int:
    raw = _load_config(args.config, args.set)
    values = _parse_values(args.values) if args.values else None
    result = harness.ablation_base_factor(raw, values, jobs=args.jobs)
    out = _out_dir(args, harness.ExperimentConfig.from_dict(raw))
    _emit_sweep(result, out, args.figures, ranked=False)
    return _finish(any(r.summary.diverged for r in result.rows), args.strict)


def cmd_rates(args) -> int:
    raw = _load_config(args.config, args.set)
    steps = [int(float(v)) for v in args.steps.split(",") if v]
    result = harness.run_horizons(raw, steps, jobs=args.jobs)
    out = _out_dir(args, harness.ExperimentConfig.from_dict(raw))
    harness.write_rates_csv(result, out / "rates.csv")
    if args.figures:
        from pfopt import plots
        plots.render_rates_figure(result, out / "figures" / "rates.png")
    for T, gap in result.points:
        print(f"T={T} gap_avg={gap:.6g}")
    if result.fit is not None:
        print(f"slope={result.fit.slope:.4f} alpha_hat={result.fit.alpha_hat:.4f}")
    else:
        print("not enough positive-gap points for a rate fit")
    print(f"outputs in {out}")
    diverged = any(r.summary.diverged for r in result.rows)
    return _finish(diverged, args.strict)


def cmd_plot(args) -> int:
    from pfopt import plots
    trace = harness.read_trace_csv(args.trace)
    out = Path(args.out) if args.out else Path(args.trace).parent / "figures"
    written = plots.render_trace_figures(trace, out, stem=Path(args.trace).stem)
    for path in written:
        print(f"wrote {path}")
    return 0


def _add_common(p: argparse.ArgumentParser, with_jobs: bool = False) -> None:
    p.add_argument("config", help="path to a JSON experiment config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted config key (value parsed as JSON)")
    p.add_argument("--out", help="output directory (default: config output_dir or runs/<hash>)")
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero if any run diverged")
    fig = p.add_mutually_exclusive_group()
    fig.add_argument("--figures", dest="figures", action="store_true", default=True,
                     help="render matplotlib figures next to the CSV output (default)")
    fig.add_argument("--no-figures", dest="figures", action="store_false")
    if with_jobs:
        p.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfopt",
                                     description="parameter-free optimizer experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one run")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="grid search over one config key")
    _add_common(p, with_jobs=True)
    p.add_argument("--param", required=True, help="dotted config key, e.g. optimizer.lr")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ablate-eta0", help="sweep the seed step size")
    _add_common(p, with_jobs=True)
    p.add_argument("--values", help="comma-separated values (default 1e-6..1)")
    p.set_defaults(func=cmd_ablate_eta0)

    p = sub.add_parser("ablate-base", help="sweep the base factor")
    _add_common(p, with_jobs=True)
    p.add_argument("--values", help="comma-separated values (default 0.25..8)")
    p.set_defaults(func=cmd_ablate_base)

    p = sub.add_parser("rates", help="run several horizons and fit the rate slope")
    _add_common(p, with_jobs=True)
    p.add_argument("--steps", required=True, help="comma-separated horizons, e.g. 100,1000,10000")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("plot", help="render figures from an existing trace CSV")
    p.add_argument("trace", help="path to a trace.csv written by `pfopt run`")
    p.add_argument("--out", help="figure directory (default: alongside the trace)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
