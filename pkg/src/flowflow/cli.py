"""Command-line interface: bench, ablation-injection, sweep, verify.

Reports land in an output directory as per-run CSVs, per-optimizer aggregate
JSONs, and rendered PNG figures. Summary tables are always reconstructed from
the files on disk, so re-running the formatter on a results directory
reproduces the table exactly.

Exit codes: 0 success, 1 property/benchmark failure or diverged run,
2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from pathlib import Path

from .harness import (
    ExperimentConfig,
    OPTIMIZER_NAMES,
    aggregate,
    read_aggregate,
    run_experiment,
    write_aggregate,
    write_report,
)
from .problems import export_dataset, scenario_names
from .verify import run_all_checks

_OVERRIDE_FLAGS = (
    ("lr", float), ("weight_decay", float), ("momentum", float),
    ("gamma", float), ("alpha_s", float), ("alpha_c", float), ("tau", float),
    ("t_warmup", float), ("vel_clip_factor", float), ("injection", str),
)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seeds", type=int, default=5,
                        help="number of seeds, used as 1..N (default 5)")
    parser.add_argument("--seed-list", type=str, default=None,
                        help="explicit comma-separated seed values, overrides --seeds")
    parser.add_argument("--mode", choices=("A", "B"), default="B")
    parser.add_argument("--out", type=str, default=None,
                        help="output directory (default ./results/<timestamp>/)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default $FLOWFLOW_THREADS or 1)")
    parser.add_argument("--allow-divergence", action="store_true")
    parser.add_argument("--config", type=str, default=None,
                        help="key=value config file with [section] headers")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering, write only CSV/JSON")


def _add_overrides(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("optimizer overrides")
    for name, typ in _OVERRIDE_FLAGS:
        group.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowflow",
        description="Benchmark harness for the FlowAdam hybrid optimizer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a problem x optimizer grid")
    bench.add_argument("--problem", required=True)
    bench.add_argument("--scenario", default=None)
    bench.add_argument("--optimizers", default="adam,flowadam",
                       help="comma-separated optimizer names")
    bench.add_argument("--steps", type=int, default=1000)
    bench.add_argument("--eval-every", type=int, default=50)
    bench.add_argument("--grad-eval-budget", type=int, default=None)
    bench.add_argument("--export-data", action="store_true",
                       help="also dump each seed's synthetic dataset as CSV")
    _add_common(bench)
    _add_overrides(bench)

    ablation = sub.add_parser("ablation-injection",
                              help="soft vs hard momentum injection on two spirals")
    ablation.add_argument("--steps", type=int, default=4000)
    ablation.add_argument("--eval-every", type=int, default=100)
    ablation.add_argument("--injection", choices=("both", "soft-only", "hard-only"),
                          default="both")
    _add_common(ablation)

    sweep = sub.add_parser("sweep", help="hyperparameter sensitivity sweep")
    sweep.add_argument("--param", choices=("gamma", "alpha_s"), required=True)
    sweep.add_argument("--grid", required=True,
                       help="comma-separated values, e.g. 0.1,0.3,0.5,0.7,0.9")
    sweep.add_argument("--problem", default="matrix_completion")
    sweep.add_argument("--scenario", default="medium")
    sweep.add_argument("--steps", type=int, default=1000)
    sweep.add_argument("--eval-every", type=int, default=100)
    _add_common(sweep)

    sub.add_parser("verify", help="run the property and invariant suite")
    return parser


def _apply_config_file(parser, args_ns, argv):
    """Config-file values become defaults; explicit flags still win."""
    path = args_ns.config
    if not path:
        return args_ns
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        parser.error(f"config file not found: {path}")
    section = args_ns.command
    values = {}
    for sec in ("global", section):
        if cp.has_section(sec):
            values.update(cp.items(sec))
    valid = set(vars(args_ns))
    converted = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            parser.error(f"unknown config key {key!r} in {path}")
        current = getattr(args_ns, dest)
        if isinstance(current, bool):
            converted[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            converted[dest] = int(raw)
        elif isinstance(current, float):
            converted[dest] = float(raw)
        else:
            converted[dest] = raw
    # re-parse so command-line flags override config values
    sub_parser = parser._subparsers._group_actions[0].choices[section]
    sub_parser.set_defaults(**converted)
    return parser.parse_args(argv)


def _resolve_seeds(args) -> tuple[int, ...]:
    if getattr(args, "seed_list", None):
        try:
            return tuple(int(s) for s in args.seed_list.split(","))
        except ValueError:
            raise SystemExit(2)
    n = getattr(args, "seeds", 5)
    return tuple(range(1, n + 1))


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("FLOWFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _resolve_out(args) -> Path:
    if getattr(args, "out", None):
        out = Path(args.out)
    else:
        out = Path("results") / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _collect_overrides(args) -> dict:
    out = {}
    for name, _typ in _OVERRIDE_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    return out


def _tag(problem: str, scenario: str | None, optimizer: str) -> str:
    stem = problem if not scenario else f"{problem}_{scenario}"
    return f"{stem}_{optimizer}"


def _run_grid(cfgs: dict[str, ExperimentConfig], out: Path, threads: int):
    """Run one config per optimizer name, write per-run CSVs, return reports."""
    all_reports = {}
    for name, cfg in cfgs.items():
        reports = run_experiment(cfg, threads=threads)
        for rep in reports:
            write_report(rep, out / f"{_tag(cfg.problem, cfg.scenario, name)}_seed{rep.seed}.csv")
        all_reports[name] = reports
    return all_reports


def _write_aggregates(cfgs, all_reports, out: Path, baseline: str | None):
    aggs = {}
    base_reports = all_reports.get(baseline) if baseline else None
    for name, reports in all_reports.items():
        ref = base_reports if (base_reports is not None and name != baseline) else None
        agg = aggregate(reports, ref)
        cfg = cfgs[name]
        write_aggregate(agg, out / f"{_tag(cfg.problem, cfg.scenario, name)}_aggregate.json")
        aggs[name] = agg
    return aggs


def summarize_dir(out: Path) -> str:
    """Render the summary table purely from aggregate files on disk."""
    rows = []
    for path in sorted(out.glob("*_aggregate.json")):
        data = read_aggregate(path)
        impr = data["improvement_vs_baseline_pct"]
        rows.append((
            data["experiment"],
            data["optimizer"],
            data["final"]["metric"],
            f"{data['final']['mean']:.4f} ± {data['final']['std']:.4f}",
            "--" if impr is None else f"{impr:+.1f}%",
            f"{data['trigger_rate_all']:.1%}",
            f"{data['total_grad_evals_mean']:.0f}",
        ))
    if not rows:
        return "(no aggregates found)"
    header = ("experiment", "optimizer", "metric", "mean ± std", "improv.",
              "trig.rate", "grad evals")
    widths = [max(len(header[i]), max(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _check_divergence(all_reports, allow: bool) -> int:
    diverged = [
        (name, rep.seed)
        for name, reports in all_reports.items()
        for rep in reports
        if rep.finals["diverged"]
    ]
    if diverged:
        for name, seed in diverged:
            print(f"DIVERGED: {name} seed {seed}", file=sys.stderr)
        if not allow:
            return 1
    return 0


def cmd_bench(args) -> int:
    out = _resolve_out(args)
    threads = _resolve_threads(args)
    seeds = _resolve_seeds(args)
    optimizers = [o.strip() for o in args.optimizers.split(",") if o.strip()]
    for name in optimizers:
        if name not in OPTIMIZER_NAMES:
            print(f"error: unknown optimizer {name!r}", file=sys.stderr)
            return 2
    known = scenario_names(args.problem)
    if known and args.scenario and args.scenario not in known:
        print(f"error: unknown scenario {args.scenario!r} for {args.problem} "
              f"(have {', '.join(known)})", file=sys.stderr)
        return 2
    overrides = _collect_overrides(args)
    try:
        cfgs = {
            name: ExperimentConfig(
                problem=args.problem, scenario=args.scenario, optimizer=name,
                mode=args.mode, steps=args.steps, seeds=seeds,
                eval_every=args.eval_every, grad_eval_budget=args.grad_eval_budget,
                overrides=overrides,
            )
            for name in optimizers
        }
        all_reports = _run_grid(cfgs, out, threads)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    baseline = "adam" if "adam" in all_reports and len(all_reports) > 1 else None
    _write_aggregates(cfgs, all_reports, out, baseline)

    if args.export_data:
        from .problems import build_problem
        for seed in seeds:
            problem = build_problem(args.problem, args.scenario, seed)
            if "truth" in problem.metadata:
                export_dataset(problem, out / f"{args.problem}_{args.scenario or 'default'}"
                                              f"_seed{seed}_data.csv")

    if not args.no_figures:
        from .figures import render_bench_curves
        render_bench_curves(all_reports,
                            out / f"{args.problem}_{args.scenario or 'default'}_curves.png")

    print(summarize_dir(out))
    print(f"\nreports written to {out}")
    return _check_divergence(all_reports, args.allow_divergence)


def cmd_ablation(args) -> int:
    out = _resolve_out(args)
    threads = _resolve_threads(args)
    seeds = _resolve_seeds(args)
    arms = {"soft": "flowadam", "hard": "flowadam_hard"}
    if args.injection == "soft-only":
        arms.pop("hard")
    elif args.injection == "hard-only":
        arms.pop("soft")
    cfgs = {
        arm_opt: ExperimentConfig(
            problem="two_spirals", optimizer=arm_opt, mode="A", steps=args.steps,
            seeds=seeds, eval_every=args.eval_every,
        )
        for arm_opt in arms.values()
    }
    all_reports = _run_grid(cfgs, out, threads)
    _write_aggregates(cfgs, all_reports, out, baseline=None)

    for arm, opt_name in arms.items():
        reports = all_reports[opt_name]
        accs = [r.finals["final_metric"] for r in reports]
        trig = [r.finals["trigger_count"] for r in reports]
        mean_acc = sum(accs) / len(accs)
        if len(accs) > 1:
            var = sum((a - mean_acc) ** 2 for a in accs) / (len(accs) - 1)
            spread = f" ± {var ** 0.5:.3f}"
        else:
            spread = ""
        print(f"{arm} injection: accuracy {mean_acc:.3f}{spread}, "
              f"mean triggers {sum(trig) / len(trig):.0f}")

    if not args.no_figures and all_reports:
        from .figures import render_ablation
        render_ablation({arm: all_reports[o] for arm, o in arms.items()},
                        out / "ablation_injection.png")
    print(f"\nreports written to {out}")
    return _check_divergence(all_reports, args.allow_divergence)


def cmd_sweep(args) -> int:
    out = _resolve_out(args)
    threads = _resolve_threads(args)
    seeds = _resolve_seeds(args)
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        print("error: --grid must be comma-separated numbers", file=sys.stderr)
        return 2
    if not grid:
        print("error: empty grid", file=sys.stderr)
        return 2

    means, stds = [], []
    any_diverged = False
    for value in grid:
        cfg = ExperimentConfig(
            problem=args.problem, scenario=args.scenario, optimizer="flowadam",
            mode=args.mode, steps=args.steps, seeds=seeds,
            eval_every=args.eval_every, overrides={args.param: value},
        )
        reports = run_experiment(cfg, threads=threads)
        tag = f"{_tag(cfg.problem, cfg.scenario, 'flowadam')}_{args.param}{value:g}"
        for rep in reports:
            write_report(rep, out / f"{tag}_seed{rep.seed}.csv")
        agg = aggregate(reports)
        write_aggregate(agg, out / f"{tag}_aggregate.json")
        means.append(agg.mean)
        stds.append(agg.std)
        any_diverged |= agg.n_diverged > 0
        flag = "  [alpha_s > 1: near-permanent ODE mode]" if (
            args.param == "alpha_s" and value > 1.0) else ""
        print(f"{args.param}={value:g}: mean {agg.metric_name} "
              f"{agg.mean:.4f} ± {agg.std:.4f}{flag}")

    lo, hi = min(means), max(means)
    if lo > 0:
        print(f"max/min mean-{args.param} ratio: {hi / lo:.3f}")
    if not args.no_figures:
        from .figures import render_sweep
        render_sweep(grid, means, stds, args.param, "test metric",
                     out / f"sweep_{args.param}.png")
    print(f"\nreports written to {out}")
    if any_diverged and not args.allow_divergence:
        return 1
    return 0


def cmd_verify(_args) -> int:
    results = run_all_checks()
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args = _apply_config_file(parser, args, argv)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("default")
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "ablation-injection":
            return cmd_ablation(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
