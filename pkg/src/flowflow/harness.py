"""Seeded experiment runner with compute-fair accounting and serialization.

A run is (problem, optimizer, seed): the harness builds the problem, draws the
initial point, loops the optimizer's step function, and records a per-step
series plus final aggregates. Gradient accounting follows one rule: an
untriggered step costs 1 gradient evaluation, a triggered step costs 1 plus
the ODE solver's field evaluations. Test metrics and the final loss are
forward-only and never counted.

Per-run series go to CSV (one row per step); finals, the config echo, and the
seed go to a JSON sidecar next to the CSV. Aggregates across seeds are JSON.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optim import (
    Adam,
    AdamConfig,
    FlowAdam,
    SgdMomentum,
    mode_preset,
    with_overrides,
)
from .params import NonFiniteError, Rng
from .problems import build_problem

OPTIMIZER_NAMES = ("flowadam", "flowadam_hard", "adam", "adam_l2", "adamw", "sgd_momentum")

CSV_HEADER = ("step", "train_loss", "test_metric", "triggered", "nfe",
              "cum_grad_evals", "wall_ms")


class ReportFormatError(ValueError):
    """A report file on disk does not match the documented format."""


@dataclass
class ExperimentConfig:
    problem: str
    scenario: str | None = None
    optimizer: str = "adam"
    mode: str = "B"
    steps: int = 1000
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    eval_every: int = 50
    grad_eval_budget: int | None = None
    overrides: dict = field(default_factory=dict)  # optimizer hyperparameters
    problem_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.optimizer not in OPTIMIZER_NAMES:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def echo(self) -> dict:
        return {
            "problem": self.problem,
            "scenario": self.scenario,
            "optimizer": self.optimizer,
            "mode": self.mode,
            "steps": self.steps,
            "seeds": list(self.seeds),
            "eval_every": self.eval_every,
            "grad_eval_budget": self.grad_eval_budget,
            "overrides": dict(self.overrides),
            "problem_kwargs": dict(self.problem_kwargs),
        }


@dataclass
class RunReport:
    seed: int
    config: dict
    series: dict  # column name -> list, one entry per executed step
    finals: dict

    @property
    def steps_run(self) -> int:
        return len(self.series["step"])

    def final_metric(self) -> float:
        return self.finals["final_metric"]


def make_optimizer(name: str, mode: str, dim: int, overrides: dict):
    """Instantiate an optimizer by registry name.

    adam_l2 is an alias of adam here: every benchmark loss already carries
    its explicit L2 term, so the two protocols coincide in this artifact.
    """
    ov = dict(overrides)
    if name in ("flowadam", "flowadam_hard"):
        cfg = mode_preset(mode)
        if name == "flowadam_hard":
            ov.setdefault("injection", "hard")
        return FlowAdam(with_overrides(cfg, **ov), dim)
    if name in ("adam", "adam_l2"):
        allowed = {k: v for k, v in ov.items() if k in ("lr", "beta1", "beta2", "eps")}
        return Adam(AdamConfig(**allowed), dim)
    if name == "adamw":
        allowed = {k: v for k, v in ov.items()
                   if k in ("lr", "beta1", "beta2", "eps", "weight_decay")}
        allowed.setdefault("weight_decay", 1e-2)
        return Adam(AdamConfig(**allowed), dim, decoupled_decay=True)
    if name == "sgd_momentum":
        return SgdMomentum(lr=ov.get("lr", 1e-3), momentum=ov.get("momentum", 0.9), dim=dim)
    raise ValueError(f"unknown optimizer {name!r}")


def _descent_slack(optimizer) -> float:
    if isinstance(optimizer, FlowAdam):
        ode = optimizer.cfg.ode
        return 10.0 * (ode.rtol + ode.atol)
    return 0.0


def run_single(cfg: ExperimentConfig, seed: int) -> RunReport:
    """One deterministic run; never raises on divergence, marks it instead."""
    problem = build_problem(cfg.problem, cfg.scenario, seed, **cfg.problem_kwargs)
    theta = problem.init(Rng(seed).derive("init"))
    opt = make_optimizer(cfg.optimizer, cfg.mode, problem.dim, cfg.overrides)
    slack = _descent_slack(opt)

    series = {name: [] for name in CSV_HEADER}
    cum_evals = 0
    warmup = getattr(getattr(opt, "cfg", None), "t_warmup", 0) if isinstance(opt, FlowAdam) else 0
    trigger_count = 0
    descent_violations = 0
    diverged = False
    diverged_at = None
    pending_ode_loss = None  # loss before an adopted ODE step, awaiting the next loss

    for step in range(1, cfg.steps + 1):
        if cfg.grad_eval_budget is not None and cum_evals >= cfg.grad_eval_budget:
            break
        t0 = time.perf_counter()
        try:
            theta, ev = opt.step(problem, theta)
        except NonFiniteError:
            diverged = True
            diverged_at = step
            break
        wall_ms = (time.perf_counter() - t0) * 1e3

        if pending_ode_loss is not None:
            if ev.loss > pending_ode_loss + slack:
                descent_violations += 1
            pending_ode_loss = None
        adopted_ode = ev.triggered and not ev.fallback
        if adopted_ode:
            pending_ode_loss = ev.loss
        if ev.triggered:
            trigger_count += 1

        cum_evals += ev.grad_evals
        eval_now = problem.test_metric is not None and (
            step % cfg.eval_every == 0 or step == cfg.steps
        )
        series["step"].append(step)
        series["train_loss"].append(ev.loss)
        series["test_metric"].append(problem.test_metric(theta) if eval_now else None)
        series["triggered"].append(1 if ev.triggered else 0)
        series["nfe"].append(ev.nfe)
        series["cum_grad_evals"].append(cum_evals)
        series["wall_ms"].append(wall_ms)

    steps_run = len(series["step"])
    if diverged or steps_run == 0:
        final_loss = math.nan
        final_test = math.nan
    else:
        final_loss = problem.loss(theta)
        if pending_ode_loss is not None and final_loss > pending_ode_loss + slack:
            descent_violations += 1
        final_test = problem.test_metric(theta) if problem.test_metric else math.nan
    total_nfe = sum(series["nfe"])
    post_warmup = max(steps_run - min(steps_run, warmup), 0) if steps_run else 0

    finals = {
        "final_train_loss": final_loss,
        "final_test_metric": final_test,
        "final_metric": final_test if problem.test_metric else final_loss,
        "metric_name": problem.metric_name,
        "metric_kind": problem.metric_kind,
        "trigger_count": trigger_count,
        "trigger_rate_all": trigger_count / steps_run if steps_run else 0.0,
        "trigger_rate_post_warmup": trigger_count / post_warmup if post_warmup else 0.0,
        "total_grad_evals": cum_evals,
        "total_nfe": total_nfe,
        "steps_run": steps_run,
        "descent_violations": descent_violations,
        "diverged": diverged,
        "diverged_at": diverged_at,
    }
    return RunReport(seed=seed, config=cfg.echo(), series=series, finals=finals)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[RunReport]:
    """All seeds of one experiment; order of reports follows cfg.seeds."""
    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda s: run_single(cfg, s), cfg.seeds))
    return [run_single(cfg, seed) for seed in cfg.seeds]


@dataclass
class AggregateReport:
    experiment: str
    optimizer: str
    mode: str
    seeds: list
    metric_name: str
    metric_kind: str
    mean: float
    std: float
    median: float
    baseline_optimizer: str | None
    improvement_vs_baseline_pct: float | None
    improvement_vs_baseline_median_pct: float | None
    trigger_rate_all: float
    trigger_rate_post_warmup: float
    total_grad_evals_mean: float
    n_diverged: int

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "optimizer": self.optimizer,
            "mode": self.mode,
            "seeds": self.seeds,
            "final": {
                "metric": self.metric_name,
                "mean": self.mean,
                "std": self.std,
                "median": self.median,
            },
            "metric_kind": self.metric_kind,
            "baseline_optimizer": self.baseline_optimizer,
            "improvement_vs_baseline_pct": self.improvement_vs_baseline_pct,
            "improvement_vs_baseline_median_pct": self.improvement_vs_baseline_median_pct,
            "trigger_rate_all": self.trigger_rate_all,
            "trigger_rate_post_warmup": self.trigger_rate_post_warmup,
            "total_grad_evals_mean": self.total_grad_evals_mean,
            "n_diverged": self.n_diverged,
        }


def improvement_pct(candidate_mean: float, baseline_mean: float, metric_kind: str) -> float:
    """Relative improvement versus a baseline, sign-aware per metric type.

    Error-like metrics (RMSE, loss): (baseline - candidate) / baseline * 100.
    Score-like metrics (accuracy, AUC): (candidate - baseline) / baseline * 100.
    """
    if baseline_mean == 0:
        return 0.0
    if metric_kind == "accuracy":
        return (candidate_mean - baseline_mean) / baseline_mean * 100.0
    return (baseline_mean - candidate_mean) / baseline_mean * 100.0


def aggregate(reports: list[RunReport], baseline_reports: list[RunReport] | None = None
              ) -> AggregateReport:
    """Across-seed mean/std/median of the final metric, paired by seed value.

    Diverged runs (in either arm) are excluded from the statistics and
    reported through n_diverged.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    if baseline_reports is not None:
        if sorted(r.seed for r in reports) != sorted(r.seed for r in baseline_reports):
            raise ValueError("candidate and baseline seed sets differ")
    by_seed = {r.seed: r for r in reports}
    base_by_seed = {r.seed: r for r in baseline_reports} if baseline_reports else {}

    bad = {s for s, r in by_seed.items() if r.finals["diverged"]}
    bad |= {s for s, r in base_by_seed.items() if r.finals["diverged"]}
    seeds = sorted(s for s in by_seed if s not in bad)
    if not seeds:
        raise ValueError("all runs diverged; nothing to aggregate")

    values = np.array([by_seed[s].final_metric() for s in seeds])
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    median = float(np.median(values))

    first = by_seed[seeds[0]]
    impr = impr_median = None
    baseline_name = None
    if baseline_reports:
        base_vals = np.array([base_by_seed[s].final_metric() for s in seeds])
        kind = first.finals["metric_kind"]
        impr = improvement_pct(mean, float(base_vals.mean()), kind)
        impr_median = improvement_pct(median, float(np.median(base_vals)), kind)
        baseline_name = base_by_seed[seeds[0]].config["optimizer"]

    cfg = first.config
    return AggregateReport(
        experiment=f"{cfg['problem']}" + (f"/{cfg['scenario']}" if cfg["scenario"] else ""),
        optimizer=cfg["optimizer"],
        mode=cfg["mode"],
        seeds=seeds,
        metric_name=first.finals["metric_name"],
        metric_kind=first.finals["metric_kind"],
        mean=mean,
        std=std,
        median=median,
        baseline_optimizer=baseline_name,
        improvement_vs_baseline_pct=impr,
        improvement_vs_baseline_median_pct=impr_median,
        trigger_rate_all=float(np.mean([by_seed[s].finals["trigger_rate_all"] for s in seeds])),
        trigger_rate_post_warmup=float(
            np.mean([by_seed[s].finals["trigger_rate_post_warmup"] for s in seeds])
        ),
        total_grad_evals_mean=float(
            np.mean([by_seed[s].finals["total_grad_evals"] for s in seeds])
        ),
        n_diverged=len(bad),
    )


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def write_report(report: RunReport, path) -> None:
    """Per-step CSV plus a .meta.json sidecar with finals, config, and seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(report.steps_run):
            tm = report.series["test_metric"][i]
            writer.writerow([
                report.series["step"][i],
                repr(report.series["train_loss"][i]),
                "" if tm is None else repr(tm),
                report.series["triggered"][i],
                report.series["nfe"][i],
                report.series["cum_grad_evals"][i],
                repr(report.series["wall_ms"][i]),
            ])
    meta = {"seed": report.seed, "config": report.config, "finals": report.finals}
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, allow_nan=True)


def read_report(path) -> RunReport:
    """Inverse of write_report; lossless for every field."""
    path = Path(path)
    series = {name: [] for name in CSV_HEADER}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportFormatError(f"{path}: empty file") from None
        if tuple(header) != CSV_HEADER:
            raise ReportFormatError(f"{path}:1: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise ReportFormatError(f"{path}:{lineno}: expected "
                                        f"{len(CSV_HEADER)} fields, got {len(row)}")
            try:
                series["step"].append(int(row[0]))
                series["train_loss"].append(float(row[1]))
                series["test_metric"].append(None if row[2] == "" else float(row[2]))
                series["triggered"].append(int(row[3]))
                series["nfe"].append(int(row[4]))
                series["cum_grad_evals"].append(int(row[5]))
                series["wall_ms"].append(float(row[6]))
            except ValueError as exc:
                raise ReportFormatError(f"{path}:{lineno}: {exc}") from None
    meta_file = _meta_path(path)
    try:
        with open(meta_file) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ReportFormatError(f"{meta_file}: missing sidecar") from None
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{meta_file}: {exc}") from None
    return RunReport(seed=meta["seed"], config=meta["config"],
                     series=series, finals=meta["finals"])


def write_aggregate(agg: AggregateReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(agg.to_json_dict(), fh, indent=2)


def read_aggregate(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
