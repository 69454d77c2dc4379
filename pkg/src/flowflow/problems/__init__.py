"""Benchmark problem registry and dataset export."""

from __future__ import annotations

import csv

import numpy as np

from .analytic import rosenbrock, stiff_valley
from .base import CompletionScenario, ProblemSpec
from .completion import (
    MATRIX_SCENARIOS,
    ROBUST_SCENARIOS,
    TENSOR_SCENARIOS,
    matrix_completion,
    robust_mf,
    tensor_completion,
)
from .kinematics import inverse_kinematics
from .spirals import make_spirals, two_spirals

PROBLEM_NAMES = (
    "rosenbrock",
    "stiff_valley",
    "matrix_completion",
    "tensor_completion",
    "robust_mf",
    "inverse_kinematics",
    "two_spirals",
)

_SCENARIO_TABLES = {
    "matrix_completion": MATRIX_SCENARIOS,
    "tensor_completion": TENSOR_SCENARIOS,
    "robust_mf": ROBUST_SCENARIOS,
}


def scenario_names(problem: str) -> tuple[str, ...]:
    return tuple(_SCENARIO_TABLES.get(problem, {}))


def build_problem(name: str, scenario: str | None, seed: int, **kwargs) -> ProblemSpec:
    """Construct a benchmark problem by name; deterministic in (name, scenario, seed)."""
    if name == "rosenbrock":
        return rosenbrock()
    if name == "stiff_valley":
        return stiff_valley(seed=seed, **kwargs)
    if name == "inverse_kinematics":
        return inverse_kinematics(seed=seed, **kwargs)
    if name == "two_spirals":
        _, spec = two_spirals(seed=seed, **kwargs)
        return spec
    if name in _SCENARIO_TABLES:
        table = _SCENARIO_TABLES[name]
        key = scenario or "medium"
        if key not in table:
            raise KeyError(
                f"unknown scenario {key!r} for {name} (have {', '.join(table)})"
            )
        builder = {"matrix_completion": matrix_completion,
                   "tensor_completion": tensor_completion,
                   "robust_mf": robust_mf}[name]
        return builder(table[key], seed)
    raise KeyError(f"unknown problem {name!r} (have {', '.join(PROBLEM_NAMES)})")


def export_dataset(problem: ProblemSpec, path) -> None:
    """Write a completion problem's synthetic data as plain CSV.

    First line is a comment naming the problem, shape, ranks, seed, and
    observation fraction; then one row per cell with the ground-truth value
    and whether that cell is observed. Observed values come from the
    (possibly corrupted) observation matrix.
    """
    meta = problem.metadata
    if "truth" not in meta or "mask" not in meta:
        raise ValueError(f"problem {problem.name} has no exportable dataset")
    truth, mask, obs = meta["truth"], meta["mask"], meta["observations"]
    sc: CompletionScenario = meta["scenario"]
    shape = "x".join(str(s) for s in sc.shape)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# problem={problem.name} shape={shape} true_rank={sc.true_rank} "
            f"model_rank={sc.rank} observed_fraction={sc.observed_fraction} "
            f"seed={meta['seed']}\n"
        )
        writer = csv.writer(fh)
        index_cols = [f"i{d}" for d in range(truth.ndim)]
        writer.writerow(index_cols + ["truth", "observed", "observed_value"])
        for idx in np.ndindex(*truth.shape):
            is_obs = bool(mask[idx])
            writer.writerow(list(idx) + [repr(float(truth[idx])), int(is_obs),
                                         repr(float(obs[idx])) if is_obs else ""])


__all__ = [
    "CompletionScenario",
    "ProblemSpec",
    "MATRIX_SCENARIOS",
    "TENSOR_SCENARIOS",
    "ROBUST_SCENARIOS",
    "PROBLEM_NAMES",
    "build_problem",
    "scenario_names",
    "export_dataset",
    "rosenbrock",
    "stiff_valley",
    "matrix_completion",
    "tensor_completion",
    "robust_mf",
    "inverse_kinematics",
    "two_spirals",
    "make_spirals",
]
