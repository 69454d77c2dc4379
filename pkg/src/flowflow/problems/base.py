"""Shared problem containers: a differentiable objective plus metadata."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

from ..params import ParamVector, Rng


@dataclass
class ProblemSpec:
    """A benchmark objective.

    loss_grad returns (loss, gradient) in one call; loss is the forward-only
    evaluation used for reporting. test_metric, when present, is a held-out
    score (RMSE against ground truth, classification accuracy, or target
    RMSE) that never consumes gradient evaluations.
    """

    name: str
    dim: int
    init: Callable[[Rng], ParamVector]
    loss_grad: Callable[[ParamVector], tuple[float, ParamVector]]
    loss: Optional[Callable[[ParamVector], float]] = None
    test_metric: Optional[Callable[[ParamVector], float]] = None
    metric_name: str = "final_train_loss"
    metric_kind: str = "loss"  # "rmse" | "accuracy" | "loss"
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.loss is None:
            self.loss = lambda theta: self.loss_grad(theta)[0]
        if self.metric_kind not in ("rmse", "accuracy", "loss"):
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")

    @property
    def lower_is_better(self) -> bool:
        return self.metric_kind != "accuracy"


@dataclass(frozen=True)
class CompletionScenario:
    """Sizes and corruption settings for factorization benchmarks."""

    name: str
    shape: tuple[int, ...]
    true_rank: int
    observed_fraction: float
    model_rank: int | None = None  # None: true_rank + 5
    lambda_reg: float = 1e-5
    signal_std: float = 1.0  # std of ground-truth entries
    spectrum_decay: float = 1.0  # per-component geometric decay of the truth
    noise_std: float = 0.0  # additive noise on observed entries
    init_std: float = 0.1  # std of the trainable factor initialization
    outlier_fraction: float = 0.0  # robust MF only
    outlier_magnitude: tuple[float, float] = (4.0, 5.0)  # x signal std
    huber_delta: float = 1.0  # robust MF only

    def __post_init__(self):
        if not 0.0 < self.observed_fraction <= 1.0:
            raise ValueError("observed_fraction must lie in (0, 1]")
        rank = self.rank
        if rank < self.true_rank:
            raise ValueError("model_rank must be >= true_rank")

    @property
    def rank(self) -> int:
        return self.model_rank if self.model_rank is not None else self.true_rank + 5
