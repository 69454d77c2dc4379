"""flowflow: hybrid Adam / clipped gradient-flow optimization and benchmarks."""

from .ode import OdeConfig, OdeResult, OdeStatus, integrate, step_once
from .optim import (
    Adam,
    AdamConfig,
    FlowAdam,
    FlowAdamConfig,
    FlowAdamState,
    SgdMomentum,
    StepEvent,
    TriggerDecision,
    clip_grad,
    clip_vel,
    hard_inject,
    mode_preset,
    ode_propose,
    should_trigger,
    soft_inject,
    update_emas,
)
from .params import (
    NonFiniteError,
    ParamVector,
    Rng,
    Segment,
    axpby,
    gaussian_fill,
    l2_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdamConfig",
    "FlowAdam",
    "FlowAdamConfig",
    "FlowAdamState",
    "NonFiniteError",
    "OdeConfig",
    "OdeResult",
    "OdeStatus",
    "ParamVector",
    "Rng",
    "Segment",
    "SgdMomentum",
    "StepEvent",
    "TriggerDecision",
    "axpby",
    "clip_grad",
    "clip_vel",
    "gaussian_fill",
    "hard_inject",
    "integrate",
    "l2_norm",
    "mode_preset",
    "ode_propose",
    "should_trigger",
    "soft_inject",
    "step_once",
    "update_emas",
]
