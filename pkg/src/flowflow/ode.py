"""Adaptive Dormand-Prince 5(4) integrator for autonomous vector fields.

Integrates dy/dt = f(y) over [0, t_span] with the classic embedded 5th/4th
order pair, FSAL stage reuse, and a standard proportional step controller.
Only the endpoint is returned; callers that need a trajectory should not use
this module. Every field evaluation is counted in nfe because the caller
treats each one as a full gradient computation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .params import ParamVector

# Dormand & Prince (1980) coefficients. Row 7 of A equals B5, giving the
# first-same-as-last property: k7 of an accepted step is k1 of the next.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# B5 - B4hat, the embedded error weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_N_STAGES = 7


class OdeStatus(enum.Enum):
    SUCCESS = "success"
    STEP_UNDERFLOW = "step_underflow"
    EVAL_BUDGET_EXCEEDED = "eval_budget_exceeded"
    NON_FINITE_FIELD = "non_finite_field"


@dataclass
class OdeConfig:
    rtol: float = 1e-4
    atol: float = 1e-4
    max_field_evals: int = 1000
    min_step: float | None = None  # None: 1e-12 * t_span
    safety: float = 0.9
    max_step_growth: float = 5.0

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be > 0")
        if self.max_field_evals < _N_STAGES:
            raise ValueError(f"max_field_evals must be >= {_N_STAGES}")


@dataclass
class OdeResult:
    y_end: ParamVector
    nfe: int
    status: OdeStatus

    @property
    def ok(self) -> bool:
        return self.status is OdeStatus.SUCCESS


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, cfg: OdeConfig) -> float:
    """Weighted RMS of err against the mixed tolerance atol + rtol*|y|."""
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y0), np.abs(y1))
    ratio = err / scale
    return float(np.sqrt(np.mean(ratio * ratio)))


def step_once(field, y: ParamVector, h: float, cfg: OdeConfig, k1: np.ndarray | None = None):
    """One embedded 5(4) step of size h from y.

    Returns (y_candidate, error_estimate, nfe_used, k_last). k_last is the
    stage-7 derivative, reusable as k1 of the next step when this one is
    accepted. nfe_used is 7 when k1 must be evaluated, 6 when supplied.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    y0 = y.data
    k = np.empty((_N_STAGES, y0.size))
    nfe = 0
    if k1 is None:
        k[0] = field(y).data
        nfe += 1
    else:
        k[0] = k1
    for i in range(1, _N_STAGES):
        yi = y0 + h * (np.asarray(_A[i]) @ k[:i])
        k[i] = field(y.with_data(yi)).data
        nfe += 1
    y5 = y0 + h * (np.asarray(_B5) @ k)
    err = h * (np.asarray(_E) @ k)
    if not (np.isfinite(k[-1]).all() and np.isfinite(y5).all() and np.isfinite(err).all()):
        raise _NonFiniteField(nfe)
    return y.with_data(y5), _error_norm(err, y0, y5, cfg), nfe, k[-1]


class _NonFiniteField(Exception):
    def __init__(self, nfe_used: int):
        self.nfe_used = nfe_used


def integrate(field, y0: ParamVector, t_span: float, cfg: OdeConfig | None = None) -> OdeResult:
    """Endpoint of dy/dt = field(y) at t = t_span, starting from y0 at t = 0.

    Accepted steps satisfy the weighted-RMS local error bound err <= 1 for
    the mixed tolerance atol + rtol*|y|. The step controller is
    h_new = h * clamp(safety * err^(-1/5), 0.1, max_step_growth) with an
    initial step of t_span/10. On a non-success status the caller must
    discard y_end and fall back to its own update rule.
    """
    cfg = cfg or OdeConfig()
    if t_span < 0:
        raise ValueError("t_span must be >= 0")
    if not np.isfinite(y0.data).all():
        raise ValueError("y0 must be finite")
    if t_span == 0:
        return OdeResult(y0.copy(), 0, OdeStatus.SUCCESS)

    min_step = cfg.min_step if cfg.min_step is not None else 1e-12 * t_span
    t = 0.0
    y = y0.copy()
    h = t_span / 10.0
    k1 = None
    nfe = 0

    while t < t_span:
        if nfe >= cfg.max_field_evals:
            return OdeResult(y, nfe, OdeStatus.EVAL_BUDGET_EXCEEDED)
        if h < min_step:
            return OdeResult(y, nfe, OdeStatus.STEP_UNDERFLOW)
        last = h >= t_span - t
        h_step = t_span - t if last else h
        try:
            y_new, err, used, k_last = step_once(field, y, h_step, cfg, k1)
        except _NonFiniteField as exc:
            return OdeResult(y, nfe + exc.nfe_used, OdeStatus.NON_FINITE_FIELD)
        nfe += used
        if err <= 1.0:
            t = t_span if last else t + h_step
            y = y_new
            k1 = k_last  # FSAL
        # proportional controller, order-5 exponent; err == 0 means "grow"
        factor = cfg.max_step_growth if err == 0.0 else cfg.safety * err ** -0.2
        factor = min(cfg.max_step_growth, max(0.1, factor))
        h = h_step * factor

    return OdeResult(y, nfe, OdeStatus.SUCCESS)
