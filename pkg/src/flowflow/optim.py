"""Optimizers: FlowAdam (hybrid Adam + clipped gradient-flow ODE) and baselines.

FlowAdam runs bias-corrected Adam steps until EMA statistics of the gradient
norm and gradient change detect a plateau or high gradient variation. It then
integrates the clipped descent ODE dtheta/dt = -clip(grad) over a short span
alpha*tau, adopts the endpoint, and blends the ODE displacement velocity into
Adam's first moment (soft momentum injection). The second moment and the Adam
step counter are left untouched by ODE steps.

All trigger norms and the velocity clip are global L2 norms over the full
flat parameter vector; Adam's moments stay elementwise as usual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .ode import OdeConfig, OdeStatus, integrate
from .params import NonFiniteError, ParamVector, l2_norm


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # 0 for Adam; decoupled when used by AdamW

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be > 0")


@dataclass
class FlowAdamConfig:
    adam: AdamConfig = field(default_factory=AdamConfig)
    beta_ema: float = 0.9
    alpha_s: float = 0.9  # switch sensitivity (plateau trigger)
    alpha_c: float = 0.1  # variation sensitivity (gradient-change trigger)
    gamma: float = 0.5  # injection weight on ODE velocity
    tau: float = 0.5  # ODE time scale; integration span is lr * tau
    t_warmup: int | float = 10
    vel_clip_factor: float = 5.0
    ode: OdeConfig = field(default_factory=OdeConfig)
    injection: str = "soft"  # "soft" blends, "hard" replaces (ablation only)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha_s <= 0 or self.alpha_c <= 0 or self.tau <= 0:
            raise ValueError("alpha_s, alpha_c, tau must be > 0")
        if not 0.0 <= self.beta_ema < 1.0:
            raise ValueError("beta_ema must lie in [0, 1)")
        if self.injection not in ("soft", "hard"):
            raise ValueError(f"unknown injection mode {self.injection!r}")
        if self.alpha_s > 1.0:
            warnings.warn(
                "alpha_s > 1 triggers plateau detection on nearly every step; "
                "values <= 1 are recommended",
                stacklevel=2,
            )


def mode_preset(mode: str) -> FlowAdamConfig:
    """Built-in trigger presets.

    Mode A (stochastic neural-network training): conservative triggering.
    Mode B (deterministic / full-batch scientific problems): aggressive.
    """
    if mode == "A":
        return FlowAdamConfig(alpha_s=0.4, alpha_c=3.0, tau=2.0)
    if mode == "B":
        return FlowAdamConfig(alpha_s=0.9, alpha_c=0.1, tau=0.5)
    raise ValueError(f"unknown mode {mode!r} (expected 'A' or 'B')")


@dataclass
class FlowAdamState:
    m: np.ndarray  # first moment
    v: np.ndarray  # second moment
    step_count: int = 0  # Adam steps only; frozen during ODE steps
    g_bar: float = 0.0  # EMA of gradient norm
    c_bar: float = 0.0  # EMA of gradient-change norm
    g_prev: np.ndarray = None
    t: int = 0  # outer steps of either kind
    trigger_count: int = 0
    total_nfe: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "FlowAdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), g_prev=np.zeros(dim))


@dataclass(frozen=True)
class TriggerDecision:
    fired: bool
    plateau: bool
    grad_change: bool
    grad_norm: float
    change_norm: float


@dataclass
class StepEvent:
    """What one optimizer step did: loss seen, gradient evals consumed, ODE use."""

    loss: float
    grad_evals: int = 1
    triggered: bool = False
    plateau: bool = False
    grad_change: bool = False
    nfe: int = 0
    fallback: bool = False
    ode_status: str | None = None


def clip_grad(g: ParamVector) -> ParamVector:
    """Elementwise clamp to [-1, 1]; sign-preserving and idempotent."""
    return g.with_data(np.clip(g.data, -1.0, 1.0))


def _adam_update(theta: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray,
                 k: int, cfg: AdamConfig) -> np.ndarray:
    """Shared bias-corrected Adam kernel; mutates m and v in place.

    Both the standalone Adam optimizer and FlowAdam's non-triggered branch go
    through this function so the two trajectories match bit for bit.
    """
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * g
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * (g * g)
    m_hat = m / (1.0 - cfg.beta1 ** k)
    v_hat = v / (1.0 - cfg.beta2 ** k)
    return theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def update_emas(state: FlowAdamState, g: ParamVector, beta_ema: float) -> tuple[float, float]:
    """Fold the current gradient into the norm and change-norm EMAs.

    g_prev is deliberately not touched here; it is rolled at the end of the
    outer step so the change norm always compares consecutive gradients.
    """
    g_norm = l2_norm(g)
    change_norm = float(math.sqrt(np.dot(g.data - state.g_prev, g.data - state.g_prev)))
    state.g_bar = beta_ema * state.g_bar + (1.0 - beta_ema) * g_norm
    state.c_bar = beta_ema * state.c_bar + (1.0 - beta_ema) * change_norm
    return g_norm, change_norm


def should_trigger(state: FlowAdamState, g_norm: float, change_norm: float,
                   cfg: FlowAdamConfig) -> TriggerDecision:
    """Trigger test against EMAs already updated for this step.

    Both inequalities are strict, so boundary cases (and the all-zero state
    at t=1) never fire; the warmup window masks early noise regardless.
    """
    plateau = g_norm < cfg.alpha_s * state.g_bar
    grad_change = change_norm > cfg.alpha_c * state.c_bar
    fired = (plateau or grad_change) and state.t > cfg.t_warmup
    return TriggerDecision(fired, plateau, grad_change, g_norm, change_norm)


def ode_propose(problem, theta: ParamVector, cfg: FlowAdamConfig):
    """Integrate the clipped descent flow from theta over span lr * tau.

    Returns (theta_new, v_ode, nfe, status). v_ode = (theta - theta_new) / lr
    is the displacement expressed as a velocity on the learning-rate scale.
    Each field evaluation costs one gradient computation, hence nfe gradient
    evals. Non-success status means the caller should take an Adam step.
    """
    lr = cfg.adam.lr

    def clipped_field(y: ParamVector) -> ParamVector:
        _, grad = problem.loss_grad(y)
        return y.with_data(-np.clip(grad.data, -1.0, 1.0))

    res = integrate(clipped_field, theta, lr * cfg.tau, cfg.ode)
    v_ode = (theta.data - res.y_end.data) / lr
    return res.y_end, v_ode, res.nfe, res.status


def clip_vel(v_ode: np.ndarray, m: np.ndarray, factor: float = 5.0) -> np.ndarray:
    """Rescale v_ode so its norm never exceeds factor * ||m||.

    With m = 0 the rescale limit is 0, so the result is the zero vector;
    warmup keeps that case from arising in live runs.
    """
    v_norm = float(math.sqrt(np.dot(v_ode, v_ode)))
    limit = factor * float(math.sqrt(np.dot(m, m)))
    if v_norm <= limit:
        return v_ode
    if v_norm == 0.0:
        return v_ode
    return v_ode * (limit / v_norm)


def soft_inject(m: np.ndarray, v_clipped: np.ndarray, gamma: float) -> np.ndarray:
    """Convex blend (1-gamma)*m + gamma*v; norm bounded by max of the inputs."""
    return (1.0 - gamma) * m + gamma * v_clipped


def hard_inject(m: np.ndarray, v_clipped: np.ndarray) -> np.ndarray:
    """Replace the momentum outright. Kept only for the injection ablation."""
    return v_clipped


def _check_finite(loss: float, g: np.ndarray):
    if not (math.isfinite(loss) and np.isfinite(g).all()):
        raise NonFiniteError("non-finite loss or gradient")


class Adam:
    """Bias-corrected Adam; decoupled weight decay turns it into AdamW."""

    def __init__(self, cfg: AdamConfig, dim: int, decoupled_decay: bool = False):
        self.cfg = cfg
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.step_count = 0
        self.decoupled_decay = decoupled_decay

    def step(self, problem, theta: ParamVector):
        loss, g = problem.loss_grad(theta)
        _check_finite(loss, g.data)
        data = theta.data
        if self.decoupled_decay and self.cfg.weight_decay != 0.0:
            data = data - self.cfg.lr * self.cfg.weight_decay * data
        self.step_count += 1
        new = _adam_update(data, g.data, self.m, self.v, self.step_count, self.cfg)
        return theta.with_data(new), StepEvent(loss=loss)


class SgdMomentum:
    """Heavy-ball SGD, included as a sanity baseline."""

    def __init__(self, lr: float, momentum: float, dim: int):
        self.lr = lr
        self.momentum = momentum
        self.buf = np.zeros(dim)

    def step(self, problem, theta: ParamVector):
        loss, g = problem.loss_grad(theta)
        _check_finite(loss, g.data)
        self.buf = self.momentum * self.buf + g.data
        return theta.with_data(theta.data - self.lr * self.buf), StepEvent(loss=loss)


class FlowAdam:
    """Hybrid optimizer: Adam steps plus triggered clipped-gradient-flow steps."""

    def __init__(self, cfg: FlowAdamConfig, dim: int):
        self.cfg = cfg
        self.state = FlowAdamState.zeros(dim)

    def step(self, problem, theta: ParamVector):
        cfg = self.cfg
        st = self.state
        loss, g = problem.loss_grad(theta)
        _check_finite(loss, g.data)
        st.t += 1
        g_norm, change_norm = update_emas(st, g, cfg.beta_ema)
        decision = should_trigger(st, g_norm, change_norm, cfg)

        if decision.fired:
            st.trigger_count += 1
            theta_new, v_ode, nfe, status = ode_propose(problem, theta, cfg)
            st.total_nfe += nfe
            if status is OdeStatus.SUCCESS:
                v_clipped = clip_vel(v_ode, st.m, cfg.vel_clip_factor)
                if cfg.injection == "soft":
                    st.m = soft_inject(st.m, v_clipped, cfg.gamma)
                else:
                    st.m = hard_inject(st.m, v_clipped)
                # v and step_count untouched on ODE steps
                event = StepEvent(loss=loss, grad_evals=1 + nfe, triggered=True,
                                  plateau=decision.plateau,
                                  grad_change=decision.grad_change,
                                  nfe=nfe, ode_status=status.value)
                result = theta_new
            else:
                # integration failed: take the standard Adam step instead
                st.step_count += 1
                new = _adam_update(theta.data, g.data, st.m, st.v, st.step_count, cfg.adam)
                event = StepEvent(loss=loss, grad_evals=1 + nfe, triggered=True,
                                  plateau=decision.plateau,
                                  grad_change=decision.grad_change,
                                  nfe=nfe, fallback=True, ode_status=status.value)
                result = theta.with_data(new)
        else:
            st.step_count += 1
            new = _adam_update(theta.data, g.data, st.m, st.v, st.step_count, cfg.adam)
            event = StepEvent(loss=loss, plateau=decision.plateau,
                              grad_change=decision.grad_change)
            result = theta.with_data(new)

        st.g_prev = g.data.copy()
        return result, event


def with_overrides(cfg: FlowAdamConfig, **kwargs) -> FlowAdamConfig:
    """New config with selected fields replaced; nested adam.* keys allowed."""
    adam_keys = {k: v for k, v in kwargs.items() if k in ("lr", "beta1", "beta2", "eps", "weight_decay")}
    top_keys = {k: v for k, v in kwargs.items() if k not in adam_keys}
    adam = replace(cfg.adam, **adam_keys) if adam_keys else cfg.adam
    return replace(cfg, adam=adam, **top_keys)
