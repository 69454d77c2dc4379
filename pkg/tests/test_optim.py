import math

import numpy as np
import pytest

from flowflow.ode import OdeStatus
from flowflow.optim import (
    Adam,
    AdamConfig,
    FlowAdam,
    FlowAdamConfig,
    FlowAdamState,
    SgdMomentum,
    clip_grad,
    clip_vel,
    hard_inject,
    mode_preset,
    ode_propose,
    should_trigger,
    soft_inject,
    update_emas,
    with_overrides,
)
from flowflow.params import NonFiniteError, ParamVector, Rng
from flowflow.problems.base import ProblemSpec


def quadratic_problem(dim=4, scale=1.0):
    """L = 0.5 * scale * ||theta||^2, gradient scale * theta."""

    def loss_grad(theta: ParamVector):
        g = scale * theta.data
        return float(0.5 * np.dot(theta.data, g)), theta.with_data(g)

    return ProblemSpec(name="quad", dim=dim,
                       init=lambda rng: ParamVector(np.zeros(dim)),
                       loss_grad=loss_grad)


class FixedGradProblem:
    """Returns a constant gradient regardless of theta; for kernel tests."""

    def __init__(self, g):
        self.g = np.asarray(g, dtype=np.float64)
        self.dim = self.g.size

    def loss_grad(self, theta):
        return 0.0, theta.with_data(self.g.copy())


class TestClipGrad:
    def test_examples(self):
        out = clip_grad(ParamVector([0.5, -2.0, 1.0]))
        assert np.array_equal(out.data, [0.5, -1.0, 1.0])

    def test_zero(self):
        out = clip_grad(ParamVector(np.zeros(3)))
        assert np.array_equal(out.data, np.zeros(3))

    def test_inactive_inside_unit_box(self):
        g = ParamVector([0.3, -0.99, 0.0, 1.0])
        assert np.array_equal(clip_grad(g).data, g.data)

    def test_idempotent_sign_preserving(self):
        rng = Rng(8)
        for _ in range(50):
            g = ParamVector(rng.normal(10, std=3.0))
            c = clip_grad(g)
            assert np.array_equal(clip_grad(c).data, c.data)
            assert np.all(g.data * c.data >= 0.0)


class TestAdam:
    def test_first_step_closed_form(self):
        # theta0 = 0, g = 2: mhat = g, vhat = g^2, step = -lr * g/(|g| + eps)
        opt = Adam(AdamConfig(), dim=1)
        theta, _ = opt.step(FixedGradProblem([2.0]), ParamVector([0.0]))
        assert theta.data[0] == pytest.approx(-0.001, abs=1e-8)

    def test_zero_gradient_no_motion(self):
        opt = Adam(AdamConfig(), dim=3)
        theta, _ = opt.step(FixedGradProblem([0.0, 0.0, 0.0]), ParamVector([1.0, 2.0, 3.0]))
        assert np.array_equal(theta.data, [1.0, 2.0, 3.0])
        assert np.all(opt.m == 0.0) and np.all(opt.v == 0.0)

    def test_constant_gradient_step_size(self):
        # bias correction keeps |dtheta| at ~lr for a constant gradient
        problem = FixedGradProblem([3.0, -3.0])
        opt = Adam(AdamConfig(), dim=2)
        theta = ParamVector([0.0, 0.0])
        prev = theta.data.copy()
        for _ in range(2):
            theta, _ = opt.step(problem, theta)
            delta = np.abs(theta.data - prev)
            assert np.all(np.abs(delta - 0.001) < 1e-6)
            prev = theta.data.copy()

    def test_non_finite_gradient_raises_state_unchanged(self):
        opt = Adam(AdamConfig(), dim=1)
        m_before = opt.m.copy()
        with pytest.raises(NonFiniteError):
            opt.step(FixedGradProblem([np.nan]), ParamVector([0.0]))
        assert np.array_equal(opt.m, m_before)
        assert opt.step_count == 0

    def test_adamw_decoupled_decay(self):
        # decay shrinks theta before the moment update; with g = 0 only decay acts
        cfg = AdamConfig(weight_decay=0.1)
        opt = Adam(cfg, dim=1, decoupled_decay=True)
        theta, _ = opt.step(FixedGradProblem([0.0]), ParamVector([10.0]))
        assert theta.data[0] == pytest.approx(10.0 * (1 - 0.001 * 0.1))

    def test_config_validators(self):
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)
        with pytest.raises(ValueError):
            AdamConfig(lr=0.0)


class TestSgdMomentum:
    def test_zero_momentum_is_gradient_descent(self):
        opt = SgdMomentum(lr=0.1, momentum=0.0, dim=2)
        theta, _ = opt.step(FixedGradProblem([1.0, -2.0]), ParamVector([0.0, 0.0]))
        assert np.allclose(theta.data, [-0.1, 0.2])

    def test_zero_gradient_zero_buffer(self):
        opt = SgdMomentum(lr=0.1, momentum=0.9, dim=1)
        theta, _ = opt.step(FixedGradProblem([0.0]), ParamVector([5.0]))
        assert theta.data[0] == 5.0

    def test_buffer_geometric_limit(self):
        # constant g: buf -> g / (1 - momentum) = 10 g
        opt = SgdMomentum(lr=1e-4, momentum=0.9, dim=1)
        theta = ParamVector([0.0])
        problem = FixedGradProblem([1.0])
        for _ in range(200):
            theta, _ = opt.step(problem, theta)
        assert opt.buf[0] == pytest.approx(10.0, rel=1e-6)


class TestEmasAndTrigger:
    def test_ema_first_update(self):
        state = FlowAdamState.zeros(1)
        g = ParamVector([10.0])
        update_emas(state, g, beta_ema=0.9)
        assert state.g_bar == pytest.approx(1.0)

    def test_unchanged_gradient_decays_change_ema(self):
        state = FlowAdamState.zeros(2)
        state.c_bar = 4.0
        state.g_prev = np.array([1.0, 1.0])
        update_emas(state, ParamVector([1.0, 1.0]), beta_ema=0.9)
        assert state.c_bar == pytest.approx(0.9 * 4.0)

    def test_ema_fixed_point(self):
        state = FlowAdamState.zeros(1)
        for _ in range(400):
            update_emas(state, ParamVector([7.0]), beta_ema=0.9)
            state.g_prev = np.array([7.0])
        assert state.g_bar == pytest.approx(7.0, rel=1e-9)

    def test_warmup_masks_triggers(self):
        cfg = mode_preset("B")
        state = FlowAdamState.zeros(1)
        state.g_bar, state.c_bar = 10.0, 0.001
        for t in range(1, 11):
            state.t = t
            dec = should_trigger(state, g_norm=0.1, change_norm=5.0, cfg=cfg)
            assert dec.plateau and dec.grad_change
            assert not dec.fired

    def test_plateau_fires_after_warmup(self):
        cfg = mode_preset("B")
        state = FlowAdamState.zeros(1)
        state.t = 50
        state.g_bar = 1.0
        dec = should_trigger(state, g_norm=0.1, change_norm=0.0, cfg=cfg)
        assert dec.plateau and dec.fired

    def test_boundary_is_strict(self):
        cfg = mode_preset("B")
        state = FlowAdamState.zeros(1)
        state.t = 50
        state.g_bar = 1.0
        state.c_bar = 2.0
        dec = should_trigger(state, g_norm=cfg.alpha_s * 1.0,
                             change_norm=cfg.alpha_c * 2.0, cfg=cfg)
        assert not dec.plateau and not dec.grad_change and not dec.fired


class TestInjection:
    def test_clip_vel_under_threshold_unchanged(self):
        v = np.array([2.0, 0.0])
        m = np.array([1.0, 0.0])
        assert clip_vel(v, m, 5.0) is v

    def test_clip_vel_rescales_to_threshold(self):
        v = np.array([20.0, 0.0])
        m = np.array([0.0, 2.0])
        out = clip_vel(v, m, 5.0)
        assert np.linalg.norm(out) == pytest.approx(10.0)
        assert out[1] == 0.0  # direction preserved

    def test_clip_vel_zero_momentum_zeroes_velocity(self):
        out = clip_vel(np.array([3.0, 4.0]), np.zeros(2), 5.0)
        assert np.array_equal(out, np.zeros(2))

    def test_soft_inject_extremes(self):
        m = np.array([2.0, 0.0])
        v = np.array([0.0, 2.0])
        assert np.array_equal(soft_inject(m, v, 0.0), m)
        assert np.array_equal(soft_inject(m, v, 1.0), v)
        mid = soft_inject(m, v, 0.5)
        assert np.array_equal(mid, [1.0, 1.0])
        assert np.linalg.norm(mid) <= 2.0

    def test_hard_inject_discards_momentum(self):
        m = np.array([5.0, 5.0])
        v = np.array([1.0, -1.0])
        assert np.array_equal(hard_inject(m, v), v)
        assert np.array_equal(hard_inject(m, np.zeros(2)), np.zeros(2))

    def test_soft_injection_norm_bound_random(self):
        # 1000 random blends satisfy the convexity bound
        rng = Rng(42)
        for i in range(1000):
            n = 2 + i % 7
            m = rng.normal(n, std=2.0)
            v = rng.normal(n, std=3.0)
            gamma = float(rng.uniform(1)[0])
            out = soft_inject(m, v, gamma)
            bound = max(np.linalg.norm(m), np.linalg.norm(v))
            assert np.linalg.norm(out) <= bound + 1e-12

    def test_post_trigger_momentum_bound(self):
        # compose velocity clipping with soft injection: <= 5 ||m||
        rng = Rng(13)
        for _ in range(300):
            m = rng.normal(6, std=1.0)
            v = rng.normal(6, std=10.0)
            gamma = float(rng.uniform(1)[0])
            out = soft_inject(m, clip_vel(v, m, 5.0), gamma)
            assert np.linalg.norm(out) <= 5.0 * np.linalg.norm(m) + 1e-12


class TestModePresets:
    def test_mode_a(self):
        cfg = mode_preset("A")
        assert (cfg.alpha_s, cfg.alpha_c, cfg.tau) == (0.4, 3.0, 2.0)

    def test_mode_b(self):
        cfg = mode_preset("B")
        assert (cfg.alpha_s, cfg.alpha_c, cfg.tau) == (0.9, 0.1, 0.5)

    def test_shared_defaults(self):
        for mode in ("A", "B"):
            cfg = mode_preset(mode)
            assert cfg.gamma == 0.5
            assert cfg.t_warmup == 10
            assert cfg.beta_ema == 0.9
            assert cfg.vel_clip_factor == 5.0
            assert cfg.ode.rtol == 1e-4 and cfg.ode.atol == 1e-4
            assert cfg.adam.lr == 0.001

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            mode_preset("C")

    def test_alpha_s_above_one_warns(self):
        with pytest.warns(UserWarning):
            FlowAdamConfig(alpha_s=1.5)

    def test_gamma_validator(self):
        with pytest.raises(ValueError):
            FlowAdamConfig(gamma=1.5)

    def test_with_overrides_nested(self):
        cfg = with_overrides(mode_preset("B"), lr=0.01, gamma=0.25)
        assert cfg.adam.lr == 0.01
        assert cfg.gamma == 0.25
        assert cfg.alpha_s == 0.9


class TestOdePropose:
    def test_zero_tau_noop(self):
        cfg = with_overrides(mode_preset("B"))
        object.__setattr__ if False else None
        cfg = FlowAdamConfig(alpha_s=0.9, alpha_c=0.1, tau=1e-300)
        theta = ParamVector([0.5, -0.5])
        theta_new, v_ode, nfe, status = ode_propose(quadratic_problem(2), theta, cfg)
        assert status is OdeStatus.SUCCESS
        assert nfe <= 19
        assert np.allclose(v_ode, 0.0, atol=1e-290)

    def test_quadratic_flow_matches_exponential(self):
        # span = lr * tau = 5e-4; inside the unit box the flow is exp(-span) theta
        cfg = mode_preset("B")
        theta0 = np.array([0.5, -0.25, 0.125, 0.75])
        theta_new, v_ode, nfe, status = ode_propose(
            quadratic_problem(4), ParamVector(theta0), cfg)
        assert status is OdeStatus.SUCCESS
        span = cfg.adam.lr * cfg.tau
        assert np.allclose(theta_new.data, theta0 * math.exp(-span), atol=1e-6)
        # v_ode = theta0 (1 - e^{-span}) / lr, about tau/2... first order: 0.5 theta0
        assert np.allclose(v_ode, 0.5 * theta0, rtol=1e-3)

    def test_descent_on_random_quadratics(self):
        cfg = mode_preset("B")
        slack = 10.0 * (cfg.ode.rtol + cfg.ode.atol)
        rng = Rng(31)
        problem = quadratic_problem(6, scale=3.0)
        for _ in range(25):
            theta = ParamVector(rng.normal(6, std=2.0))
            theta_new, _, _, status = ode_propose(problem, theta, cfg)
            assert status is OdeStatus.SUCCESS
            assert problem.loss_grad(theta_new)[0] <= problem.loss_grad(theta)[0] + slack


class TestFlowAdamStep:
    def test_adam_equivalence_when_disabled(self):
        problem = quadratic_problem(5, scale=2.0)
        theta_a = ParamVector(np.linspace(-1.0, 1.0, 5))
        theta_f = theta_a.copy()
        adam = Adam(AdamConfig(), dim=5)
        hybrid = FlowAdam(with_overrides(mode_preset("B"), t_warmup=math.inf), dim=5)
        for _ in range(200):
            theta_a, _ = adam.step(problem, theta_a)
            theta_f, ev = hybrid.step(problem, theta_f)
            assert not ev.triggered
            assert np.array_equal(theta_a.data, theta_f.data)

    def test_grad_eval_accounting_per_step(self):
        problem = quadratic_problem(5, scale=2.0)
        hybrid = FlowAdam(mode_preset("B"), dim=5)
        theta = ParamVector(np.full(5, 0.8))
        seen_triggered = seen_plain = False
        for _ in range(60):
            theta, ev = hybrid.step(problem, theta)
            if ev.triggered and not ev.fallback:
                assert ev.grad_evals == 1 + ev.nfe
                assert ev.nfe > 0
                seen_triggered = True
            elif not ev.triggered:
                assert ev.grad_evals == 1
                assert ev.nfe == 0
                seen_plain = True
        assert seen_triggered and seen_plain
        st = hybrid.state
        assert st.t == 60
        assert st.step_count == 60 - st.trigger_count

    def test_step_count_frozen_on_trigger_emas_still_update(self):
        problem = quadratic_problem(3, scale=2.0)
        hybrid = FlowAdam(mode_preset("B"), dim=3)
        theta = ParamVector(np.full(3, 0.9))
        for _ in range(40):
            ema_before = hybrid.state.g_bar
            count_before = hybrid.state.step_count
            theta, ev = hybrid.step(problem, theta)
            assert hybrid.state.g_bar != ema_before  # EMAs fold in every step
            if ev.triggered and not ev.fallback:
                assert hybrid.state.step_count == count_before

    def test_trigger_records_nfe_totals(self):
        problem = quadratic_problem(3, scale=2.0)
        hybrid = FlowAdam(mode_preset("B"), dim=3)
        theta = ParamVector(np.full(3, 0.9))
        total = 0
        for _ in range(50):
            theta, ev = hybrid.step(problem, theta)
            total += ev.nfe
        assert hybrid.state.total_nfe == total
        assert hybrid.state.trigger_count >= 1
