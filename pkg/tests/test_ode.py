import math

import numpy as np
import pytest

from flowflow.ode import OdeConfig, OdeStatus, integrate, step_once
from flowflow.params import ParamVector


def linear_decay(y: ParamVector) -> ParamVector:
    return y.with_data(-y.data)


def zero_field(y: ParamVector) -> ParamVector:
    return y.with_data(np.zeros_like(y.data))


class TestIntegrate:
    def test_zero_field_constant_solution(self):
        y0 = ParamVector([1.5, -2.0, 0.25])
        res = integrate(zero_field, y0, 1.0)
        assert res.ok
        assert np.array_equal(res.y_end.data, y0.data)

    def test_linear_decay_analytic(self):
        # y' = -y from 1.0: endpoint is e^{-1} = 0.36787944...
        res = integrate(linear_decay, ParamVector([1.0]), 1.0)
        assert res.ok
        assert res.y_end.data[0] == pytest.approx(math.exp(-1.0), abs=1e-3)

    def test_endpoint_error_within_tolerance_band(self):
        cfg = OdeConfig()
        bound = 10.0 * (cfg.rtol + cfg.atol)
        for span in (0.1, 0.5, 1.0, 2.0):
            res = integrate(linear_decay, ParamVector([1.0]), span, cfg)
            assert res.ok
            assert abs(res.y_end.data[0] - math.exp(-span)) < bound

    def test_clipped_quadratic_flow_inside_unit_box(self):
        # |y| < 1 everywhere, so clipping never engages and the flow is exp(-t) y0
        y0 = ParamVector([0.9, -0.4, 0.1])

        def field(y):
            return y.with_data(-np.clip(y.data, -1.0, 1.0))

        res = integrate(field, y0, 0.5)
        assert res.ok
        assert np.allclose(res.y_end.data, y0.data * math.exp(-0.5), atol=1e-3)

    def test_zero_span(self):
        y0 = ParamVector([4.0, 5.0])
        res = integrate(linear_decay, y0, 0.0)
        assert res.ok
        assert res.nfe == 0
        assert np.array_equal(res.y_end.data, y0.data)

    def test_nfe_monotone_in_span(self):
        nfes = [integrate(linear_decay, ParamVector([1.0]), s).nfe
                for s in (0.1, 0.5, 1.0, 2.0)]
        assert nfes == sorted(nfes)

    def test_determinism(self):
        a = integrate(linear_decay, ParamVector([1.0, 2.0]), 1.5)
        b = integrate(linear_decay, ParamVector([1.0, 2.0]), 1.5)
        assert a.nfe == b.nfe
        assert a.status == b.status
        assert a.y_end.data.tobytes() == b.y_end.data.tobytes()

    def test_eval_budget_exceeded(self):
        cfg = OdeConfig(max_field_evals=7)
        res = integrate(linear_decay, ParamVector([1.0]), 10.0, cfg)
        assert res.status is OdeStatus.EVAL_BUDGET_EXCEEDED
        assert res.nfe <= cfg.max_field_evals + 7

    def test_non_finite_field(self):
        def bad(y):
            return y.with_data(np.full_like(y.data, np.nan))

        res = integrate(bad, ParamVector([1.0]), 1.0)
        assert res.status is OdeStatus.NON_FINITE_FIELD

    def test_step_underflow(self):
        # very stiff field plus a min_step too large to resolve it
        cfg = OdeConfig(min_step=1e-3, max_field_evals=100_000)

        def stiff(y):
            return y.with_data(-1e8 * y.data)

        res = integrate(stiff, ParamVector([1.0]), 1.0, cfg)
        assert res.status is OdeStatus.STEP_UNDERFLOW

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            integrate(linear_decay, ParamVector([1.0]), -1.0)
        with pytest.raises(ValueError):
            integrate(linear_decay, ParamVector([np.nan]), 1.0)

    def test_config_validators(self):
        with pytest.raises(ValueError):
            OdeConfig(rtol=0.0)
        with pytest.raises(ValueError):
            OdeConfig(max_field_evals=3)


class TestStepOnce:
    def test_zero_field_zero_error(self):
        y, err, nfe, _ = step_once(zero_field, ParamVector([1.0, 2.0]), 0.5, OdeConfig())
        assert err == 0.0
        assert np.array_equal(y.data, [1.0, 2.0])

    def test_fsal_eval_counts(self):
        cfg = OdeConfig()
        y = ParamVector([1.0])
        _, _, nfe_first, k_last = step_once(linear_decay, y, 0.1, cfg)
        assert nfe_first == 7
        _, _, nfe_next, _ = step_once(linear_decay, y, 0.1, cfg, k1=k_last)
        assert nfe_next == 6

    def test_error_estimate_order_five(self):
        # the embedded difference scales like h^5: halving h divides it by ~32
        cfg = OdeConfig()
        y = ParamVector([1.0])
        _, e1, _, _ = step_once(linear_decay, y, 0.2, cfg)
        _, e2, _, _ = step_once(linear_decay, y, 0.1, cfg)
        assert e1 / e2 >= 2 ** 4.5

    def test_candidate_accuracy_small_step(self):
        y, _, _, _ = step_once(linear_decay, ParamVector([1.0]), 0.05, OdeConfig())
        assert y.data[0] == pytest.approx(math.exp(-0.05), abs=1e-10)
