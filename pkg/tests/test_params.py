import numpy as np
import pytest

from flowflow.params import (
    NonFiniteError,
    ParamVector,
    Rng,
    Segment,
    axpby,
    gaussian_fill,
    l2_norm,
)


class TestL2Norm:
    def test_three_four_five(self):
        assert l2_norm(ParamVector([3.0, 4.0])) == pytest.approx(5.0)

    def test_zero_vector(self):
        for n in (1, 5, 100):
            assert l2_norm(ParamVector(np.zeros(n))) == 0.0

    def test_ones(self):
        # sqrt(4) by hand
        assert l2_norm(ParamVector([1.0, 1.0, 1.0, 1.0])) == pytest.approx(2.0)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            l2_norm(ParamVector([1.0, np.nan]))
        with pytest.raises(NonFiniteError):
            l2_norm(ParamVector([np.inf, 0.0]))

    def test_triangle_inequality_and_homogeneity(self):
        rng = Rng(99)
        for _ in range(50):
            x = ParamVector(rng.normal(20, std=2.0))
            y = ParamVector(rng.normal(20, std=2.0))
            s = float(rng.uniform(1)[0] * 6 - 3)
            assert l2_norm(axpby(1, x, 1, y)) <= l2_norm(x) + l2_norm(y) + 1e-12
            assert l2_norm(x.with_data(s * x.data)) == pytest.approx(abs(s) * l2_norm(x))


class TestAxpby:
    def test_identity(self):
        x = ParamVector([2.0, 0.0])
        y = ParamVector([9.0, 9.0])
        assert np.array_equal(axpby(1.0, x, 0.0, y).data, [2.0, 0.0])

    def test_midpoint(self):
        out = axpby(0.5, ParamVector([2.0, 0.0]), 0.5, ParamVector([0.0, 2.0]))
        assert np.array_equal(out.data, [1.0, 1.0])

    def test_negation(self):
        v = ParamVector([1.0, -2.0, 3.0])
        zero = ParamVector(np.zeros(3))
        assert np.array_equal(axpby(-1.0, v, 0.0, zero).data, -v.data)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            axpby(1.0, ParamVector([1.0]), 1.0, ParamVector([1.0, 2.0]))

    def test_layout_preserved(self):
        x = ParamVector.from_arrays([("U", np.ones(4)), ("V", np.zeros(2))])
        y = ParamVector(np.ones(6))
        out = axpby(2.0, x, 1.0, y)
        assert out.segments == x.segments

    def test_convex_blend_norm_bound(self):
        rng = Rng(3)
        for _ in range(100):
            x = ParamVector(rng.normal(8))
            y = ParamVector(rng.normal(8))
            g = float(rng.uniform(1)[0])
            blended = axpby(1.0 - g, x, g, y)
            assert l2_norm(blended) <= max(l2_norm(x), l2_norm(y)) + 1e-12


class TestSegments:
    def test_default_single_segment(self):
        v = ParamVector(np.arange(5.0))
        assert v.segments == (Segment("theta", 0, 5),)

    def test_from_arrays_views(self):
        v = ParamVector.from_arrays([("U", np.arange(6.0).reshape(2, 3)),
                                     ("V", np.array([9.0, 10.0]))])
        assert len(v) == 8
        assert np.array_equal(v.segment("U"), np.arange(6.0))
        assert np.array_equal(v.segment("V"), [9.0, 10.0])
        with pytest.raises(KeyError):
            v.segment("W")

    def test_bad_coverage_rejected(self):
        with pytest.raises(ValueError):
            ParamVector(np.zeros(4), [Segment("a", 0, 2)])
        with pytest.raises(ValueError):
            ParamVector(np.zeros(4), [Segment("a", 0, 2), Segment("b", 3, 1)])
        with pytest.raises(ValueError):
            ParamVector(np.zeros(4), [Segment("a", 0, 2), Segment("a", 2, 2)])

    def test_with_data_checks_length(self):
        v = ParamVector(np.zeros(3))
        with pytest.raises(ValueError):
            v.with_data(np.zeros(4))


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(123)
        b = Rng(123)
        assert np.array_equal(a.normal(1000), b.normal(1000))
        assert np.array_equal(a.uniform(100), b.uniform(100))

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).normal(100), Rng(2).normal(100))

    def test_uniform_range(self):
        u = Rng(7).uniform(10000)
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_gaussian_fill_reproducible(self):
        v1 = gaussian_fill(Rng(5), 64, mean=1.0, std=2.0)
        v2 = gaussian_fill(Rng(5), 64, mean=1.0, std=2.0)
        assert v1.data.tobytes() == v2.data.tobytes()

    def test_gaussian_fill_zero_std(self):
        v = gaussian_fill(Rng(9), 12, mean=3.5, std=0.0)
        assert np.array_equal(v.data, np.full(12, 3.5))

    def test_gaussian_fill_moments(self):
        # law of large numbers at n = 1e5
        v = gaussian_fill(Rng(1), 100_000)
        assert abs(v.data.mean()) < 0.02
        assert abs(v.data.std() - 1.0) < 0.02

    def test_gaussian_fill_validators(self):
        with pytest.raises(ValueError):
            gaussian_fill(Rng(1), 0)
        with pytest.raises(ValueError):
            gaussian_fill(Rng(1), 4, std=-1.0)

    def test_permutation_is_permutation(self):
        p = Rng(11).permutation(500)
        assert sorted(p.tolist()) == list(range(500))

    def test_derive_labels_independent(self):
        root = Rng(77)
        a = root.derive("data")
        b = root.derive("init")
        assert a.seed != b.seed
        assert Rng(77).derive("data").seed == a.seed
