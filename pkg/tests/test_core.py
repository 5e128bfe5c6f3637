import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bessel_i0_series
from torograph.core import (
    AngleMatrix,
    bessel_i0,
    bessel_ratio,
    circular_mean,
    circular_summary,
    complex_moments,
    inverse_stereographic,
    log_bessel_i0,
    moment_covariance,
    stereographic,
    wrap_angle,
)
from torograph.errors import InvalidArgumentError, SingularityError, UndefinedDirectionError
from torograph.wrapped_normal import WnParams, wn_sample

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestWrapAngle:
    def test_examples(self):
        assert wrap_angle(0.0) == 0.0
        assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == np.pi

    def test_range_on_array(self):
        x = np.linspace(-50, 50, 10001)
        w = wrap_angle(x)
        assert np.all(w > -np.pi) and np.all(w <= np.pi)
        np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            wrap_angle(np.nan)
        with pytest.raises(InvalidArgumentError):
            wrap_angle([0.0, np.inf])

    @given(st.floats(-np.pi, np.pi, allow_nan=False), st.integers(-10**6, 10**6))
    def test_periodicity(self, x, k):
        a, b = wrap_angle(x), wrap_angle(x + 2 * np.pi * k)
        # 2*pi*k carries an absolute rounding error of order k * eps
        d = abs(a - b)
        assert min(d, 2 * np.pi - d) < 1e-8

    @given(finite)
    def test_codomain(self, x):
        w = wrap_angle(x)
        assert -np.pi < w <= np.pi


class TestAngleMatrix:
    def test_wraps_and_freezes(self):
        m = AngleMatrix([[7.0, -np.pi]])
        assert m.values[0, 0] == pytest.approx(7.0 - 2 * np.pi)
        assert m.values[0, 1] == np.pi
        assert m.columns == ("theta1", "theta2")
        with pytest.raises(ValueError):
            m.values[0, 0] = 0.0

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            AngleMatrix(np.zeros((2, 2)), ("a", "a"))
        with pytest.raises(InvalidArgumentError):
            AngleMatrix(np.zeros((2, 2)), ("a",))
        with pytest.raises(InvalidArgumentError):
            AngleMatrix(np.zeros((0, 2)))


class TestCircularMean:
    def test_examples(self):
        assert circular_mean([np.pi / 2, np.pi / 2]) == pytest.approx(np.pi / 2)
        assert circular_mean([-np.pi + 0.1, np.pi - 0.1]) == pytest.approx(np.pi)
        assert circular_mean([0.0, np.pi / 2]) == pytest.approx(np.pi / 4)

    def test_antipodal_is_undefined(self):
        with pytest.raises(UndefinedDirectionError):
            circular_mean([0.0, np.pi])

    @settings(max_examples=50)
    @given(st.lists(st.floats(-np.pi, np.pi), min_size=1, max_size=20), st.floats(-10, 10))
    def test_rotation_equivariance(self, xs, delta):
        x = np.array(xs)
        if np.hypot(np.cos(x).mean(), np.sin(x).mean()) < 1e-3:
            return
        lhs = circular_mean(x + delta)
        rhs = wrap_angle(circular_mean(x) + delta)
        d = abs(lhs - rhs)
        assert min(d, 2 * np.pi - d) < 1e-8


class TestCircularSummary:
    def test_constant_column(self):
        s = circular_summary(np.full((5, 1), 1.3))
        assert s.mean_resultant_length[0] == pytest.approx(1.0)
        assert s.mardia_variance[0] == pytest.approx(0.0, abs=1e-12)
        assert s.mean_direction[0] == pytest.approx(1.3)

    def test_mardia_recovers_wn_variance(self):
        data, _ = wn_sample(WnParams([0.0], [[0.25]]), 100_000, seed=11)
        s = circular_summary(data)
        assert abs(s.mardia_variance[0] - 0.25) < 0.02

    def test_identical_columns(self):
        rng = np.random.default_rng(0)
        x = rng.vonmises(0.3, 2.0, size=200)
        s = circular_summary(np.column_stack([x, x]))
        for field in ("mean_direction", "mean_resultant_length", "mardia_variance"):
            v = getattr(s, field)
            assert v[0] == v[1]

    def test_rotation_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.vonmises(0.0, 1.5, size=(300, 2))
        a = circular_summary(x).mardia_variance
        b = circular_summary(x + 2.1).mardia_variance
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_definitional_relation(self):
        rng = np.random.default_rng(2)
        s = circular_summary(rng.vonmises(0.0, 3.0, size=(100, 3)))
        np.testing.assert_allclose(s.mardia_variance, -2 * np.log(s.mean_resultant_length))
        np.testing.assert_allclose(s.circular_variance, 1 - s.mean_resultant_length)

    def test_needs_two_rows(self):
        with pytest.raises(InvalidArgumentError):
            circular_summary(np.zeros((1, 2)))

    def test_zero_resultant_column(self):
        with pytest.raises(UndefinedDirectionError, match="b"):
            circular_summary(AngleMatrix([[0.0, 0.0], [0.1, np.pi]], ("a", "b")))


class TestStereographic:
    def test_examples(self):
        assert stereographic(0.0) == 0.0
        assert stereographic(np.pi / 2) == pytest.approx(1.0)
        assert stereographic(inverse_stereographic(-3.7)) == pytest.approx(-3.7, abs=1e-12)

    def test_singular_point(self):
        with pytest.raises(SingularityError):
            stereographic(np.pi)

    def test_round_trip_grid(self):
        t = np.linspace(-np.pi + 1e-6, np.pi - 1e-6, 10_000)
        np.testing.assert_allclose(inverse_stereographic(stereographic(t)), t, atol=1e-12, rtol=0)


class TestBessel:
    def test_examples(self):
        assert bessel_i0(0.0) == 1.0
        assert bessel_i0(1.0) == pytest.approx(bessel_i0_series(1.0), rel=1e-12)
        assert bessel_i0(10.0) == pytest.approx(bessel_i0_series(10.0), rel=1e-12)
        assert bessel_i0(1.0) == pytest.approx(1.26606587775, abs=1e-11)
        assert bessel_i0(10.0) == pytest.approx(2815.716628, abs=1e-6)

    @pytest.mark.parametrize("kappa", [0.1, 0.5, 2.0, 7.5, 15.0, 30.0, 100.0, 300.0, 700.0])
    def test_series_oracle(self, kappa):
        assert bessel_i0(kappa) == pytest.approx(bessel_i0_series(kappa), rel=1e-12)

    @pytest.mark.parametrize("kappa", [0.1, 1.0, 5.0, 20.0])
    def test_quadrature_oracle(self, kappa):
        m = 2048
        t = 2 * np.pi * np.arange(m) / m
        quad = np.mean(np.exp(kappa * np.cos(t)))
        assert bessel_i0(kappa) == pytest.approx(quad, rel=1e-10)

    def test_log_scale_beyond_overflow(self):
        assert np.isfinite(log_bessel_i0(1e5))
        # asymptotic expansion: log I0(k) ~ k - log(2 pi k) / 2 + log(1 + 1/(8k))
        k = 1e5
        approx = k - 0.5 * np.log(2 * np.pi * k) + np.log1p(1 / (8 * k))
        assert log_bessel_i0(k) == pytest.approx(approx, rel=1e-12)
        assert log_bessel_i0(3.0) == pytest.approx(np.log(bessel_i0_series(3.0)), rel=1e-13)

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            bessel_i0(-1.0)
        with pytest.raises(InvalidArgumentError):
            log_bessel_i0(-0.1)

    def test_ratio_limits(self):
        assert bessel_ratio(1e-9) == pytest.approx(5e-10)
        assert bessel_ratio(1e6) == pytest.approx(1 - 1 / 2e6, rel=1e-9)


class TestComplexMoments:
    def test_independent_columns(self):
        rng = np.random.default_rng(3)
        data = rng.vonmises(0.0, 2.0, size=(50_000, 2))
        assert abs(complex_moments(data, 0, 1).covariance_probe) < 0.02

    def test_wn_covariance_probe(self):
        sigma = np.array([[0.2, 0.1], [0.1, 0.2]])
        data, _ = wn_sample(WnParams([0.0, 0.0], sigma), 100_000, seed=5)
        assert abs(complex_moments(data, 0, 1).covariance_probe - 0.1) < 0.02
        np.testing.assert_allclose(moment_covariance(data), sigma, atol=0.02)

    def test_same_index_rejected(self):
        with pytest.raises(InvalidArgumentError):
            complex_moments(np.zeros((3, 2)), 1, 1)
