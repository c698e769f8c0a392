import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import wofz

from svolkit.numerics import (
    LaplaceInversionSpec,
    NonConvergence,
    NonFiniteIntegrand,
    QuadratureSpec,
    TruncationPolicy,
    UnstableInversion,
    integrate_1d,
    invert_laplace,
    norm_cdf,
    norm_pdf,
    oscillatory_integrate,
)
from oracles import (
    INNER_OSC_INTEGRAL,
    inner_osc_integrand,
    norm_cdf_independent,
    simpson_oracle,
)


class TestIntegrate1d:
    def test_exponential_tail(self):
        v, err = integrate_1d(lambda x: math.exp(-x), 0.0, math.inf)
        assert abs(v - 1.0) <= 1e-10
        assert err < 1e-8

    def test_constant(self):
        v, _ = integrate_1d(lambda x: 1.0, 0.0, 1.0)
        assert v == pytest.approx(1.0, abs=1e-14)

    def test_oscillatory_hyperbolic_integrand_vs_simpson(self):
        # frozen value cross-checked against a fresh dense-Simpson run
        fresh = simpson_oracle(inner_osc_integrand, 0.0, 6.0, 20001)
        assert fresh == pytest.approx(INNER_OSC_INTEGRAL, abs=1e-12)
        v, _ = integrate_1d(lambda x: float(inner_osc_integrand(x)), 0.0, math.inf)
        assert v == pytest.approx(INNER_OSC_INTEGRAL, abs=1e-12)

    def test_fixed_upper_bound_policy(self):
        spec = QuadratureSpec(truncation=TruncationPolicy.fixed_upper_bound(5.0))
        v, _ = integrate_1d(lambda x: math.exp(-x), 0.0, math.inf, spec)
        assert v == pytest.approx(1.0 - math.exp(-5.0), rel=1e-10)

    def test_non_finite_integrand(self):
        with pytest.raises(NonFiniteIntegrand):
            integrate_1d(lambda x: float("nan"), 0.0, 1.0)

    def test_non_convergence(self):
        spec = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-13, max_subdivisions=3)
        with pytest.raises(NonConvergence):
            integrate_1d(lambda x: math.sin(1.0 / x) / math.sqrt(x), 1e-12, 1.0, spec)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            QuadratureSpec(abs_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureSpec(max_subdivisions=0)
        with pytest.raises(ValueError):
            TruncationPolicy("fixed_upper_bound", math.inf)

    @settings(max_examples=25, deadline=None)
    @given(
        coefs_f=st.lists(st.floats(-3, 3), min_size=1, max_size=4),
        coefs_g=st.lists(st.floats(-3, 3), min_size=1, max_size=4),
        a=st.floats(-2, 2),
        b=st.floats(-2, 2),
    )
    def test_linearity(self, coefs_f, coefs_g, a, b):
        f = np.polynomial.Polynomial(coefs_f)
        g = np.polynomial.Polynomial(coefs_g)
        lhs, _ = integrate_1d(lambda x: a * f(x) + b * g(x), 0.0, 1.0)
        fa, ea = integrate_1d(f, 0.0, 1.0)
        gb, eb = integrate_1d(g, 0.0, 1.0)
        tol = 1e-9 + abs(a) * ea + abs(b) * eb
        assert abs(lhs - (a * fa + b * gb)) <= tol


class TestOscillatory:
    def test_damped_sine(self):
        v, err = oscillatory_integrate(lambda x: np.exp(-x) * np.sin(x), 1.0, 0.0)
        assert abs(v - 0.5) <= 1e-10
        assert abs(v - 0.5) <= 10 * err + 1e-13

    def test_zero_integrand(self):
        v, err = oscillatory_integrate(lambda x: 0.0 * np.asarray(x), 1.0, 0.0)
        assert v == 0.0
        assert err == 0.0

    def test_matches_adaptive_on_shared_integrand(self):
        # the hyperbolic oscillatory integrand at unit time and unit argument
        f = inner_osc_integrand
        v_osc, e_osc = oscillatory_integrate(f, math.pi, 0.0)
        v_ad, e_ad = integrate_1d(lambda x: float(f(x)), 0.0, math.inf)
        assert abs(v_osc - v_ad) <= 1e-9
        assert abs(v_osc - v_ad) <= 10 * max(e_osc, e_ad) + 1e-12

    def test_slow_alternating_tail_accelerates(self):
        # int_0^inf sin(x)/(1+x) dx = 0.6214496242358...
        spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9)
        v, _ = oscillatory_integrate(lambda x: np.sin(x) / (1.0 + x), 1.0, 0.0, spec)
        assert v == pytest.approx(0.6214496242358, abs=1e-8)

    def test_stall_raises(self):
        spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12, max_subdivisions=16)
        with pytest.raises(NonConvergence):
            oscillatory_integrate(lambda x: np.sin(x) / np.sqrt(1.0 + x), 1.0, 0.0, spec)

    def test_bad_frequency(self):
        with pytest.raises(ValueError):
            oscillatory_integrate(lambda x: np.sin(x), -1.0, 0.0)


class TestInvertLaplace:
    def test_exponential_pair(self):
        v = invert_laplace(lambda s: 1.0 / (s + 1.0), 1.0)
        assert v == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_ramp_pair(self):
        v = invert_laplace(lambda s: 1.0 / (s * s), 2.0)
        assert v == pytest.approx(2.0, abs=1e-6)

    @pytest.mark.parametrize("method,n", [("talbot", 32), ("gaver_stehfest", 16)])
    def test_pairs_both_methods(self, method, n):
        spec = LaplaceInversionSpec(method=method, n_terms=n)
        assert invert_laplace(lambda s: 1.0 / (s + 1.0), 1.0, spec) == pytest.approx(
            math.exp(-1.0), abs=1e-5
        )

    @pytest.mark.parametrize("y", np.linspace(0.1, 5.0, 12).tolist())
    def test_roundtrip_pointwise(self, y):
        assert invert_laplace(lambda s: 1.0 / (s + 1.0), y) == pytest.approx(
            math.exp(-y), abs=1e-5
        )
        assert invert_laplace(lambda s: 1.0 / (s + 1.0) ** 2, y) == pytest.approx(
            y * math.exp(-y), abs=1e-5
        )

    @pytest.mark.parametrize("y", np.linspace(0.1, 5.0, 12).tolist())
    def test_roundtrip_half_normal(self, y):
        # The half-normal transform exp(s^2/2) erfc(s/sqrt 2) is entire of
        # order 2: it grows doubly exponentially along the left part of the
        # Talbot contour (the contour integral diverges), so the real-axis
        # sampler is the right tool.  Stehfest at the largest term count
        # inside its cancellation budget converges to ~1e-3 on this pair;
        # tighter accuracy would need precision beyond double.
        spec = LaplaceInversionSpec(method="gaver_stehfest", n_terms=14)
        half_normal = lambda s: wofz(1j * s / math.sqrt(2.0))
        assert invert_laplace(half_normal, y, spec) == pytest.approx(
            math.sqrt(2.0 / math.pi) * math.exp(-0.5 * y * y), abs=2e-3
        )

    def test_scale_shift(self):
        spec = LaplaceInversionSpec(scale_shift=0.5)
        v = invert_laplace(lambda s: 1.0 / (s + 1.0), 1.5, spec)
        assert v == pytest.approx(math.exp(-1.5), abs=1e-6)

    def test_unstable_raises(self):
        with pytest.raises(UnstableInversion):
            invert_laplace(lambda s: np.exp(s * s), 30.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            LaplaceInversionSpec(method="talbot", n_terms=4)
        with pytest.raises(ValueError):
            LaplaceInversionSpec(method="gaver_stehfest", n_terms=7)
        with pytest.raises(ValueError):
            LaplaceInversionSpec(method="bromwich")
        with pytest.raises(ValueError):
            invert_laplace(lambda s: 1.0 / s, -1.0)


class TestNormal:
    def test_center(self):
        assert norm_cdf(0.0) == 0.5
        assert norm_pdf(0.0) == pytest.approx(0.3989422804014327, abs=1e-16)

    def test_quantile_against_independent_series(self):
        x = 1.959963985
        assert norm_cdf(x) == pytest.approx(norm_cdf_independent(x), abs=1e-15)
        assert norm_cdf(x) == pytest.approx(0.975, abs=1e-9)

    def test_reflection(self):
        x = np.linspace(-8.0, 8.0, 2001)
        assert np.max(np.abs(norm_cdf(-x) - (1.0 - norm_cdf(x)))) <= 1e-15

    def test_monotone_on_dense_grid(self):
        x = np.linspace(-12.0, 12.0, 1_000_001)
        c = norm_cdf(x)
        assert np.all(np.diff(c) >= 0.0)

    def test_double_precision_relative_error(self):
        for x in np.linspace(-8.0, 8.0, 41):
            ref = norm_cdf_independent(float(x))
            assert abs(float(norm_cdf(x)) - ref) <= 1e-14 * max(ref, 1e-300) + 5e-17
