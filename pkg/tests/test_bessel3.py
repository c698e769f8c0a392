import math

import numpy as np
import pytest

from svolkit.bessel3 import (
    Bes3LaplacePoint,
    bes3_asset_density,
    bes3_laplace,
    eq_a1,
    eq_a2,
    hstar,
    joint_bm_density,
    simulate_bm_quad_functionals,
)
from svolkit.model import ModelSpec, RngSpec, density_mc
from svolkit.numerics import LaplaceInversionSpec, QuadratureSpec, integrate_1d
from oracles import INV_SQRT_COSH_1, brownian_bridge_quad_mc, mc_band, zscore


class TestEqA1:
    def test_zero_laplace_variable_from_origin(self):
        assert eq_a1(1.0, 0.0, 1.0, 0.0) == pytest.approx(INV_SQRT_COSH_1, rel=1e-14)
        assert eq_a1(1.0, 0.0, 1.0, 0.0) == pytest.approx(
            1.0 / math.sqrt(math.cosh(1.0)), rel=1e-14
        )

    def test_small_rate_limit_is_gaussian_moment(self):
        # b -> 0 reduces to E exp(-c B_t^2) = (1 + 2ct)^(-1/2) from the origin
        assert eq_a1(1e-6, 1.0, 1.0, 0.0) == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-5)

    def test_monotone_probes(self):
        bs = np.linspace(0.2, 3.0, 15)
        assert np.all(np.diff(eq_a1(bs, 0.5, 1.0, 0.7)) < 0.0)
        cs = np.linspace(0.0, 3.0, 15)
        vals = np.array([eq_a1(0.8, c, 1.0, 0.7) for c in cs])
        assert np.all(np.diff(vals) < 0.0)
        xs = np.linspace(0.0, 2.5, 12)
        vals = np.array([eq_a1(0.8, 0.5, 1.0, x) for x in xs])
        assert np.all(np.diff(vals) < 0.0)

    def test_even_in_start_point(self):
        for x in (0.3, 1.1, 2.7):
            assert eq_a1(0.7, 0.4, 1.3, x) == pytest.approx(
                eq_a1(0.7, 0.4, 1.3, -x), rel=1e-14
            )

    def test_large_bt_no_overflow(self):
        v = eq_a1(5.0, 2.0, 300.0, 1.5)
        assert 0.0 <= v < 1.0

    def test_mc_cross_check(self):
        b, c, t, x = 0.8, 0.5, 1.0, 1.0
        end, quad = simulate_bm_quad_functionals(t, 200_000, 256, RngSpec(61), start=x)
        vals = np.exp(-c * end * end - 0.5 * b * b * quad)
        se = vals.std() / math.sqrt(vals.size)
        assert mc_band(vals.mean(), se, eq_a1(b, c, t, x))


class TestEqA2:
    def test_unit_limit_for_vanishing_rate(self):
        for t, x, y in [(0.5, 0.0, 1.0), (1.0, 1.0, -0.5), (2.0, -1.0, 2.0)]:
            assert eq_a2(1e-8, t, x, y) == pytest.approx(1.0, abs=1e-6)

    def test_in_unit_interval(self):
        grid = np.linspace(-2.5, 2.5, 11)
        for b in (0.3, 1.0, 2.0):
            for x in grid:
                v = eq_a2(b, 1.0, x, grid)
                assert np.all(v > 0.0) and np.all(v <= 1.0 + 1e-15)

    def test_endpoint_symmetry(self):
        # bridge reversibility: swapping the endpoints leaves the kernel fixed
        for b, t, x, y in [(0.7, 1.0, 0.3, 1.4), (1.5, 0.5, -1.0, 0.2)]:
            assert eq_a2(b, t, x, y) == pytest.approx(eq_a2(b, t, y, x), rel=1e-13)

    def test_defining_identity_against_a1(self):
        # E[e^{-c B_t^2} K(B_t)] recovers the unconditional transform
        b, c, t, x = 1.0, 0.7, 1.0, 0.5
        spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-11)
        val, _ = integrate_1d(
            lambda y: math.exp(-c * y * y)
            * eq_a2(b, t, x, y)
            * math.exp(-((y - x) ** 2) / (2 * t))
            / math.sqrt(2 * math.pi * t),
            -math.inf,
            math.inf,
            spec,
        )
        assert val == pytest.approx(eq_a1(b, c, t, x), abs=1e-8)

    def test_bridge_mc(self):
        b, t, x, y = 1.0, 1.0, 0.0, 1.0
        mean, se = brownian_bridge_quad_mc(x, y, t, b, 200_000, 256, seed=62)
        assert mc_band(mean, se, eq_a2(b, t, x, y))

    def test_bridge_mc_off_origin(self):
        b, t, x, y = 0.8, 0.5, 1.0, 0.4
        mean, se = brownian_bridge_quad_mc(x, y, t, b, 200_000, 256, seed=63)
        assert mc_band(mean, se, eq_a2(b, t, x, y))


class TestBes3Laplace:
    def test_point_validation(self):
        with pytest.raises(ValueError):
            Bes3LaplacePoint(0.0, 1.0, 1.0)

    def test_degenerate_probe_is_one(self):
        v = bes3_laplace(Bes3LaplacePoint(1e-8, 1e-8, 1.0))
        assert v == pytest.approx(1.0, abs=1e-5)

    def test_squared_norm_product_identity(self):
        # at vanishing lambda the transform factors over the three
        # independent Brownian coordinates of the squared norm
        for b, t in [(0.5, 1.0), (1.0, 0.5), (1.0, 1.0)]:
            v = bes3_laplace(Bes3LaplacePoint(1e-9, b, t))
            ref = eq_a1(b, 0.0, t, 1.0) * eq_a1(b, 0.0, t, 0.0) ** 2
            assert v == pytest.approx(ref, abs=1e-7)

    def test_exponential_martingale_point(self):
        # at lam = b the integrand is the stochastic exponential of the
        # volatility integral, a true martingale: the transform is exactly 1
        for lam in (0.25, 0.5, 1.0):
            v = bes3_laplace(Bes3LaplacePoint(lam, lam, 1.0))
            assert v == pytest.approx(1.0, abs=1e-9)

    def test_bounded_by_lower_support_bound(self):
        # int Y dZ > -(1 + 3t)/2 forces the transform below e^{lam (1+3t)/2}
        for lam in (0.25, 1.0):
            for b in (0.25, 1.0):
                for t in (0.5, 1.0):
                    v = bes3_laplace(Bes3LaplacePoint(lam, b, t))
                    assert 0.0 < v <= math.exp(lam * (1 + 3 * t) / 2) + 1e-12

    def test_monotone_in_rate_and_log_convex_in_lambda(self):
        # decreasing in b (the integrated square is positive); in lambda the
        # transform is log-convex but not monotone, because the stochastic
        # integral averages to zero and its support reaches negative values
        vals = [bes3_laplace(Bes3LaplacePoint(0.5, b, 1.0))
                for b in (0.25, 0.5, 1.0, 2.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        lams = np.linspace(0.25, 2.0, 8)
        logs = np.log([bes3_laplace(Bes3LaplacePoint(float(l), 0.5, 1.0))
                       for l in lams])
        assert np.all(np.diff(logs, 2) >= -1e-9)

    def test_mc_cross_check(self):
        lam, b, t = 0.5, 0.5, 1.0
        n = 150_000
        rng = RngSpec(64)
        w1, q1 = simulate_bm_quad_functionals(t, n, 512, RngSpec(64, 1), start=1.0)
        x2, q2 = simulate_bm_quad_functionals(t, n, 512, RngSpec(64, 2), start=0.0)
        x3, q3 = simulate_bm_quad_functionals(t, n, 512, RngSpec(64, 3), start=0.0)
        yt2 = w1 ** 2 + x2 ** 2 + x3 ** 2
        iydz = 0.5 * (yt2 - 1.0 - 3.0 * t)
        vals = np.exp(-lam * iydz - 0.5 * b * b * (q1 + q2 + q3))
        se = vals.std() / math.sqrt(n)
        assert mc_band(vals.mean(), se, bes3_laplace(Bes3LaplacePoint(lam, b, t)))


class TestJointDensity:
    def test_hstar_even_in_endpoint(self):
        for z in (0.4, 1.3):
            assert hstar(1.0, 0.7, z) == pytest.approx(hstar(1.0, 0.7, -z), rel=1e-14)

    def test_laplace_roundtrip(self):
        t = 1.0
        spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-8, max_subdivisions=400)
        for z in (0.0, 1.0):
            for c in (0.5, 1.0, 2.0):
                total = 0.0
                for a, b in ((1e-9, 0.05), (0.05, 0.5), (0.5, 3.0), (3.0, 30.0)):
                    total += integrate_1d(
                        lambda y: math.exp(-c * y) * joint_bm_density(z, y, t),
                        a, b, spec)[0]
                assert total == pytest.approx(hstar(t, c, z), abs=1e-4)

    def test_marginal_recovers_gaussian(self):
        t = 1.0
        spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-8, max_subdivisions=400)
        for z in (0.0, 1.0):
            total = 0.0
            for a, b in ((1e-9, 0.05), (0.05, 0.5), (0.5, 3.0), (3.0, 30.0), (30.0, 300.0)):
                total += integrate_1d(lambda y: joint_bm_density(z, y, t), a, b, spec)[0]
            ref = math.exp(-z * z / (2 * t)) / math.sqrt(2 * math.pi * t)
            assert total == pytest.approx(ref, abs=1e-3)

    def test_nonnegative_on_grid(self):
        # far tails sit below the inversion noise floor; allow that much
        for z in (-1.0, 0.0, 0.7):
            for y in np.geomspace(0.02, 10.0, 12):
                assert joint_bm_density(z, float(y), 1.0) >= -1e-10

    def test_gaver_stehfest_cross_check_interior(self):
        gs = LaplaceInversionSpec(method="gaver_stehfest", n_terms=14)
        v_t = joint_bm_density(0.0, 0.5, 1.0)
        v_g = joint_bm_density(0.0, 0.5, 1.0, gs)
        assert v_g == pytest.approx(v_t, rel=2e-3)

    def test_kde_box_against_simulation(self):
        # mass of (B_1, int B^2 du) in a small box around (0, 0.5) vs the
        # inverted density at the box center
        t, z0, y0, dz, dy = 1.0, 0.0, 0.5, 0.05, 0.05
        n = 4_000_000
        hits = 0
        rng = RngSpec(65)
        batch = 65536
        done = 0
        i = 0
        while done < n:
            size = min(batch, n - done)
            end, quad = simulate_bm_quad_functionals(t, size, 256, RngSpec(65, i), start=0.0)
            hits += int(np.count_nonzero(
                (np.abs(end - z0) < dz) & (np.abs(quad - y0) < dy)))
            done += size
            i += 1
        p = hits / n
        se = math.sqrt(p * (1 - p) / n)
        box_avg = p / (4 * dz * dy)
        se_avg = se / (4 * dz * dy)
        assert mc_band(box_avg, se_avg, joint_bm_density(z0, y0, t))


class TestAssetDensity:
    def test_requires_bessel3(self):
        with pytest.raises(ValueError):
            bes3_asset_density(ModelSpec.constant(0.2), 0.5, 1.0)

    def test_matches_mixing_mc(self):
        m = ModelSpec.bessel3(x0=1.0, rho=-0.3, horizon=1.0)
        r = [0.7, 1.0, 1.4]
        dens, se = bes3_asset_density(m, 0.5, r, n_triples=120_000,
                                      n_steps=256, rng=RngSpec(66))
        ref = density_mc(m, 0.5, r, 120_000, 256, RngSpec(67))
        for i in range(3):
            combined = math.hypot(se[i], ref[i][1])
            assert abs(dens[i] - ref[i][0]) <= 3 * combined

    def test_normalization(self):
        m = ModelSpec.bessel3(x0=1.0, rho=-0.3, horizon=1.0)
        r = np.geomspace(5e-3, 30.0, 300)
        dens, _ = bes3_asset_density(m, 0.5, r, n_triples=150_000,
                                     n_steps=256, rng=RngSpec(68))
        total = float(np.trapezoid(dens, r))
        assert total == pytest.approx(1.0, abs=2e-3)

    def test_rho_zero_slice_drops_endpoint_term(self):
        # at rho = 0 the kernel no longer reads the squared endpoints, so an
        # estimator built without them agrees within Monte Carlo error
        m = ModelSpec.bessel3(x0=1.0, rho=0.0, horizon=1.0)
        t, r = 0.5, [0.8, 1.0, 1.25]
        dens, se = bes3_asset_density(m, t, r, n_triples=100_000,
                                      n_steps=256, rng=RngSpec(69))
        n = 100_000
        _, q1 = simulate_bm_quad_functionals(t, n, 256, RngSpec(70, 1), start=1.0)
        _, q2 = simulate_bm_quad_functionals(t, n, 256, RngSpec(70, 2), start=0.0)
        _, q3 = simulate_bm_quad_functionals(t, n, 256, RngSpec(70, 3), start=0.0)
        iy2 = q1 + q2 + q3
        for i, rv in enumerate(r):
            a = (math.log(rv) + 0.5 * iy2) / np.sqrt(iy2)
            k = np.exp(-0.5 * a * a) / (math.sqrt(2 * math.pi) * rv * np.sqrt(iy2))
            se_k = k.std() / math.sqrt(n)
            assert abs(k.mean() - dens[i]) <= 3 * math.hypot(se_k, se[i])

    def test_scalar_r(self):
        m = ModelSpec.bessel3(x0=1.0, rho=-0.3, horizon=1.0)
        d, s = bes3_asset_density(m, 0.5, 1.0, n_triples=20_000, n_steps=128,
                                  rng=RngSpec(71))
        assert isinstance(d, float) and isinstance(s, float) and d > 0.0
