import math

import numpy as np
import pytest

from impactbeam.model import (BeamGeometry, ModelParams, Rescaling,
                              estimate_alpha, estimate_natural_frequency,
                              estimate_tip_stiffness, forcing_from_reported,
                              jacobian_params, jacobian_state,
                              rescale_forcing, rescaling_from_geometry,
                              restoring_force, restoring_force_is_monotone,
                              restoring_force_slope, rhs_piecewise,
                              rhs_smooth, smoothing_monotone_threshold,
                              switching_h)


@pytest.fixture
def geometry():
    return BeamGeometry(modulus=2e11, area_moment=2.08e-12,
                        cross_section=2.5e-5, density=8e3,
                        lumped_mass=0.2116, length=0.161,
                        stop_position=0.071, mass_position=0.1275, gap=1e-3)


class TestSwitchingFunction:
    def test_zero_displacement(self):
        for p in (0.7, 10.0, 100.0, 1e4):
            assert switching_h(0.0, p) == 1.0

    def test_half_value_at_stop_exactly(self):
        for p in (0.5, 1.0, 12.6, 100.0, 1000.0):
            assert switching_h(1.0, p) == 0.5
            assert switching_h(-1.0, p) == 0.5

    def test_sharp_decay_reference_value(self):
        # direct high-precision evaluation of 1 / (1 + 1.44^100)
        assert switching_h(1.2, 100.0) == pytest.approx(1.4579773946541082e-16,
                                                        rel=1e-12)

    def test_even_and_bounded(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-5.0, 5.0, 300)
        for p in (2.0, 31.6, 316.0):
            h = switching_h(x, p)
            # extreme arguments may saturate cleanly to 0 by design
            assert np.all(h >= 0.0) and np.all(h <= 1.0)
            assert np.allclose(h, switching_h(-x, p), rtol=0, atol=0)
        x = rng.uniform(-2.0, 2.0, 300)
        assert np.all(switching_h(x, 100.0) > 0.0)

    def test_strictly_decreasing_in_magnitude(self):
        x = np.linspace(1e-3, 3.0, 500)
        for p in (1.0, 12.6, 100.0):
            h = switching_h(x, p)
            assert np.all(np.diff(h) < 0.0)

    def test_overflow_saturates_finite(self):
        h = switching_h(np.array([3.0, 50.0, 1e6]), 1e3)
        assert np.all(np.isfinite(h))
        assert h[-1] == 0.0

    def test_rejects_bad_exponent(self):
        with pytest.raises(ValueError):
            switching_h(0.5, 0.0)


class TestVectorFields:
    def test_equilibrium_of_unforced_phase(self):
        pr = ModelParams(forcing=0.2, omega=1.0)
        t_quarter = math.pi / 2.0   # cos(omega t) = 0
        assert np.allclose(rhs_smooth([0.0, 0.0], t_quarter, pr), 0.0,
                           atol=1e-15)

    def test_pure_forcing_at_origin(self):
        pr = ModelParams(forcing=0.2, omega=1.0, nu=0.0)
        assert np.allclose(rhs_smooth([0.0, 0.0], 0.0, pr), [0.0, 0.2])

    def test_deep_contact_matches_piecewise_formula(self):
        pr = ModelParams(forcing=0.0, xi=0.03, alpha=5.9, p=100.0,
                         k_sign=100.0)
        g = rhs_smooth([1.5, 0.0], 0.0, pr)
        assert g[1] == pytest.approx(-(1 + 5.9) * 1.5 + 5.9, abs=1e-12)

    def test_piecewise_free_flight(self):
        pr = ModelParams(forcing=0.0)
        assert np.allclose(rhs_piecewise([0.5, 0.0], 0.0, pr), [0.0, -0.5])

    def test_piecewise_tie_goes_to_contact_and_is_continuous(self):
        pr = ModelParams(forcing=0.0, alpha=5.9)
        g = rhs_piecewise([1.0, 0.0], 0.0, pr)
        # contact branch at the stop: -(1 + alpha) + alpha = -1
        assert g[1] == pytest.approx(-1.0, abs=1e-14)

    def test_pointwise_limit_of_smoothing(self):
        rng = np.random.default_rng(7)
        pr = ModelParams(forcing=0.2, omega=1.3, nu=1.0, p=1e4)
        worst = 0.0
        for _ in range(400):
            x = rng.uniform(-3.0, 3.0, 2)
            if min(abs(abs(x[0]) - 1.0), 1.0) < 0.05:
                continue
            t = rng.uniform(0.0, pr.period)
            err = np.max(np.abs(rhs_smooth(x, t, pr)
                                - rhs_piecewise(x, t, pr)))
            worst = max(worst, err)
        assert worst < 1e-9

    def test_odd_forcing_symmetry(self):
        rng = np.random.default_rng(11)
        for pr in (ModelParams(), ModelParams(nu=1.0, omega=0.77, p=12.6)):
            T = pr.period
            for _ in range(200):
                x = rng.uniform(-3.0, 3.0, 2)
                t = rng.uniform(0.0, T)
                lhs = rhs_smooth(-x, t + T / 2.0, pr)
                rhs = rhs_smooth(x, t, pr)
                assert np.max(np.abs(lhs + rhs)) < 1e-12


class TestJacobians:
    def test_free_flight_jacobian_at_origin(self):
        pr = ModelParams(xi=0.03, p=2.0)
        J = jacobian_state([0.0, 0.0], 0.3, pr)
        assert np.allclose(J, [[0.0, 1.0], [-1.0, -0.06]], atol=1e-14)

    def test_contact_saturation(self):
        pr = ModelParams(xi=0.03, beta=0.885, alpha=5.9, p=100.0)
        J = jacobian_state([2.0, 0.0], 0.1, pr)
        expected = [[0.0, 1.0],
                    [-(1 + pr.alpha), -2 * pr.xi * (1 + pr.beta)]]
        assert np.allclose(J, expected, atol=1e-12)

    def test_state_jacobian_against_finite_differences(self):
        rng = np.random.default_rng(5)
        pr = ModelParams(nu=1.0, forcing=0.2, omega=1.3, p=31.0)
        T = pr.period
        for _ in range(1000):
            x = rng.uniform(-3.0, 3.0, 2)
            t = rng.uniform(0.0, T)
            J = jacobian_state(x, t, pr)
            scale = max(1.0, float(np.max(np.abs(J))))
            for c in range(2):
                dx = np.zeros(2)
                dx[c] = 1e-6
                fd = (rhs_smooth(x + dx, t, pr)
                      - rhs_smooth(x - dx, t, pr)) / 2e-6
                assert np.max(np.abs(fd - J[:, c])) / scale < 1e-6

    @pytest.mark.parametrize("which", ["xi", "beta", "alpha", "nu",
                                       "forcing", "omega", "p"])
    def test_parameter_jacobians_against_finite_differences(self, which):
        rng = np.random.default_rng(6)
        pr = ModelParams(nu=1.0, forcing=0.2, omega=1.3, p=31.0)
        for _ in range(150):
            x = rng.uniform(-3.0, 3.0, 2)
            t = rng.uniform(0.0, pr.period)
            d = jacobian_params(x, t, pr, which)
            value = getattr(pr, which)
            eps = 1e-6 * max(1.0, abs(value))
            fd = (rhs_smooth(x, t, pr.with_value(which, value + eps))
                  - rhs_smooth(x, t, pr.with_value(which, value - eps))) \
                / (2 * eps)
            scale = max(1.0, float(np.max(np.abs(d))))
            assert np.max(np.abs(fd - d)) / scale < 1e-6

    def test_forcing_derivative_simple_case(self):
        pr = ModelParams(omega=1.0, nu=0.0)
        d = jacobian_params([0.0, 0.0], 0.0, pr, "forcing")
        assert np.allclose(d, [0.0, 1.0], atol=1e-14)

    def test_alpha_derivative_in_deep_contact(self):
        pr = ModelParams(alpha=5.9, p=400.0, forcing=0.0)
        d = jacobian_params([1.5, 0.0], 0.0, pr, "alpha")
        assert d[1] == pytest.approx(-1.5 + math.tanh(150.0), abs=1e-12)

    def test_unsupported_selector(self):
        with pytest.raises(ValueError):
            jacobian_params([0.0, 0.0], 0.0, ModelParams(), "k_sign")


class TestRestoringForce:
    def test_piecewise_continuity_at_stop(self):
        pr = ModelParams(alpha=5.9)
        left = restoring_force(1.0 - 1e-12, pr, smoothed=False)
        right = restoring_force(1.0 + 1e-12, pr, smoothed=False)
        assert left == pytest.approx(1.0, abs=1e-10)
        assert right == pytest.approx(1.0, abs=1e-10)

    def test_piecewise_contact_value(self):
        pr = ModelParams(alpha=5.9)
        assert restoring_force(2.0, pr, smoothed=False) == \
            pytest.approx(6.9 * 2 - 5.9, abs=1e-14)

    def test_smoothed_value_at_stop(self):
        for p in (3.0, 50.0, 1000.0):
            pr = ModelParams(alpha=4.0, p=p, k_sign=100.0)
            f = restoring_force(1.0, pr)
            expected = 0.5 + 0.5 * (5.0 - 4.0 * math.tanh(100.0))
            assert f == pytest.approx(expected, abs=1e-12)
            assert f == pytest.approx(1.0, abs=1e-12)

    def test_odd(self):
        pr = ModelParams(alpha=5.9, p=20.0)
        x = np.linspace(0.0, 3.0, 100)
        assert np.allclose(restoring_force(-x, pr),
                           -restoring_force(x, pr), atol=1e-14)

    def test_slope_matches_finite_differences(self):
        pr = ModelParams(alpha=10.0, p=12.6)
        x = np.linspace(0.05, 2.5, 50)
        fd = (restoring_force(x + 1e-7, pr)
              - restoring_force(x - 1e-7, pr)) / 2e-7
        assert np.allclose(restoring_force_slope(x, pr), fd, rtol=1e-5,
                           atol=1e-5)

    def test_monotonicity_threshold_brackets_softening(self):
        for alpha in (5.9, 10.0):
            thr = smoothing_monotone_threshold(alpha)
            soft = ModelParams(alpha=alpha, p=10.0 ** (thr - 0.2))
            hard = ModelParams(alpha=alpha, p=10.0 ** (thr + 0.2))
            assert not restoring_force_is_monotone(soft)
            assert restoring_force_is_monotone(hard)

    def test_threshold_grows_with_contact_stiffness(self):
        assert smoothing_monotone_threshold(10.0) > \
            smoothing_monotone_threshold(5.9)


class TestEstimators:
    def test_alpha_for_rig_geometry(self, geometry):
        assert estimate_alpha(geometry) == pytest.approx(4.9, abs=0.1)

    def test_alpha_at_three_fifths_span(self):
        assert estimate_alpha(gamma=0.588) == pytest.approx(5.91, abs=0.02)

    def test_alpha_vanishes_toward_clamp(self):
        assert estimate_alpha(gamma=1e-6) == pytest.approx(0.0, abs=1e-5)

    def test_alpha_strictly_increasing_and_divergent(self):
        gammas = np.linspace(0.01, 0.99, 99)
        alphas = np.array([estimate_alpha(gamma=g) for g in gammas])
        assert np.all(np.diff(alphas) > 0.0)
        assert estimate_alpha(gamma=0.999) > 1e2

    def test_alpha_domain_errors(self):
        for gamma in (0.0, 1.0, 1.4, -0.2):
            with pytest.raises(ValueError):
                estimate_alpha(gamma=gamma)

    def test_free_tip_stiffness(self, geometry):
        k1 = estimate_tip_stiffness(geometry)
        expected = 3.0 * 2e11 * 2.08e-12 / 0.1275 ** 3
        assert k1 == pytest.approx(expected, rel=1e-12)
        assert k1 == pytest.approx(602.0, rel=2e-3)

    def test_contact_free_ratio_equals_alpha(self, geometry):
        k1 = estimate_tip_stiffness(geometry)
        k2 = estimate_tip_stiffness(geometry, contact=True)
        assert k2 / k1 - 1.0 == pytest.approx(estimate_alpha(geometry),
                                              rel=1e-12)

    def test_contact_stiffness_limit_toward_clamp(self, geometry):
        import dataclasses
        near_clamp = dataclasses.replace(geometry, stop_position=1e-5)
        k1 = estimate_tip_stiffness(near_clamp)
        k2 = estimate_tip_stiffness(near_clamp, contact=True)
        assert k2 == pytest.approx(k1, rel=1e-3)

    def test_natural_frequency_near_published_value(self, geometry):
        assert estimate_natural_frequency(geometry) == \
            pytest.approx(8.4, abs=0.1)

    def test_natural_frequency_closed_form(self, geometry):
        # symbolic-integration oracle for the consistent beam mass
        import sympy
        zeta = sympy.symbols("zeta")
        phi = zeta ** 2 * (3 - zeta) / 2
        phi_sq = float(sympy.integrate(phi ** 2, (zeta, 0, 1)))
        span = geometry.mass_position
        k = 3.0 * geometry.modulus * geometry.area_moment / span ** 3
        m_eff = geometry.lumped_mass + (geometry.density
                                        * geometry.cross_section
                                        * span * phi_sq)
        f = math.sqrt(k / m_eff) / (2 * math.pi)
        assert estimate_natural_frequency(geometry) == \
            pytest.approx(f, rel=1e-12)
        assert abs(f - 8.37) < 0.05

    def test_beam_mass_negligible_limit(self, geometry):
        import dataclasses
        heavy = dataclasses.replace(geometry, lumped_mass=1e6)
        span = geometry.mass_position
        k = 3.0 * geometry.modulus * geometry.area_moment / span ** 3
        expected = math.sqrt(k / 1e6) / (2 * math.pi)
        assert estimate_natural_frequency(heavy) == \
            pytest.approx(expected, rel=1e-4)

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            BeamGeometry(modulus=2e11, area_moment=2.08e-12,
                         cross_section=2.5e-5, density=8e3,
                         lumped_mass=0.2116, length=0.161,
                         stop_position=0.14, mass_position=0.1275, gap=1e-3)


class TestRescaling:
    def test_identity_when_scales_agree(self):
        resc = Rescaling(mass_force_ratio=2.0 / 3.0,
                         grazing_displacement=2e-3, base_amplitude=1e-3)
        pr = ModelParams(forcing=0.123)
        assert rescale_forcing(pr, resc) == pytest.approx(0.123, rel=1e-15)

    def test_base_amplitude_formula(self):
        resc = Rescaling(mass_force_ratio=2.0 / 3.0,
                         grazing_displacement=3e-3, base_amplitude=1.2e-3)
        assert resc.forcing_from_base_amplitude() == \
            pytest.approx((3.0 / 2.0) * 1.2e-3 / 3e-3, rel=1e-14)

    def test_round_trip(self):
        resc = Rescaling(mass_force_ratio=2.0 / 3.0,
                         grazing_displacement=3.1e-3,
                         base_amplitude=1e-3, grazing_model=2.2e-3)
        pr = ModelParams(forcing=0.2)
        i_l = rescale_forcing(pr, resc)
        back = forcing_from_reported(i_l, resc)
        assert back == pytest.approx(0.2, rel=1e-15)

    def test_geometry_construction(self):
        geo = BeamGeometry(modulus=2e11, area_moment=2.08e-12,
                           cross_section=2.5e-5, density=8e3,
                           lumped_mass=0.2116, length=0.161,
                           stop_position=0.071, mass_position=0.1275,
                           gap=0.85e-3)
        resc = rescaling_from_geometry(geo, laser_position=0.1504)
        assert 0.7 < resc.displacement_ratio < 0.9
        # the mass-point grazing displacement follows the static shape
        gamma = geo.stop_ratio
        shape = gamma ** 2 * (3 - gamma) / 2
        assert resc.grazing_model == pytest.approx(geo.gap / shape,
                                                   rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            Rescaling(grazing_displacement=0.0)


class TestParamsValidation:
    def test_negative_exponent_names_field(self):
        with pytest.raises(ValueError, match="p"):
            ModelParams(p=-1.0)

    def test_zero_frequency_rejected(self):
        with pytest.raises(ValueError, match="omega"):
            ModelParams(omega=0.0)

    def test_with_value_unknown_name(self):
        with pytest.raises(ValueError):
            ModelParams().with_value("gamma", 1.0)
