import math

import numpy as np
import pytest

from impactbeam import ivp
from impactbeam.bvp import (Mesh, NewtonError, PeriodicOrbit, adapted_mesh,
                            amplitude_measure, collocation_defect,
                            linear_response_orbit, orbit_multipliers,
                            solve_adapted, solve_periodic)
from impactbeam.model import ModelParams


def linear_amplitude(params):
    om = params.omega
    return params.forcing * om ** 2 / math.sqrt(
        (1 - om ** 2) ** 2 + (2 * params.xi * om) ** 2)


@pytest.fixture(scope="module")
def impacting_orbit():
    # a moderately impacting orbit away from folds (upper-branch regime)
    pr = ModelParams(forcing=0.2, omega=1.3, p=100.0)
    traj = ivp.integrate(np.array([0.0, 0.0]), (0.0, 120 * pr.period), pr,
                         ivp.IvpSettings(rel_tol=1e-9, abs_tol=1e-11))
    return solve_periodic(traj, pr, mesh=Mesh.uniform(100))


class TestMesh:
    def test_uniform_properties(self):
        mesh = Mesh.uniform(10, degree=4)
        assert mesh.n_intervals == 10
        assert mesh.n_points == 41
        assert np.allclose(mesh.widths, 0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            Mesh(np.array([0.0, 0.5, 0.4, 1.0]))
        with pytest.raises(ValueError):
            Mesh(np.array([0.0, 1.0]), degree=2)


class TestSolvePeriodic:
    def test_linear_regime_amplitude(self):
        pr = ModelParams(forcing=0.01, p=100.0, omega=0.9, alpha=5.9)
        orbit = solve_periodic(linear_response_orbit(pr, Mesh.uniform(100)),
                               pr)
        assert orbit.amplitude == pytest.approx(linear_amplitude(pr),
                                                rel=1e-8)

    def test_trivial_orbit_without_forcing(self):
        pr = ModelParams(forcing=0.0, p=100.0)
        orbit = solve_periodic(linear_response_orbit(pr, Mesh.uniform(60)),
                               pr)
        assert orbit.amplitude == 0.0
        assert np.max(np.abs(orbit.values)) < 1e-12

    def test_periodicity_residual(self, impacting_orbit):
        gap = impacting_orbit.values[:, 0] - impacting_orbit.values[:, -1]
        assert np.max(np.abs(gap)) < 1e-10

    def test_reintegration_closure(self, impacting_orbit):
        pr = impacting_orbit.params
        traj = ivp.integrate(impacting_orbit.values[:, 0],
                             (0.0, pr.period), pr, ivp.IvpSettings.strict())
        assert np.max(np.abs(traj.end_state
                             - impacting_orbit.values[:, 0])) < 1e-6

    def test_multipliers_match_flow_monodromy(self, impacting_orbit):
        mults, _ = orbit_multipliers(impacting_orbit)
        M = ivp.monodromy(impacting_orbit.values[:, 0],
                          impacting_orbit.params)
        flow = ivp.floquet_multipliers(M)
        assert np.max(np.abs(np.sort_complex(mults)
                             - np.sort_complex(flow))) < 1e-5

    def test_orbit_symmetry_under_half_period_flip(self, impacting_orbit):
        taus = np.linspace(0.0, 0.5, 200, endpoint=False)
        ahead = impacting_orbit.evaluate(taus + 0.5)
        here = impacting_orbit.evaluate(taus)
        assert np.max(np.abs(ahead + here)) < 1e-6

    def test_rejects_guess_outside_newton_basin(self):
        pr = ModelParams(forcing=0.2, omega=1.3, p=100.0)
        mesh = Mesh.uniform(40)
        bad = PeriodicOrbit(mesh, 5.0 * np.cos(
            2 * math.pi * np.vstack([mesh.rep_times(),
                                     mesh.rep_times() + 0.7])), pr)
        with pytest.raises(NewtonError):
            solve_periodic(bad, pr, max_iter=6)

    def test_trajectory_guess_must_cover_period(self):
        pr = ModelParams(forcing=0.1, omega=1.0, p=50.0)
        traj = ivp.integrate(np.zeros(2), (0.0, 0.5 * pr.period), pr)
        with pytest.raises(ValueError):
            solve_periodic(traj, pr, mesh=Mesh.uniform(40))


class TestAmplitude:
    def test_linear_orbit_amplitude(self):
        pr = ModelParams(forcing=0.01, p=1000.0, omega=1.2)
        orbit = solve_periodic(linear_response_orbit(pr, Mesh.uniform(80)),
                               pr)
        assert amplitude_measure(orbit) == pytest.approx(
            linear_amplitude(pr), rel=1e-8)

    def test_symmetric_extremes(self, impacting_orbit):
        taus, states = impacting_orbit.states_fine(33)
        assert np.max(states[0]) == pytest.approx(-np.min(states[0]),
                                                  abs=1e-8)

    def test_refines_beyond_grid_maximum(self):
        # amplitude search must beat the sampling grid
        pr = ModelParams(forcing=0.01, p=1000.0, omega=1.2)
        orbit = solve_periodic(linear_response_orbit(pr, Mesh.uniform(16)),
                               pr)
        taus, states = orbit.states_fine(3)
        grid_max = np.max(np.abs(states[0]))
        assert amplitude_measure(orbit) >= grid_max


class TestMeshRefinement:
    def test_amplitude_stable_under_refinement(self, impacting_orbit):
        pr = impacting_orbit.params
        base = solve_adapted(impacting_orbit, pr, mesh=Mesh.uniform(120))
        finer = solve_periodic(base, pr,
                               mesh=adapted_mesh(base, 240))
        assert abs(base.amplitude - finer.amplitude) < 1e-6

    def test_adapted_mesh_reduces_defect(self, impacting_orbit):
        pr = impacting_orbit.params
        _, defect0 = collocation_defect(impacting_orbit)
        refined = solve_periodic(impacting_orbit, pr,
                                 mesh=adapted_mesh(impacting_orbit))
        _, defect1 = collocation_defect(refined)
        assert np.max(defect1) < 0.5 * np.max(defect0)

    def test_on_mesh_reproduces_states(self, impacting_orbit):
        other = impacting_orbit.on_mesh(Mesh.uniform(173))
        taus = np.linspace(0.0, 1.0, 400)
        assert np.max(np.abs(other.evaluate(taus)
                             - impacting_orbit.evaluate(taus))) < 1e-6
