import math

import numpy as np
import pytest

from impactbeam import ivp
from impactbeam.bvp import Mesh, orbit_multipliers, solve_periodic
from impactbeam.continuation import (ContinuationError, StepControls,
                                     coexisting_orbits, continue_branch,
                                     continue_fold_curve, frequency_response,
                                     locate_fold)
from impactbeam.model import ModelParams


def linear_amplitude(params, omega):
    return params.forcing * omega ** 2 / math.sqrt(
        (1 - omega ** 2) ** 2 + (2 * params.xi * omega) ** 2)


class TestLinearSweep:
    def test_branch_matches_analytic_response(self):
        pr = ModelParams(forcing=0.01, p=1e3, alpha=5.9, nu=0.0)
        branch = frequency_response(pr, (0.4, 1.6),
                                    step=StepControls(ds=0.02, ds_max=0.1))
        assert not branch.folds
        assert branch.message == "range boundary"
        worst = 0.0
        for pt in branch.points:
            exact = linear_amplitude(pr, pt.parameter)
            worst = max(worst, abs(pt.amplitude - exact) / exact)
        assert worst < 1e-6

    def test_endpoints_hit_range_exactly(self):
        pr = ModelParams(forcing=0.01, p=100.0)
        branch = frequency_response(pr, (0.5, 1.5))
        assert branch.points[0].parameter == pytest.approx(0.5, abs=1e-12)
        assert branch.points[-1].parameter == pytest.approx(1.5, abs=1e-9)

    def test_start_outside_range_rejected(self):
        pr = ModelParams(forcing=0.01, omega=2.5, p=100.0)
        from impactbeam.bvp import linear_response_orbit
        orbit = solve_periodic(
            linear_response_orbit(pr, Mesh.uniform(50)), pr)
        with pytest.raises(ContinuationError):
            continue_branch(orbit, "omega", (0.5, 1.5))


class TestModerateImpactTopology:
    def test_exactly_two_folds(self, fig4_branch):
        assert len(fig4_branch.folds) == 2

    def test_fold_parameters_ordered_and_bracketing(self, fig4_branch):
        oms = sorted(f.parameter for f in fig4_branch.folds)
        assert 1.0 < oms[0] < 1.3        # grazing-side fold
        assert 2.0 < oms[1] < 2.6        # resonance-tip fold

    def test_fold_multiplier_at_unity(self, fig4_branch):
        for fold in fig4_branch.folds:
            mults, _ = orbit_multipliers(fold.orbit)
            assert np.min(np.abs(mults - 1.0)) < 1e-6

    def test_stability_changes_only_at_folds(self, fig4_branch):
        st = fig4_branch.stability
        changes = np.where(np.diff(st) != 0)[0]
        fold_params = fig4_branch.fold_parameters()
        for i in changes:
            om = fig4_branch.points[i].parameter
            assert np.min(np.abs(fold_params - om)) < 5e-3

    def test_hysteresis_coexistence(self, fig4_branch):
        oms = sorted(f.parameter for f in fig4_branch.folds)
        omega = 0.5 * (oms[0] + oms[1])
        orbits = coexisting_orbits(fig4_branch, omega)
        assert len(orbits) == 3
        stable = [o.stable for o in orbits]
        # sorted by amplitude: low stable, middle unstable, upper stable
        assert stable == [True, False, True]

    def test_no_coexistence_outside_hysteresis(self, fig4_branch):
        oms = sorted(f.parameter for f in fig4_branch.folds)
        orbits = coexisting_orbits(fig4_branch, 0.6 * oms[0])
        assert len(orbits) == 1

    def test_fold_on_its_branch(self, fig4_branch):
        # re-solving the plain BVP at the fold parameters reproduces it
        fold = fig4_branch.folds[0]
        orbit = solve_periodic(fold.orbit, fold.orbit.params,
                               mesh=fold.orbit.mesh)
        assert abs(orbit.amplitude - fold.amplitude) < 1e-8

    def test_locate_fold_needs_sign_change(self, fig4_branch):
        with pytest.raises(ContinuationError):
            locate_fold(fig4_branch, (0, 1))

    def test_locate_fold_refines_bracket(self, fig4_branch):
        pts = fig4_branch.points
        idx = None
        for i in range(len(pts) - 1):
            if (pts[i].tangent_param * pts[i + 1].tangent_param < 0.0
                    and pts[i].orbit is not None
                    and pts[i + 1].orbit is not None):
                idx = i
                break
        assert idx is not None
        fold = locate_fold(fig4_branch, (idx, idx + 1))
        assert fold.is_fold
        assert np.min(np.abs(fig4_branch.fold_parameters()
                             - fold.parameter)) < 1e-6


class TestSmoothingFolds:
    @pytest.fixture(scope="class")
    def branch_small_p(self):
        pr = ModelParams(xi=0.03, beta=0.885, forcing=0.2, alpha=5.9,
                         nu=0.0, p=10.0 ** 1.1)
        return frequency_response(pr, (0.2, 3.5),
                                  step=StepControls(ds=0.02, ds_max=0.08))

    def test_four_folds_with_localized_pair(self, branch_small_p):
        folds = sorted(branch_small_p.folds, key=lambda f: f.parameter)
        assert len(folds) == 4
        assert folds[0].amplitude < 1.0 and folds[1].amplitude < 1.0
        assert abs(folds[0].parameter - folds[1].parameter) < 0.01

    def test_cusp_location(self, branch_small_p):
        folds = sorted(branch_small_p.folds, key=lambda f: f.parameter)
        curve = continue_fold_curve(folds[0], "p", (10.0, 1000.0),
                                    step=StepControls(ds=0.01, ds_max=0.04))
        assert curve.cusps
        log10p_cusp = math.log10(curve.cusps[0][1])
        assert abs(log10p_cusp - 1.5) < 0.15

    def test_fold_curve_consistency(self, branch_small_p):
        # fixing the second parameter and re-sweeping recovers the fold
        folds = sorted(branch_small_p.folds, key=lambda f: f.parameter)
        curve = continue_fold_curve(folds[3], "p", (10.0, 1000.0),
                                    step=StepControls(ds=0.03, ds_max=0.1))
        p_test = 10.0 ** 2.5
        predicted = curve.param1_at(p_test)
        assert predicted.size >= 1
        pr = ModelParams(xi=0.03, beta=0.885, forcing=0.2, alpha=5.9,
                         nu=0.0, p=p_test)
        sweep = frequency_response(pr, (0.2, 3.5),
                                   step=StepControls(ds=0.02, ds_max=0.08))
        tip = max(f.parameter for f in sweep.folds)
        assert abs(tip - predicted[0]) < 1e-4

    def test_cusp_changes_section_fold_count_by_two(self, branch_small_p):
        # sections straddling the cusp of the extra pair
        below = branch_small_p     # p = 10^1.1 -> 4 folds (established)
        pr = ModelParams(xi=0.03, beta=0.885, forcing=0.2, alpha=5.9,
                         nu=0.0, p=10.0 ** 2.0)
        above = frequency_response(pr, (0.2, 3.5),
                                   step=StepControls(ds=0.02, ds_max=0.08))
        assert len(below.folds) - len(above.folds) == 2


class TestBranchThinning:
    def test_thin_keeps_folds_and_endpoints(self, fig4_branch):
        import copy
        branch = copy.deepcopy(fig4_branch)
        branch.thin(keep_every=10)
        assert branch.points[0].orbit is not None
        assert branch.points[-1].orbit is not None
        for pt in branch.points:
            if pt.is_fold:
                assert pt.orbit is not None
        dropped = sum(1 for pt in branch.points if pt.orbit is None)
        assert dropped > len(branch.points) // 2
