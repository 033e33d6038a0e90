"""Continuation-based bifurcation analysis of a smoothed impacting cantilever.

The package evaluates the smoothed stop-impact oscillator, computes periodic
orbits by Gauss collocation, traces solution branches and fold curves in one
and two parameters, classifies isolas of periodic solutions, and estimates
the physical model parameters from the beam geometry.
"""

from .model import (
    BeamGeometry,
    ModelParams,
    Rescaling,
    estimate_alpha,
    estimate_natural_frequency,
    estimate_tip_stiffness,
    forcing_from_reported,
    jacobian_params,
    jacobian_state,
    rescale_forcing,
    rescaling_from_geometry,
    restoring_force,
    rhs_piecewise,
    rhs_smooth,
    switching_h,
)
from .ivp import IvpSettings, Trajectory, integrate, monodromy
from .bvp import Mesh, PeriodicOrbit, amplitude_measure, solve_periodic
from .continuation import (
    Branch,
    BranchPoint,
    FoldCurve,
    StepControls,
    continue_branch,
    continue_fold_curve,
    detect_isola,
    locate_fold,
)
from .scenarios import Scenario, SCENARIOS, overlay_experiment, run_scenario

__version__ = "0.1.0"
