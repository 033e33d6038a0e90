"""Pseudo-arclength continuation of periodic orbits and fold curves.

Branches are traced in one active parameter with a secant predictor and a
Newton corrector on the collocation system bordered by the arclength
constraint.  Folds are detected from sign changes of the parameter component
of the branch tangent, confirmed through the Floquet multiplier at +1, and
sharpened by Newton on an extended system that couples the orbit with a
periodic null function of its linearization.  The same extended system,
freed in a second parameter, traces fold curves across a parameter plane;
cusps show up as turning points of the curve in the second parameter.

Orbits crossing the stops develop thin switching layers once the smoothing
is sharp, so both continuation loops periodically re-adapt their mesh to
the collocation defect.  Loop closing (an isola) is detected in the reduced
space of initial state plus parameters, where a periodic orbit is uniquely
represented and the test is mesh independent.

Continuation coordinates: the smoothing exponent is followed on a log10
scale and the laser-scale forcing through its linear map to the internal
forcing amplitude, so the active parameter may be any of ``omega``,
``forcing``, ``i_l`` or ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .bvp import (CollocationSystem, Mesh, NewtonError, PeriodicOrbit,
                  adapted_mesh, amplitude_measure, collocation_defect,
                  linear_response_orbit, orbit_multipliers, solve_periodic)
from .ivp import (IntegrationError, IvpSettings, floquet_multipliers,
                  integrate, monodromy, settle)

__all__ = ["StepControls", "BranchPoint", "Branch", "FoldCurve",
           "continue_branch", "locate_fold", "continue_fold_curve",
           "frequency_response", "coexisting_orbits", "detect_isola",
           "IsolaReport", "ContinuationError"]

LN10 = math.log(10.0)

PARAMETER_CHOICES = ("omega", "forcing", "i_l", "p")

# layers only matter once the switching is reasonably sharp and the orbit
# actually engages the stops
REMESH_MIN_P = 50.0
REMESH_MIN_AMPLITUDE = 0.9
REMESH_DEFECT_TOL = 1e-7
# defect levels steering the mesh-size escalation during continuation
ESCALATE_DEFECT = 0.08
DEESCALATE_DEFECT = 1e-3
MAX_INTERVALS = 260
# physical-plausibility gate on folds: the flow monodromy inherits a
# square-root sensitivity to the fold location, so this stays loose while
# the same-mesh collocation multiplier carries the tight confirmation
FOLD_FLOW_GATE = 0.02


class ContinuationError(RuntimeError):
    """Continuation could not start or the request was inconsistent."""


class _Coord:
    """Active continuation coordinate with reporting conversions."""

    def __init__(self, name, rescaling=None):
        if name not in PARAMETER_CHOICES:
            raise ValueError(f"parameter must be one of {PARAMETER_CHOICES}, "
                             f"got {name!r}")
        if name == "i_l" and rescaling is None:
            raise ValueError("continuation in i_l needs a rescaling")
        self.name = name
        self.rescaling = rescaling
        self.model_field = "forcing" if name == "i_l" else name

    def internal(self, params):
        value = getattr(params, self.model_field)
        return math.log10(value) if self.name == "p" else value

    def set(self, params, c):
        value = 10.0 ** c if self.name == "p" else c
        return params.with_value(self.model_field, value)

    def scale(self, params):
        """d(model field)/d(internal coordinate)."""
        return params.p * LN10 if self.name == "p" else 1.0

    def report(self, params):
        value = getattr(params, self.model_field)
        if self.name == "i_l":
            return value * self.rescaling.displacement_ratio
        return value

    def report_internal(self, c):
        if self.name == "p":
            return 10.0 ** c
        if self.name == "i_l":
            return c * self.rescaling.displacement_ratio
        return float(c)

    def internal_from_user(self, value):
        if self.name == "p":
            return math.log10(value)
        if self.name == "i_l":
            return float(value) / self.rescaling.displacement_ratio
        return float(value)


@dataclass(frozen=True)
class StepControls:
    """Arclength step policy: halve on failure, grow after easy successes.

    Steps are additionally capped at ``ds_grazing`` while the orbit
    amplitude lies in the grazing band around the stops, where all the
    localized fold structure of this model lives.
    """

    ds: float = 0.02
    ds_min: float = 1e-5
    ds_max: float = 0.1
    grow: float = 1.3
    easy_after: int = 3
    max_steps: int = 3000
    corrector_tol: float = 1e-10
    corrector_max_iter: int = 10
    ds_grazing: float = 0.012
    grazing_band: tuple = (0.8, 1.2)

    def __post_init__(self):
        if not (0.0 < self.ds_min <= self.ds <= self.ds_max):
            raise ValueError("need 0 < ds_min <= ds <= ds_max")

    def effective(self, ds, amplitude):
        lo, hi = self.grazing_band
        if lo <= amplitude <= hi:
            return min(ds, self.ds_grazing)
        return ds


@dataclass
class BranchPoint:
    """One continuation point: orbit, parameter value and tangent data."""

    orbit: PeriodicOrbit
    parameter: float
    amplitude: float
    stable: bool
    multipliers: np.ndarray
    tangent_param: float = 0.0
    is_fold: bool = False
    parameter_name: str = ""
    amplitude_scaled: float = None
    null_values: np.ndarray = None


@dataclass
class Branch:
    """Ordered continuation points plus the located folds."""

    parameter: str
    points: list = field(default_factory=list)
    folds: list = field(default_factory=list)
    closed: bool = False
    message: str = ""
    rescaling: object = None

    @property
    def parameters(self):
        return np.array([pt.parameter for pt in self.points])

    @property
    def amplitudes(self):
        return np.array([pt.amplitude for pt in self.points])

    @property
    def stability(self):
        return np.array([1 if pt.stable else -1 for pt in self.points])

    def fold_parameters(self):
        return np.array([pt.parameter for pt in self.folds])

    def thin(self, keep_every=10):
        """Drop stored orbits except at folds, endpoints and every n-th point."""
        for i, pt in enumerate(self.points):
            if not (pt.is_fold or i % keep_every == 0
                    or i == len(self.points) - 1):
                pt.orbit = None
                pt.null_values = None
        return self


@dataclass
class FoldCurve:
    """Two-parameter locus of folds with any cusp points found on it."""

    parameter1: str
    parameter2: str
    param1: np.ndarray = None
    param2: np.ndarray = None
    internal1: np.ndarray = None
    internal2: np.ndarray = None
    amplitudes: np.ndarray = None
    cusps: list = field(default_factory=list)
    message: str = ""
    closed: bool = False

    def param1_at(self, value2):
        """Interpolated first-parameter values where the curve hits value2."""
        v2 = math.log10(value2) if self.parameter2 == "p" else float(value2)
        c1, c2 = self.internal1, self.internal2
        hits = []
        for k in range(c2.size - 1):
            a, b = c2[k], c2[k + 1]
            if (a - v2) * (b - v2) <= 0.0 and a != b:
                w = (v2 - a) / (b - a)
                hit = c1[k] + w * (c1[k + 1] - c1[k])
                hits.append(10.0 ** hit if self.parameter1 == "p" else hit)
        return np.array(hits)


class _LoopDetector:
    """Detects a branch returning to its start in reduced coordinates.

    The reduced point is (state at phase zero, parameters), which represents
    a periodic orbit uniquely, so closeness there means the continuation has
    genuinely closed into a loop regardless of any mesh changes made along
    the way.
    """

    def __init__(self, r0, min_steps=12, min_excursion=0.15):
        self.r0 = np.asarray(r0, dtype=float)
        self.prev = self.r0.copy()
        self.steps = []
        self.min_steps = min_steps
        self.min_excursion = min_excursion
        self.max_dist = 0.0
        self.moved = False

    def update(self, r):
        r = np.asarray(r, dtype=float)
        step = float(np.linalg.norm(r - self.prev))
        self.prev = r
        self.steps.append(step)
        scale = float(np.median(self.steps[-20:]))
        dist = float(np.linalg.norm(r - self.r0))
        self.max_dist = max(self.max_dist, dist)
        if dist > 8.0 * scale + 1e-12 and self.max_dist > self.min_excursion:
            self.moved = True
        return (self.moved and len(self.steps) >= self.min_steps
                and dist < 1.25 * max(step, 1e-14))


# ---------------------------------------------------------------------------
# weighted vectors and bordered solves
# ---------------------------------------------------------------------------

def _weights(nU, n_extra):
    return np.concatenate([np.full(nU, 1.0 / nU), np.ones(n_extra)])


def _wnorm(v, w):
    return math.sqrt(float(np.dot(w * v, v)))


def _branch_matrix(system, U, params, coord, cache, border_row):
    """Bordered Jacobian [collocation, parameter column; border row]."""
    nU = system.n_unknowns
    A = system.jacobian(U, params, cache).tocoo()
    col = (system.param_column(U, params, coord.model_field, cache)
           * coord.scale(params))
    rows = np.concatenate([A.row, np.arange(nU), np.full(nU + 1, nU)])
    cols = np.concatenate([A.col, np.full(nU, nU), np.arange(nU + 1)])
    data = np.concatenate([A.data, col, border_row])
    return csc_matrix((data, (rows, cols)), shape=(nU + 1, nU + 1))


def _initial_tangent(system, U, params, coord, direction):
    """Tangent from the bordered system with a unit parameter component."""
    _, cache = system.residual(U, params)
    nU = system.n_unknowns
    w = _weights(nU, 1)
    e = np.zeros(nU + 1)
    e[nU] = 1.0
    Ab = _branch_matrix(system, U, params, coord, cache, e)
    try:
        t = splu(Ab).solve(e)
    except RuntimeError as exc:
        raise ContinuationError(f"cannot build initial tangent: {exc}") from exc
    t /= _wnorm(t, w)
    if direction * t[nU] < 0.0:
        t = -t
    return t


def _corrector(system, coord, z_pred, tangent, w, base_params, tol, max_iter):
    """Newton iteration on the bordered system around the predictor."""
    nU = system.n_unknowns
    z = z_pred.copy()
    res = math.inf
    for it in range(max_iter):
        params = coord.set(base_params, z[nU])
        U = z[:nU].reshape(2, -1, order="F")
        r, cache = system.residual(U, params)
        arc = float(np.dot(w * tangent, z - z_pred))
        res = max(float(np.max(np.abs(r))), abs(arc))
        if res < tol and it > 0:
            return z, params, U, cache, res, it
        Ab = _branch_matrix(system, U, params, coord, cache, tangent * w)
        try:
            delta = splu(Ab).solve(-np.concatenate([r, [arc]]))
        except RuntimeError as exc:
            raise NewtonError(f"singular bordered system: {exc}") from exc
        z = z + delta
        if not np.all(np.isfinite(z)):
            raise NewtonError("corrector diverged to non-finite values")
    raise NewtonError(f"corrector stalled at residual {res:.3e}")


def _point_multipliers(orbit, system):
    """Multipliers for branch points, re-derived from the flow when critical.

    The transfer-matrix product is cheap but loses accuracy inside sharp
    switching layers; near the unit circle, where stability flips and fold
    confirmations live, the variational-flow monodromy is used instead.
    """
    mults, _ = orbit_multipliers(orbit, system)
    if 0.9 < float(np.max(np.abs(mults))) < 1.12:
        try:
            M = monodromy(orbit.values[:, 0], orbit.params,
                          IvpSettings(rel_tol=1e-9, abs_tol=1e-11))
            mults = floquet_multipliers(M)
        except IntegrationError:
            pass
    return mults


def _make_point(system, U, params, coord, tangent_param, rescaling):
    orbit = PeriodicOrbit(system.mesh, U.copy(), params)
    mults = _point_multipliers(orbit, system)
    orbit.multipliers = mults
    orbit.stable = bool(np.max(np.abs(mults)) < 1.0)
    orbit.amplitude = amplitude_measure(orbit)
    scaled = None
    if rescaling is not None:
        scaled = orbit.amplitude * rescaling.displacement_ratio
        orbit.amplitude_scaled = scaled
    return BranchPoint(orbit=orbit, parameter=coord.report(params),
                       amplitude=orbit.amplitude, stable=orbit.stable,
                       multipliers=mults, tangent_param=tangent_param,
                       parameter_name=coord.name, amplitude_scaled=scaled)


def _needs_remesh(orbit):
    if orbit.params.p < REMESH_MIN_P:
        return False
    if orbit.amplitude < REMESH_MIN_AMPLITUDE:
        return False
    _, defect = collocation_defect(orbit)
    return float(np.max(defect)) > REMESH_DEFECT_TOL


def _remap_flat(flat, old_mesh, new_mesh, params):
    orb = PeriodicOrbit(old_mesh, flat.reshape(2, -1, order="F"), params)
    return orb.evaluate(new_mesh.rep_times()).ravel(order="F")


def _pick_mesh_size(n_cur, defect_max, n_base, n_max):
    if defect_max > ESCALATE_DEFECT and n_cur < n_max:
        return min(int(n_cur * 1.5) + 1, n_max)
    if defect_max < DEESCALATE_DEFECT and n_cur > n_base:
        return max(int(n_cur / 1.5), n_base)
    return n_cur


def continue_branch(start, parameter, prange, step=None, rescaling=None,
                    direction=None, mesh=None, locate_folds=True,
                    fold_multiplier_tol=1e-6, remesh_every=5,
                    max_intervals=MAX_INTERVALS):
    """Trace a branch of periodic orbits across ``prange`` of ``parameter``.

    ``start`` is a converged :class:`PeriodicOrbit` whose parameter value
    lies inside ``prange`` (given in the reported scale of the parameter).
    The branch ends at the range boundary (with an exact-boundary endpoint),
    on step underflow (truncated, message attached), or when it returns to
    its starting point, which closes the loop and flags an isola.

    Fold candidates are sign changes of the tangent's parameter component,
    tightened by bisection along the branch and refined on an extended
    system; a fold is reported only when its same-mesh Floquet multiplier
    sits within ``fold_multiplier_tol`` of +1 and the variational-flow
    monodromy confirms the multiplier near +1 physically.  The mesh follows
    the switching layers by periodic re-adaptation, growing and shrinking
    between the start size and ``max_intervals`` as the defect demands.
    """
    if not isinstance(start, PeriodicOrbit):
        raise TypeError("start must be a converged PeriodicOrbit")
    step = step or StepControls()
    coord = _Coord(parameter, rescaling)
    mesh = mesh or start.mesh
    n_base = mesh.n_intervals
    system = CollocationSystem(mesh)
    params = start.params
    c_lo, c_hi = sorted(coord.internal_from_user(v) for v in prange)
    c0 = coord.internal(params)
    if not c_lo - 1e-12 <= c0 <= c_hi + 1e-12:
        raise ContinuationError(
            f"start value {coord.report(params)!r} outside range {prange!r}")
    if direction is None:
        direction = 1.0 if abs(c_hi - c0) >= abs(c0 - c_lo) else -1.0

    start = solve_periodic(start, params, mesh=mesh, system=system,
                           rescaling=rescaling, tol=step.corrector_tol)
    nU = system.n_unknowns
    w = _weights(nU, 1)
    z = np.concatenate([start.values.ravel(order="F"), [c0]])
    tangent = _initial_tangent(system, start.values, params, coord, direction)

    branch = Branch(parameter=parameter, rescaling=rescaling)
    branch.points.append(_make_point(system, start.values, params, coord,
                                     tangent[nU], rescaling))
    loop = _LoopDetector(np.concatenate([start.values[:, 0], [c0]]))

    ds = step.ds
    easy = 0
    n_accepted = 0
    since_remesh = 0
    fail_streak = 0

    def _try_remesh():
        nonlocal z, tangent, mesh, system, nU, w
        orbit_now = PeriodicOrbit(mesh, z[:nU].reshape(2, -1, order="F"),
                                  params)
        orbit_now.amplitude = amplitude_measure(orbit_now)
        if params.p < REMESH_MIN_P \
                or orbit_now.amplitude < REMESH_MIN_AMPLITUDE:
            return False
        _, defect = collocation_defect(orbit_now)
        dmax = float(np.max(defect))
        if dmax <= REMESH_DEFECT_TOL:
            return False
        n_new = _pick_mesh_size(mesh.n_intervals, dmax, n_base,
                                max_intervals)
        new_mesh = adapted_mesh(orbit_now, n_new)
        if np.array_equal(new_mesh.breakpoints, mesh.breakpoints):
            return False
        z = np.concatenate([_remap_flat(z[:nU], mesh, new_mesh, params),
                            z[nU:]])
        t_u = _remap_flat(tangent[:nU], mesh, new_mesh, params)
        tangent = np.concatenate([t_u, tangent[nU:]])
        mesh = new_mesh
        system = CollocationSystem(mesh)
        nU = system.n_unknowns
        w = _weights(nU, 1)
        tangent /= _wnorm(tangent, w)
        return True

    while n_accepted < step.max_steps:
        ds_eff = step.effective(ds, branch.points[-1].amplitude)
        z_pred = z + ds_eff * tangent
        try:
            z_new, params_new, U_new, _, _, iters = _corrector(
                system, coord, z_pred, tangent, w, params,
                step.corrector_tol, step.corrector_max_iter)
        except NewtonError:
            ds *= 0.5
            easy = 0
            fail_streak += 1
            if fail_streak >= 2:
                remeshed = _try_remesh()
                if remeshed:
                    fail_streak = 0
            if ds < step.ds_min:
                branch.message = (f"step underflow near "
                                  f"{coord.report(params):.6g}")
                break
            continue
        fail_streak = 0

        secant = z_new - z
        step_len = _wnorm(secant, w)
        if step_len > 4.0 * ds_eff and ds > 2.0 * step.ds_min:
            # corrector slid far along the constraint plane; distrust it
            ds *= 0.5
            easy = 0
            continue
        tangent_new = secant / step_len
        c_new = z_new[nU]

        # angle control: a strongly rotating tangent means the step flew
        # over unresolved branch structure (grazing wiggles, hairpins)
        cos_turn = float(np.dot(w * tangent, tangent_new))
        if cos_turn < 0.86 and ds > 4.0 * step.ds_min:
            ds *= 0.4
            easy = 0
            continue

        pt_new = _make_point(system, U_new, params_new, coord,
                             tangent_new[nU], rescaling)
        prev_pt = branch.points[-1]
        if (prev_pt.stable != pt_new.stable
                and tangent[nU] * tangent_new[nU] > 0.0
                and ds > 2.0 * step.ds_min):
            # stability flipped with no branch turn and no multiplier near
            # +1: the corrector jumped across a sheet; resolve the hairpin
            near1 = max(float(np.min(np.abs(prev_pt.multipliers - 1.0))),
                        float(np.min(np.abs(pt_new.multipliers - 1.0))))
            if near1 > 0.5:
                ds *= 0.5
                easy = 0
                continue

        if locate_folds and tangent[nU] * tangent_new[nU] < 0.0:
            turn = max(abs(tangent[nU]), abs(tangent_new[nU]))
            if turn > 0.4 and ds > 8.0 * step.ds_min:
                # crossed a sharp turn in one step; walk into it instead
                ds *= 0.3
                easy = 0
                continue
            fold = _locate_fold_in_loop(system, coord, w, z, tangent,
                                        z_new, tangent_new, params, step,
                                        rescaling)
            _admit_fold(branch, fold, coord, fold_multiplier_tol,
                        min(z[nU], c_new), max(z[nU], c_new))

        if c_new > c_hi + 1e-12 or c_new < c_lo - 1e-12:
            # finish with an exact-boundary endpoint
            c_end = c_hi if c_new > c_hi else c_lo
            try:
                end_params = coord.set(params, c_end)
                end_orbit = solve_periodic(
                    PeriodicOrbit(mesh, U_new, end_params), end_params,
                    mesh=mesh, system=system, rescaling=rescaling)
                branch.points.append(
                    _make_point(system, end_orbit.values, end_params,
                                coord, tangent_new[nU], rescaling))
                branch.message = "range boundary"
            except NewtonError:
                branch.message = "range boundary (endpoint solve failed)"
            break

        branch.points.append(pt_new)
        z, params, tangent = z_new, params_new, tangent_new
        n_accepted += 1
        since_remesh += 1

        if loop.update(np.concatenate([U_new[:, 0], [c_new]])):
            branch.closed = True
            branch.message = "closed loop (isola)"
            break

        if since_remesh >= remesh_every:
            since_remesh = 0
            _try_remesh()

        if iters <= 4:
            easy += 1
            if easy >= step.easy_after:
                ds = min(ds * step.grow, step.ds_max)
                easy = 0
        else:
            easy = 0
    else:
        branch.message = f"stopped after {step.max_steps} steps"

    return branch


def _locate_fold_in_loop(system, coord, w, z_a, t_a, z_b, t_b, base_params,
                         step, rescaling):
    """Refine a fold flagged by a tangent sign change along the branch.

    The fold Newton is seeded from the converged bracket endpoints (their
    collocation residual vanishes and the null-function seed is nearly
    periodic), nearest-the-fold first.  If both sides fail, the bracket is
    tightened by bisection along the branch and the attempts repeat from
    the tightened states and finally from an interpolated midpoint.
    """
    nU = system.n_unknowns

    def attempt(z_seed):
        U0 = z_seed[:nU].reshape(2, -1, order="F").copy()
        params0 = coord.set(base_params, z_seed[nU])
        return _polished_fold(system, coord, U0, params0, rescaling)

    for _, z_seed in sorted([(abs(t_a[nU]), z_a), (abs(t_b[nU]), z_b)],
                            key=lambda q: q[0]):
        try:
            return attempt(z_seed)
        except (NewtonError, ValueError):
            continue

    for _ in range(12):
        gap = _wnorm(z_b - z_a, w)
        if gap < 1e-3:
            break
        z_pred = z_a + 0.5 * gap * t_a
        try:
            z_m, _, _, _, _, _ = _corrector(
                system, coord, z_pred, t_a, w, base_params,
                step.corrector_tol, step.corrector_max_iter)
        except NewtonError:
            break
        d_m = z_m - z_a
        nrm = _wnorm(d_m, w)
        if nrm == 0.0:
            break
        t_m = d_m / nrm
        if t_a[nU] * t_m[nU] < 0.0:
            z_b, t_b = z_m, t_m
        else:
            z_a, t_a = z_m, t_m

    for _, z_seed in sorted([(abs(t_a[nU]), z_a), (abs(t_b[nU]), z_b)],
                            key=lambda q: q[0]):
        try:
            return attempt(z_seed)
        except (NewtonError, ValueError):
            continue
    try:
        return _refine_fold_from_state(system, coord, z_a, t_a, z_b, t_b,
                                       base_params, rescaling)
    except (NewtonError, ValueError):
        return None


def _admit_fold(branch, fold, coord, fold_multiplier_tol, c_lo, c_hi):
    """Apply the confirmation gates and record an accepted fold."""
    if fold is None:
        return
    # tight check on the same-mesh linearization: exact at a discrete fold
    mults_colloc, _ = orbit_multipliers(fold.orbit)
    near_one = float(np.min(np.abs(mults_colloc - 1.0)))
    # loose physical gate from the variational flow, which kills candidates
    # manufactured by discretization noise on an otherwise monotone branch
    flow_gap = FOLD_FLOW_GATE
    try:
        M = monodromy(fold.orbit.values[:, 0], fold.orbit.params,
                      IvpSettings(rel_tol=1e-9, abs_tol=1e-11))
        flow_gap = float(np.min(np.abs(floquet_multipliers(M) - 1.0)))
    except IntegrationError:
        pass
    lo = coord.report_internal(c_lo)
    hi = coord.report_internal(c_hi)
    lo, hi = min(lo, hi), max(lo, hi)
    # near a parameter extremum both bracket endpoints sit on the same side
    # of the fold, so allow a few bracket widths of overshoot
    margin = 3.0 * (hi - lo) + 2e-3 * max(1.0, abs(hi))
    duplicate = any(
        abs(f.parameter - fold.parameter) < 1e-4 * max(1.0, abs(fold.parameter))
        and abs(f.amplitude - fold.amplitude) < 0.02 * max(1.0, f.amplitude)
        for f in branch.folds)
    if (near_one < fold_multiplier_tol and flow_gap < FOLD_FLOW_GATE
            and not duplicate and lo - margin <= fold.parameter <= hi + margin):
        fold.parameter_name = coord.name
        branch.folds.append(fold)
        branch.points.append(fold)


def _refine_fold_from_state(system, coord, z_a, t_a, z_b, t_b, base_params,
                            rescaling):
    """Extended-system fold refinement from two bracketing loop states."""
    nU = system.n_unknowns
    wa, wb = abs(t_b[nU]), abs(t_a[nU])
    s = wa + wb
    wa, wb = (wa / s, wb / s) if s > 0.0 else (0.5, 0.5)
    z0 = wa * z_a + wb * z_b
    U0 = z0[:nU].reshape(2, -1, order="F")
    params0 = coord.set(base_params, z0[nU])
    return _polished_fold(system, coord, U0, params0, rescaling)


# ---------------------------------------------------------------------------
# fold localization and fold curves via a bordered test function
# ---------------------------------------------------------------------------
#
# A fold of the periodic BVP is a point where the linearized collocation
# system (with periodic boundary rows) turns singular, equivalently where a
# Floquet multiplier reaches +1.  Instead of carrying the null function as a
# Newton unknown, the singularity is measured by the scalar of the bordered
# solve [A b; c^T 0] [v; g] = [0; 1]:  g vanishes exactly when A is
# singular, and v then is the null function.  The adjoint solve gives the
# left null vector w, from which the gradient of g follows as
# dg/dxi = -w^T (dA/dxi) v.  Newton then acts on (orbit, parameters) only,
# which keeps the third-derivative switching-layer terms out of the unknown
# coupling and makes the iteration robust for sharply smoothed orbits.


def _null_function(system, orbit):
    """Periodic variational null-function seed from the monodromy matrix."""
    _, M = orbit_multipliers(orbit, system)
    eigvals, eigvecs = np.linalg.eig(M)
    k = int(np.argmin(np.abs(eigvals - 1.0)))
    v0 = np.real(eigvecs[:, k])
    if np.max(np.abs(v0)) == 0.0:
        v0 = np.array([1.0, 0.0])
    V = system.propagate_variation(orbit.values, orbit.params, v0)
    nU = system.n_unknowns
    nrm = _wnorm(V.ravel(order="F"), np.full(nU, 1.0 / nU))
    return V / max(nrm, 1e-300)


def _initial_borders(system, orbit):
    c = _null_function(system, orbit).ravel(order="F")
    c /= np.linalg.norm(c)
    return c.copy(), c.copy()


def _fold_test(system, U, params, cache, b, c):
    """Null vectors (right and left) and the scalar fold test value."""
    nU = system.n_unknowns
    A = system.jacobian(U, params, cache).tocoo()
    rows = np.concatenate([A.row, np.arange(nU), np.full(nU, nU)])
    cols = np.concatenate([A.col, np.full(nU, nU), np.arange(nU)])
    data = np.concatenate([A.data, b, c])
    M = csc_matrix((data, (rows, cols)), shape=(nU + 1, nU + 1))
    try:
        lu = splu(M)
    except RuntimeError as exc:
        raise NewtonError(f"singular bordered fold matrix: {exc}") from exc
    e = np.zeros(nU + 1)
    e[nU] = 1.0
    vg = lu.solve(e)
    wg = lu.solve(e, trans="T")
    return vg[:nU], wg[:nU], float(vg[nU])


def _fold_test_gradient(system, U, params, cache, v, w, coords):
    """Gradient of the fold test w.r.t. the orbit values and parameters."""
    nU = system.n_unknowns
    V = v.reshape(2, -1, order="F")
    system.variational_residual(U, V, params, cache)    # fills cache["Vn"]
    b_data, b_rows, b_cols = system.hessian_action_blocks(U, V, params,
                                                          cache)
    B = csc_matrix((b_data, (b_rows, b_cols)), shape=(nU, nU))
    g_U = -(B.T @ w)
    g_par = []
    for coord in coords:
        d = system.variational_param_column(U, V, params, coord.model_field,
                                            cache) * coord.scale(params)
        g_par.append(-float(np.dot(w, d)))
    return g_U, g_par


def _fold_newton(system, U0, params0, coords, extra_rows, b, c,
                 tol=1e-10, max_iter=25):
    """Damped Newton on [collocation; fold test; extra rows].

    ``coords`` lists the free parameters; ``extra_rows`` are
    ``(row_vector, offset)`` pairs (arclength constraints) with residual
    ``row . z + offset`` on the unknown vector ``z = (values, params)``.
    The borders are refreshed from the computed null vectors after every
    accepted step.  Returns the final state plus the null vectors.
    """
    nU = system.n_unknowns
    n_par = len(coords)
    n_tot = nU + n_par
    z = np.concatenate([U0.ravel(order="F"),
                        [co.internal(params0) for co in coords]])
    b = b.copy()
    c = c.copy()

    def evaluate(zz):
        params = params0
        try:
            for k, co in enumerate(coords):
                params = co.set(params, zz[nU + k])
        except ValueError:
            return None
        U = zz[:nU].reshape(2, -1, order="F")
        r, cache = system.residual(U, params)
        v, w, g = _fold_test(system, U, params, cache, b, c)
        extra = [float(np.dot(row, zz)) + off for row, off in extra_rows]
        full_r = np.concatenate([r, [g], extra])
        return params, U, cache, v, w, full_r

    state = evaluate(z)
    if state is None:
        raise NewtonError("fold system started outside the parameter domain")
    params, U, cache, v, w, full_r = state
    res = float(np.max(np.abs(full_r)))
    best = float(np.linalg.norm(full_r))
    bad = 0
    for it in range(max_iter):
        if res < tol and it > 0:
            V = v.reshape(2, -1, order="F")
            nrm = _wnorm(v, np.full(nU, 1.0 / nU))
            return z, params, U, V / max(nrm, 1e-300), b, c, res, it
        A = system.jacobian(U, params, cache).tocoo()
        g_U, g_par = _fold_test_gradient(system, U, params, cache, v, w,
                                         coords)
        rows = [A.row]
        cols = [A.col]
        data = [A.data]
        for k, coord in enumerate(coords):
            col = (system.param_column(U, params, coord.model_field, cache)
                   * coord.scale(params))
            rows.append(np.arange(nU))
            cols.append(np.full(nU, nU + k))
            data.append(col)
        rows.append(np.full(n_tot, nU))
        cols.append(np.arange(n_tot))
        data.append(np.concatenate([g_U, g_par]))
        for k, (row, _) in enumerate(extra_rows):
            nz = np.nonzero(row)[0]
            rows.append(np.full(nz.size, nU + 1 + k))
            cols.append(nz)
            data.append(row[nz])
        J = csc_matrix((np.concatenate(data),
                        (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nU + 1 + len(extra_rows), n_tot))
        try:
            delta = splu(J.tocsc()).solve(-full_r)
        except RuntimeError as exc:
            raise NewtonError(f"singular fold Newton matrix: {exc}") from exc
        # watchdog globalization: the mixed residual [C; g] may rise
        # transiently on the way to the fold, so full steps are kept unless
        # they blow up, and only persistent non-improvement aborts
        lam = 1.0
        state = None
        for _ in range(10):
            z_try = z + lam * delta
            cand = evaluate(z_try)
            if cand is not None and np.all(np.isfinite(cand[-1])):
                merit_try = float(np.linalg.norm(cand[-1]))
                if merit_try < max(50.0 * best, 1e3 * tol):
                    z, state = z_try, cand
                    break
            lam *= 0.5
        if state is None:
            raise NewtonError(f"fold Newton: no usable step at residual "
                              f"{res:.3e}")
        params, U, cache, v, w, full_r = state
        res = float(np.max(np.abs(full_r)))
        merit = float(np.linalg.norm(full_r))
        if merit < best:
            best = merit
            bad = 0
        else:
            bad += 1
            if bad > 6:
                raise NewtonError(
                    f"fold Newton not improving (residual {res:.3e})")
        # refresh borders from the freshly solved null vectors
        b = w / max(float(np.linalg.norm(w)), 1e-300)
        c = v / max(float(np.linalg.norm(v)), 1e-300)
    raise NewtonError(f"fold Newton stalled at residual {res:.3e}")


def _values_on(pt, mesh):
    orbit = pt.orbit
    if np.array_equal(orbit.mesh.breakpoints, mesh.breakpoints) \
            and orbit.mesh.degree == mesh.degree:
        return orbit.values
    return orbit.on_mesh(mesh).values


def _polished_fold(system, coord, U0, params0, rescaling, polish_n=240):
    """Solve the fold system and polish it on a layer-adapted mesh.

    Polishing makes the reported fold location and its Floquet confirmation
    insensitive to the working mesh of the continuation that found it.
    """
    b, c = _initial_borders(system, PeriodicOrbit(system.mesh, U0, params0))
    z, params, U, V, b, c, _, _ = _fold_newton(system, U0, params0, [coord],
                                               [], b, c)
    orbit = PeriodicOrbit(system.mesh, U, params)
    for _ in range(2):
        _, defect = collocation_defect(orbit)
        if float(np.max(defect)) < 1e-6:
            break
        n = max(orbit.mesh.n_intervals, polish_n)
        new_mesh = adapted_mesh(orbit, n)
        new_system = CollocationSystem(new_mesh)
        U0 = orbit.evaluate(new_mesh.rep_times())
        c_new = PeriodicOrbit(orbit.mesh, V, params).evaluate(
            new_mesh.rep_times()).ravel(order="F")
        c_new /= max(float(np.linalg.norm(c_new)), 1e-300)
        _, params, U, V, b, c, _, _ = _fold_newton(
            new_system, U0, params, [coord], [], c_new.copy(), c_new.copy())
        system = new_system
        orbit = PeriodicOrbit(new_mesh, U, params)
    fold = _make_point(system, U, params, coord, 0.0, rescaling)
    fold.is_fold = True
    fold.null_values = V
    return fold


def _refine_fold(system, coord, pt_a, pt_b, rescaling):
    """Localize a fold bracketed by two stored branch points."""
    wa, wb = abs(pt_b.tangent_param), abs(pt_a.tangent_param)
    s = wa + wb
    wa, wb = (wa / s, wb / s) if s > 0.0 else (0.5, 0.5)
    # the bracket may span a remesh, so align both orbits with the system
    U0 = (wa * _values_on(pt_a, system.mesh)
          + wb * _values_on(pt_b, system.mesh))
    c0 = (wa * coord.internal(pt_a.orbit.params)
          + wb * coord.internal(pt_b.orbit.params))
    params0 = coord.set(pt_a.orbit.params, c0)
    return _polished_fold(system, coord, U0, params0, rescaling)


def locate_fold(branch, bracket, rescaling=None):
    """Refine the fold bracketed by points ``bracket = (i, j)`` of a branch.

    The tangent's parameter component must change sign across the bracket
    and both points must still carry their orbits.  The refined fold
    satisfies the bordered fold system to solver tolerance, has one Floquet
    multiplier at +1, and carries its periodic null function for later
    two-parameter continuation.
    """
    i, j = bracket
    pt_a, pt_b = branch.points[i], branch.points[j]
    if pt_a.tangent_param * pt_b.tangent_param > 0.0:
        raise ContinuationError(
            f"no tangent sign change across bracket {bracket!r}")
    if pt_a.orbit is None or pt_b.orbit is None:
        raise ContinuationError("bracket points carry no stored orbit")
    rescaling = rescaling or branch.rescaling
    coord = _Coord(branch.parameter, rescaling)
    system = CollocationSystem(pt_a.orbit.mesh)
    fold = _refine_fold(system, coord, pt_a, pt_b, rescaling)
    fold.parameter_name = branch.parameter
    return fold


# ---------------------------------------------------------------------------
# fold curves in two parameters
# ---------------------------------------------------------------------------

def _fold_curve_tangent(system, z, params0, coords, b, c, direction):
    """Initial tangent of the fold curve, unit second-parameter component."""
    nU = system.n_unknowns
    n_tot = nU + 2
    U = z[:nU].reshape(2, -1, order="F")
    params = params0
    for k, co in enumerate(coords):
        params = co.set(params, z[nU + k])
    _, cache = system.residual(U, params)
    v, w, g = _fold_test(system, U, params, cache, b, c)
    g_U, g_par = _fold_test_gradient(system, U, params, cache, v, w, coords)
    A = system.jacobian(U, params, cache).tocoo()
    rows = [A.row]
    cols = [A.col]
    data = [A.data]
    for k, coord in enumerate(coords):
        col = (system.param_column(U, params, coord.model_field, cache)
               * coord.scale(params))
        rows.append(np.arange(nU))
        cols.append(np.full(nU, nU + k))
        data.append(col)
    rows.append(np.full(n_tot, nU))
    cols.append(np.arange(n_tot))
    data.append(np.concatenate([g_U, g_par]))
    rows.append(np.array([n_tot - 1]))
    cols.append(np.array([n_tot - 1]))
    data.append(np.array([1.0]))
    J = csc_matrix((np.concatenate(data),
                    (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n_tot, n_tot))
    e = np.zeros(n_tot)
    e[-1] = 1.0
    t = splu(J).solve(e)
    wgt = _weights(nU, 2)
    t /= _wnorm(t, wgt)
    if direction * t[-1] < 0.0:
        t = -t
    return t, wgt


def _quadratic_fit(ss, ys):
    A = np.vstack([ss * ss, ss, np.ones_like(ss)]).T
    return np.linalg.lstsq(A, ys, rcond=None)[0]


def continue_fold_curve(fold, parameter2, range2, parameter1=None,
                        rescaling=None, step=None, direction=1.0,
                        range1=None, remesh_every=5,
                        max_intervals=MAX_INTERVALS):
    """Trace the locus of a fold in the (parameter1, parameter2) plane.

    ``fold`` is a refined fold point (from branch continuation or
    :func:`locate_fold`) carrying its orbit and null function.  The bordered
    fold system, with both parameters free, is continued by pseudo-arclength
    until the second (or optional first) parameter leaves its range, the
    step underflows, or the curve closes into a loop.  The mesh follows the
    switching layers through periodic re-adaptation.

    Cusps are detected as turning points of the curve in the second
    parameter and located by a local quadratic fit through five consecutive
    records.
    """
    step = step or StepControls(ds=0.02, ds_max=0.08)
    parameter1 = parameter1 or fold.parameter_name
    coord1 = _Coord(parameter1, rescaling)
    coord2 = _Coord(parameter2, rescaling)
    coords = [coord1, coord2]
    if fold.orbit is None or fold.null_values is None:
        raise ContinuationError("fold point carries no orbit/null function")

    mesh = fold.orbit.mesh
    n_base = mesh.n_intervals
    system = CollocationSystem(mesh)
    params = fold.orbit.params
    nU = system.n_unknowns
    c2_lo, c2_hi = sorted(coord2.internal_from_user(val) for val in range2)
    if range1 is not None:
        c1_lo, c1_hi = sorted(coord1.internal_from_user(val) for val in range1)
    else:
        c1_lo, c1_hi = -math.inf, math.inf

    c_border = fold.null_values.ravel(order="F").copy()
    c_border /= max(float(np.linalg.norm(c_border)), 1e-300)
    b_border = c_border.copy()
    z = np.concatenate([fold.orbit.values.ravel(order="F"),
                        [coord1.internal(params), coord2.internal(params)]])
    tangent, wgt = _fold_curve_tangent(system, z, params, coords,
                                       b_border, c_border, direction)

    curve = FoldCurve(parameter1=parameter1, parameter2=parameter2)
    recs = [(coord1.report(params), coord2.report(params), fold.amplitude)]
    internals = [(z[nU], z[nU + 1])]
    tangents2 = [tangent[-1]]
    arcs = [0.0]
    loop = _LoopDetector(np.concatenate([fold.orbit.values[:, 0], z[nU:]]))

    ds = step.ds
    easy = 0
    n_accepted = 0
    since_remesh = 0
    fail_streak = 0

    def _try_remesh():
        nonlocal z, tangent, mesh, system, nU, wgt, b_border, c_border
        params_now = _params_from(coords, params, z, nU)
        orbit_now = PeriodicOrbit(mesh, z[:nU].reshape(2, -1, order="F"),
                                  params_now)
        orbit_now.amplitude = amplitude_measure(orbit_now)
        if params_now.p < REMESH_MIN_P \
                or orbit_now.amplitude < REMESH_MIN_AMPLITUDE:
            return False
        _, defect = collocation_defect(orbit_now)
        dmax = float(np.max(defect))
        if dmax <= REMESH_DEFECT_TOL:
            return False
        n_new = _pick_mesh_size(mesh.n_intervals, dmax, n_base,
                                max_intervals)
        new_mesh = adapted_mesh(orbit_now, n_new)
        if np.array_equal(new_mesh.breakpoints, mesh.breakpoints):
            return False
        zU = _remap_flat(z[:nU], mesh, new_mesh, params_now)
        tU = _remap_flat(tangent[:nU], mesh, new_mesh, params_now)
        cB = _remap_flat(c_border, mesh, new_mesh, params_now)
        bB = _remap_flat(b_border, mesh, new_mesh, params_now)
        z = np.concatenate([zU, z[nU:]])
        tangent = np.concatenate([tU, tangent[nU:]])
        c_border = cB / max(float(np.linalg.norm(cB)), 1e-300)
        b_border = bB / max(float(np.linalg.norm(bB)), 1e-300)
        mesh = new_mesh
        system = CollocationSystem(mesh)
        nU = system.n_unknowns
        wgt = _weights(nU, 2)
        tangent /= _wnorm(tangent, wgt)
        return True

    while n_accepted < step.max_steps:
        ds_eff = step.effective(ds, recs[-1][2])
        z_pred = z + ds_eff * tangent
        row = tangent * wgt
        offset = -float(np.dot(row, z_pred))
        try:
            z_new, params_new, U, V, b_border, c_border, _, iters = \
                _fold_newton(system,
                             z_pred[:nU].reshape(2, -1, order="F"),
                             _params_from(coords, params, z_pred, nU),
                             coords, [(row, offset)], b_border, c_border,
                             tol=step.corrector_tol,
                             max_iter=step.corrector_max_iter)
        except NewtonError:
            ds *= 0.5
            easy = 0
            fail_streak += 1
            if fail_streak >= 2:
                if _try_remesh():
                    fail_streak = 0
            if ds < step.ds_min:
                curve.message = "step underflow"
                break
            continue
        fail_streak = 0

        secant = z_new - z
        step_len = _wnorm(secant, wgt)
        if step_len > 4.0 * ds_eff and ds > 2.0 * step.ds_min:
            ds *= 0.5
            easy = 0
            continue
        tangent_new = secant / step_len
        c1_new, c2_new = z_new[nU], z_new[nU + 1]

        cos_turn = float(np.dot(wgt * tangent, tangent_new))
        if cos_turn < 0.86 and ds > 4.0 * step.ds_min:
            ds *= 0.4
            easy = 0
            continue

        orbit_new = PeriodicOrbit(mesh, U.copy(), params_new)
        orbit_new.amplitude = amplitude_measure(orbit_new)
        recs.append((coord1.report(params_new), coord2.report(params_new),
                     orbit_new.amplitude))
        internals.append((c1_new, c2_new))
        tangents2.append(tangent_new[-1])
        arcs.append(arcs[-1] + _wnorm(secant, wgt))

        out2 = c2_new > c2_hi + 1e-12 or c2_new < c2_lo - 1e-12
        out1 = c1_new > c1_hi + 1e-12 or c1_new < c1_lo - 1e-12
        if out2 or out1:
            curve.message = "range boundary"
            break

        z, params, tangent = z_new, params_new, tangent_new
        n_accepted += 1
        since_remesh += 1

        if loop.update(np.concatenate([U[:, 0], z[nU:]])):
            curve.closed = True
            curve.message = "closed loop"
            break

        if since_remesh >= remesh_every:
            since_remesh = 0
            _try_remesh()

        if iters <= 4:
            easy += 1
            if easy >= step.easy_after:
                ds = min(ds * step.grow, step.ds_max)
                easy = 0
        else:
            easy = 0
    else:
        curve.message = f"stopped after {step.max_steps} steps"

    curve.param1 = np.array([r[0] for r in recs])
    curve.param2 = np.array([r[1] for r in recs])
    curve.amplitudes = np.array([r[2] for r in recs])
    curve.internal1 = np.array([val[0] for val in internals])
    curve.internal2 = np.array([val[1] for val in internals])

    # cusps: turning points of the internal second coordinate; numerical
    # grinding can flap the tangent sign, so a flip must persist on both
    # sides and the fitted extremum must land inside its window
    ss = np.array(arcs)
    t2 = np.array(tangents2)
    for k in range(1, t2.size - 1):
        if not t2[k - 1] * t2[k] < 0.0:
            continue
        pre = np.sign(t2[max(0, k - 3):k])
        post = np.sign(t2[k:min(t2.size, k + 3)])
        if pre.size < 2 or post.size < 2:
            continue
        if not (np.all(pre == pre[-1]) and np.all(post == post[0])):
            continue
        lo, hi = max(0, k - 2), min(t2.size, k + 3)
        coef2 = _quadratic_fit(ss[lo:hi], curve.internal2[lo:hi])
        if coef2[0] == 0.0:
            continue
        s_star = -coef2[1] / (2.0 * coef2[0])
        window = ss[hi - 1] - ss[lo]
        if not ss[lo] - 0.5 * window <= s_star <= ss[hi - 1] + 0.5 * window:
            continue
        coef1 = _quadratic_fit(ss[lo:hi], curve.internal1[lo:hi])
        c1_star = float(np.polyval(coef1, s_star))
        c2_star = float(np.polyval(coef2, s_star))
        cusp = (coord1.report_internal(c1_star),
                coord2.report_internal(c2_star))
        if all(abs(cusp[1] - c[1]) > 1e-3 * max(1.0, abs(cusp[1]))
               or abs(cusp[0] - c[0]) > 1e-3 * max(1.0, abs(cusp[0]))
               for c in curve.cusps):
            curve.cusps.append(cusp)
    return curve


def _params_from(coords, params, z, nU):
    out = params
    for k, co in enumerate(coords):
        out = co.set(out, z[nU + k])
    return out


# ---------------------------------------------------------------------------
# frequency responses, coexistence and isolas
# ---------------------------------------------------------------------------

def frequency_response(params, omega_range, mesh=None, step=None,
                       rescaling=None, n_intervals=100):
    """Branch over a frequency window started from the analytic guess.

    The start orbit is the free-flight steady state at the lower window
    edge (valid at low amplitude there), corrected by Newton before the
    sweep begins.
    """
    mesh = mesh or Mesh.uniform(n_intervals)
    start_params = params.with_value("omega", omega_range[0])
    orbit = solve_periodic(linear_response_orbit(start_params, mesh),
                           start_params, mesh=mesh, rescaling=rescaling)
    return continue_branch(orbit, "omega", omega_range, step=step,
                           rescaling=rescaling, direction=1.0, mesh=mesh)


def _branch_crossings(branch, value):
    """Indices i of branch segments (i, i+1) straddling a parameter value."""
    par = branch.parameters
    hits = []
    for i in range(par.size - 1):
        if (par[i] - value) * (par[i + 1] - value) <= 0.0 \
                and par[i] != par[i + 1]:
            hits.append(i)
    return hits


def coexisting_orbits(branch, omega, dedupe_tol=1e-6):
    """All periodic orbits at one frequency found from branch crossings.

    Each branch segment straddling ``omega`` seeds a Newton solve at exactly
    that frequency; duplicates are merged by amplitude.  Between a fold pair
    this recovers the full coexisting set, including the unstable orbit that
    separates the stable pair.
    """
    found = []
    for i in _branch_crossings(branch, omega):
        a, b = branch.points[i], branch.points[i + 1]
        guess_pt = a if a.orbit is not None else b
        if guess_pt.orbit is None:
            continue
        target = guess_pt.orbit.params.with_value("omega", omega)
        try:
            orb = solve_periodic(guess_pt.orbit, target,
                                 mesh=guess_pt.orbit.mesh,
                                 rescaling=branch.rescaling)
        except NewtonError:
            continue
        if all(abs(orb.amplitude - o.amplitude)
               > dedupe_tol * max(1.0, o.amplitude) for o in found):
            found.append(orb)
    return sorted(found, key=lambda o: o.amplitude)


@dataclass
class IsolaReport:
    """Branch-topology classification at one reported forcing value."""

    forcing_reported: float
    classification: str              # "no-isola" | "isola" | "reconnected"
    status: str = "ok"               # "ok" | "inconclusive"
    main_fold_count: int = 0
    main_max_amplitude: float = 0.0
    secondary_fold_count: int = 0
    secondary_closed: bool = False
    detail: str = ""
    main_branch: Branch = None
    secondary_branch: Branch = None


def _settled_orbits(params, omega_values, mesh, rescaling, seeds_per_axis,
                    settle_periods):
    """Deterministic settling grid -> distinct converged periodic orbits."""
    g = np.linspace(-3.0, 3.0, seeds_per_axis)
    ics = np.array([(a, b) for a in g for b in g])
    results = []
    for om in omega_values:
        pr = params.with_value("omega", om)
        try:
            finals = settle(ics, settle_periods, pr)
        except Exception:
            continue
        reps = []
        for s in finals:
            if np.all(np.isfinite(s)) and all(
                    np.max(np.abs(s - r)) > 1e-3 for r in reps):
                reps.append(s)
        for s in reps:
            try:
                traj = integrate(s, (0.0, pr.period), pr,
                                 IvpSettings(rel_tol=1e-9, abs_tol=1e-11))
                orb = solve_periodic(traj, pr, mesh=mesh, rescaling=rescaling)
            except Exception:
                continue
            if all(abs(orb.amplitude - o.amplitude) > 1e-5
                   or abs(om - o.params.omega) > 1e-12 for o in results):
                results.append(orb)
    return results


def _on_branch(branch, orbit, tol=1e-2):
    # tolerance absorbs the linear-interpolation error of the amplitude
    # curve between continuation points; distinct coexisting orbits are
    # separated by far more than this
    om = orbit.params.omega
    for i in _branch_crossings(branch, om):
        a, b = branch.points[i], branch.points[i + 1]
        frac = (om - a.parameter) / (b.parameter - a.parameter)
        amp = a.amplitude + frac * (b.amplitude - a.amplitude)
        if abs(amp - orbit.amplitude) < tol * max(1.0, orbit.amplitude):
            return True
    return False


def detect_isola(params, rescaling, forcing_values, omega_window=(0.8, 2.7),
                 mesh=None, seeds_per_axis=8, settle_periods=200,
                 seed_omegas=(1.1, 1.5, 2.0), step=None,
                 expect_isola=None):
    """Classify the branch topology at each reported forcing value.

    For every value the main branch is continued over the frequency window;
    further attractors are hunted by settling a deterministic grid of
    initial conditions (high-amplitude impacting starts included) and
    re-converging them as periodic orbits.  An orbit off the main branch is
    continued in frequency: a branch closing into a loop disjoint from the
    main one classifies the value as ``isola``; secondary orbits merging
    with the main branch, or a main branch that itself carries the
    impacting fold pair, classify it as ``reconnected``; neither secondary
    orbits nor main-branch folds give ``no-isola``.

    ``expect_isola`` lists values where independent fold-curve data predicts
    an isola; if seeding then finds nothing the report status becomes
    ``inconclusive`` instead of a silent ``no-isola``.
    """
    mesh = mesh or Mesh.uniform(100)
    step = step or StepControls(ds=0.01, ds_max=0.06)
    expected = set(float(v) for v in np.atleast_1d(expect_isola)) \
        if expect_isola is not None else set()
    reports = []
    for value in np.atleast_1d(forcing_values):
        forcing = float(value) if rescaling is None \
            else float(value) / rescaling.displacement_ratio
        pr = params.with_value("forcing", forcing)
        main = frequency_response(pr, omega_window, mesh=mesh, step=step,
                                  rescaling=rescaling)
        report = IsolaReport(
            forcing_reported=float(value), classification="no-isola",
            main_fold_count=len(main.folds),
            main_max_amplitude=float(np.max(main.amplitudes)),
            main_branch=main)

        seeds = _settled_orbits(pr, seed_omegas, mesh, rescaling,
                                seeds_per_axis, settle_periods)
        off_branch = [o for o in seeds if not _on_branch(main, o)]

        if off_branch:
            orb = max(off_branch, key=lambda o: o.amplitude)
            sec = continue_branch(orb, "omega", omega_window, step=step,
                                  rescaling=rescaling, direction=1.0,
                                  mesh=mesh)
            report.secondary_branch = sec
            report.secondary_fold_count = len(sec.folds)
            report.secondary_closed = sec.closed
            if sec.closed:
                report.classification = "isola"
                report.detail = (f"secondary branch closed into a loop with "
                                 f"{len(sec.folds)} folds")
            else:
                report.classification = "reconnected"
                report.detail = "secondary orbits connect to the main branch"
        elif report.main_fold_count >= 2:
            report.classification = "reconnected"
            report.detail = "impacting segment lies on the main branch"
        else:
            report.classification = "no-isola"
            report.detail = "single low-amplitude branch, no secondary orbits"
            if float(value) in expected:
                report.status = "inconclusive"
                report.detail += ("; fold-curve data predicts an isola "
                                  "but seeding found none")
        reports.append(report)
    return reports
