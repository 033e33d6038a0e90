"""Adaptive time integration of the smoothed oscillator.

A thin layer over an embedded 5(4) Runge-Kutta pair with dense output,
plus simultaneous integration of the variational equations for the
monodromy matrix of a periodic orbit.  Used to seed periodic orbits, to
settle transients when hunting coexisting attractors, and as an
independent cross-check of the collocation solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import jacobian_state, rhs_smooth

__all__ = ["IvpSettings", "Trajectory", "IntegrationError", "integrate",
           "monodromy", "settle", "floquet_multipliers"]


class IntegrationError(RuntimeError):
    """Raised when the integrator cannot proceed (step underflow, blowup)."""


@dataclass(frozen=True)
class IvpSettings:
    """Tolerances and step limits for the adaptive integrator.

    Defaults suit everyday use; cross-validation of collocation results
    should use :meth:`strict`.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    dense_output: bool = True

    def __post_init__(self):
        for name, value in (("rel_tol", self.rel_tol),
                            ("abs_tol", self.abs_tol)):
            if not 0.0 < value <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {value!r}")
        if self.max_step <= 0.0:
            raise ValueError("max_step must be positive")

    @staticmethod
    def strict():
        """Verification-grade tolerances."""
        return IvpSettings(rel_tol=1e-10, abs_tol=1e-12)


class Trajectory:
    """Integration result: sample times, states and a dense interpolant."""

    def __init__(self, times, states, interpolant=None):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.interpolant = interpolant
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")

    def __call__(self, t):
        """Evaluate the dense interpolant at arbitrary interior times."""
        if self.interpolant is None:
            raise ValueError("trajectory carries no dense interpolant")
        return self.interpolant(t)

    @property
    def end_state(self):
        return self.states[:, -1].copy()

    @property
    def t_end(self):
        return float(self.times[-1])


def _step_cap(params, settings):
    # keep the forcing phase resolved regardless of requested max_step
    return min(settings.max_step, params.period / 50.0)


def integrate(x0, t_span, params, settings=None):
    """Integrate the smoothed system over ``t_span`` from state ``x0``."""
    settings = settings or IvpSettings()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"empty time span {t_span!r}")

    def rhs(t, x):
        return rhs_smooth(x, t, params)

    sol = solve_ivp(rhs, (t0, t1), np.asarray(x0, dtype=float),
                    method="RK45", rtol=settings.rel_tol,
                    atol=settings.abs_tol, max_step=_step_cap(params, settings),
                    dense_output=settings.dense_output)
    if not sol.success:
        raise IntegrationError(
            f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"non-finite state near t={sol.t[-1]:.6g}")
    return Trajectory(sol.t, sol.y, sol.sol if settings.dense_output else None)


def monodromy(orbit_start, params, settings=None):
    """Monodromy matrix of the period map starting at ``orbit_start``.

    Integrates state and variational equations together over one forcing
    period with the identity as initial variation; ``orbit_start`` is
    expected to lie on a periodic orbit.
    """
    settings = settings or IvpSettings.strict()
    T = params.period

    def rhs(t, z):
        x = z[:2]
        Y = z[2:].reshape(2, 2)
        J = jacobian_state(x, t, params)
        return np.concatenate([rhs_smooth(x, t, params), (J @ Y).ravel()])

    z0 = np.concatenate([np.asarray(orbit_start, dtype=float),
                         np.eye(2).ravel()])
    sol = solve_ivp(rhs, (0.0, T), z0, method="RK45",
                    rtol=settings.rel_tol, atol=settings.abs_tol,
                    max_step=_step_cap(params, settings))
    if not sol.success:
        raise IntegrationError(
            f"variational integration stopped at t={sol.t[-1]:.6g}: "
            f"{sol.message}")
    return sol.y[2:, -1].reshape(2, 2)


def floquet_multipliers(matrix):
    """Eigenvalues of a 2x2 monodromy matrix by the quadratic formula."""
    tr = matrix[0, 0] + matrix[1, 1]
    det = matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0]
    disc = complex(tr * tr - 4.0 * det) ** 0.5
    return np.array([(tr + disc) / 2.0, (tr - disc) / 2.0])


def settle(starts, n_periods, params, settings=None):
    """Integrate many initial states for whole forcing periods at once.

    ``starts`` has shape (n, 2).  All trajectories share one adaptive grid,
    which is fine for transient settling; returns the final states, again
    (n, 2), reached after exactly ``n_periods`` periods.
    """
    settings = settings or IvpSettings(rel_tol=1e-7, abs_tol=1e-9)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n = starts.shape[0]

    def rhs(t, z):
        x = z.reshape(n, 2).T
        g = rhs_smooth(x, t, params)
        return g.T.ravel()

    sol = solve_ivp(rhs, (0.0, n_periods * params.period), starts.ravel(),
                    method="RK45", rtol=settings.rel_tol,
                    atol=settings.abs_tol,
                    max_step=_step_cap(params, settings))
    if not sol.success:
        raise IntegrationError(f"settling failed: {sol.message}")
    return sol.y[:, -1].reshape(n, 2)
