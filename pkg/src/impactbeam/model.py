"""Dimensionless model of a base-driven cantilever vibrating between symmetric stops.

The beam with stops is reduced to a single degree of freedom.  Displacement is
scaled so the stops sit at ``|x1| = 1``; states are plain arrays ``(x1, x2)``
with ``x1`` the displacement and ``x2`` the velocity.  In free flight the
oscillator is linear; during contact the stiffness grows by a factor
``1 + alpha``, the damping by ``1 + beta`` and the effective base forcing by
``1 + nu``.  The piecewise system is replaced by a smooth blend of the two
phases through the switching function ``H(x1, p) = 1 / (1 + (x1^2)^p)``,
with the sign of the contact offset force smoothed by ``tanh(k_sign * x1)``.

The module also provides first-principles estimates of the physical stiffness,
stiffness ratio and natural frequency from the measured beam geometry, using
the static cubic deflection shape, plus the bookkeeping needed to convert the
internal forcing/displacement scales to the laser-measured reporting scales.

All functions are pure and accept scalar or broadcastable array arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

__all__ = [
    "ModelParams",
    "BeamGeometry",
    "Rescaling",
    "switching_h",
    "rhs_smooth",
    "rhs_piecewise",
    "jacobian_state",
    "jacobian_params",
    "restoring_force",
    "restoring_force_slope",
    "smoothing_monotone_threshold",
    "estimate_alpha",
    "estimate_tip_stiffness",
    "estimate_natural_frequency",
    "rescale_forcing",
    "forcing_from_reported",
    "rescaling_from_geometry",
    "PARAM_NAMES",
]

PARAM_NAMES = ("xi", "beta", "alpha", "nu", "forcing", "omega", "p")


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameter vector of the smoothed oscillator.

    Parameters
    ----------
    xi : float
        Free-flight damping ratio, > 0.
    beta : float
        Relative damping increment during contact, >= 0.
    alpha : float
        Relative stiffness increment during contact, >= 0.
    nu : float
        Relative forcing increment during contact (0 keeps the forcing
        continuous, 1 doubles it in contact).
    forcing : float
        Dimensionless base-forcing amplitude, >= 0.
    omega : float
        Dimensionless driving frequency, > 0.  The response period is
        ``2 * pi / omega``.
    p : float
        Smoothing exponent of the switching function, > 0.  Larger values
        localize the free/contact transition more sharply.
    k_sign : float
        Gain of the tanh approximation of the contact offset sign, > 0.
        Held at 100 by default and excluded from continuation.
    """

    xi: float = 0.03
    beta: float = 0.885
    alpha: float = 5.9
    nu: float = 0.0
    forcing: float = 0.2
    omega: float = 1.0
    p: float = 100.0
    k_sign: float = 100.0

    def __post_init__(self):
        positive = {"xi": self.xi, "omega": self.omega, "p": self.p,
                    "k_sign": self.k_sign}
        for name, value in positive.items():
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        nonneg = {"beta": self.beta, "alpha": self.alpha,
                  "forcing": self.forcing}
        for name, value in nonneg.items():
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
        if not np.isfinite(self.nu):
            raise ValueError(f"nu must be finite, got {self.nu!r}")

    @property
    def period(self):
        """Forcing period 2*pi/omega."""
        return 2.0 * math.pi / self.omega

    def with_value(self, name, value):
        """Copy with one continuation parameter replaced."""
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {name!r}")
        return replace(self, **{name: float(value)})


@dataclass(frozen=True)
class BeamGeometry:
    """Measured beam data feeding the static estimators (SI units).

    ``stop_position`` and ``mass_position`` are axial distances from the
    clamped end; the gap is the transverse clearance between beam and stop.
    """

    modulus: float          # E, Pa
    area_moment: float      # second moment of area, m^4
    cross_section: float    # m^2
    density: float          # kg/m^3
    lumped_mass: float      # kg
    length: float           # m
    stop_position: float    # m
    mass_position: float    # m
    gap: float              # m

    def __post_init__(self):
        for name in ("modulus", "area_moment", "cross_section", "density",
                     "lumped_mass", "length", "stop_position",
                     "mass_position", "gap"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not (self.stop_position < self.mass_position <= self.length):
            raise ValueError(
                "need stop_position < mass_position <= length, got "
                f"{self.stop_position}, {self.mass_position}, {self.length}")

    @property
    def stop_ratio(self):
        """Stop position relative to the effective (mass-point) span."""
        return self.stop_position / self.mass_position


# ---------------------------------------------------------------------------
# switching function and derivatives
# ---------------------------------------------------------------------------

def _switch_core(x1, p):
    """H, H*(1-H) and log(x1^2), saturation-safe.

    Everything is routed through expit of p*log(x1^2) so that extreme
    exponents saturate cleanly to 0/1 instead of overflowing.
    """
    x1 = np.asarray(x1, dtype=float)
    with np.errstate(divide="ignore"):
        logsq = np.log(x1 * x1)
    s = p * logsq
    h = expit(-s)
    q = h * expit(s)        # exactly 0 where x1 == 0
    return h, q, logsq


def switching_h(x1, p):
    """Smooth switch between free flight (H=1) and contact (H=0).

    ``H(x1, p) = 1 / (1 + (x1^2)^p)``; even in ``x1``, equal to 1/2 at
    ``|x1| = 1`` for every exponent, and saturating monotonically to a step
    as ``p`` grows.  Overflow of the power is handled in log space, so the
    output is always finite.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p!r}")
    h, _, _ = _switch_core(x1, p)
    return h if h.ndim else float(h)


def _switch_terms(x1, p, second=False, dp=False):
    """Derivatives of H needed by the Jacobians.

    Returns (h, dh_dx, d2h_dx2, dh_dp, d2h_dxdp); the last three are None
    unless requested.  The x1 == 0 entries use the interior limits, valid
    for p > 1.
    """
    x1 = np.asarray(x1, dtype=float)
    h, q, logsq = _switch_core(x1, p)
    zero = x1 == 0.0
    safe = np.where(zero, 1.0, x1)
    dh_dx = np.where(zero, 0.0, -(2.0 * p / safe) * q)
    d2h_dx2 = d2h_dxdp = dh_dp = None
    if second:
        d2h_dx2 = np.where(
            zero, 0.0,
            (2.0 * p / (safe * safe)) * q * (1.0 + 2.0 * p * (1.0 - 2.0 * h)))
    if dp:
        lg = np.where(zero, 0.0, logsq)
        dh_dp = -lg * q
        d2h_dxdp = np.where(
            zero, 0.0,
            -(2.0 / safe) * q * (1.0 - p * lg * (1.0 - 2.0 * h)))
    return h, dh_dx, d2h_dx2, dh_dp, d2h_dxdp


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

def _forced_pieces(x1, x2, cosphi, params):
    """Second components of the free and contact fields at given cos(phase)."""
    pr = params
    drive = pr.forcing * pr.omega ** 2 * cosphi
    th = np.tanh(pr.k_sign * x1)
    f1 = -x1 - 2.0 * pr.xi * x2 + drive
    f2 = (-(1.0 + pr.alpha) * x1 - 2.0 * pr.xi * (1.0 + pr.beta) * x2
          + pr.alpha * th + (1.0 + pr.nu) * drive)
    return f1, f2, th, drive


def rhs_forced(x1, x2, cosphi, params):
    """Smoothed field with the forcing phase supplied as cos(omega*t).

    Vectorized kernel shared by the time-domain wrapper and the collocation
    solver (which works in normalized phase).  Returns ``(dx1, dx2)``.
    """
    f1, f2, _, _ = _forced_pieces(x1, x2, cosphi, params)
    h, _, _ = _switch_core(x1, params.p)
    return np.asarray(x2, dtype=float) + 0.0 * h, f2 + h * (f1 - f2)


def jacobian_forced(x1, x2, cosphi, params):
    """Rows (j21, j22) of the state Jacobian at given cos(phase).

    The first row of the Jacobian is constant (0, 1) and is left to callers.
    """
    pr = params
    f1, f2, th, _ = _forced_pieces(x1, x2, cosphi, params)
    h, dh_dx, _, _, _ = _switch_terms(x1, pr.p)
    s2 = 1.0 - th * th
    diff = f1 - f2
    ddiff_dx1 = pr.alpha * (1.0 - pr.k_sign * s2)
    j21 = (-(1.0 + pr.alpha) + pr.alpha * pr.k_sign * s2
           + dh_dx * diff + h * ddiff_dx1)
    j22 = -2.0 * pr.xi * (1.0 + pr.beta) + 2.0 * pr.xi * pr.beta * h
    return j21, j22


def hessian_forced(x1, x2, cosphi, params):
    """Second derivatives (d2g2/dx1^2, d2g2/dx1 dx2) of the smoothed field.

    Needed by the extended fold systems; d2g2/dx2^2 vanishes identically.
    """
    pr = params
    f1, f2, th, _ = _forced_pieces(x1, x2, cosphi, params)
    h, dh_dx, d2h_dx2, _, _ = _switch_terms(x1, pr.p, second=True)
    s2 = 1.0 - th * th
    diff = f1 - f2
    hxx = (d2h_dx2 * diff
           + 2.0 * pr.alpha * dh_dx * (1.0 - pr.k_sign * s2)
           + 2.0 * pr.alpha * pr.k_sign ** 2 * th * s2 * (h - 1.0))
    hxy = 2.0 * pr.xi * pr.beta * dh_dx
    return hxx, hxy


def param_derivative_forced(x1, x2, cosphi, params, which):
    """d g2 / d(parameter) at fixed state and fixed forcing phase."""
    pr = params
    h, dh_dx, _, dh_dp, _ = _switch_terms(x1, pr.p, dp=(which == "p"))
    oneminus = 1.0 - h
    if which == "xi":
        return -2.0 * np.asarray(x2, float) * (1.0 + pr.beta * oneminus)
    if which == "beta":
        return oneminus * (-2.0 * pr.xi * np.asarray(x2, float))
    if which == "alpha":
        th = np.tanh(pr.k_sign * x1)
        return oneminus * (th - np.asarray(x1, float))
    if which == "nu":
        return oneminus * pr.forcing * pr.omega ** 2 * cosphi
    if which == "forcing":
        return pr.omega ** 2 * cosphi * (1.0 + pr.nu * oneminus)
    if which == "omega":
        return 2.0 * pr.forcing * pr.omega * cosphi * (1.0 + pr.nu * oneminus)
    if which == "p":
        f1, f2, _, _ = _forced_pieces(x1, x2, cosphi, params)
        return dh_dp * (f1 - f2)
    raise ValueError(f"unsupported parameter selector {which!r}")


def jacobian_param_derivative_forced(x1, x2, cosphi, params, which):
    """d(j21, j22)/d(parameter) at fixed state and phase (fold systems)."""
    pr = params
    zeros = np.zeros(np.broadcast(x1, x2, cosphi).shape)
    if which == "forcing":
        _, dh_dx, _, _, _ = _switch_terms(x1, pr.p)
        return dh_dx * (-pr.nu * pr.omega ** 2 * cosphi), zeros
    if which == "omega":
        _, dh_dx, _, _, _ = _switch_terms(x1, pr.p)
        return dh_dx * (-2.0 * pr.nu * pr.forcing * pr.omega * cosphi), zeros
    if which == "p":
        f1, f2, th, _ = _forced_pieces(x1, x2, cosphi, params)
        _, dh_dx, _, dh_dp, d2h_dxdp = _switch_terms(x1, pr.p, dp=True)
        s2 = 1.0 - th * th
        dj21 = (d2h_dxdp * (f1 - f2)
                + dh_dp * pr.alpha * (1.0 - pr.k_sign * s2))
        dj22 = 2.0 * pr.xi * pr.beta * dh_dp
        return dj21, dj22
    raise ValueError(f"unsupported parameter selector {which!r}")


def rhs_smooth(x, t, params):
    """Smoothed vector field at state ``x = (x1, x2)`` and time ``t``."""
    x = np.asarray(x, dtype=float)
    cosphi = np.cos(params.omega * np.asarray(t, dtype=float))
    g1, g2 = rhs_forced(x[0], x[1], cosphi, params)
    return np.array([g1, g2]) if np.ndim(g1) == 0 else np.stack([g1, g2])


def rhs_piecewise(x, t, params):
    """Piecewise-linear field; ``|x1| >= 1`` takes the contact branch."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[0], x[1]
    cosphi = np.cos(params.omega * np.asarray(t, dtype=float))
    f1, f2, _, _ = _forced_pieces(x1, x2, cosphi, params)
    contact = np.abs(x1) >= 1.0
    # exact sign during contact, replacing the tanh approximation
    f2_exact = f2 + params.alpha * (np.sign(x1) - np.tanh(params.k_sign * x1))
    g2 = np.where(contact, f2_exact, f1)
    if np.ndim(g2) == 0:
        return np.array([float(x2), float(g2)])
    return np.stack([np.broadcast_to(x2, g2.shape).astype(float), g2])


def jacobian_state(x, t, params):
    """Analytic state Jacobian of the smoothed field, shape (2, 2)."""
    x = np.asarray(x, dtype=float)
    cosphi = np.cos(params.omega * np.asarray(t, dtype=float))
    j21, j22 = jacobian_forced(x[0], x[1], cosphi, params)
    if np.ndim(j21) == 0:
        return np.array([[0.0, 1.0], [float(j21), float(j22)]])
    out = np.zeros((2, 2) + j21.shape)
    out[0, 1] = 1.0
    out[1, 0] = j21
    out[1, 1] = j22
    return out


def jacobian_params(x, t, params, which):
    """Partial derivative of the smoothed field w.r.t. one scalar parameter.

    The ``omega`` derivative is taken at fixed time, so it carries both the
    amplitude factor of the drive and the phase term from cos(omega*t).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    cosphi = np.cos(params.omega * t)
    d2 = param_derivative_forced(x[0], x[1], cosphi, params, which)
    if which == "omega":
        sinphi = np.sin(params.omega * t)
        h, _, _ = _switch_core(x[0], params.p)
        scale = 1.0 + params.nu * (1.0 - h)
        d2 = d2 - params.forcing * params.omega ** 2 * t * sinphi * scale
    if np.ndim(d2) == 0:
        return np.array([0.0, float(d2)])
    return np.stack([np.zeros_like(d2), d2])


# ---------------------------------------------------------------------------
# restoring force
# ---------------------------------------------------------------------------

def restoring_force(x1, params, smoothed=True):
    """Elastic restoring force as a function of displacement.

    The piecewise force is continuous and piecewise linear with slope 1
    inside the stops and ``1 + alpha`` beyond them.  The smoothed force can
    dip (soften) near ``|x1| = 1`` when the exponent ``p`` is too small.
    """
    x1 = np.asarray(x1, dtype=float)
    if not smoothed:
        contact = np.abs(x1) >= 1.0
        f = np.where(contact,
                     (1.0 + params.alpha) * x1 - params.alpha * np.sign(x1),
                     x1)
        return f if f.ndim else float(f)
    h, _, _ = _switch_core(x1, params.p)
    th = np.tanh(params.k_sign * x1)
    f = h * x1 + (1.0 - h) * ((1.0 + params.alpha) * x1 - params.alpha * th)
    return f if f.ndim else float(f)


def restoring_force_slope(x1, params):
    """Derivative of the smoothed restoring force."""
    x1 = np.asarray(x1, dtype=float)
    h, dh_dx, _, _, _ = _switch_terms(x1, params.p)
    th = np.tanh(params.k_sign * x1)
    s2 = 1.0 - th * th
    slope = (1.0 - dh_dx * params.alpha * (x1 - th)
             + (1.0 - h) * params.alpha * (1.0 - params.k_sign * s2))
    return slope if slope.ndim else float(slope)


def restoring_force_is_monotone(params, x_max=3.0, samples=4001):
    """True if the smoothed restoring force is nondecreasing on [0, x_max]."""
    x = np.linspace(0.0, x_max, samples)
    return bool(np.min(restoring_force_slope(x, params)) >= -1e-12)


def smoothing_monotone_threshold(alpha, k_sign=100.0, x_max=3.0,
                                 log10p_bracket=(0.0, 4.0), tol=1e-3):
    """Smallest exponent (as log10 p) with a monotone smoothed force.

    Located by bisection on the minimum slope over [0, x_max].  Below the
    returned threshold the force has a softening dip near the stop, the
    mechanism behind smoothing-induced folds.
    """
    def monotone(log10p):
        pr = ModelParams(alpha=alpha, k_sign=k_sign, p=10.0 ** log10p)
        return restoring_force_is_monotone(pr, x_max=x_max)

    lo, hi = log10p_bracket
    if monotone(lo):
        return lo
    if not monotone(hi):
        raise ValueError("force not monotone even at the upper bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if monotone(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# static estimators from beam geometry
# ---------------------------------------------------------------------------

def _static_shape(zeta):
    """Normalized static tip-load deflection shape, cubic with unit tip value."""
    zeta = np.asarray(zeta, dtype=float)
    return zeta * zeta * (3.0 - zeta) / 2.0


def _contact_denominator(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"stop ratio must lie in (0, 1), got {gamma!r}")
    den = 1.0 - 0.25 * (3.0 - gamma) ** 2 * gamma
    if den <= 0.0:
        raise ValueError(
            f"stop ratio {gamma!r} outside the physical stiffness range")
    return den


def estimate_alpha(geometry=None, gamma=None):
    """Relative tip-stiffness increase caused by the stop.

    ``alpha = (1 - (3 - gamma)^2 * gamma / 4)^-1 - 1`` where ``gamma`` is the
    stop position over the effective span (mass position).  Strictly
    increasing in gamma, 0 in the clamped-end limit and unbounded as the stop
    approaches the tip.
    """
    if gamma is None:
        gamma = geometry.stop_ratio
    return 1.0 / _contact_denominator(float(gamma)) - 1.0


def estimate_tip_stiffness(geometry, contact=False):
    """Static transverse tip stiffness in N/m over the effective span.

    Free flight gives the textbook ``3 E I / L^3`` cantilever value; in
    contact the stop acts as an extra intermediate support and the stiffness
    rises by the factor ``1 + alpha``.
    """
    span = geometry.mass_position
    k_free = 3.0 * geometry.modulus * geometry.area_moment / span ** 3
    if not contact:
        return k_free
    return k_free / _contact_denominator(geometry.stop_ratio)


def estimate_natural_frequency(geometry):
    """Free-flight natural frequency in Hz by a one-term Rayleigh quotient.

    Uses the static cubic shape over the effective span, with the lumped
    mass at the span end plus the consistent beam-mass contribution
    (integral of the squared shape = 33/140 of the span mass).
    """
    span = geometry.mass_position
    k = 3.0 * geometry.modulus * geometry.area_moment / span ** 3
    beam_mass = geometry.density * geometry.cross_section * span
    m_eff = geometry.lumped_mass + beam_mass * (33.0 / 140.0)
    return math.sqrt(k / m_eff) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# reporting-scale conversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rescaling:
    """Conversion between internal and laser-point reporting scales.

    The model normalizes displacement by the grazing amplitude of the mass
    point; experiments report displacement at the laser point, normalized by
    the laser-point grazing displacement instead.  The record carries the
    mass-to-force ratio m/d, the laser-point grazing displacement, a base
    (shaker) amplitude, and the mass-point grazing displacement that fixes
    the internal scale; ratios of the two grazing displacements convert
    forcing and displacement amplitudes between the scales.
    """

    mass_force_ratio: float = 2.0 / 3.0   # m/d
    grazing_displacement: float = 1.0     # laser point, m
    base_amplitude: float = 1.0           # shaker amplitude, m
    grazing_model: float = None           # mass point, m; defaults to laser value

    def __post_init__(self):
        if self.mass_force_ratio <= 0.0:
            raise ValueError("mass_force_ratio must be positive")
        if self.grazing_displacement <= 0.0:
            raise ValueError("grazing_displacement must be positive")
        if self.grazing_model is None:
            object.__setattr__(self, "grazing_model",
                               self.grazing_displacement)
        if self.grazing_model <= 0.0:
            raise ValueError("grazing_model must be positive")

    @property
    def displacement_ratio(self):
        """Factor converting internal amplitudes to laser-scale ones."""
        return self.grazing_model / self.grazing_displacement

    def forcing_from_base_amplitude(self, amplitude=None):
        """Laser-scale forcing produced by a given shaker amplitude."""
        a = self.base_amplitude if amplitude is None else amplitude
        return a / (self.mass_force_ratio * self.grazing_displacement)

    def to_reported(self, forcing):
        return np.asarray(forcing, float) * self.displacement_ratio

    def from_reported(self, reported):
        return np.asarray(reported, float) / self.displacement_ratio


def rescale_forcing(params, rescaling):
    """Forcing amplitude on the laser reporting scale for given parameters."""
    return float(rescaling.to_reported(params.forcing))


def forcing_from_reported(reported, rescaling):
    """Inverse of :func:`rescale_forcing`."""
    return float(rescaling.from_reported(reported))


def rescaling_from_geometry(geometry, mass_force_ratio=2.0 / 3.0,
                            laser_position=None):
    """Build the reporting-scale record from beam geometry.

    The mass-point grazing displacement follows from the gap and the static
    shape at the stop; the laser-point one extends the shape linearly beyond
    the mass (zero curvature past the load) to ``laser_position`` (defaults
    to the beam end).
    """
    span = geometry.mass_position
    z_laser = geometry.length if laser_position is None else laser_position
    if z_laser < span:
        raise ValueError("laser position must lie at or beyond the mass")
    grazing_model = geometry.gap / float(_static_shape(geometry.stop_ratio))
    # shape value 1 and slope 3/2 at the span end
    extension = 1.0 + 1.5 * (z_laser - span) / span
    return Rescaling(mass_force_ratio=mass_force_ratio,
                     grazing_displacement=grazing_model * extension,
                     base_amplitude=geometry.gap,
                     grazing_model=grazing_model)
