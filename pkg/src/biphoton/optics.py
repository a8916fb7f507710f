"""Detection chain: lens mapping, coincidence profiles, apertures, defocus.

Distributions are expressed in crystal-plane coordinates for the near field
(imaging magnification is taken as compensated) and in detector coordinates
``x = f_q q / k`` for the far field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .distributions import (
    DensitySamples,
    _check_tail,
    conditional_profile,
)
from .exceptions import TailBoundError
from .specfun import DEFAULT_QUADRATURE, QuadratureSpec, exp1_imag, integrate
from .states import Representation, SpdcBiphoton

__all__ = [
    "DetectionGeometry",
    "far_field_map",
    "far_field_coincidence",
    "near_field_coincidence",
    "aperture_convolve",
    "displaced_position_amplitude",
    "displaced_near_field",
    "displaced_variance",
    "is_singular_plane",
    "default_x_grid",
]


@dataclass(frozen=True)
class DetectionGeometry:
    """Lens and aperture sizes, all in meters (defaults: the reported setup)."""

    focal_length: float = 0.15
    slit_width: float = 50e-6
    fiber_core_diameter: float = 4.7e-6

    def __post_init__(self):
        for name in ("focal_length", "slit_width", "fiber_core_diameter"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, value)


def far_field_map(x, geometry: DetectionGeometry, k: float):
    """Transverse momentum ``q = k x / f_q`` imaged to detector position ``x``."""
    return k * np.asarray(x, dtype=float) / geometry.focal_length


def _density_from_profile(prof, axis, to_scaled, jacobian, rep, fixed, units, spec):
    axis = np.asarray(axis, dtype=float)
    t = to_scaled(axis)
    lo, hi = float(t[0]), float(t[-1])
    z = integrate(prof, lo, hi, spec, points=prof.breakpoints(lo, hi))
    _check_tail(prof, lo, hi, z)
    return DensitySamples(axis, prof(t) / z * jacobian, rep, fixed, units)


def default_x_grid(state: SpdcBiphoton, plane: str, geometry: DetectionGeometry | None = None,
                   n_points: int = 4096, x1: float = 0.0):
    """Symmetric detector grid spanning ten envelope widths around the peak."""
    geometry = geometry or DetectionGeometry()
    if plane == "far":
        half = 10.0 * geometry.focal_length / (state.wavenumber * state.pump_waist)
    elif plane == "near":
        half = 10.0 * state.pump_waist
    else:
        raise ValueError(f"plane must be 'near' or 'far', got {plane!r}")
    return np.linspace(-x1 - half, -x1 + half, int(n_points))


def far_field_coincidence(
    state: SpdcBiphoton,
    geometry: DetectionGeometry,
    x1: float,
    x2_grid,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> DensitySamples:
    """Conditional far-field coincidence profile ``C_q(x1, x2)`` over ``x2``.

    The returned density is per meter of detector position; it is the
    momentum conditional density pushed through ``q = k x / f_q``.
    """
    kf = state.wavenumber / geometry.focal_length
    q1 = kf * float(x1)
    prof = conditional_profile(state, Representation.MOMENTUM, q1)
    return _density_from_profile(
        prof, x2_grid, lambda x: kf * x / prof.scale, kf / prof.scale,
        Representation.MOMENTUM, float(x1), "m", spec,
    )


def near_field_coincidence(
    state: SpdcBiphoton,
    x1: float,
    x2_grid,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> DensitySamples:
    """Conditional near-field profile ``C_x(x1, x2)`` over ``x2``."""
    prof = conditional_profile(state, Representation.POSITION, float(x1))
    return _density_from_profile(
        prof, x2_grid, lambda x: x / prof.scale, 1.0 / prof.scale,
        Representation.POSITION, float(x1), "m", spec,
    )


def aperture_convolve(density: DensitySamples, aperture_width: float) -> DensitySamples:
    """Convolve with a unit-area top-hat of full width ``aperture_width``.

    The box average is taken from a cubic spline of the cumulative
    distribution, so widths need not be a multiple of the grid spacing.
    Mass leaking past the grid ends is dropped and the result renormalized.
    """
    w = float(aperture_width)
    if not w >= 0:
        raise ValueError("aperture_width must be >= 0")
    if w == 0:
        return density
    x = density.axis
    h = density.spacing
    y = density.density
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * h)])
    # pad so the spline is flat outside the sampled range
    pad = int(math.ceil(w / h)) + 2
    xp = np.concatenate([x[0] - h * np.arange(pad, 0, -1), x, x[-1] + h * np.arange(1, pad + 1)])
    cp = np.concatenate([np.zeros(pad), cdf, np.full(pad, cdf[-1])])
    spline = CubicSpline(xp, cp)
    if w < 1e-6 * h:
        # difference quotient would cancel catastrophically; take its limit
        conv = spline(x, 1)
    else:
        conv = (spline(x + w / 2) - spline(x - w / 2)) / w
    conv = np.clip(conv, 0.0, None)
    conv = conv / np.trapezoid(conv, x)
    return DensitySamples(x, conv, density.representation,
                          density.fixed_conjugate_value, density.units)


def _defocused_phase_matching(rho, b, zeta):
    """Radial 2D transform of ``sinc(b d^2) exp(-i zeta d^2)`` at radius ``rho``.

    Up to a constant factor, writing ``sinc`` as an average of plane waves
    over ``tau in [-b, b]`` and using the Laplace transform of ``J0`` gives
    ``I = integral over w in [-b - zeta, b - zeta] of exp(-i rho^2/(4w)) / w``,
    which reduces to exponential integrals ``E1(i A)``.  At ``zeta = 0`` it is
    ``-2 i (pi/2) sint(rho^2/(4b))``.
    """
    rho = np.asarray(rho, dtype=float)
    w_lo, w_hi = -b - zeta, b - zeta
    out = np.empty(rho.shape, dtype=complex)
    r2 = rho * rho / 4.0
    pos = r2 > 0

    def e1_at(wv):
        # E1(i r2 / |w|) with E1(i inf) = 0
        if wv == 0:
            return np.zeros(np.count_nonzero(pos), dtype=complex)
        return exp1_imag(r2[pos] / abs(wv))

    val = np.zeros(np.count_nonzero(pos), dtype=complex)
    if w_hi > 0:
        # positive part of the w range: integral over [max(w_lo, 0), w_hi]
        val += e1_at(w_hi) - (e1_at(w_lo) if w_lo > 0 else 0.0)
    if w_lo < 0:
        # negative part: w in [w_lo, min(w_hi, 0)], mirrored to positive w
        val -= np.conj(e1_at(w_lo)) - (np.conj(e1_at(w_hi)) if w_hi < 0 else 0.0)
    out[pos] = val
    if (~pos).any():
        # rho -> 0 limit; the straddling case picks up -i pi from the pole
        if w_lo == 0 or w_hi == 0:
            # |z| = L/2: logarithmic (integrable) singularity at rho = 0
            lim = complex(np.inf, 0.0)
        elif w_lo < 0 < w_hi:
            lim = math.log(abs(w_hi) / abs(w_lo)) - 1j * math.pi
        else:
            lim = math.log(abs(w_hi) / abs(w_lo)) + 0j
        out[~pos] = lim
    return out


def _zeta(state: SpdcBiphoton, z: float) -> float:
    zeta = float(z) / (4.0 * state.wavenumber)
    b = state.b
    # z = +-L/2 must hit the singular configuration exactly
    if abs(abs(zeta) - b) <= 1e-12 * b:
        zeta = math.copysign(b, zeta)
    return zeta


def is_singular_plane(state: SpdcBiphoton, z: float) -> bool:
    """True when ``z = +-L/2``, where the crystal face is imaged."""
    return abs(_zeta(state, z)) == state.b


def displaced_position_amplitude(state: SpdcBiphoton, z: float, x1, x2):
    """Complex position amplitude with the crystal displaced by ``z``.

    Both photons acquire ``exp(-i |q_j|^2 z / (2k))``; in sum/difference
    momenta the phase splits into ``exp(-i zeta Q^2) exp(-i zeta d^2)`` with
    ``zeta = z / (4k)``.  The pump factor transforms to a complex Gaussian
    and the phase-matching factor to :func:`_defocused_phase_matching`.
    Equal to :func:`~biphoton.states.position_amplitude` at ``z = 0``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    zeta = _zeta(state, z)
    c2 = state.pump_waist**2
    s = (x1 + x2) / 2.0
    d = np.abs(x1 - x2) / 2.0
    pump = np.exp(-(s * s) / (c2 + 4j * zeta)) * (c2 / (c2 + 4j * zeta))
    shape = np.broadcast(s, d).shape
    g = _defocused_phase_matching(np.broadcast_to(d, shape).ravel(), state.b, zeta)
    g = g.reshape(shape)
    finite = np.isfinite(g)
    out = pump * np.where(finite, g, 0.0) / (-1j * math.pi)
    out = np.where(finite, out, complex(np.inf, 0.0))
    return out[()] if out.ndim == 0 else out


def _displaced_window(state, z, x1):
    c = state.pump_waist
    zeta = _zeta(state, z)
    # |pump|^2 ~ exp(-(x1+x2)^2 / (2 c_z^2)) with c_z^2 = c^2 + (4 zeta / c)^2
    cz = math.sqrt(c * c + (4.0 * zeta / c) ** 2)
    return -x1, cz


def _displaced_points(state, x1, lo, hi):
    c = state.pump_waist
    prof = conditional_profile(state, Representation.POSITION, x1)
    return np.append(prof.breakpoints(lo / c, hi / c) * c, x1)


def displaced_variance(
    state: SpdcBiphoton,
    z: float,
    x1: float = 0.0,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Conditional near-field variance (m^2) at displacement ``z``, by quadrature."""
    z = float(z)
    if abs(z) > state.crystal_length:
        raise ValueError("|z| must not exceed the crystal length")
    x1 = float(x1)
    center, cz = _displaced_window(state, z, x1)
    lo, hi = center - 10.0 * cz, center + 10.0 * cz
    c = state.pump_waist
    pts = _displaced_points(state, x1, lo, hi) / c

    def f(t):
        return np.abs(displaced_position_amplitude(state, z, x1, t * c)) ** 2

    budget = QuadratureSpec(spec.relative_tolerance, spec.absolute_tolerance,
                            max(spec.max_subdivisions, 200000),
                            spec.truncation_radius_factor)
    mass = integrate(f, lo / c, hi / c, budget, points=pts)
    mean = integrate(lambda t: t * f(t), lo / c, hi / c, budget, points=pts) / mass
    var = integrate(lambda t: (t - mean) ** 2 * f(t), lo / c, hi / c, budget, points=pts) / mass
    return var * c * c


def displaced_near_field(
    state: SpdcBiphoton,
    z: float,
    x1: float,
    x2_grid,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> DensitySamples:
    """Near-field conditional profile with the crystal displaced by ``z``.

    Requires ``|z| <= L``.  At ``|z| = L/2`` the crystal face is imaged and
    the amplitude has an integrable logarithmic singularity at ``x2 = x1``;
    there a grid point sitting on the singularity carries its cell average
    and the samples are normalized on the grid (trapezoid), since point
    samples cannot resolve the peak.  Elsewhere the normalization constant
    comes from quadrature.  The tail-mass check uses the (defocused) pump
    envelope times the largest phase-matching intensity on the grid.
    """
    z = float(z)
    if abs(z) > state.crystal_length:
        raise ValueError("|z| must not exceed the crystal length")
    x2 = np.asarray(x2_grid, dtype=float)
    x1 = float(x1)
    c = state.pump_waist
    zeta = _zeta(state, z)
    singular = is_singular_plane(state, z)

    def intensity(x):
        return np.abs(displaced_position_amplitude(state, z, x1, x)) ** 2

    lo, hi = float(x2[0]), float(x2[-1])
    center, cz = _displaced_window(state, z, x1)
    pts = _displaced_points(state, x1, lo, hi)
    inside = pts[(pts > lo) & (pts < hi)]
    budget = QuadratureSpec(spec.relative_tolerance, spec.absolute_tolerance,
                            max(spec.max_subdivisions, 200000),
                            spec.truncation_radius_factor)
    zmass = integrate(lambda t: intensity(t * c), lo / c, hi / c, budget, points=inside / c)

    dens = intensity(x2)
    hit = ~np.isfinite(dens)
    if hit.any():
        h = x2[1] - x2[0]
        for i in np.flatnonzero(hit):
            a, b = (x2[i] - h / 2) / c, (x2[i] + h / 2) / c
            dens[i] = integrate(lambda t: intensity(t * c), a, b, budget, points=[x1 / c]) * c / h

    rho = np.abs(x1 - x2) / 2.0
    g2 = np.abs(_defocused_phase_matching(rho[rho > 0], state.b, zeta)) ** 2 / math.pi**2
    gmax = float(g2.max()) if g2.size else 1.0
    env = math.sqrt(math.pi / 2) * cz / c * (
        math.erfc((center - lo) / (math.sqrt(2) * cz)) + math.erfc((hi - center) / (math.sqrt(2) * cz))
    )
    tail = env * gmax
    if tail / (zmass + tail) > 1e-6:
        raise TailBoundError("displaced near-field grid truncates too much mass")
    if singular:
        dens = dens / np.trapezoid(dens, x2)
    else:
        dens = dens / (zmass * c)
    return DensitySamples(x2, dens, Representation.POSITION, x1, "m")
