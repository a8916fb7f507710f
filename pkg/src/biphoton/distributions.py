"""Conditional and inferred densities and variances.

Every conditional density handled here has the form, in a scaled
coordinate ``t = u2 / s`` with ``a = u1 / s``::

    rho(t | a) ~ exp(-(t + a)**2 / 2) * F(t - a)

where ``s`` is the natural width of the sum-coordinate factor and ``F`` is
the squared difference-coordinate factor:

=================  ==============  =============================
family / basis     scale ``s``     ``F(d)``
=================  ==============  =============================
Gaussian, q        sigma_+         exp(-P**2 d**2 / 2)
Gaussian, x        1/sigma_+       exp(-d**2 / (2 P**2))
SPDC, q            1/c             sinc(P**2 d**2 / 4)**2
SPDC, x            c               sint(d**2 / (4 P**2))**2
=================  ==============  =============================

so all moments are computed in dimensionless form and rescaled by ``s**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .exceptions import QuadratureError, TailBoundError
from .specfun import DEFAULT_QUADRATURE, QuadratureSpec, integrate, sinc, sint
from .states import BiphotonState, GaussianBiphoton, Representation, SpdcBiphoton

__all__ = [
    "DensitySamples",
    "ConditionalProfile",
    "conditional_profile",
    "conditional_density",
    "conditional_variance",
    "inferred_variance",
    "gaussian_conditional_variance",
    "TAIL_MASS_LIMIT",
    "DEFAULT_GRID_POINTS",
]

TAIL_MASS_LIMIT = 1e-6
# ceiling on tabulated oscillation nodes, far beyond any quadrature budget
MAX_BREAKPOINTS = 10**6
DEFAULT_GRID_POINTS = 4096
# default window half-width, in units of the sum-factor width
ENVELOPE_WIDTHS = 10.0

_UNITS = {Representation.MOMENTUM: "1/m", Representation.POSITION: "m"}


@dataclass(frozen=True)
class DensitySamples:
    """A normalized 1D density sampled on a uniform grid."""

    axis: np.ndarray
    density: np.ndarray
    representation: Representation
    fixed_conjugate_value: float = 0.0
    units: str = ""

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        density = np.asarray(self.density, dtype=float)
        if axis.ndim != 1 or axis.shape != density.shape or axis.size < 2:
            raise ValueError("axis and density must be 1D arrays of equal length >= 2")
        steps = np.diff(axis)
        if not np.all(steps > 0):
            raise ValueError("axis must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("axis must be uniform")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise ValueError("density must be finite and non-negative")
        axis.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "density", density)
        object.__setattr__(
            self, "representation", Representation.parse(self.representation)
        )

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.axis))

    def mean(self) -> float:
        return float(np.trapezoid(self.axis * self.density, self.axis)) / self.mass()

    def variance(self) -> float:
        m = self.mean()
        return float(np.trapezoid((self.axis - m) ** 2 * self.density, self.axis)) / self.mass()

    def normalization_error(self) -> float:
        return abs(self.mass() - 1.0)


@dataclass(frozen=True)
class ConditionalProfile:
    """Scaled conditional density ``exp(-(t+a)^2/2) F(t-a)`` for one state/basis."""

    scale: float
    a: float
    kind: str  # "gaussian", "sinc2" or "sint2"
    ratio: float  # P**2 for sinc2, 1/(4 P**2) for sint2, the Gaussian r otherwise
    p: float

    def relative_factor(self, d):
        d = np.asarray(d, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-self.ratio * d * d / 2)
        if self.kind == "sinc2":
            return sinc(self.ratio * d * d / 4) ** 2
        return sint(self.ratio * d * d) ** 2

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-((t + self.a) ** 2) / 2) * self.relative_factor(t - self.a)

    def natural_difference_width(self) -> float:
        """Width of ``F``: the std for Gaussians, first node otherwise."""
        if self.kind == "gaussian":
            return 1.0 / math.sqrt(self.ratio)
        if self.kind == "sinc2":
            return 2.0 * math.sqrt(math.pi) / self.p
        return 2.0 * self.p * math.sqrt(math.pi)

    def window(self):
        """Default ``(center, half_width)`` in scaled units."""
        if self.kind == "gaussian":
            r = self.ratio
            return self.a * (r - 1.0) / (r + 1.0), ENVELOPE_WIDTHS / math.sqrt(1.0 + r)
        return -self.a, ENVELOPE_WIDTHS

    def breakpoints(self, lo, hi):
        """Zeros (sinc) or oscillation nodes (sint) of ``F(t - a)`` in ``(lo, hi)``."""
        if self.kind == "gaussian":
            return np.empty(0)
        dmax = max(abs(lo - self.a), abs(hi - self.a))
        nodes = self.ratio * dmax * dmax / math.pi
        if nodes > MAX_BREAKPOINTS:
            raise QuadratureError(
                f"about {nodes:.3g} oscillations on the window; P is outside the resolvable range"
            )
        if self.kind == "sinc2":
            # P^2 d^2 / 4 = n pi
            nmax = int(self.ratio * dmax * dmax / (4 * math.pi))
            d = 2.0 * np.sqrt(np.arange(1, nmax + 1) * np.pi) / self.p
        else:
            # sint zeros sit close to (n + 1/2) pi for n >= 1, first one near 1.9
            ymax = self.ratio * dmax * dmax
            n = np.arange(0, int(ymax / math.pi) + 1)
            y = np.where(n == 0, 1.9, (n + 0.5) * np.pi)
            d = np.sqrt(y[y < ymax] / self.ratio)
        pts = np.concatenate([self.a - d[::-1], [self.a], self.a + d])
        return pts[(pts > lo) & (pts < hi)]

    def envelope_tail(self, lo, hi) -> float:
        """Mass of the sum-factor envelope outside ``[lo, hi]`` (F <= 1)."""
        c = -self.a
        return math.sqrt(math.pi / 2) * (
            erfc((c - lo) / math.sqrt(2)) + erfc((hi - c) / math.sqrt(2))
        )

    def gaussian_moments(self):
        """Exact (mass, mean, variance) for the Gaussian family."""
        r = self.ratio
        var = 1.0 / (1.0 + r)
        mean = self.a * (r - 1.0) / (r + 1.0)
        # completing the square in -(t+a)^2/2 - r (t-a)^2/2
        resid = -(self.a**2) * 2 * r / (1.0 + r)
        return math.sqrt(2 * math.pi * var) * math.exp(resid), mean, var


def conditional_profile(
    state: BiphotonState, rep, u1: float = 0.0
) -> ConditionalProfile:
    rep = Representation.parse(rep)
    p = state.p
    if isinstance(state, GaussianBiphoton):
        if rep is Representation.MOMENTUM:
            scale, ratio = state.sigma_plus, p * p
        else:
            scale, ratio = 1.0 / state.sigma_plus, 1.0 / (p * p)
        return ConditionalProfile(scale, float(u1) / scale, "gaussian", ratio, p)
    if isinstance(state, SpdcBiphoton):
        if rep is Representation.MOMENTUM:
            scale = 1.0 / state.pump_waist
            return ConditionalProfile(scale, float(u1) / scale, "sinc2", p * p, p)
        scale = state.pump_waist
        return ConditionalProfile(scale, float(u1) / scale, "sint2", 1.0 / (4 * p * p), p)
    raise TypeError(f"not a biphoton state: {type(state).__name__}")


def _tail_fraction(profile, lo, hi, mass_inside):
    if profile.kind == "gaussian":
        _, mean, var = profile.gaussian_moments()
        sd = math.sqrt(2 * var)
        return 0.5 * (erfc((mean - lo) / sd) + erfc((hi - mean) / sd))
    env = profile.envelope_tail(lo, hi)
    return env / (mass_inside + env)


def _scaled_moments(profile, lo, hi, spec):
    """Mass, mean and central second moment of ``profile`` on ``[lo, hi]``."""
    pts = profile.breakpoints(lo, hi)
    z = integrate(profile, lo, hi, spec, points=pts)
    m = integrate(lambda t: t * profile(t), lo, hi, spec, points=pts) / z
    v = integrate(lambda t: (t - m) ** 2 * profile(t), lo, hi, spec, points=pts) / z
    return z, m, v


def _check_tail(profile, lo, hi, z):
    tail = _tail_fraction(profile, lo, hi, z)
    if tail > TAIL_MASS_LIMIT:
        raise TailBoundError(
            f"{tail:.3g} of the probability mass lies outside the grid "
            f"(limit {TAIL_MASS_LIMIT:g})"
        )


def conditional_density(
    state: BiphotonState,
    rep,
    u1: float = 0.0,
    grid_halfwidth: float | None = None,
    n_points: int = DEFAULT_GRID_POINTS,
    center: float | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> DensitySamples:
    """Sample ``P(u2 | u1)`` on a uniform grid, normalized by quadrature.

    ``grid_halfwidth`` and ``center`` are in physical units (m or 1/m) and
    default to ten envelope widths around the envelope center.

    Raises
    ------
    TailBoundError
        If more than ``TAIL_MASS_LIMIT`` of the mass falls outside the grid.
    """
    if int(n_points) < 64:
        raise ValueError("n_points must be >= 64")
    rep = Representation.parse(rep)
    prof = conditional_profile(state, rep, u1)
    c0, hw0 = prof.window()
    c = c0 if center is None else float(center) / prof.scale
    if grid_halfwidth is None:
        hw = hw0
    else:
        if not grid_halfwidth > 0:
            raise ValueError("grid_halfwidth must be positive")
        hw = float(grid_halfwidth) / prof.scale
    t = np.linspace(c - hw, c + hw, int(n_points))
    lo, hi = float(t[0]), float(t[-1])
    z = integrate(prof, lo, hi, spec, points=prof.breakpoints(lo, hi))
    _check_tail(prof, lo, hi, z)
    return DensitySamples(
        axis=t * prof.scale,
        density=prof(t) / (z * prof.scale),
        representation=rep,
        fixed_conjugate_value=float(u1),
        units=_UNITS[rep],
    )


def conditional_variance(
    state: BiphotonState,
    rep,
    u1: float = 0.0,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Variance of ``P(u2 | u1)`` by direct second-moment quadrature."""
    prof = conditional_profile(state, rep, u1)
    c, hw = prof.window()
    lo, hi = c - hw, c + hw
    z, _, v = _scaled_moments(prof, lo, hi, spec)
    _check_tail(prof, lo, hi, z)
    return v * prof.scale**2


def gaussian_conditional_variance(state: GaussianBiphoton, rep) -> float:
    """Closed-form conditional variance of the double-Gaussian state."""
    rep = Representation.parse(rep)
    sp2, sm2 = state.sigma_plus**2, state.sigma_minus**2
    if rep is Representation.MOMENTUM:
        return sp2 * sm2 / (sp2 + sm2)
    return 1.0 / (sp2 + sm2)


def _outer_halfwidth(profile, target=1e-6):
    """Half-width ``A`` of the ``a = u1/s`` window with relative tail <= target.

    With ``S = t + a`` and ``D = t - a`` the joint weight factorizes into the
    unit Gaussian in ``S`` times ``F(D)``, and ``|a| > A`` forces ``|S| > A``
    or ``|D| > A``.  ``F`` is bounded by ``C / D**4`` beyond a threshold
    (``sinc(y)**2 <= 1/y**2``; ``|sint(y)| <= 1.1 (2/pi)(1/y + 1/y**2)`` for
    ``y >= 10``), and the total weight is bounded below by the mass of ``F``
    inside its first node.
    """
    if profile.kind == "gaussian":
        return ENVELOPE_WIDTHS * math.sqrt((1.0 + 1.0 / profile.ratio) / 4.0)
    p = profile.p
    w = profile.natural_difference_width()
    inner = integrate(profile.relative_factor, -w, w)
    if profile.kind == "sinc2":
        coeff, threshold = 16.0 / p**4, 0.0
    else:
        coeff, threshold = 16.0 * (2.2 / math.pi) ** 2 * 1.21 * p**4, 2.0 * p * math.sqrt(10.0)
    a = max(ENVELOPE_WIDTHS, threshold, (2.0 * coeff / (3.0 * target * inner)) ** (1 / 3))
    # the Gaussian part of the bound is negligible once a >= 10
    return a


def _inner(state, rep, u1, spec):
    prof = conditional_profile(state, rep, u1)
    c, hw = prof.window()
    return _scaled_moments(prof, c - hw, c + hw, spec)


def inferred_variance(
    state: BiphotonState,
    rep,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    u1_halfwidth: float | None = None,
) -> float:
    """Marginal-weighted mean of the conditional variances.

    The inner conditional moments and the outer average over ``u1`` are both
    done with :func:`~biphoton.specfun.integrate`.  ``u1_halfwidth`` (in the
    same scaled units as the conditional profile) defaults to a window grown
    until the marginal weight at its edge is negligible.
    """
    rep = Representation.parse(rep)
    prof0 = conditional_profile(state, rep, 0.0)
    half = _outer_halfwidth(prof0) if u1_halfwidth is None else float(u1_halfwidth)
    scale = prof0.scale

    def weights(a_values):
        out = np.empty((2, a_values.size))
        for i, a in enumerate(a_values):
            z, _, v = _inner(state, rep, a * scale, spec)
            out[0, i] = z
            out[1, i] = z * v
        return out

    cache = {}

    def component(k):
        def f(a_values):
            key = a_values.tobytes()
            if key not in cache:
                cache[key] = weights(a_values)
            return cache[key][k]
        return f

    outer = QuadratureSpec(
        relative_tolerance=max(spec.relative_tolerance, 1e-8),
        absolute_tolerance=spec.absolute_tolerance,
        max_subdivisions=spec.max_subdivisions,
        truncation_radius_factor=spec.truncation_radius_factor,
    )
    total = integrate(component(0), -half, half, outer, points=[0.0])
    weighted = integrate(component(1), -half, half, outer, points=[0.0])
    return weighted / total * scale**2
