"""Pure two-photon transverse states in one transverse direction.

Two families are supported:

* :class:`GaussianBiphoton` -- the double-Gaussian amplitude with sum and
  difference widths ``sigma_plus`` and ``sigma_minus`` (1/m).
* :class:`SpdcBiphoton` -- the collinear down-conversion state, a Gaussian
  pump angular spectrum times the ``sinc(b q^2)`` phase-matching function.

Amplitudes are real and unnormalized with value 1 at the origin.  Position
amplitudes follow the transform convention in which the sum coordinate
enters as ``(x1 + x2)/2`` and the difference as ``(x1 - x2)/2``; with it the
Gaussian conditional variances take the closed forms
``sigma_+^2 sigma_-^2/(sigma_+^2 + sigma_-^2)`` and ``1/(sigma_+^2 + sigma_-^2)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .specfun import sinc, sint

__all__ = [
    "Representation",
    "GaussianBiphoton",
    "SpdcBiphoton",
    "BiphotonState",
    "spdc_from_experiment",
    "gaussian_from_p",
    "p_param",
    "momentum_amplitude",
    "position_amplitude",
]


class Representation(enum.Enum):
    MOMENTUM = "momentum"
    POSITION = "position"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"q": "momentum", "far": "momentum", "x": "position", "near": "position"}
        return cls(aliases.get(key, key))


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class GaussianBiphoton:
    """Double-Gaussian biphoton with widths in 1/m."""

    sigma_plus: float
    sigma_minus: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_plus", _positive("sigma_plus", self.sigma_plus))
        object.__setattr__(self, "sigma_minus", _positive("sigma_minus", self.sigma_minus))

    @property
    def p(self) -> float:
        return self.sigma_plus / self.sigma_minus


@dataclass(frozen=True)
class SpdcBiphoton:
    """Down-conversion biphoton.

    Parameters
    ----------
    pump_waist : float
        Pump beam radius ``c`` at the crystal plane (m).
    crystal_length : float
        Crystal length ``L`` (m).
    wavenumber : float
        Wavenumber ``k`` of the down-converted photons (1/m).
    """

    pump_waist: float
    crystal_length: float
    wavenumber: float

    def __post_init__(self):
        object.__setattr__(self, "pump_waist", _positive("pump_waist", self.pump_waist))
        object.__setattr__(
            self, "crystal_length", _positive("crystal_length", self.crystal_length)
        )
        object.__setattr__(self, "wavenumber", _positive("wavenumber", self.wavenumber))

    @property
    def b(self) -> float:
        """Phase-matching coefficient ``L/(8k)`` in m^2."""
        return self.crystal_length / (8.0 * self.wavenumber)

    @property
    def p(self) -> float:
        return math.sqrt(self.crystal_length / (2.0 * self.wavenumber)) / self.pump_waist

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.wavenumber

    def with_p(self, p: float) -> "SpdcBiphoton":
        """Same crystal and wavelength, pump waist chosen to give ``p``."""
        p = _positive("p", p)
        c = math.sqrt(self.crystal_length / (2.0 * self.wavenumber)) / p
        return SpdcBiphoton(c, self.crystal_length, self.wavenumber)


BiphotonState = Union[GaussianBiphoton, SpdcBiphoton]


def spdc_from_experiment(pump_waist, crystal_length, vacuum_wavelength) -> SpdcBiphoton:
    """Build an SPDC state from lab parameters, with ``k = 2 pi / lambda``.

    >>> round(spdc_from_experiment(200e-6, 1.8e-2, 710e-9).p, 4)
    0.1595
    """
    lam = _positive("vacuum_wavelength", vacuum_wavelength)
    return SpdcBiphoton(pump_waist, crystal_length, 2.0 * math.pi / lam)


def gaussian_from_p(p, sigma_minus=1.0) -> GaussianBiphoton:
    """Gaussian state with ``sigma_plus / sigma_minus = p``."""
    return GaussianBiphoton(_positive("p", p) * sigma_minus, sigma_minus)


def p_param(state: BiphotonState) -> float:
    """The dimensionless entanglement parameter P of ``state``."""
    if isinstance(state, (GaussianBiphoton, SpdcBiphoton)):
        return state.p
    raise TypeError(f"not a biphoton state: {type(state).__name__}")


def momentum_amplitude(state: BiphotonState, q1, q2):
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    s = q1 + q2
    d = q1 - q2
    if isinstance(state, GaussianBiphoton):
        return np.exp(-s**2 / (4 * state.sigma_plus**2) - d**2 / (4 * state.sigma_minus**2))
    if isinstance(state, SpdcBiphoton):
        return np.exp(-(state.pump_waist**2) * s**2 / 4) * sinc(state.b * d**2)
    raise TypeError(f"not a biphoton state: {type(state).__name__}")


def position_amplitude(state: BiphotonState, x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    s = x1 + x2
    d = x1 - x2
    if isinstance(state, GaussianBiphoton):
        return np.exp(-(state.sigma_plus**2) * s**2 / 4 - state.sigma_minus**2 * d**2 / 4)
    if isinstance(state, SpdcBiphoton):
        c = state.pump_waist
        return np.exp(-((s / 2) ** 2) / c**2) * sint((d / 2) ** 2 / (4 * state.b))
    raise TypeError(f"not a biphoton state: {type(state).__name__}")
