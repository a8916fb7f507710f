"""The W witness, P sweeps and the violation-interval search.

``W`` is the product of the two conditional variances taken with the
conditioning photon at the origin, ``Var(q2 | q1=0) * Var(x2 | x1=0)``.
This matches the measured quantities (one detector parked at the center);
for Gaussian states it coincides with the inferred-variance product because
the conditional variances do not depend on ``u1``.  For SPDC states the
``u1 = 0`` conditionals are a definition choice, not an identity.

Every pure Gaussian state has ``W <= GAUSSIAN_BOUND``; a pure state with
``W > GAUSSIAN_BOUND`` is therefore non-Gaussian.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import conditional_variance, gaussian_conditional_variance
from .exceptions import NoSignChangeError, NumericalError
from .schmidt import k_gaussian_1d, schmidt_spectrum
from .specfun import DEFAULT_QUADRATURE, QuadratureSpec
from .states import (
    BiphotonState,
    GaussianBiphoton,
    Representation,
    SpdcBiphoton,
    gaussian_from_p,
    spdc_from_experiment,
)

__all__ = [
    "GAUSSIAN_BOUND",
    "DEFAULT_CRYSTAL_LENGTH",
    "DEFAULT_WAVELENGTH",
    "EXPERIMENT_PUMP_WAISTS",
    "WitnessResult",
    "SweepRow",
    "Family",
    "evaluate_witness",
    "witness_value",
    "sweep",
    "violation_interval",
]

#: Bound on Var(q2|q1) Var(x2|x1) for pure Gaussian states (the x/q pair's C).
GAUSSIAN_BOUND = 0.25

CROSS_CHECK_RTOL = 1e-6
DEFAULT_CRYSTAL_LENGTH = 1.8e-2
DEFAULT_WAVELENGTH = 710e-9
#: Pump waists (m) of the six measured states, in order of increasing P.
EXPERIMENT_PUMP_WAISTS = (200e-6, 100e-6, 70e-6, 45e-6, 40e-6, 35e-6)


@dataclass(frozen=True)
class WitnessResult:
    p: float
    var_q_given_0: float
    var_x_given_0: float
    w: float
    w_uncertainty: float | None = None

    @property
    def gaussian_bound_violated(self) -> bool:
        return self.w > GAUSSIAN_BOUND

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "var_q_given_0_per_m2": self.var_q_given_0,
            "var_x_given_0_m2": self.var_x_given_0,
            "w": self.w,
            "w_uncertainty": self.w_uncertainty,
            "gaussian_bound": GAUSSIAN_BOUND,
            "gaussian_bound_violated": self.gaussian_bound_violated,
        }


def evaluate_witness(
    state: BiphotonState,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    cross_check: bool = True,
) -> WitnessResult:
    """Evaluate ``W`` for ``state``.

    Gaussian states use the closed-form variances; with ``cross_check`` they
    are compared against quadrature and a mismatch raises
    :class:`~biphoton.exceptions.NumericalError`.
    """
    if isinstance(state, GaussianBiphoton):
        vq = gaussian_conditional_variance(state, Representation.MOMENTUM)
        vx = gaussian_conditional_variance(state, Representation.POSITION)
        if cross_check:
            for rep, exact in ((Representation.MOMENTUM, vq), (Representation.POSITION, vx)):
                numeric = conditional_variance(state, rep, 0.0, spec)
                if abs(numeric - exact) > CROSS_CHECK_RTOL * exact:
                    raise NumericalError(
                        f"{rep.value} variance {numeric!r} disagrees with closed form {exact!r}"
                    )
    elif isinstance(state, SpdcBiphoton):
        vq = conditional_variance(state, Representation.MOMENTUM, 0.0, spec)
        vx = conditional_variance(state, Representation.POSITION, 0.0, spec)
    else:
        raise TypeError(f"not a biphoton state: {type(state).__name__}")
    return WitnessResult(p=state.p, var_q_given_0=vq, var_x_given_0=vx, w=vq * vx)


class Family:
    """A one-parameter family of states indexed by P.

    ``Family.gaussian()`` fixes ``sigma_minus``; ``Family.spdc(L, lambda)``
    fixes the crystal and wavelength and varies the pump waist.
    """

    def __init__(self, kind: str, crystal_length=DEFAULT_CRYSTAL_LENGTH,
                 wavelength=DEFAULT_WAVELENGTH):
        kind = kind.lower()
        if kind not in ("gaussian", "spdc"):
            raise ValueError(f"unknown family {kind!r}")
        self.kind = kind
        self.crystal_length = float(crystal_length)
        self.wavelength = float(wavelength)
        if kind == "spdc":
            self._base = spdc_from_experiment(1.0, crystal_length, wavelength)

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def spdc(cls, crystal_length=DEFAULT_CRYSTAL_LENGTH, wavelength=DEFAULT_WAVELENGTH):
        return cls("spdc", crystal_length, wavelength)

    def state(self, p: float) -> BiphotonState:
        if self.kind == "gaussian":
            return gaussian_from_p(p)
        return self._base.with_p(p)

    def __repr__(self):
        if self.kind == "gaussian":
            return "Family.gaussian()"
        return f"Family.spdc({self.crystal_length!r}, {self.wavelength!r})"


def _as_family(family) -> Family:
    if isinstance(family, Family):
        return family
    return Family(str(family))


def witness_value(family, p: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    fam = _as_family(family)
    if fam.kind == "gaussian":
        return 1.0 / (p + 1.0 / p) ** 2
    return evaluate_witness(fam.state(p), spec).w


@dataclass(frozen=True)
class SweepRow:
    p: float
    k_1d: float | None
    w: float | None
    error: str | None = None

    @property
    def violated(self) -> bool | None:
        return None if self.w is None else self.w > GAUSSIAN_BOUND


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("BIPHOTON_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep(
    family,
    p_min: float,
    p_max: float,
    steps: int,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    schmidt_points: int = 512,
    threads: int | None = None,
) -> list[SweepRow]:
    """Evaluate ``(P, K_1d, W)`` on ``steps`` log-spaced values of P.

    Geometric spacing treats ``P`` and ``1/P`` alike (the Gaussian ``W`` is
    symmetric under that swap), so ``[0.5, 2]`` in three steps hits ``P = 1``.

    Rows are independent; a numerical failure is recorded in the row's
    ``error`` field and the sweep continues.  Row order follows P whatever
    the number of worker threads (``BIPHOTON_THREADS`` caps it).
    """
    if not 0 < p_min < p_max:
        raise ValueError("need 0 < p_min < p_max")
    if int(steps) < 2:
        raise ValueError("steps must be >= 2")
    fam = _as_family(family)
    ps = np.geomspace(p_min, p_max, int(steps))

    def row(p):
        p = float(p)
        try:
            if fam.kind == "gaussian":
                return SweepRow(p, k_gaussian_1d(p), evaluate_witness(fam.state(p), spec).w)
            st = fam.state(p)
            w = evaluate_witness(st, spec).w
            return SweepRow(p, schmidt_spectrum(st, schmidt_points).schmidt_number_K, w)
        except NumericalError as exc:
            return SweepRow(p, None, None, f"{type(exc).__name__}: {exc}")

    n = _thread_count(threads)
    if n == 1:
        return [row(p) for p in ps]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(row, ps))


def violation_interval(
    family,
    p_lo: float = 0.05,
    p_hi: float = 5.0,
    coarse_step: float = 0.05,
    tol: float = 1e-3,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> tuple[float, float]:
    """Range of P on which ``W(P) > GAUSSIAN_BOUND``.

    Brackets the sign changes of ``W - 1/4`` on a coarse grid, then bisects
    each bracket to ``tol`` in P.  Returns the outermost pair of roots.

    Raises
    ------
    NoSignChangeError
        If ``W - 1/4`` never becomes positive on the scanned range.
    """
    fam = _as_family(family)
    n = int(round((p_hi - p_lo) / coarse_step)) + 1
    ps = np.linspace(p_lo, p_hi, n)
    excess = np.array([witness_value(fam, float(p), spec) - GAUSSIAN_BOUND for p in ps])
    positive = excess > 0
    if not positive.any():
        raise NoSignChangeError(
            f"W <= {GAUSSIAN_BOUND} everywhere on [{p_lo}, {p_hi}] for {fam!r}"
        )
    idx = np.flatnonzero(positive)
    first, last = idx[0], idx[-1]
    if first == 0 or last == n - 1:
        raise NoSignChangeError("violation window is not bracketed by the scan range")

    def bisect(a, b, fa):
        # fa is the sign of W - 1/4 at a
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = witness_value(fam, m, spec) - GAUSSIAN_BOUND > 0
            if fm == fa:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    low = bisect(float(ps[first - 1]), float(ps[first]), False)
    high = bisect(float(ps[last]), float(ps[last + 1]), True)
    return low, high
