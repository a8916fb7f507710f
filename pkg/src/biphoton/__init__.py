"""Spatial biphoton states, the conditional-variance witness W and the
measurement chain needed to test it (coincidence profiles, scans, fits)."""
from .analysis import (
    FitResult,
    ScanData,
    ScanFitter,
    ScanModel,
    fit_scan,
    propagate_witness_error,
    read_scan,
    simulate_scan,
    write_scan,
)
from .distributions import (
    DensitySamples,
    conditional_density,
    conditional_variance,
    gaussian_conditional_variance,
    inferred_variance,
)
from .exceptions import (
    ConvergenceError,
    NoSignChangeError,
    NumericalError,
    QuadratureError,
    TailBoundError,
)
from .optics import (
    DetectionGeometry,
    aperture_convolve,
    displaced_near_field,
    far_field_coincidence,
    near_field_coincidence,
)
from .schmidt import SchmidtSpectrum, k_gaussian_1d, k_gaussian_2d, schmidt_spectrum
from .specfun import QuadratureSpec, integrate, sint
from .states import (
    GaussianBiphoton,
    Representation,
    SpdcBiphoton,
    gaussian_from_p,
    spdc_from_experiment,
)
from .witness import (
    GAUSSIAN_BOUND,
    Family,
    WitnessResult,
    evaluate_witness,
    sweep,
    violation_interval,
)

__version__ = "0.1.0"

__all__ = [
    "FitResult", "ScanData", "ScanFitter", "ScanModel", "fit_scan",
    "propagate_witness_error", "read_scan", "simulate_scan", "write_scan",
    "DensitySamples", "conditional_density", "conditional_variance",
    "gaussian_conditional_variance", "inferred_variance",
    "ConvergenceError", "NoSignChangeError", "NumericalError", "QuadratureError",
    "TailBoundError",
    "DetectionGeometry", "aperture_convolve", "displaced_near_field",
    "far_field_coincidence", "near_field_coincidence",
    "SchmidtSpectrum", "k_gaussian_1d", "k_gaussian_2d", "schmidt_spectrum",
    "QuadratureSpec", "integrate", "sint",
    "GaussianBiphoton", "Representation", "SpdcBiphoton", "gaussian_from_p",
    "spdc_from_experiment",
    "GAUSSIAN_BOUND", "Family", "WitnessResult", "evaluate_witness", "sweep",
    "violation_interval",
]
