"""Published reference numbers and oracle values shared by the tests."""
import numpy as np
from scipy.integrate import simpson

CRYSTAL_LENGTH = 1.8e-2
WAVELENGTH = 710e-9
PUMP_WAISTS = (200e-6, 100e-6, 70e-6, 45e-6, 40e-6, 35e-6)
TABLE_I_P = (0.1595, 0.3189, 0.4556, 0.7087, 0.7973, 0.9112)
TABLE_II_W_THEORY = (0.033, 0.11, 0.19, 0.34, 0.38, 0.43)
# measured variances (value, sigma) and the printed W_E, sigma_W strings
TABLE_II_ROWS = (
    ((6.62e-10, 0.26e-10), (3.55e7, 0.14e7), "0.024", "0.002"),
    ((9.17e-10, 0.37e-10), (1.25e8, 0.05e8), "0.115", "0.009"),
    ((7.76e-10, 0.31e-10), (2.60e8, 0.10e8), "0.20", "0.02"),
    ((7.75e-10, 0.31e-10), (4.67e8, 0.19e8), "0.36", "0.03"),
    ((7.23e-10, 0.29e-10), (5.28e8, 0.21e8), "0.38", "0.03"),
    ((8.16e-10, 0.33e-10), (5.18e8, 0.21e8), "0.42", "0.03"),
)
VIOLATION_INTERVAL = (0.56, 2.58)

# Schmidt number of the SPDC kernel at P = 1, from a dense n = 2048 SVD
# (numpy.linalg.svd on an independently coded kernel); see test_schmidt.
K_SPDC_P1_ORACLE = 1.1862416636721451


def fixed_simpson(f, lo, hi, n=1_000_001):
    """Brute-force composite Simpson rule on ``n`` equispaced points."""
    x = np.linspace(lo, hi, n)
    return float(simpson(f(x), x=x))


def printed_precision(value: float, template: str) -> str:
    """Round ``value`` to the number of decimals shown in ``template``."""
    decimals = len(template.split(".")[1]) if "." in template else 0
    return f"{value:.{decimals}f}"
