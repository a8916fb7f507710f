"""Exception hierarchy shared across the package."""


class NumericalError(RuntimeError):
    """Base class for numerical failures (CLI exit code 3)."""


class QuadratureError(NumericalError):
    """Adaptive quadrature exhausted its subdivision budget."""


class TailBoundError(NumericalError):
    """Too much probability mass lies outside the evaluation window."""


class ConvergenceError(NumericalError):
    """An iterative procedure failed to converge."""


class NoSignChangeError(NumericalError):
    """No bracketing sign change was found for a root search."""
