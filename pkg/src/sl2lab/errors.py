"""Exception types raised across the package."""


class SL2LabError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(SL2LabError, ValueError):
    pass


class DegenerateNorm(SL2LabError):
    """Operator norm too close to 1 for a singular frame to be defined."""


class NotHyperbolic(SL2LabError):
    pass


class InvalidMeasure(SL2LabError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CapExceeded(SL2LabError):
    pass


class NotConverged(SL2LabError):
    def __init__(self, message, residual, result=None):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
        self.result = result


class DegenerateScales(SL2LabError, ValueError):
    pass


class PreconditionFailed(SL2LabError):
    def __init__(self, hypothesis, message):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis


class RootCountMismatch(SL2LabError):
    def __init__(self, rho, found, expected):
        super().__init__(f"rho={rho}: found {found} roots, expected {expected}")
        self.rho = rho
        self.found = found
        self.expected = expected


class NoneFound(SL2LabError):
    pass


class InsufficientSignal(SL2LabError):
    def __init__(self, message, oscillations=None, stderr=None):
        super().__init__(message)
        self.oscillations = oscillations
        self.stderr = stderr


class DegenerateGap(SL2LabError, ValueError):
    pass


class ZeroExponent(SL2LabError):
    def __init__(self, estimate, stderr):
        super().__init__(
            f"Lyapunov estimate {estimate:.4g} not above 5 stderr ({stderr:.3g})")
        self.estimate = estimate
        self.stderr = stderr
