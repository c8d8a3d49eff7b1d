"""Exception types shared across the package."""


class SaniaError(Exception):
    """Base class for all package-specific failures."""


class LibsvmParseError(SaniaError, ValueError):
    """Malformed LibSVM text. Carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class DegenerateGradientError(SaniaError, ValueError):
    """Polyak step requested with a (numerically) zero search direction while the loss still exceeds its target."""


class NegativeCurvatureError(SaniaError, RuntimeError):
    """A direction of non-positive curvature was met where positive definiteness was required."""

    def __init__(self, message: str, direction=None, iterate=None):
        self.direction = direction
        self.iterate = iterate
        super().__init__(message)


class CgLimitError(SaniaError, RuntimeError):
    """Conjugate gradient hit its iteration cap before reaching tolerance."""


class CapabilityError(SaniaError, RuntimeError):
    """Requested operation exceeds a configured size cap (e.g. dense Hessian for large d)."""


class BracketError(SaniaError, ValueError):
    """Scalar root search was given an interval without a sign change."""


class ConfigError(SaniaError, ValueError):
    """Invalid or incompatible run configuration."""
