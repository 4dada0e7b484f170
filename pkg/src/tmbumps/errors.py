"""Exception types shared across the package."""


class TmbumpsError(Exception):
    """Base class for all library errors."""


class NumericalError(TmbumpsError):
    """A numerical routine could not meet its requested accuracy."""


class QuadratureError(NumericalError):
    pass


class StepFailure(NumericalError):
    """The adaptive integrator could not advance at the requested tolerance."""


class BackendToleranceError(NumericalError):
    """Collocation residual of a numerical Green backend exceeds its threshold."""


class SingularEndpointWarning(UserWarning):
    """Residual requested too close to the regular-singular point t = 0."""


class CoincidentPoints(TmbumpsError, ValueError):
    pass


class DegenerateGap(TmbumpsError, ValueError):
    """Two concentration points are closer than the gap floor."""


class DomainParseError(TmbumpsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NoZeroCrossing(TmbumpsError):
    """A shot radial profile stayed positive up to ``r_max``."""

    def __init__(self, gamma, r_max):
        self.gamma = gamma
        self.r_max = r_max
        super().__init__(f"no zero before r_max={r_max:g} for gamma={gamma:g}")


class NonConvergence(TmbumpsError):
    """Newton iteration stopped without reaching the residual tolerance.

    ``best`` holds the configuration with the smallest residual seen and
    ``best_residual`` its norm.
    """

    def __init__(self, message, best=None, best_residual=float("nan")):
        self.best = best
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.3e})")


class BoundaryEscape(NonConvergence):
    """Backtracking could not keep the iterate inside the domain."""


class ConfigurationMismatch(TmbumpsError, ValueError):
    pass
