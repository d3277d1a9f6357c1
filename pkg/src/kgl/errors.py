"""Exception hierarchy shared across the package."""


class KglError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(KglError, ValueError):
    """Nonpositive warping, inconsistent curvature bound, malformed profile."""


class ResolutionError(KglError):
    """A grid is too coarse to resolve the requested derivatives."""


class ParameterError(KglError, ValueError):
    """An estimate parameter violates one of its admissibility inequalities."""


class RegionViolationError(KglError):
    """The region ceiling is negative where the graph is nonzero."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class DiscretizationError(KglError):
    """Degenerate cell metric or an indefinite discrete tensor."""


class ExistenceRadiusError(KglError):
    """The radial flux reached |Phi| = 1 before the requested radius."""

    def __init__(self, r_star, H):
        super().__init__(f"no radial graph with H={H:g} beyond r*={r_star:.12g}")
        self.r_star = r_star
        self.H = H


class SolverError(KglError):
    """Newton/Picard iteration did not converge."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(KglError):
    """Malformed experiment or geometry configuration."""


class ResolutionWarning(UserWarning):
    """The solution varies strongly across a single mesh cell."""
