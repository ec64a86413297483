"""Exception types shared across the package."""


class HKError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HKError):
    """Invalid or unknown configuration content."""


class GridAdequacyError(HKError):
    """A position grid truncates or under-resolves a state beyond threshold."""


class QuadratureError(HKError):
    """Phase-space quadrature construction failed (box search exceeded limits)."""


class FlowDivergenceError(HKError):
    """Non-finite values encountered during trajectory integration."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite flow state at t={t:.6g}")


class BranchAmbiguityError(HKError):
    """Determinant argument rotated too fast for continuous square-root tracking."""


class MatrixSingularError(HKError):
    """A matrix guaranteed invertible by theory came out numerically singular."""


class SiegelError(HKError):
    """A matrix violates the complex-symmetric / positive-imaginary conditions."""


class SplitStepError(HKError):
    """Split-operator run violated its adequacy checks (aliasing or boundary hit)."""


class CoverageWarning(UserWarning):
    """Phase-space coverage below the configured target; result still returned."""
