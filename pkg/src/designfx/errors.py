"""Exception types shared across the package."""


class DesignFxError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(DesignFxError):
    """Input file or table does not match the declared column schema."""


class ConfigError(DesignFxError):
    """Run configuration is invalid or references missing resources."""


class DegenerateSampleError(DesignFxError):
    """An estimation sample became empty (or too small) after filtering."""


class RankDeficiencyError(DesignFxError):
    """Design matrix is rank deficient after fixed-effect absorption.

    ``columns`` names the offending design columns.
    """

    def __init__(self, columns, message=None):
        self.columns = tuple(columns)
        if message is None:
            message = (
                "design matrix is rank deficient; collinear columns: "
                + ", ".join(self.columns)
            )
        super().__init__(message)


class ConvergenceError(DesignFxError):
    """Alternating projections did not converge within the sweep limit."""

    def __init__(self, achieved_tol, max_sweeps):
        self.achieved_tol = achieved_tol
        self.max_sweeps = max_sweeps
        super().__init__(
            f"fixed-effect absorption did not converge after {max_sweeps} sweeps "
            f"(achieved max column change {achieved_tol:.3e})"
        )


class CpiCoverageError(DesignFxError):
    """An interview date falls outside the CPI series coverage."""


class EmptySupportError(DesignFxError):
    """A density grid does not overlap the data range."""


class PlaceboFailureError(DesignFxError):
    """Too many placebo replications failed to estimate."""
