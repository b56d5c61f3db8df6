"""Exception hierarchy for the ksms package."""


class KsmsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(KsmsError, ValueError):
    """Invalid configuration, plan, or mismatched grid/field sizes."""


class ModelValidityError(KsmsError, RuntimeError):
    """The motility model left its validity region (e.g. gamma <= 0)."""


class SolverError(KsmsError, RuntimeError):
    """Elliptic solve failed to converge within the iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepCollapseError(KsmsError, RuntimeError):
    """Adaptive step size fell below dt_min; carries the state for post-mortem."""

    def __init__(self, message, state=None, dt=None):
        super().__init__(message)
        self.state = state
        self.dt = dt


class BlowupGuardError(KsmsError, RuntimeError):
    """Density exceeded the runaway guard; the run is aborted cleanly."""


class FitError(KsmsError, RuntimeError):
    """Decay-rate fit impossible (nonpositive values in the fit window)."""


class SnapshotFormatError(KsmsError, ValueError):
    """Snapshot file has a bad magic, version, or length."""
