"""Shared exception types for the zklab numerical laboratory."""


class ZKLabError(Exception):
    """Base class for all zklab errors."""


class InvalidGridError(ZKLabError):
    """A grid fails its invariants (too few points, bad spacing, ...)."""


class InvalidInputError(ZKLabError):
    """Input data fails a precondition (non-uniform grid, wrong shape, ...)."""


class NumericalFailureError(ZKLabError):
    """A linear solve or eigensolve failed to converge / went singular."""


class DegenerateIterateError(ZKLabError):
    """The renormalization map hit a degenerate normalization (S_R = 0)."""


class DegenerateProfileError(ZKLabError):
    """A profile is identically zero where a nonzero one is required."""


class DomainError(ZKLabError):
    """A requested evaluation lies outside the admissible domain."""


class OutOfRegimeError(ZKLabError):
    """A modulation parameter is outside the validity regime (|b| too large)."""


class InvalidConstraintsError(ZKLabError):
    """Constraint fields are rank deficient on the grid."""


class ConfigError(ZKLabError):
    """A run configuration file or override is malformed."""


class BlowupDetectedError(ZKLabError):
    """The solution left the resolvable range (NaN/overflow); carries the
    last valid state in .state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class DecompositionFailedError(ZKLabError):
    """The modulation Newton iteration did not converge."""
