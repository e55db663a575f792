"""Exception hierarchy shared by all modules."""


class BayesCtlError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(BayesCtlError, ValueError):
    """Malformed numerical input (bad shape, non-finite entries, bad parameter)."""


class ScenarioError(BayesCtlError, ValueError):
    """Scenario configuration failed validation.

    ``field`` names the offending configuration entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InconsistentTransitionError(BayesCtlError):
    """An observed transition cannot be explained by a nonnegative disturbance."""


class MomentUndefinedError(BayesCtlError, ValueError):
    """Posterior or predictive moment requested where it diverges (beta <= 2)."""


class SingularSolveError(BayesCtlError):
    """A linear solve failed; ``stage`` and ``tag`` locate the failure when known."""

    def __init__(self, message, stage=None, tag=None):
        super().__init__(message)
        self.stage = stage
        self.tag = tag


class ExtrapolationError(BayesCtlError):
    """A grid-based oracle was queried outside its grid."""
