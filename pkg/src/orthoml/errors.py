"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class NotFittedError(RuntimeError):
    """Raised when predict is called on an unfitted learner."""


class LearnerError(RuntimeError):
    """Raised when a nuisance learner cannot be fitted on the given data."""


class IdentificationError(RuntimeError):
    """Raised when the score Jacobian is numerically zero and the target
    parameter cannot be solved for."""


class ScoreLinearityError(RuntimeError):
    """Raised when a user-supplied score callable is not linear in theta."""
