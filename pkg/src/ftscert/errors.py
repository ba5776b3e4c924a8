"""Exception and warning types shared across the package."""


class InputError(ValueError):
    """Caller passed arguments violating a documented precondition."""


class DivergenceError(RuntimeError):
    """A trajectory left the finite range the integrator can represent."""

    def __init__(self, blow_up_time, state=None):
        super().__init__(f"state diverged at t = {blow_up_time}")
        self.blow_up_time = blow_up_time
        self.state = state


class DegenerateDomainError(RuntimeError):
    """Rejection sampling acceptance collapsed; the domain is ill-scaled."""


class DomainDefinitenessError(RuntimeError):
    """A domain matrix that must be positive-definite is not."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed; carries the offending field name."""

    def __init__(self, field, message):
        super().__init__(f"checkpoint field '{field}': {message}")
        self.field = field


class CheckpointVersionError(CheckpointError):
    """Checkpoint format_version is not one this build can read."""


class FitError(RuntimeError):
    """Least-squares design matrix was rank deficient."""


class TrainingAbortedError(RuntimeError):
    """Training produced a non-finite loss and cannot continue."""


class ConfigError(ValueError):
    """Run configuration failed schema validation."""


class ConditioningWarning(UserWarning):
    """A matrix inversion was close to singular; results may lose digits."""
