"""Exception hierarchy shared by all modules."""


class PsaError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PsaError, ValueError):
    """Invalid scenario configuration.

    ``key``, ``path`` and ``line`` are filled in when known so the CLI can
    point at the offending entry.
    """

    def __init__(self, message, key=None, path=None, line=None):
        self.key = key
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.message = message


class DomainError(PsaError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularGeometryError(PsaError, ArithmeticError):
    """Target coincides with an agent, so the range Jacobian is undefined."""


class ConditioningError(PsaError, ArithmeticError):
    """A matrix that must be inverted is numerically singular or not SPD."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class TrialError(PsaError):
    """Numeric failure inside one Monte Carlo trial."""

    def __init__(self, trial_id, step, model, cause):
        self.trial_id = trial_id
        self.step = step
        self.model = model
        self.cause = cause
        super().__init__(
            f"trial {trial_id}, step {step}, model {model!r}: "
            f"{type(cause).__name__}: {cause}"
        )
