"""Exception hierarchy shared by all moonshift modules."""


class MoonshiftError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(MoonshiftError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(MoonshiftError):
    """An input value lies outside the operation's documented domain."""


class ContractError(MoonshiftError):
    """An API precondition was violated by the caller."""


class PairingError(MoonshiftError):
    """Paired batches do not line up row for row."""


class ConfigError(MoonshiftError):
    """One or more configuration values are invalid.

    ``problems`` lists every violation found so callers can report them all
    at once instead of failing on the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DivergenceError(MoonshiftError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        if epoch is not None:
            message = f"{message} (epoch {epoch}, step {step})"
        super().__init__(message)
