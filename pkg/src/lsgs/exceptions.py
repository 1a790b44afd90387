"""Exception hierarchy.

The CLI maps :class:`ConfigurationError` to exit code 2 and every other
:class:`LSGSError` to exit code 1.
"""


class LSGSError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(LSGSError, ValueError):
    """A hyperparameter or argument is out of its valid range."""


class ParseError(LSGSError, ValueError):
    """A scenario mask string could not be decoded."""


class ValidationError(LSGSError, ValueError):
    """A table or dump violates its structural invariants."""


class DimensionError(LSGSError, ValueError):
    """Vector lengths do not agree."""


class FormatError(LSGSError, ValueError):
    """A binary latent dump is malformed.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericalError(LSGSError, ArithmeticError):
    """A factorization or eigensolver failed."""


class DivergenceError(LSGSError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, stage, epoch, batch):
        super().__init__(f"non-finite loss in {stage} at epoch {epoch}, batch {batch}")
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
