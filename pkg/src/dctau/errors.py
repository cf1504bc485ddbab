"""Exception types shared across the package.

The CLI maps these onto its exit codes: configuration/argument problems
exit 2, numeric failures exit 3, and I/O failures (plain OSError) exit 4.
"""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class InsufficientClassesError(InvalidArgumentError):
    """A batch does not contain enough distinct classes for the operation."""


class DegenerateBatchError(InvalidArgumentError):
    """Every anchor in the batch lacks positives; no contrastive term exists."""


class UnsatisfiableBatchError(RuntimeError):
    """Batch sampling could not satisfy its class-diversity requirement."""


class NumericError(ArithmeticError):
    """A numeric quantity became non-finite or otherwise unusable."""


class ConfigError(ValueError):
    """A configuration file or flag is malformed or out of range."""
