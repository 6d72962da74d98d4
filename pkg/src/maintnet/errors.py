"""Exception types shared across the toolkit."""


class MaintnetError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MaintnetError):
    """A document, instance or state failed validation.

    The message names the offending field or invariant.
    """


class IllegalActionError(MaintnetError):
    """An action outside the state-dependent legal set was supplied."""


class EnumerationCapError(MaintnetError):
    """The predicted state count exceeds the exact-solver cap."""


class CompatibilityError(MaintnetError):
    """A dataset or network does not match the instance it is used with."""
