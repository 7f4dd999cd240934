"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PreconditionError(DomainError):
    """The caller reached a code path whose precondition does not hold."""


class CapacityError(DomainError):
    """An exact computation was requested on an instance that is too large."""
