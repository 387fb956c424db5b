"""Exception hierarchy shared by all modules."""


class HPError(Exception):
    """Base class for errors raised by hpequiv."""


class DimensionError(HPError, ValueError):
    """Operands have incompatible dimensions."""


class ScheduleError(HPError, ValueError):
    """A coefficient schedule is malformed or violates a required condition."""


class CapError(HPError):
    """A requested computation exceeds the configured size caps."""


class KernelError(HPError):
    """A kernel Gram matrix is not hermitian or not positive semidefinite."""
