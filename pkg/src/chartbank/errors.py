"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """A requested computation exceeds a caller-set size cap."""


class AlreadyStoppedError(RuntimeError):
    """A detector was stepped after it had already raised an alarm."""
