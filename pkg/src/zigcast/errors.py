"""Exception types raised across the package."""


class ZigcastError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ZigcastError, ValueError):
    pass


class DomainError(ZigcastError, ValueError):
    pass


class OutOfBoundsError(ZigcastError, ValueError):
    pass


class GapError(ZigcastError, KeyError):
    """A required hour is missing from a time series."""

    def __init__(self, timestamp, message=None):
        self.timestamp = timestamp
        super().__init__(message or f"missing hour {timestamp}")

    def __str__(self):
        return self.args[0]


class AssemblyError(ZigcastError, ValueError):
    """A mandatory feature could not be resolved."""

    def __init__(self, feature, message=None):
        self.feature = feature
        super().__init__(message or f"cannot resolve feature {feature!r}")


class DataQualityError(ZigcastError, ValueError):
    pass


class UnassignedError(ZigcastError, LookupError):
    pass


class RangeError(ZigcastError, IndexError):
    pass


class DegenerateInputError(ZigcastError, ValueError):
    pass


class LoadError(ZigcastError, ValueError):
    """A serialized document failed validation; ``path`` locates the bad field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class JoinError(ZigcastError, KeyError):
    def __init__(self, orphans, message=None):
        self.orphans = list(orphans)
        super().__init__(message or f"{len(self.orphans)} orphan keys, e.g. {self.orphans[:5]}")

    def __str__(self):
        return self.args[0]


class CompatibilityError(ZigcastError, ValueError):
    pass


class ConfigError(ZigcastError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
