"""Custom exceptions for stable_width package."""

class StableWidthError(Exception):
    """Base exception for stable_width package."""
    pass

class ConfigError(StableWidthError):
    """Raised when there is an error with configuration."""
    pass

class DomainError(StableWidthError, ValueError):
    """Raised when an argument lies outside an operation's domain."""
    pass

class NumericalError(StableWidthError):
    """Raised when a numerical procedure fails to converge or overflows."""
    pass

class ToleranceError(StableWidthError):
    """Raised when a verification run finishes but misses its tolerance."""
    pass
