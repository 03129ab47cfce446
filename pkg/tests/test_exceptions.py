"""Tests for custom exceptions."""

import pytest
from stable_width.exceptions import (
    ConfigError,
    DomainError,
    NumericalError,
    StableWidthError,
    ToleranceError,
)

def test_stable_width_error():
    """Test the base exception."""
    error = StableWidthError("Test error message")
    assert str(error) == "Test error message"
    assert isinstance(error, Exception)

@pytest.mark.parametrize("cls", [ConfigError, DomainError, NumericalError, ToleranceError])
def test_hierarchy(cls):
    """Every package error derives from StableWidthError."""
    assert issubclass(cls, StableWidthError)

def test_domain_error_is_value_error():
    """DomainError can be caught as a ValueError."""
    with pytest.raises(ValueError):
        raise DomainError("alpha must lie in (0, 2]")
