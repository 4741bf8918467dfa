"""Exception types shared across the package."""


class SikjForestError(Exception):
    """Base class for all package errors."""


class InvalidDataError(SikjForestError, ValueError):
    """Input data violates a structural or value constraint."""


class InvalidConfigError(SikjForestError, ValueError):
    """A configuration value is outside its allowed domain."""


class InsufficientDataError(SikjForestError, ValueError):
    """Not enough history to perform the requested computation."""

    def __init__(self, message, required=None, available=None):
        super().__init__(message)
        self.required = required
        self.available = available


class NoTrainingDataError(SikjForestError, ValueError):
    """No (season, week, region) combination was eligible for training."""


class UndefinedScoreError(SikjForestError, ValueError):
    """A score was requested over an empty set of targets."""
