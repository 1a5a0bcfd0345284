"""Exception types shared across the package."""


class FlowoptError(Exception):
    """Base class for package errors."""


class FormatError(FlowoptError, ValueError):
    """Input file does not follow the expected format."""


class DataError(FlowoptError, ValueError):
    """Input is well-formed but semantically inconsistent."""


class ConfigError(FlowoptError, ValueError):
    """Invalid experiment or component configuration."""


class TrainingError(FlowoptError, ValueError):
    """A model could not be trained on the given data."""


class FidelityError(FlowoptError, RuntimeError):
    """Timing setup cannot deliver trustworthy cost measurements."""


class NotFittedError(FlowoptError, RuntimeError):
    """A model or surrogate was used before fitting."""


class SpaceTooLargeError(FlowoptError, ValueError):
    """Search space exceeds the exhaustive enumeration guard."""

    def __init__(self, size: int, limit: int):
        super().__init__(f"search space has {size} points, above the enumeration limit of {limit}")
        self.size = size
        self.limit = limit
