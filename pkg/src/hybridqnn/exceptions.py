"""Exception types raised across the package.

All input problems derive from ``ValueError`` so that callers (and
scikit-learn's own validation machinery) can catch them generically.
"""


class HybridQNNError(Exception):
    """Base class for every error raised by hybridqnn."""


class SizeError(HybridQNNError, ValueError):
    pass


class ParameterBindingError(HybridQNNError, ValueError):
    pass


class ShapeError(HybridQNNError, ValueError):
    pass


class EncodingDomainError(HybridQNNError, ValueError):
    pass


class ConfigurationError(HybridQNNError, ValueError):
    pass


class StatisticsError(HybridQNNError, ValueError):
    pass


class DomainError(HybridQNNError, ValueError):
    pass


class IngestionError(HybridQNNError, OSError):
    pass


class StateError(HybridQNNError, RuntimeError):
    """Raised when a backward pass runs without a cached forward pass."""
