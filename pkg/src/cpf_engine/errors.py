"""Shared exception hierarchy.

The CLI maps these onto its exit-code contract: UsageError -> 1, DataError
(and subclasses) -> 2, anything else -> 3.
"""


class EngineError(Exception):
    """Base class for all engine failures."""


class UsageError(EngineError):
    """Caller passed arguments that can never be valid."""


class ConfigError(EngineError):
    """A configuration file or threshold set is malformed."""


class DataError(EngineError):
    """Input data violates a precondition (empty series, single class...)."""


class MergeError(DataError):
    """Bundle merge hit duplicate record ids."""


class FitError(DataError):
    """Model fitting failed structurally (singular information matrix)."""


class InferenceError(DataError):
    """Inference requested from a model state that cannot support it."""


class RetrievalError(DataError):
    """Index operation failed (duplicate doc id, empty index)."""
