from typing import Any


class SemanticSepError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SemanticSepError, ValueError):
    """A configuration or precondition on the requested wiring does not hold."""


class ShapeError(SemanticSepError, ValueError):
    """Signals, coefficients or embeddings have incompatible geometry."""


class DomainError(SemanticSepError, ValueError):
    """A value lies outside the domain of a numeric operation."""


class LoadError(SemanticSepError, LookupError):
    """An example, checkpoint or WAV payload could not be found or decoded."""


class TrainingError(SemanticSepError):
    """Training diverged or its gradients failed to verify; see `diagnostics`."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics: dict[str, Any] = dict(diagnostics or {})
