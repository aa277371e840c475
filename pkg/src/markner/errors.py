"""Exception hierarchy shared across the pipeline.

CLI exit-code mapping: ValidationError (and subclasses) -> 1,
GatewayError (and subclasses) -> 2.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PipelineError):
    """Bad input data, bad configuration, or a violated precondition."""


class TemplateError(ValidationError):
    """A prompt template failed placeholder validation at load time."""


class MarkerCollisionError(ValidationError):
    """Text cannot be marker-encoded because it already contains a marker."""


class GatewayError(PipelineError):
    """Base class for LLM transport failures."""


class TransportError(GatewayError):
    """Retries exhausted against the completion provider."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class ProviderRejection(GatewayError):
    """Non-retryable provider rejection (auth failure, bad request)."""


class RetryableProviderError(GatewayError):
    """Internal signal: transient failure (timeout, 5xx, 429), retry allowed."""
