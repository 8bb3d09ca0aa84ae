"""Toolkit-specific error types."""

from __future__ import annotations


class PeikitError(Exception):
    """Base class for toolkit errors."""


class TrainingFailure(PeikitError):
    """Head training diverged; carries diagnostics."""

    def __init__(self, message: str, *, iteration: int | None = None,
                 loss: float | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.loss = loss


class EstimationFailure(PeikitError):
    """The loss evaluator returned NaN during gradient estimation."""

    def __init__(self, message: str, *, probe=None):
        super().__init__(message)
        self.probe = probe


class SynthesisAborted(PeikitError):
    """A sample failed to synthesize; carries the partial results."""

    def __init__(self, message: str, *, partial=None, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


class TransportFailure(PeikitError):
    """A wire request exhausted its retries."""
