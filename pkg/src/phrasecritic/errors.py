"""Shared exception types, each mapped to a distinct CLI exit code."""


class ConfigurationError(ValueError):
    """A configuration value is outside the supported range."""


class GenerationError(RuntimeError):
    """A bounded stochastic search failed to satisfy its constraints."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, corrupt, or has an unsupported version."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
