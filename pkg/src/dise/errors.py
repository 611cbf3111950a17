"""Shared exception types.

Every error raised deliberately by this package derives from DiseError so
callers (and the command-line front end) can catch one type.
"""


class DiseError(Exception):
    """Base class for package errors."""


class CorpusError(DiseError):
    """Malformed corpus data, vocabulary misuse, or file-format violations."""


class CheckpointError(DiseError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class TrainingDiverged(DiseError):
    """Loss became non-finite during optimization."""


class BackendError(DiseError):
    """Invalid query against a denoising backend."""


class ProtocolError(DiseError):
    """Wire response violated the log-prob service protocol."""


class RemoteUnavailable(DiseError):
    """Transport to a remote backend failed after all retries."""


class ConfigError(DiseError):
    """Invalid or unknown run-configuration input."""
