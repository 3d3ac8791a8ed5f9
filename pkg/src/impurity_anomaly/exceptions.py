"""Exception hierarchy. Every error raised on bad data derives from
:class:`InvalidInputError`, which is also a ``ValueError``."""


class ImpurityAnomalyError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ImpurityAnomalyError, ValueError):
    pass


class DecodeError(InvalidInputError):
    """An input raster could not be read."""


class MalformedRecordError(InvalidInputError):
    """A text record (impurity store, score file, manifest) failed to parse."""


class VersionMismatchError(InvalidInputError):
    """A persisted file carries an unknown format version."""


class TrainingError(ImpurityAnomalyError):
    """Autoencoder training is impossible or diverged."""
