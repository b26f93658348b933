"""Exception hierarchy shared across modules."""


class SemaniError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SemaniError):
    """Invalid configuration or missing prerequisite (e.g. checkpoint)."""


class ShapeMismatchError(SemaniError):
    """Tensor shapes disagree with the operation's contract."""


class DomainError(SemaniError):
    """Value outside the operation's domain (bad index, empty mask, ...)."""


class StorageError(SemaniError):
    """Filesystem failure; message carries the offending path."""


class EmptySegmentationError(SemaniError):
    """Segmentation found no entity in the image."""


class TrainingDiverged(SemaniError):
    """Loss became non-finite; message carries the step and loss parts."""
