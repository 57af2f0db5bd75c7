"""The exception hierarchy.

Every failure raised by this library is a :class:`HofMtlError`. Each concrete
class also inherits the builtin a caller would reach for first, so
``except ValueError`` around a config load or ``except KeyError`` around a task
lookup works without importing anything from here.

Every class carries a ``category``: a short, stable, machine-parsable string.
The command line prints it as the first field of its one-line error report, so
scripts driving an experiment grid can branch on the failure kind without
parsing prose.

``CheckpointError`` and ``DataError`` are parents meant to be caught, not
raised on their own (``DataError`` is also raised directly for an empty task
dataset, which is not an ingestion failure).
"""

from __future__ import annotations

from typing import ClassVar

__all__ = [
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointIntegrityError",
    "ConfigurationError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "HofMtlError",
    "IngestionError",
    "SequenceLengthError",
    "SplitError",
    "TaskLookupError",
    "UnsupportedOperationError",
    "VocabularyError",
]


class HofMtlError(Exception):
    """Root of every error this library raises."""

    category: ClassVar[str] = "error"


class ConfigurationError(HofMtlError, ValueError):
    """A configuration value is invalid or a config file has an unknown key."""

    category: ClassVar[str] = "config"


class DimensionError(HofMtlError, ValueError):
    """Tensor shapes do not conform to an operation's signature."""

    category: ClassVar[str] = "dimension"


class UnsupportedOperationError(HofMtlError, ValueError):
    """An operation kind the tensor substrate does not implement."""

    category: ClassVar[str] = "unsupported-operation"


class ContractError(HofMtlError, ValueError):
    """A caller broke a documented precondition."""

    category: ClassVar[str] = "contract"


class VocabularyError(HofMtlError, ValueError):
    """A token id is out of range, or a vocabulary cannot be built or read."""

    category: ClassVar[str] = "vocabulary"


class SequenceLengthError(HofMtlError, ValueError):
    """A batch is longer than the encoder's positional table."""

    category: ClassVar[str] = "length"


class TaskLookupError(HofMtlError, KeyError):
    """A task name the model has no head for."""

    category: ClassVar[str] = "task-lookup"

    def __str__(self) -> str:
        """Return the message without ``KeyError``'s repr quoting."""
        return str(self.args[0]) if self.args else ""


class CheckpointError(HofMtlError, ValueError):
    """A checkpoint file cannot be used. Parent of the two classes below."""

    category: ClassVar[str] = "checkpoint"


class CheckpointFormatError(CheckpointError):
    """Wrong magic bytes, an unsupported version, or an unreadable manifest."""

    category: ClassVar[str] = "checkpoint-format"


class CheckpointIntegrityError(CheckpointError):
    """The file is truncated or its payload does not match the recorded digest."""

    category: ClassVar[str] = "checkpoint-integrity"


class DataError(HofMtlError, ValueError):
    """A dataset is unusable for the requested run."""

    category: ClassVar[str] = "data"


class IngestionError(DataError):
    """A corpus file is missing, malformed, or carries labels the schema cannot map."""

    category: ClassVar[str] = "ingestion"


class SplitError(DataError):
    """A dataset cannot be split as requested."""

    category: ClassVar[str] = "split"


class DivergenceError(HofMtlError, ArithmeticError):
    """Training produced a non-finite loss.

    Attributes:
        step: Global step number (1-based) at which the loss was observed.
        task: Task whose mini-batch produced it.
    """

    category: ClassVar[str] = "divergence"

    def __init__(self, message: str, *, step: int, task: str) -> None:
        super().__init__(message)
        self.step = step
        self.task = task
