"""Shapes of the structured records and string enumerations used across hofmtl.

Every line-delimited file this library writes -- training history, grid
results, prediction and evaluation records, run manifests -- has a
``TypedDict`` here, and every option that takes one of a fixed set of strings
has a ``Literal`` alias. They are real runtime objects, so annotate with them
directly::

    from hofmtl.types import CellRecord

    def best(cells: list[CellRecord]) -> CellRecord:
        return max(cells, key=lambda c: c["macro_f1"])

The module imports nothing beyond the standard library, so it is safe to import
from anywhere, including code that never touches numpy.
"""

from __future__ import annotations

from os import PathLike
from typing import Literal, TypedDict

__all__ = [
    "CellRecord",
    "CorpusFormat",
    "EntityClass",
    "EpochRecord",
    "HeadInit",
    "ManifestRecord",
    "OpKind",
    "PathArg",
    "PredictionRecord",
    "PresetKey",
    "ReportRecord",
    "TaskPrediction",
]

PathArg = str | PathLike[str]

OpKind = Literal[
    "matmul",
    "add",
    "mul_scalar",
    "embedding",
    "layer_norm",
    "softmax",
    "gelu",
    "tanh",
    "dropout",
    "reshape",
    "transpose",
    "select",
    "mean",
    "cross_entropy",
]

EntityClass = Literal["url", "email", "user", "percent", "money", "time", "date", "phone"]

CorpusFormat = Literal["tsv-hasoc", "jsonl-unified"]

PresetKey = Literal["baseline", "sentiment", "emotion", "target", "all"]

HeadInit = Literal["normal", "zeros"]


class EpochRecord(TypedDict):
    """One line of the training history."""

    epoch: int  # 1-based
    steps: int  # optimizer steps taken in this epoch
    mean_loss: float  # mean over every batch of the epoch, all tasks
    task_losses: dict[str, float]  # mean per task
    hof_val_macro_f1: float
    hof_val_accuracy: float


class ReportRecord(TypedDict):
    """An evaluation report as written by ``eval`` and embedded in grid results."""

    task: str
    n: int
    accuracy: float
    macro: dict[str, float]  # keys "p", "r", "f1"
    per_class: dict[str, dict[str, float]]  # label -> {"p", "r", "f1"}
    confusion: list[list[int]]  # rows = gold, columns = predicted


class CellRecord(TypedDict):
    """One trained-and-evaluated grid cell: a preset, an emotion corpus, a seed."""

    preset: str
    emotion_corpus: str
    seed: int
    status: Literal["ok", "failed"]
    macro_p: float | None
    macro_r: float | None
    macro_f1: float | None
    hof_p: float | None
    hof_r: float | None
    hof_f1: float | None
    checkpoint: str | None  # path relative to the grid output directory
    checkpoint_sha256: str | None
    error: str | None  # "<category>: <message>" for a failed cell


class TaskPrediction(TypedDict):
    """The prediction for one task."""

    label: str
    probabilities: dict[str, float]  # label -> probability, in label order


class PredictionRecord(TypedDict):
    """What ``predict`` prints: the normalized text plus one entry per task."""

    text: str
    normalized: str
    predictions: dict[str, TaskPrediction]


class ManifestRecord(TypedDict):
    """The reproducibility envelope written next to every artifact a command produces."""

    command: str
    argv: list[str]
    config: dict[str, object]
    seed: int
    inputs: dict[str, str]  # path -> sha256
    artifacts: dict[str, str]  # path -> sha256
    wall_clock_seconds: float
    version: str
