"""Confusion matrices, per-class and macro precision/recall/F1, and model evaluation.

Zero denominators give 0, and the macro average runs over every class of the
task, including classes absent from both gold and predictions. On skewed data
that convention lowers macro scores compared with averaging only present
classes, so it is fixed here rather than left to a caller.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from hofmtl.corpus import Dataset
from hofmtl.errors import ConfigurationError, ContractError
from hofmtl.model import MiniBatch, MtlModel, forward_task
from hofmtl.pipeline import TextPipeline
from hofmtl.types import ReportRecord

__all__ = ["ConfusionMatrix", "EvalReport", "Scores", "confusion", "evaluate", "predict_labels", "report"]

logger = logging.getLogger(__name__)


class Scores(NamedTuple):
    """Precision, recall and F1 of one class or of a macro average."""

    p: float
    r: float
    f1: float


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[g, p]`` is the number of examples of gold class ``g`` predicted as ``p``."""

    labels: tuple[str, ...]
    counts: npt.NDArray[np.int64]

    @property
    def total(self) -> int:
        """Number of evaluated examples."""
        return int(self.counts.sum())


def confusion(
    gold: Sequence[int] | npt.ArrayLike,
    pred: Sequence[int] | npt.ArrayLike,
    K: int,
    labels: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count gold/predicted pairs into a ``K x K`` matrix.

    Raises:
        ContractError: Lengths differ, are zero, or an index is outside ``[0, K)``.
    """
    g = np.asarray(gold, dtype=np.int64).reshape(-1)
    p = np.asarray(pred, dtype=np.int64).reshape(-1)
    if g.shape != p.shape or g.size == 0:
        raise ContractError(f"confusion needs equal, non-zero lengths, got {g.size} gold and {p.size} predicted")
    if min(g.min(), p.min()) < 0 or max(g.max(), p.max()) >= K:
        raise ContractError(f"confusion: label indices must lie in [0, {K})")
    names = tuple(labels) if labels is not None else tuple(str(k) for k in range(K))
    if len(names) != K:
        raise ContractError(f"confusion: {len(names)} label names for {K} classes")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (g, p), 1)
    return ConfusionMatrix(names, counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Per-class and macro scores of one task on one dataset."""

    task: str
    n: int
    accuracy: float
    macro: Scores
    per_class: dict[str, Scores]
    confusion: ConfusionMatrix

    def to_record(self) -> ReportRecord:
        """The JSON-ready form written by ``eval`` and the grid."""
        return {
            "task": self.task,
            "n": self.n,
            "accuracy": self.accuracy,
            "macro": self.macro._asdict(),
            "per_class": {label: s._asdict() for label, s in self.per_class.items()},
            "confusion": self.confusion.counts.tolist(),
        }


def report(cm: ConfusionMatrix, task: str = "") -> EvalReport:
    """Score a confusion matrix.

    Per class, ``P = tp/(tp+fp)``, ``R = tp/(tp+fn)``, ``F1 = 2PR/(P+R)``, each
    0 when its denominator is 0. Macro scores are the unweighted means of the
    per-class scores over all classes.
    """
    counts = cm.counts
    per_class: dict[str, Scores] = {}
    for k, label in enumerate(cm.labels):
        tp = float(counts[k, k])
        precision = _ratio(tp, float(counts[:, k].sum()))
        recall = _ratio(tp, float(counts[k, :].sum()))
        per_class[label] = Scores(precision, recall, _ratio(2 * precision * recall, precision + recall))
    K = len(cm.labels)
    macro = Scores(
        sum(s.p for s in per_class.values()) / K,
        sum(s.r for s in per_class.values()) / K,
        sum(s.f1 for s in per_class.values()) / K,
    )
    accuracy = _ratio(float(np.trace(counts)), float(cm.total))
    return EvalReport(task, cm.total, accuracy, macro, per_class, cm)


def predict_labels(
    model: MtlModel,
    dataset: Dataset,
    *,
    pipeline: TextPipeline | None = None,
    batch_size: int = 64,
    encoded: tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]] | None = None,
) -> npt.NDArray[np.int64]:
    """Argmax predictions of ``dataset.task``'s head for every example, in eval mode."""
    spec = model.task(dataset.task)
    if spec.labels != dataset.labels:
        raise ConfigurationError(
            f"{dataset.task} dataset labels {list(dataset.labels)} differ from the model's {list(spec.labels)}"
        )
    if encoded is None:
        encoded = (pipeline or model.pipeline()).encode_many(dataset.texts)
    ids, mask = encoded
    predictions: list[npt.NDArray[np.int64]] = []
    for start in range(0, len(dataset), batch_size):
        rows = slice(start, start + batch_size)
        batch = MiniBatch(dataset.task, ids[rows], mask[rows], np.zeros(ids[rows].shape[0], dtype=np.int64))
        logits = forward_task(model, batch, dataset.task, train_mode=False)
        predictions.append(np.argmax(logits.data, axis=1).astype(np.int64))
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def evaluate(
    model: MtlModel,
    dataset: Dataset,
    *,
    pipeline: TextPipeline | None = None,
    batch_size: int = 64,
    encoded: tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]] | None = None,
) -> EvalReport:
    """Predict ``dataset`` with its task's head and score it against the gold labels.

    Raises:
        ContractError: ``dataset`` is empty.
        TaskLookupError: The model has no head for the dataset's task.
        ConfigurationError: The dataset's label set differs from the head's.
    """
    if len(dataset) == 0:
        raise ContractError(f"cannot evaluate an empty {dataset.task} dataset")
    predicted = predict_labels(model, dataset, pipeline=pipeline, batch_size=batch_size, encoded=encoded)
    cm = confusion(dataset.label_array(), predicted, len(dataset.labels), dataset.labels)
    result = report(cm, dataset.task)
    logger.debug("%s: macro F1 %.4f on %d examples", dataset.task, result.macro.f1, result.n)
    return result
