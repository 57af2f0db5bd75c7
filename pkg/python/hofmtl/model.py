"""The multi-task model: one shared encoder, one linear classification head per task.

Every task sees the same pooled encoder output; a head is a single affine map
from it to that task's logits. A loss on one task therefore reaches the shared
encoder and its own head, and nothing else::

    model = MtlModel.create(EncoderConfig(vocab_size=len(vocab)), vocab=vocab)
    predictions = predict_all(model, "@user you are awful", TextPipeline(vocab, 64))
    predictions["hof"]   # ('HOF', array([0.31, 0.69]))
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from hofmtl.autodiff import Tensor, apply
from hofmtl.encoder import EncoderConfig, EncoderParams, encode_batch, init_params
from hofmtl.errors import ConfigurationError, ContractError, TaskLookupError
from hofmtl.normalizer import NormalizerConfig
from hofmtl.pipeline import TextPipeline
from hofmtl.tokenizer import Vocab
from hofmtl.types import HeadInit, PredictionRecord, TaskPrediction

__all__ = [
    "DEFAULT_TASKS",
    "EMOTION_LABELS",
    "MiniBatch",
    "MtlModel",
    "TaskHead",
    "TaskSpec",
    "default_task",
    "forward_task",
    "predict_all",
    "predict_record",
]

logger = logging.getLogger(__name__)

EMOTION_LABELS = (
    "anger",
    "disgust",
    "fear",
    "joy",
    "sadness",
    "surprise",
    "enthusiasm",
    "fun",
    "hate",
    "neutral",
    "love",
    "boredom",
    "relief",
    "none",
)


@dataclass(frozen=True)
class TaskSpec:
    """A task name and its ordered label set."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ConfigurationError(f"task name {self.name!r} must be non-empty and free of whitespace")
        if not self.labels:
            raise ConfigurationError(f"task {self.name}: label set is empty")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigurationError(f"task {self.name}: labels are not unique")

    def index(self, label: str) -> int:
        """Position of ``label``; raises :class:`ConfigurationError` for a foreign label."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(f"task {self.name}: unknown label {label!r}") from None


DEFAULT_TASKS: tuple[TaskSpec, ...] = (
    TaskSpec("hof", ("NOT", "HOF")),
    TaskSpec("sentiment", ("negative", "positive", "neutral")),
    TaskSpec("emotion", EMOTION_LABELS),
    TaskSpec("target", ("NONE", "IND", "GRP", "OTH")),
)


def default_task(name: str) -> TaskSpec:
    """The default spec for one of the four standard tasks."""
    for spec in DEFAULT_TASKS:
        if spec.name == name:
            return spec
    raise TaskLookupError(f"no default label set for task {name!r}")


@dataclass(frozen=True)
class TaskHead:
    """``hidden_dim x |labels|`` weight and ``|labels|`` bias."""

    weight: Tensor
    bias: Tensor


def _head(task: str, weight: npt.ArrayLike, bias: npt.ArrayLike) -> TaskHead:
    return TaskHead(
        Tensor(np.asarray(weight, dtype=np.float32), grad_enabled=True, name=f"heads.{task}.weight"),
        Tensor(np.asarray(bias, dtype=np.float32), grad_enabled=True, name=f"heads.{task}.bias"),
    )


@dataclass(frozen=True)
class MiniBatch:
    """Rows of one task, already tokenized."""

    task: str
    ids: npt.NDArray[np.int64]
    mask: npt.NDArray[np.int64]
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        if self.ids.ndim != 2 or self.mask.shape != self.ids.shape or self.labels.shape != (self.ids.shape[0],):
            raise ContractError(
                f"mini-batch for {self.task}: ids {self.ids.shape}, mask {self.mask.shape} "
                f"and labels {self.labels.shape} do not line up"
            )

    def __len__(self) -> int:
        return int(self.ids.shape[0])


@dataclass(frozen=True)
class MtlModel:
    """Shared encoder plus one head per task, and the text pipeline its inputs go through.

    ``normalizer`` is ``None`` for the shipped normalizer configuration.
    """

    encoder: EncoderParams
    tasks: tuple[TaskSpec, ...]
    heads: Mapping[str, TaskHead]
    vocab: Vocab | None = field(default=None, compare=False)
    normalizer: NormalizerConfig | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        names = [t.name for t in self.tasks]
        if not names:
            raise ConfigurationError("a model needs at least one task")
        if len(set(names)) != len(names):
            raise ConfigurationError(f"task names are not unique: {names}")
        if set(self.heads) != set(names):
            raise ConfigurationError(f"heads {sorted(self.heads)} do not match tasks {names}")
        hidden = self.encoder.config.hidden_dim
        for spec in self.tasks:
            head = self.heads[spec.name]
            expected = (hidden, len(spec.labels))
            if head.weight.shape != expected or head.bias.shape != (len(spec.labels),):
                raise ConfigurationError(
                    f"head {spec.name}: weight {head.weight.shape} and bias {head.bias.shape} "
                    f"do not fit hidden size {hidden} and {len(spec.labels)} labels"
                )
        if self.vocab is not None and len(self.vocab) != self.encoder.config.vocab_size:
            raise ConfigurationError(
                f"vocabulary of {len(self.vocab)} tokens does not match vocab_size {self.encoder.config.vocab_size}"
            )

    @classmethod
    def create(
        cls,
        encoder_config: EncoderConfig,
        tasks: Sequence[TaskSpec] = DEFAULT_TASKS,
        *,
        vocab: Vocab | None = None,
        normalizer: NormalizerConfig | None = None,
        head_init: HeadInit = "normal",
    ) -> MtlModel:
        """A freshly initialized model.

        Heads are drawn after the encoder from a generator seeded by the
        encoder seed, in task order. ``head_init="zeros"`` gives all-zero heads,
        whose predictions are uniform.
        """
        encoder = init_params(encoder_config)
        rng = np.random.default_rng([encoder_config.seed, 1])
        hidden = encoder_config.hidden_dim
        heads: dict[str, TaskHead] = {}
        for spec in tasks:
            shape = (hidden, len(spec.labels))
            weight = (
                rng.normal(0.0, 0.02, size=shape).astype(np.float32)
                if head_init == "normal"
                else np.zeros(shape, dtype=np.float32)
            )
            heads[spec.name] = _head(spec.name, weight, np.zeros(len(spec.labels), dtype=np.float32))
        return cls(encoder, tuple(tasks), heads, vocab, normalizer)

    @property
    def config(self) -> EncoderConfig:
        """The encoder configuration."""
        return self.encoder.config

    @property
    def task_names(self) -> tuple[str, ...]:
        """Task names in head order."""
        return tuple(t.name for t in self.tasks)

    def task(self, name: str) -> TaskSpec:
        """The spec of task ``name``; raises :class:`TaskLookupError` if there is no such head."""
        for spec in self.tasks:
            if spec.name == name:
                return spec
        raise TaskLookupError(f"model has no head for task {name!r}; tasks are {', '.join(self.task_names)}")

    def parameters(self) -> dict[str, Tensor]:
        """Every trainable tensor by name: encoder parameters, then ``heads.<task>.weight|bias``."""
        params = dict(self.encoder.tensors)
        for spec in self.tasks:
            head = self.heads[spec.name]
            params[f"heads.{spec.name}.weight"] = head.weight
            params[f"heads.{spec.name}.bias"] = head.bias
        return params

    def with_parameters(self, arrays: Mapping[str, npt.ArrayLike]) -> MtlModel:
        """A copy with some or all parameters replaced by ``arrays`` (cast to float32)."""
        current = {name: t.data for name, t in self.parameters().items()}
        unknown = sorted(set(arrays) - set(current))
        if unknown:
            raise ConfigurationError(f"unknown parameter name(s): {', '.join(unknown)}")
        current.update(arrays)
        encoder = EncoderParams.from_arrays(self.config, current)
        heads = {
            spec.name: _head(spec.name, current[f"heads.{spec.name}.weight"], current[f"heads.{spec.name}.bias"])
            for spec in self.tasks
        }
        return replace(self, encoder=encoder, heads=heads)

    def pipeline(self) -> TextPipeline:
        """The text pipeline matching this model's normalizer, vocabulary and sequence length."""
        if self.vocab is None:
            raise ContractError("this model carries no vocabulary, so raw text cannot be encoded for it")
        return TextPipeline(self.vocab, self.config.max_len, self.normalizer or NormalizerConfig.default())


def forward_task(
    model: MtlModel,
    batch: MiniBatch,
    task: str,
    train_mode: bool,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits of ``task``'s head for every row of ``batch``: ``pooled · weight + bias``.

    Raises:
        TaskLookupError: The model has no head for ``task``.
    """
    model.task(task)
    head = model.heads[task]
    _, pooled = encode_batch(model.encoder, batch.ids, batch.mask, train_mode, rng)
    return apply("add", [apply("matmul", [pooled, head.weight]), head.bias])


def _probabilities(logits: Tensor) -> npt.NDArray[np.float64]:
    wide = Tensor(logits.data.astype(np.float64))
    return np.asarray(apply("softmax", [wide]).data, dtype=np.float64)


def predict_all(
    model: MtlModel, text: str, pipeline: TextPipeline | None = None
) -> dict[str, tuple[str, npt.NDArray[np.float64]]]:
    """Predict every task for one raw text.

    Returns:
        Task name to ``(label, probabilities)``, with one entry per head and
        probabilities in label order.
    """
    pipeline = pipeline or model.pipeline()
    ids, mask = pipeline.encode_many([text])
    batch = MiniBatch(model.tasks[0].name, ids, mask, np.zeros(1, dtype=np.int64))
    _, pooled = encode_batch(model.encoder, batch.ids, batch.mask, train_mode=False)
    out: dict[str, tuple[str, npt.NDArray[np.float64]]] = {}
    for spec in model.tasks:
        head = model.heads[spec.name]
        logits = apply("add", [apply("matmul", [pooled, head.weight]), head.bias])
        probs = _probabilities(logits)[0]
        out[spec.name] = (spec.labels[int(np.argmax(probs))], probs)
    return out


def predict_record(model: MtlModel, text: str, pipeline: TextPipeline | None = None) -> PredictionRecord:
    """:func:`predict_all` as the JSON-ready record the ``predict`` command prints."""
    pipeline = pipeline or model.pipeline()
    predictions: dict[str, TaskPrediction] = {}
    for name, (label, probs) in predict_all(model, text, pipeline).items():
        labels = model.task(name).labels
        predictions[name] = {
            "label": label,
            "probabilities": {lab: float(p) for lab, p in zip(labels, probs, strict=True)},
        }
    return {"text": text, "normalized": pipeline.normalize(text), "predictions": predictions}
