"""Joint multi-task training: task-interleaved mini-batches, cross-entropy, AdamW.

Each epoch, every enabled task's dataset is cut into ``ceil(n / batch_size)``
batches and the union of all of them is shuffled into one plan. Every step
takes the next batch in the plan, computes the unweighted mean cross-entropy
of that batch's own task head, and applies one AdamW update to the shared
encoder and that head only. Other heads are untouched, bit for bit.

All randomness derives from ``TrainConfig.seed``: the plan of epoch ``e`` from
``[seed, e]``, the example order of task ``t`` in epoch ``e`` from
``[seed, e, t]``, and the dropout masks of step ``s`` from ``[seed, e, s]``.
A fixed seed therefore gives bit-identical training runs.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field, fields
from types import MappingProxyType
from typing import Any

import numpy as np
import numpy.typing as npt

from hofmtl.autodiff import Tape, Tensor, apply, backward
from hofmtl.corpus import Dataset
from hofmtl.errors import ConfigurationError, ContractError, DataError, DivergenceError
from hofmtl.metrics import evaluate
from hofmtl.model import MiniBatch, MtlModel, forward_task
from hofmtl.pipeline import TextPipeline
from hofmtl.types import EpochRecord, PresetKey

__all__ = [
    "PRESETS",
    "MiniBatch",
    "OptimizerState",
    "TrainConfig",
    "adamw_update",
    "plan_epoch",
    "preset",
    "task_loss",
    "train",
    "train_step",
]

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
Encoded = tuple[npt.NDArray[np.int64], npt.NDArray[np.int64], npt.NDArray[np.int64]]


@dataclass(frozen=True, kw_only=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``grad_clip`` rescales the gradient of a step to at most that global L2
    norm; ``None`` turns clipping off.
    """

    preset_name: str = "custom"
    epochs: int
    learning_rate: float
    batch_size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    tasks_enabled: tuple[str, ...] = ("hof",)
    grad_clip: float | None = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.epochs, bool) or not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigurationError(f"train config: epochs must be a non-negative integer, got {self.epochs!r}")
        if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigurationError(f"train config: batch_size must be a positive integer, got {self.batch_size!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"train config: learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError(f"train config: betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.eps > 0 or self.weight_decay < 0:
            raise ConfigurationError("train config: eps must be positive and weight_decay non-negative")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigurationError(f"train config: grad_clip must be positive or null, got {self.grad_clip}")
        tasks = tuple(self.tasks_enabled)
        object.__setattr__(self, "tasks_enabled", tasks)
        if "hof" not in tasks:
            raise ConfigurationError(f"train config: tasks_enabled {list(tasks)} must include 'hof'")
        if len(set(tasks)) != len(tasks):
            raise ConfigurationError(f"train config: tasks_enabled {list(tasks)} has duplicates")

    def to_dict(self) -> dict[str, Any]:
        """Plain mapping of every field, lists for tuples."""
        data = asdict(self)
        data["tasks_enabled"] = list(self.tasks_enabled)
        return data

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        """Every field name, in declaration order."""
        return tuple(f.name for f in fields(cls))


PRESETS: Mapping[PresetKey, TrainConfig] = MappingProxyType(
    {
        "baseline": TrainConfig(preset_name="baseline", epochs=4, learning_rate=4e-4, batch_size=32),
        "sentiment": TrainConfig(
            preset_name="HASOC_sentiment",
            epochs=3,
            learning_rate=3e-5,
            batch_size=32,
            tasks_enabled=("hof", "sentiment"),
        ),
        "emotion": TrainConfig(
            preset_name="HASOC_emotion",
            epochs=3,
            learning_rate=4e-5,
            batch_size=32,
            tasks_enabled=("hof", "emotion"),
        ),
        "target": TrainConfig(
            preset_name="HASOC_target",
            epochs=4,
            learning_rate=4e-5,
            batch_size=16,
            tasks_enabled=("hof", "target"),
        ),
        "all": TrainConfig(
            preset_name="HASOC_all",
            epochs=2,
            learning_rate=3e-4,
            batch_size=16,
            tasks_enabled=("hof", "sentiment", "emotion", "target"),
        ),
    }
)


def preset(key: str) -> TrainConfig:
    """The preset called ``key`` (``baseline``, ``sentiment``, ``emotion``, ``target`` or ``all``).

    The display name (``HASOC_all`` and so on) is accepted as well.
    """
    for name, config in PRESETS.items():
        if key in (name, config.preset_name):
            return config
    raise ConfigurationError(f"unknown preset {key!r}; choose one of {', '.join(PRESETS)}")


@dataclass
class OptimizerState:
    """AdamW moments per parameter name.

    ``steps`` counts the updates each parameter received (the bias-correction
    exponent); ``step`` counts optimizer steps overall.
    """

    m: dict[str, FloatArray] = field(default_factory=dict[str, FloatArray])
    v: dict[str, FloatArray] = field(default_factory=dict[str, FloatArray])
    steps: dict[str, int] = field(default_factory=dict[str, int])
    step: int = 0

    @classmethod
    def create(cls, model: MtlModel) -> OptimizerState:
        """Zero moments for every parameter of ``model``."""
        params = model.parameters()
        return cls(
            m={name: np.zeros(t.shape) for name, t in params.items()},
            v={name: np.zeros(t.shape) for name, t in params.items()},
            steps=dict.fromkeys(params, 0),
        )


def adamw_update(
    param: npt.ArrayLike,
    grad: npt.ArrayLike,
    m: FloatArray,
    v: FloatArray,
    t: int,
    *,
    learning_rate: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """One decoupled-weight-decay Adam update.

    ``w <- w - lr * wd * w - lr * m_hat / (sqrt(v_hat) + eps)``, with ``m_hat``
    and ``v_hat`` the bias-corrected moments after ``t`` updates (``t >= 1``).

    Returns:
        The new parameter, first moment and second moment (float64).
    """
    w = np.asarray(param, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m_new / (1.0 - beta1**t)
    v_hat = v_new / (1.0 - beta2**t)
    w_new = w - learning_rate * weight_decay * w - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return w_new, m_new, v_new


def task_loss(logits: Tensor, labels: npt.ArrayLike) -> Tensor:
    """Mean cross-entropy of a batch. Every task's loss is built here, with weight 1."""
    return apply("cross_entropy", [logits], {"labels": np.asarray(labels, dtype=np.int64)})


def plan_epoch(
    sizes: Mapping[str, int], batch_size: int, seed: int | Sequence[int]
) -> list[tuple[str, int]]:
    """Interleave the batches of every task into one seeded order.

    Task ``t`` contributes batch indices ``0 .. ceil(n_t / batch_size) - 1``;
    the concatenated list is permuted uniformly.

    Raises:
        DataError: A task has no examples.
    """
    batches: list[tuple[str, int]] = []
    for task, n in sizes.items():
        if n < 1:
            raise DataError(f"no examples for task {task!r}")
        batches.extend((task, i) for i in range(math.ceil(n / batch_size)))
    order = np.random.default_rng(seed).permutation(len(batches))
    return [batches[int(i)] for i in order]


def train_step(
    model: MtlModel,
    state: OptimizerState,
    batch: MiniBatch,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[MtlModel, float]:
    """Forward, backward and one AdamW update for ``batch``'s task.

    Only the encoder and the batch task's head are updated; ``state`` is
    advanced in place.

    Returns:
        The updated model and the batch loss before the update.

    Raises:
        ContractError: The batch's task is not enabled in ``config``.
        DivergenceError: The loss is not finite.
    """
    task = batch.task
    if task not in config.tasks_enabled:
        raise ContractError(f"task {task!r} is not enabled in preset {config.preset_name}")
    model.task(task)
    state.step += 1
    with Tape() as tape:
        loss = task_loss(forward_task(model, batch, task, train_mode=True, rng=rng), batch.labels)
    value = loss.item()
    if not math.isfinite(value):
        message = f"non-finite loss {value} at step {state.step} on task {task}"
        raise DivergenceError(message, step=state.step, task=task)
    grads = backward(loss, tape)
    params = model.parameters()
    own_head = f"heads.{task}."
    trained = [name for name in params if not name.startswith("heads.") or name.startswith(own_head)]
    gradients = {name: grads[params[name].id].data if params[name].id in grads else None for name in trained}
    if config.grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(np.square(g))) for g in gradients.values() if g is not None))
        if norm > config.grad_clip:
            scale = config.grad_clip / norm
            gradients = {name: None if g is None else g * scale for name, g in gradients.items()}
    updated: dict[str, FloatArray] = {}
    for name in trained:
        tensor = params[name]
        grad = gradients[name]
        m = state.m.get(name, np.zeros(tensor.shape))
        v = state.v.get(name, np.zeros(tensor.shape))
        t = state.steps.get(name, 0) + 1
        updated[name], state.m[name], state.v[name] = adamw_update(
            tensor.data,
            np.zeros(tensor.shape) if grad is None else grad,
            m,
            v,
            t,
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )
        state.steps[name] = t
    return model.with_parameters(updated), value


def _encode(dataset: Dataset, pipeline: TextPipeline) -> Encoded:
    ids, mask = pipeline.encode_many(dataset.texts)
    return ids, mask, dataset.label_array()


def train(
    model: MtlModel,
    datasets: Mapping[str, Dataset],
    config: TrainConfig,
    validation: Dataset,
    *,
    pipeline: TextPipeline | None = None,
) -> tuple[MtlModel, list[EpochRecord]]:
    """Run ``config.epochs`` epochs of interleaved multi-task training.

    Args:
        model: Starting model; it must have a head for every enabled task.
        datasets: Training data per task; every enabled task needs examples.
            Tasks present here but not enabled are ignored.
        config: Hyperparameters.
        validation: Held-out hof data, scored after every epoch.
        pipeline: Text pipeline; defaults to the model's own.

    Returns:
        The trained model and one history record per epoch.

    Raises:
        ConfigurationError: ``validation`` is empty, or a dataset's labels
            differ from its head's.
        DataError: An enabled task has no training examples.
        DivergenceError: A step produced a non-finite loss.
    """
    if len(validation) == 0:
        raise ConfigurationError("the hof validation set is empty")
    if validation.task != "hof":
        raise ConfigurationError(f"validation set is for task {validation.task!r}, expected 'hof'")
    for task in config.tasks_enabled:
        if task not in datasets or len(datasets[task]) == 0:
            raise DataError(f"no examples for task {task!r}")
        spec = model.task(task)
        if spec.labels != datasets[task].labels:
            raise ConfigurationError(
                f"{task} dataset labels {list(datasets[task].labels)} differ from the model's {list(spec.labels)}"
            )
    history: list[EpochRecord] = []
    if config.epochs == 0:
        return model, history
    pipeline = pipeline or model.pipeline()
    encoded = {task: _encode(datasets[task], pipeline) for task in config.tasks_enabled}
    validation_ids, validation_mask = pipeline.encode_many(validation.texts)
    sizes = {task: len(datasets[task]) for task in config.tasks_enabled}
    state = OptimizerState.create(model)
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        plan = plan_epoch(sizes, bs, [config.seed, epoch])
        orders = {
            task: np.random.default_rng([config.seed, epoch, i]).permutation(sizes[task])
            for i, task in enumerate(config.tasks_enabled)
        }
        losses: dict[str, list[float]] = {task: [] for task in config.tasks_enabled}
        for step, (task, index) in enumerate(plan, start=1):
            rows = orders[task][index * bs : (index + 1) * bs]
            ids, mask, labels = encoded[task]
            batch = MiniBatch(task, ids[rows], mask[rows], labels[rows])
            rng = np.random.default_rng([config.seed, epoch, step])
            model, value = train_step(model, state, batch, config, rng)
            losses[task].append(value)
        result = evaluate(model, validation, encoded=(validation_ids, validation_mask))
        all_losses = [v for values in losses.values() for v in values]
        record: EpochRecord = {
            "epoch": epoch,
            "steps": len(plan),
            "mean_loss": float(np.mean(all_losses)),
            "task_losses": {task: float(np.mean(values)) for task, values in losses.items()},
            "hof_val_macro_f1": result.macro.f1,
            "hof_val_accuracy": result.accuracy,
        }
        history.append(record)
        logger.info(
            "%s epoch %d/%d: loss %.4f, hof validation macro F1 %.4f",
            config.preset_name,
            epoch,
            config.epochs,
            record["mean_loss"],
            record["hof_val_macro_f1"],
        )
    return model, history
