"""Tests for the multi-task model, its heads and prediction."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hofmtl.autodiff import Tape, backward
from hofmtl.errors import ConfigurationError, ContractError, TaskLookupError
from hofmtl.model import (
    DEFAULT_TASKS,
    EMOTION_LABELS,
    MiniBatch,
    MtlModel,
    TaskSpec,
    default_task,
    forward_task,
    predict_all,
    predict_record,
)
from hofmtl.trainer import OptimizerState, TrainConfig, task_loss, train_step
from tests.helpers import random_batch, tiny_config, tiny_model, tiny_vocab


def _batch(model: MtlModel, task: str, seed: int = 0) -> MiniBatch:
    rng = np.random.default_rng(seed)
    ids, mask = random_batch(rng, model.config.vocab_size, 4, 6)
    labels = rng.integers(0, len(model.task(task).labels), size=4)
    return MiniBatch(task, ids, mask, labels)


class TestTaskSpec:
    """Task definitions."""

    def test_default_label_sets(self) -> None:
        """Two, three, fourteen and four classes, in that order."""
        assert [(t.name, len(t.labels)) for t in DEFAULT_TASKS] == [
            ("hof", 2),
            ("sentiment", 3),
            ("emotion", 14),
            ("target", 4),
        ]
        assert default_task("hof").labels == ("NOT", "HOF")
        assert len(set(EMOTION_LABELS)) == 14

    def test_unknown_default_task(self) -> None:
        """Only the four standard tasks have defaults."""
        with pytest.raises(TaskLookupError):
            default_task("sarcasm")

    def test_duplicate_labels(self) -> None:
        """Labels are unique within a task."""
        with pytest.raises(ConfigurationError, match="not unique"):
            TaskSpec("t", ("a", "a"))

    def test_label_index(self) -> None:
        """Known labels index; foreign ones are configuration errors."""
        assert default_task("target").index("GRP") == 2
        with pytest.raises(ConfigurationError, match="'PRF'"):
            default_task("hof").index("PRF")


class TestModel:
    """Construction and parameter handling."""

    def test_one_head_per_task(self, model: MtlModel) -> None:
        """Head shapes follow hidden width and label count."""
        assert model.task_names == ("hof", "sentiment", "emotion", "target")
        assert model.heads["emotion"].weight.shape == (8, 14)
        assert model.heads["target"].bias.shape == (4,)

    def test_parameters_list_encoder_then_heads(self, model: MtlModel) -> None:
        """Head parameters follow the encoder's, in task order."""
        names = list(model.parameters())
        assert names[0] == "embeddings.token"
        assert names[-2:] == ["heads.target.weight", "heads.target.bias"]

    def test_zero_heads_predict_uniformly(self) -> None:
        """All-zero heads give every label the same probability."""
        vocab = tiny_vocab()
        model = MtlModel.create(tiny_config(len(vocab)), vocab=vocab, head_init="zeros")
        for name, (_, probs) in predict_all(model, "you are awful").items():
            k = len(model.task(name).labels)
            np.testing.assert_allclose(probs, np.full(k, 1.0 / k), atol=1e-12)

    def test_vocab_size_must_match(self) -> None:
        """The vocabulary and the embedding table agree in size."""
        vocab = tiny_vocab()
        with pytest.raises(ConfigurationError, match="does not match vocab_size"):
            MtlModel.create(tiny_config(len(vocab) + 1), vocab=vocab)

    def test_duplicate_task_names(self) -> None:
        """Each task has one head."""
        with pytest.raises(ConfigurationError, match="not unique"):
            tiny_model(tasks=(default_task("hof"), default_task("hof")))

    def test_with_parameters_replaces_only_what_is_given(self, model: MtlModel) -> None:
        """Untouched parameters keep their values."""
        replaced = model.with_parameters({"heads.hof.bias": np.array([1.0, -1.0])})
        np.testing.assert_array_equal(replaced.heads["hof"].bias.data, [1.0, -1.0])
        np.testing.assert_array_equal(replaced.heads["sentiment"].weight.data, model.heads["sentiment"].weight.data)

    def test_with_parameters_rejects_unknown_names(self, model: MtlModel) -> None:
        """A misspelled parameter is an error."""
        with pytest.raises(ConfigurationError, match=r"heads\.sarcasm\.bias"):
            model.with_parameters({"heads.sarcasm.bias": np.zeros(2)})

    def test_unknown_task_lookup(self, model: MtlModel) -> None:
        """The error lists the tasks the model has."""
        with pytest.raises(TaskLookupError, match="hof, sentiment, emotion, target"):
            model.task("sarcasm")

    def test_pipeline_needs_a_vocabulary(self) -> None:
        """Raw text cannot be encoded without one."""
        model = MtlModel.create(tiny_config(44))
        with pytest.raises(ContractError):
            model.pipeline()


class TestForward:
    """Task logits and head isolation."""

    def test_logit_shape(self, model: MtlModel) -> None:
        """One row per example, one column per label."""
        logits = forward_task(model, _batch(model, "emotion"), "emotion", train_mode=False)
        assert logits.shape == (4, 14)

    def test_unknown_task(self, model: MtlModel) -> None:
        """Asking for a head the model lacks fails before any work."""
        with pytest.raises(TaskLookupError):
            forward_task(model, _batch(model, "hof"), "sarcasm", train_mode=False)

    def test_misaligned_batch(self) -> None:
        """Labels must match the number of rows."""
        with pytest.raises(ContractError):
            MiniBatch("hof", np.zeros((2, 3), dtype=np.int64), np.ones((2, 3), dtype=np.int64), np.zeros(3))

    @pytest.mark.parametrize("task", ["hof", "sentiment", "emotion", "target"])
    def test_loss_reaches_only_its_own_head(self, model: MtlModel, task: str) -> None:
        """Gradients flow to the encoder and this task's head, and to no other head."""
        batch = _batch(model, task)
        with Tape() as tape:
            loss = task_loss(forward_task(model, batch, task, train_mode=False), batch.labels)
        grads = backward(loss, tape)
        for name, tensor in model.parameters().items():
            other_head = name.startswith("heads.") and not name.startswith(f"heads.{task}.")
            assert (tensor.id in grads) is not other_head, name

    @pytest.mark.parametrize("task", ["hof", "sentiment", "emotion", "target"])
    def test_uniform_heads_cost_log_k(self, task: str) -> None:
        """With zero heads the initial loss is ln K."""
        vocab = tiny_vocab()
        model = MtlModel.create(tiny_config(len(vocab)), vocab=vocab, head_init="zeros")
        batch = _batch(model, task)
        loss = task_loss(forward_task(model, batch, task, train_mode=False), batch.labels)
        assert abs(loss.item() - math.log(len(model.task(task).labels))) < 1e-6


class TestPredict:
    """Prediction over raw text."""

    def test_every_task_is_predicted(self, model: MtlModel) -> None:
        """Four entries, each a label and a distribution."""
        predictions = predict_all(model, "@someone you are an idiot #NoWay")
        assert set(predictions) == {"hof", "sentiment", "emotion", "target"}
        for name, (label, probs) in predictions.items():
            labels = model.task(name).labels
            assert label == labels[int(np.argmax(probs))]
            assert abs(float(probs.sum()) - 1.0) < 1e-9

    def test_record_is_json_ready(self, model: MtlModel) -> None:
        """The record carries the normalized text and label-keyed probabilities."""
        record = predict_record(model, "@someone hi")
        assert record["normalized"] == "<user> hi"
        assert set(record["predictions"]["sentiment"]["probabilities"]) == {"negative", "positive", "neutral"}
        assert all(isinstance(p, float) for p in record["predictions"]["hof"]["probabilities"].values())

    def test_constant_logit_shift_keeps_the_label(self, model: MtlModel) -> None:
        """Adding one constant to every logit of a head changes neither label nor probabilities."""
        rng = np.random.default_rng(4)
        spread = {f"heads.{t.name}.bias": rng.normal(0.0, 2.0, len(t.labels)) for t in model.tasks}
        base = model.with_parameters(spread)
        shifted = base.with_parameters({name: bias + 7.5 for name, bias in spread.items()})
        for text in ("you are awful", "the day is great", "idiot"):
            before, after = predict_all(base, text), predict_all(shifted, text)
            for task, (label, probs) in before.items():
                assert after[task][0] == label
                np.testing.assert_allclose(after[task][1], probs, atol=1e-6)

    def test_memorized_texts_are_reproduced_on_every_task(self) -> None:
        """After training on eight texts, predict_all gives back each of their four gold labels."""
        model = tiny_model()
        gold = {
            "you are awful": ("HOF", "negative", EMOTION_LABELS[0], "IND"),
            "the day is great": ("NOT", "positive", EMOTION_LABELS[1], "NONE"),
            "you idiot": ("HOF", "negative", EMOTION_LABELS[2], "IND"),
            "great day": ("NOT", "positive", EMOTION_LABELS[3], "NONE"),
            "the idiot is awful": ("HOF", "neutral", EMOTION_LABELS[4], "OTH"),
            "is the day": ("NOT", "neutral", EMOTION_LABELS[5], "NONE"),
            "are you great": ("NOT", "positive", EMOTION_LABELS[6], "NONE"),
            "awful idiot day": ("HOF", "negative", EMOTION_LABELS[7], "GRP"),
        }
        texts = list(gold)
        ids, mask = model.pipeline().encode_many(texts)
        batches = [
            MiniBatch(spec.name, ids, mask, np.array([spec.index(gold[t][i]) for t in texts]))
            for i, spec in enumerate(model.tasks)
        ]
        config = TrainConfig(
            preset_name="memorize",
            epochs=1,
            learning_rate=0.01,
            batch_size=len(texts),
            weight_decay=0.0,
            tasks_enabled=model.task_names,
            grad_clip=None,
        )
        state = OptimizerState.create(model)
        for _ in range(300):
            for batch in batches:
                model, _ = train_step(model, state, batch, config)
        for text, labels in gold.items():
            predicted = predict_all(model, text)
            assert tuple(predicted[name][0] for name in model.task_names) == labels, text
