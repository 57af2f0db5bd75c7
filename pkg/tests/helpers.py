"""Shared builders for the hofmtl test-suite: tiny models, vocabularies and corpora."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from hofmtl.corpus import Dataset, Example, FixtureSpec, synth_fixture
from hofmtl.encoder import EncoderConfig
from hofmtl.model import DEFAULT_TASKS, MtlModel, TaskSpec
from hofmtl.tokenizer import SPECIAL_TOKENS, Vocab

__all__ = [
    "FIXTURES",
    "REPO_ROOT",
    "WORDS",
    "dataset",
    "random_batch",
    "repo_checkout_available",
    "small_corpora",
    "tiny_config",
    "tiny_model",
    "tiny_vocab",
]

# Where the repository root would be, if these tests are running from a checkout.
REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / "fixtures"

#: Whole-word entries of :func:`tiny_vocab`, after the special tokens.
WORDS = ("<user>", "<url>", "you", "are", "awful", "great", "the", "day", "idiot", "is")


def repo_checkout_available() -> bool:
    """Whether these tests can read repository files, not just the package.

    Modules auditing repository artifacts (the MkDocs config, the generated
    presets page, the generator script) must skip rather than fail when only
    ``tests/`` sits next to an installed wheel.

    Returns:
        True when ``pyproject.toml`` sits above ``tests/``.
    """
    return (REPO_ROOT / "pyproject.toml").is_file()


def tiny_vocab() -> Vocab:
    """Special tokens, a handful of words, and the letters of those words as ``##`` pieces."""
    letters = sorted({ch for word in WORDS if not word.startswith("<") for ch in word})
    return Vocab((*SPECIAL_TOKENS, *WORDS, *letters, *(f"##{ch}" for ch in letters)))


def tiny_config(vocab_size: int, **overrides: Any) -> EncoderConfig:
    """An encoder small enough for finite differences and per-test training runs."""
    base = EncoderConfig(
        vocab_size=vocab_size,
        num_layers=1,
        hidden_dim=8,
        num_heads=2,
        ffn_dim=16,
        max_len=8,
        dropout_rate=0.0,
        seed=0,
    )
    return replace(base, **overrides)


def tiny_model(tasks: Sequence[TaskSpec] = DEFAULT_TASKS, **overrides: Any) -> MtlModel:
    """A four-head model (by default) over :func:`tiny_vocab`."""
    vocab = tiny_vocab()
    return MtlModel.create(tiny_config(len(vocab), **overrides), tasks, vocab=vocab)


def random_batch(
    rng: np.random.Generator, vocab_size: int, batch: int, length: int
) -> tuple[np.ndarray[Any, np.dtype[np.int64]], np.ndarray[Any, np.dtype[np.int64]]]:
    """Random ids with a prefix mask of random length (at least the first position)."""
    ids = rng.integers(4, vocab_size, size=(batch, length))
    lengths = rng.integers(1, length + 1, size=batch)
    mask = (np.arange(length)[None, :] < lengths[:, None]).astype(np.int64)
    ids = np.where(mask == 1, ids, 0)
    return ids.astype(np.int64), mask


def dataset(task: str, rows: Sequence[tuple[str, str]], labels: Sequence[str] | None = None) -> Dataset:
    """A dataset from ``(text, label)`` pairs with generated ids."""
    spec = next(t for t in DEFAULT_TASKS if t.name == task)
    names = tuple(labels) if labels is not None else spec.labels
    examples = tuple(Example(f"{task}-{i}", text, names.index(label)) for i, (text, label) in enumerate(rows))
    return Dataset(task, names, examples, "test")


def small_corpora(
    sizes: Mapping[str, int] | None = None, *, rho: float = 0.9, cue: float = 1.0, seed: int = 0
) -> dict[str, Dataset]:
    """A synthetic multi-task corpus, small enough for a few training epochs in a test."""
    spec = FixtureSpec(sizes=dict(sizes or {"hof": 60, "sentiment": 30, "emotion": 30, "target": 30}), rho=rho, cue=cue)
    return synth_fixture(spec, seed)
