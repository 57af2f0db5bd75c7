"""Shared pytest fixtures for hofmtl tests."""

from __future__ import annotations

import pytest

from hofmtl.corpus import Dataset
from hofmtl.model import MtlModel
from hofmtl.tokenizer import Vocab
from tests.helpers import small_corpora, tiny_model, tiny_vocab


@pytest.fixture
def vocab() -> Vocab:
    """The tiny test vocabulary."""
    return tiny_vocab()


@pytest.fixture
def model() -> MtlModel:
    """A freshly initialized four-head model over the tiny vocabulary."""
    return tiny_model()


@pytest.fixture(scope="session")
def corpora() -> dict[str, Dataset]:
    """A small separable synthetic corpus for all four tasks.

    Session-scoped: datasets are immutable, so sharing one is safe.
    """
    return small_corpora()
