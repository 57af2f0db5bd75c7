"""Raw text to encoder input: normalization followed by tokenization."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from hofmtl.normalizer import NormalizerConfig, normalize
from hofmtl.tokenizer import EncodedText, Vocab, encode

__all__ = ["TextPipeline"]


@dataclass(frozen=True)
class TextPipeline:
    """The normalizer and vocabulary a model was trained with, plus its sequence length."""

    vocab: Vocab
    max_len: int
    normalizer: NormalizerConfig = field(default_factory=NormalizerConfig.default)

    def normalize(self, text: str) -> str:
        """Normalize one raw text."""
        return normalize(text, self.normalizer)

    def encode(self, text: str, *, normalized: bool = False) -> EncodedText:
        """Encode one text; pass ``normalized=True`` when it already went through :meth:`normalize`."""
        return encode(text if normalized else self.normalize(text), self.vocab, self.max_len)

    def encode_many(
        self, texts: Sequence[str], *, normalized: bool = False
    ) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
        """Encode a batch into ``B x max_len`` id and mask matrices."""
        encoded = [self.encode(text, normalized=normalized) for text in texts]
        ids = np.array([e.ids for e in encoded], dtype=np.int64).reshape(len(encoded), self.max_len)
        mask = np.array([e.mask for e in encoded], dtype=np.int64).reshape(len(encoded), self.max_len)
        return ids, mask
