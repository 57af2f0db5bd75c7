"""WordPiece-style subword vocabulary and fixed-length encoding.

A vocabulary is built from already-normalized text. It holds the four special
tokens, then the placeholder and emoji-alias tokens the normalizer emits (kept
atomic, never split), then every character seen in word-initial and ``##``
continuation form, then merged subwords chosen by the WordPiece score
``count(ab) / (count(a) * count(b))`` until the target size is reached.

Encoding is greedy longest-match-first inside each whitespace word. A word with
any span that no vocabulary entry covers becomes a single ``[UNK]``::

    vocab = build_vocab(["ab ab"], 8)
    encode("ab", vocab, 5).ids        # (CLS, a, ##b, SEP, PAD) as ids
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

from hofmtl.errors import ContractError, IngestionError, VocabularyError
from hofmtl.files import atomic_write_text, read_utf8
from hofmtl.normalizer import NormalizerConfig
from hofmtl.types import PathArg

__all__ = [
    "CLS",
    "CONTINUATION",
    "PAD",
    "SEP",
    "SPECIAL_TOKENS",
    "UNK",
    "EncodedText",
    "Vocab",
    "build_vocab",
    "decode",
    "encode",
]

logger = logging.getLogger(__name__)

PAD = "[PAD]"
UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)
CONTINUATION = "##"

# Longer words are not worth a quadratic match; they encode as [UNK].
_MAX_WORD_CHARS = 100


@dataclass(frozen=True)
class Vocab:
    """An immutable token list; a token's id is its position.

    ``[PAD]`` is id 0 and the other special tokens are present exactly once.
    """

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens or self.tokens[0] != PAD:
            raise VocabularyError(f"vocabulary must start with {PAD}")
        if len(set(self.tokens)) != len(self.tokens):
            duplicates = sorted(t for t, c in Counter(self.tokens).items() if c > 1)
            raise VocabularyError(f"vocabulary has duplicate tokens: {', '.join(duplicates[:5])}")
        missing = [t for t in SPECIAL_TOKENS if t not in self.index]
        if missing:
            raise VocabularyError(f"vocabulary lacks special tokens: {', '.join(missing)}")

    @cached_property
    def index(self) -> dict[str, int]:
        """Token to id."""
        return {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    @property
    def pad_id(self) -> int:
        """Id of ``[PAD]``; always 0."""
        return 0

    @property
    def unk_id(self) -> int:
        """Id of ``[UNK]``."""
        return self.index[UNK]

    @property
    def cls_id(self) -> int:
        """Id of ``[CLS]``."""
        return self.index[CLS]

    @property
    def sep_id(self) -> int:
        """Id of ``[SEP]``."""
        return self.index[SEP]

    @cached_property
    def special_ids(self) -> frozenset[int]:
        """Ids of the four special tokens."""
        return frozenset(self.index[t] for t in SPECIAL_TOKENS)

    def save(self, path: PathArg) -> None:
        """Write one token per line; line number (from 0) is the id."""
        atomic_write_text(path, "".join(f"{token}\n" for token in self.tokens))

    @classmethod
    def load(cls, path: PathArg) -> Vocab:
        """Read a file written by :meth:`save`.

        Raises:
            VocabularyError: The file has an empty line, a token with
                whitespace, a duplicate, or lacks a special token.
            IngestionError: The file is not UTF-8.
        """
        lines = read_utf8(path, "vocabulary file").splitlines()
        for number, token in enumerate(lines, start=1):
            if not token or token != token.strip() or any(ch.isspace() for ch in token):
                raise VocabularyError(f"vocabulary file {path} line {number}: {token!r} is not a token")
        return cls(tuple(lines))


@dataclass(frozen=True)
class EncodedText:
    """Fixed-length ids with a prefix attention mask."""

    ids: tuple[int, ...]
    mask: tuple[int, ...]


def _atomic_tokens(config: NormalizerConfig) -> frozenset[str]:
    return frozenset(config.entity_tokens.values()) | frozenset(config.emoji_aliases.values())


def _pair_scores(
    words: Counter[tuple[str, ...]], min_frequency: int
) -> tuple[tuple[str, str], float] | None:
    symbol_counts: Counter[str] = Counter()
    pair_counts: Counter[tuple[str, str]] = Counter()
    for symbols, count in words.items():
        for symbol in symbols:
            symbol_counts[symbol] += count
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += count
    best: tuple[tuple[str, str], float] | None = None
    for pair in sorted(pair_counts):
        count = pair_counts[pair]
        if count < min_frequency:
            continue
        score = count / (symbol_counts[pair[0]] * symbol_counts[pair[1]])
        if best is None or score > best[1]:
            best = (pair, score)
    return best


def _merge(words: Counter[tuple[str, ...]], pair: tuple[str, str], merged: str) -> Counter[tuple[str, ...]]:
    out: Counter[tuple[str, ...]] = Counter()
    for symbols, count in words.items():
        result: list[str] = []
        i = 0
        while i < len(symbols):
            if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
                result.append(merged)
                i += 2
            else:
                result.append(symbols[i])
                i += 1
        out[tuple(result)] += count
    return out


def build_vocab(
    corpus: Sequence[str],
    target_size: int,
    *,
    config: NormalizerConfig | None = None,
    min_frequency: int = 2,
) -> Vocab:
    """Build a vocabulary of at most ``target_size`` tokens from normalized text.

    Placeholder tokens the corpus never uses are added while room remains; any
    that do not fit are named in a warning, since they will encode as ``[UNK]``.

    Args:
        corpus: Normalized strings.
        target_size: Upper bound on the vocabulary size; at least 5.
        config: Supplies the atomic placeholder and alias tokens; defaults to
            :meth:`NormalizerConfig.default`.
        min_frequency: A pair must occur this often to be merged.

    Raises:
        IngestionError: ``corpus`` has no words.
        VocabularyError: ``target_size`` is below 5, or the special tokens,
            atomic tokens seen and character alphabet do not fit in it.
    """
    if target_size < len(SPECIAL_TOKENS) + 1:
        raise VocabularyError(f"target vocabulary size {target_size} leaves no room beyond the special tokens")
    config = config or NormalizerConfig.default()
    atomic = _atomic_tokens(config)
    word_counts: Counter[str] = Counter(word for text in corpus for word in text.split())
    if not word_counts:
        raise IngestionError("cannot build a vocabulary from an empty corpus")

    tokens: list[str] = list(SPECIAL_TOKENS)
    seen_atomic = sorted(w for w in word_counts if w in atomic and w not in SPECIAL_TOKENS)
    tokens.extend(seen_atomic)
    words: Counter[tuple[str, ...]] = Counter()
    for word, count in word_counts.items():
        if word in atomic or word in SPECIAL_TOKENS:
            continue
        words[(word[0], *(CONTINUATION + ch for ch in word[1:]))] += count
    alphabet = sorted({symbol for symbols in words for symbol in symbols})
    tokens.extend(alphabet)
    if len(tokens) > target_size:
        raise VocabularyError(
            f"target vocabulary size {target_size} cannot hold the {len(tokens)} special, "
            "placeholder and single-character tokens of this corpus"
        )
    present = set(tokens)
    left_out: list[str] = []
    for token in config.entity_tokens.values():
        if token in present:
            continue
        if len(tokens) < target_size:
            tokens.append(token)
            present.add(token)
        else:
            left_out.append(token)
    if left_out:
        logger.warning(
            "vocabulary of %d tokens has no room for unseen placeholder(s) %s; they will encode as %s",
            target_size,
            ", ".join(left_out),
            UNK,
        )

    while len(tokens) < target_size:
        best = _pair_scores(words, min_frequency)
        if best is None:
            break
        (left, right), _ = best
        merged = left + right.removeprefix(CONTINUATION)
        words = _merge(words, (left, right), merged)
        if merged not in present:
            tokens.append(merged)
            present.add(merged)
    logger.info("built vocabulary of %d tokens from %d distinct words", len(tokens), len(word_counts))
    return Vocab(tuple(tokens))


def _word_pieces(word: str, vocab: Vocab) -> list[int]:
    if len(word) > _MAX_WORD_CHARS:
        return [vocab.unk_id]
    pieces: list[int] = []
    start = 0
    while start < len(word):
        for end in range(len(word), start, -1):
            candidate = word[start:end] if start == 0 else CONTINUATION + word[start:end]
            token_id = vocab.index.get(candidate)
            if token_id is not None and token_id not in vocab.special_ids:
                pieces.append(token_id)
                start = end
                break
        else:
            return [vocab.unk_id]
    return pieces


def encode(text: str, vocab: Vocab, max_len: int) -> EncodedText:
    """Encode normalized text as ``[CLS] pieces... [SEP]`` padded to ``max_len``.

    Pieces past ``max_len - 2`` are dropped; ``[SEP]`` is always kept.

    Raises:
        ContractError: ``max_len`` is below 2.
    """
    if max_len < 2:
        raise ContractError(f"max_len must be at least 2, got {max_len}")
    pieces = [piece for word in text.split() for piece in _word_pieces(word, vocab)]
    body = [vocab.cls_id, *pieces[: max_len - 2], vocab.sep_id]
    padding = max_len - len(body)
    return EncodedText(ids=(*body, *([vocab.pad_id] * padding)), mask=(1,) * len(body) + (0,) * padding)


def decode(ids: Iterable[int], vocab: Vocab) -> str:
    """Turn ids back into text, gluing ``##`` pieces and dropping pad/cls/sep.

    Raises:
        VocabularyError: An id is outside the vocabulary.
    """
    words: list[str] = []
    skipped = {vocab.pad_id, vocab.cls_id, vocab.sep_id}
    for token_id in ids:
        if not 0 <= token_id < len(vocab):
            raise VocabularyError(f"token id {token_id} is outside a vocabulary of {len(vocab)}")
        if token_id in skipped:
            continue
        token = vocab.tokens[token_id]
        if token.startswith(CONTINUATION) and words and len(token) > len(CONTINUATION):
            words[-1] += token[len(CONTINUATION) :]
        else:
            words.append(token)
    return " ".join(words)
