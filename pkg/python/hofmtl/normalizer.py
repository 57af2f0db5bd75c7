"""Tweet normalization: entity placeholders, hashtag splitting, emoji aliases, whitespace.

Raw tweets go through one fixed rule list before tokenization::

    from hofmtl.normalizer import normalize

    normalize("@bob lol 😂 #CovidVaccine https://t.co/x")
    # '<user> lol :face_with_tears_joy: Covid Vaccine <url>'

The rules run in this order:

1. whitespace of any kind (tabs, line breaks, runs of spaces) becomes one space
2. URLs, then e-mail addresses, become ``<url>`` / ``<email>``
3. hashtags lose their ``#`` and are split into words (:func:`segment_hashtag`)
4. dates, times, phone numbers, money amounts and percentages become their tokens
5. ``@`` mentions become ``<user>``
6. every emoji sequence in the alias table becomes its ``:alias:`` token
7. whitespace is collapsed again and the ends are stripped

Numeric rules run before mentions so that ``@`` glued to a time or a phone
number cannot hide it. Every replacement is padded with spaces, so it always
stands as its own whitespace-delimited word.

The rule list is applied repeatedly until the text stops changing. One pass is
almost always enough; the repeat is what makes :func:`normalize` idempotent for
every input, including adversarial ones where a replacement exposes a new match.

Bare numbers that are none of the above are left as they are, and no case
folding, spelling correction or stop-word removal happens here.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cache, cached_property
from importlib import resources
from types import MappingProxyType
from typing import Any, cast

import emoji

from hofmtl.errors import ConfigurationError
from hofmtl.files import read_utf8
from hofmtl.types import EntityClass, PathArg

__all__ = [
    "DEFAULT_ENTITY_TOKENS",
    "ENTITY_PATTERNS",
    "NormalizerConfig",
    "load_emoji_aliases",
    "load_lexicon",
    "normalize",
    "segment_hashtag",
]

logger = logging.getLogger(__name__)

DEFAULT_ENTITY_TOKENS: Mapping[EntityClass, str] = MappingProxyType(
    {
        "url": "<url>",
        "email": "<email>",
        "user": "<user>",
        "percent": "<percent>",
        "money": "<money>",
        "time": "<time>",
        "date": "<date>",
        "phone": "<phone>",
    }
)

#: The fixed grammars, in application order. Documented in docs/preprocessing.md.
ENTITY_PATTERNS: Mapping[EntityClass, re.Pattern[str]] = MappingProxyType(
    {
        "url": re.compile(r"\b(?:https?://|www\.)\S+", re.IGNORECASE),
        "email": re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+"),
        "date": re.compile(r"\b\d{1,4}[/.-]\d{1,2}[/.-]\d{1,4}\b"),
        "time": re.compile(r"(?<!\w)\d{1,2}:\d{2}(?::\d{2})?(?:\s?[ap]m)?(?!\w)", re.IGNORECASE),
        "phone": re.compile(r"(?<![\w+])(?:\+\d{1,3}[\s.-]?)?(?:\(\d{3}\)|\d{3})[\s.-]?\d{3}[\s.-]?\d{4}(?!\w)"),
        "money": re.compile(
            r"[$€£¥]\s?\d+(?:[.,]\d+)*(?:[km]\b)?"
            r"|\b\d+(?:[.,]\d+)*\s?(?:usd|eur|gbp|dollars?|euros?|pounds?|bucks)\b",
            re.IGNORECASE,
        ),
        "percent": re.compile(r"(?<![\w.])\d+(?:[.,]\d+)?\s?%"),
        "user": re.compile(r"(?<!\w)@\w+"),
    }
)

_NUMERIC_ORDER: tuple[EntityClass, ...] = ("date", "time", "phone", "money", "percent")
_HASHTAG = re.compile(r"#([^\W_]+)")
_WHITESPACE = re.compile(r"\s+")
_ENTITY_TOKEN = re.compile(r"<[^\s<>]+>")
_ALIAS_TOKEN = re.compile(r":[^\s:]+:")
_ALIAS_UNSAFE = re.compile(r"[\s:]+")
_RUNS = re.compile(r"\d+|[^\W\d_]+|[\W_]+")
_MAX_PASSES = 32

_DEFAULT_ALIAS_FILE = "emoji_aliases.tsv"
_DICT_KEYS = frozenset({"entity_tokens", "emoji_aliases", "emoji_removed", "segmentation_lexicon"})


def _alias_from_name(name: str) -> str:
    """Turn an ``emoji`` package name such as ``:red_heart:`` into a valid alias token."""
    body = _ALIAS_UNSAFE.sub("_", name.strip(":")).strip("_")
    return f":{body}:"


def load_emoji_aliases(path: PathArg) -> dict[str, str]:
    """Read an alias file: one ``<emoji sequence><TAB><:alias:>`` mapping per line.

    Blank lines are skipped. Raises :class:`ConfigurationError` for a line that
    is not two tab-separated fields.
    """
    table: dict[str, str] = {}
    text = read_utf8(path, "emoji alias file")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ConfigurationError(f"emoji alias file {path} line {number}: expected '<emoji>\\t<:alias:>'")
        table[parts[0]] = parts[1].strip()
    return table


def load_lexicon(path: PathArg) -> frozenset[str]:
    """Read a segmentation word list: one word per line, lowercased, blanks skipped."""
    words = read_utf8(path, "lexicon").split()
    return frozenset(word.lower() for word in words)


@cache
def _default_aliases() -> Mapping[str, str]:
    table = {sequence: _alias_from_name(data["en"]) for sequence, data in emoji.EMOJI_DATA.items()}
    shipped = resources.files("hofmtl").joinpath("data", _DEFAULT_ALIAS_FILE)
    with resources.as_file(shipped) as path:
        table.update(load_emoji_aliases(path))
    return MappingProxyType(table)


@dataclass(frozen=True, eq=False)
class NormalizerConfig:
    """Replacement tokens, emoji alias table and hashtag lexicon for :func:`normalize`.

    Attributes:
        entity_tokens: Entity class to replacement token. Every class must be
            present and every token must look like ``<name>``.
        emoji_aliases: Emoji codepoint sequence to alias token ``:name:``.
        segmentation_lexicon: Lowercase words used to split all-lowercase
            hashtags; ``None`` leaves them whole.
    """

    entity_tokens: Mapping[EntityClass, str] = DEFAULT_ENTITY_TOKENS
    emoji_aliases: Mapping[str, str] = field(default_factory=dict[str, str])
    segmentation_lexicon: frozenset[str] | None = None

    def __post_init__(self) -> None:
        missing = sorted(set(DEFAULT_ENTITY_TOKENS) - set(self.entity_tokens))
        if missing:
            raise ConfigurationError(f"normalizer config: no replacement token for {', '.join(missing)}")
        for entity, token in self.entity_tokens.items():
            if entity not in DEFAULT_ENTITY_TOKENS:
                raise ConfigurationError(f"normalizer config: unknown entity class {entity!r}")
            if not _ENTITY_TOKEN.fullmatch(token):
                raise ConfigurationError(
                    f"normalizer config: token {token!r} for {entity} must be '<name>' with no whitespace"
                )
        for sequence, alias in self.emoji_aliases.items():
            if not sequence:
                raise ConfigurationError("normalizer config: empty emoji sequence in the alias table")
            if not _ALIAS_TOKEN.fullmatch(alias):
                raise ConfigurationError(f"normalizer config: alias {alias!r} for {sequence!r} must be ':name:'")

    @classmethod
    def default(cls) -> NormalizerConfig:
        """The shipped configuration: angle-bracket tokens, full emoji table, no lexicon."""
        return _default_config()

    @classmethod
    def from_files(
        cls,
        *,
        emoji_aliases: PathArg | None = None,
        lexicon: PathArg | None = None,
        entity_tokens: Mapping[EntityClass, str] | None = None,
    ) -> NormalizerConfig:
        """Build a config from data files.

        An alias file is laid over the default table, so it only needs the
        entries it changes or adds.
        """
        aliases = dict(_default_aliases())
        if emoji_aliases is not None:
            overrides = load_emoji_aliases(emoji_aliases)
            logger.debug("loaded %d emoji alias override(s) from %s", len(overrides), emoji_aliases)
            aliases.update(overrides)
        return cls(
            entity_tokens=dict(entity_tokens) if entity_tokens else DEFAULT_ENTITY_TOKENS,
            emoji_aliases=aliases,
            segmentation_lexicon=load_lexicon(lexicon) if lexicon is not None else None,
        )

    def to_dict(self) -> dict[str, Any]:
        """A JSON-ready description that :meth:`from_dict` turns back into an equivalent config.

        Emoji aliases are stored as differences from the shipped table, so the
        shipped configuration describes itself in a few lines.
        """
        shipped = _default_aliases()
        lexicon = self.segmentation_lexicon
        return {
            "entity_tokens": dict(self.entity_tokens),
            "emoji_aliases": {s: a for s, a in sorted(self.emoji_aliases.items()) if shipped.get(s) != a},
            "emoji_removed": sorted(set(shipped) - set(self.emoji_aliases)),
            "segmentation_lexicon": sorted(lexicon) if lexicon is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> NormalizerConfig:
        """Rebuild a config written by :meth:`to_dict`.

        Raises:
            ConfigurationError: An unknown key, or values :class:`NormalizerConfig`
                rejects.
        """
        unknown = sorted(set(data) - _DICT_KEYS)
        if unknown:
            raise ConfigurationError(f"normalizer config: unknown key(s) {', '.join(map(repr, unknown))}")
        aliases = dict(_default_aliases())
        for sequence in data.get("emoji_removed", ()):
            aliases.pop(str(sequence), None)
        aliases.update({str(s): str(a) for s, a in dict(data.get("emoji_aliases", {})).items()})
        tokens = {str(k): str(v) for k, v in dict(data.get("entity_tokens", DEFAULT_ENTITY_TOKENS)).items()}
        lexicon = data.get("segmentation_lexicon")
        return cls(
            entity_tokens=cast("dict[EntityClass, str]", tokens),
            emoji_aliases=aliases,
            segmentation_lexicon=frozenset(str(w) for w in lexicon) if lexicon is not None else None,
        )

    @cached_property
    def _emoji_pattern(self) -> re.Pattern[str] | None:
        if not self.emoji_aliases:
            return None
        # Longest first so multi-codepoint sequences win over their prefixes.
        sequences = sorted(self.emoji_aliases, key=len, reverse=True)
        return re.compile("|".join(re.escape(s) for s in sequences))

    def apply_once(self, text: str) -> str:
        """Run the rule list a single time."""
        tokens = self.entity_tokens
        text = _WHITESPACE.sub(" ", text)
        text = ENTITY_PATTERNS["url"].sub(f" {tokens['url']} ", text)
        text = ENTITY_PATTERNS["email"].sub(f" {tokens['email']} ", text)
        text = _HASHTAG.sub(self._split_hashtag, text)
        for entity in _NUMERIC_ORDER:
            text = ENTITY_PATTERNS[entity].sub(f" {tokens[entity]} ", text)
        text = ENTITY_PATTERNS["user"].sub(f" {tokens['user']} ", text)
        pattern = self._emoji_pattern
        if pattern is not None:
            text = pattern.sub(lambda m: f" {self.emoji_aliases[m.group(0)]} ", text)
        return _WHITESPACE.sub(" ", text).strip()

    def _split_hashtag(self, match: re.Match[str]) -> str:
        words = " ".join(segment_hashtag(match.group(1), self.segmentation_lexicon))
        glued = match.start() > 0 and not match.string[match.start() - 1].isspace()
        return f" {words}" if glued else words


@cache
def _default_config() -> NormalizerConfig:
    return NormalizerConfig(emoji_aliases=_default_aliases())


def normalize(text: str, config: NormalizerConfig | None = None) -> str:
    """Normalize one tweet.

    Total on unicode strings: never raises, returns ``""`` for ``""``, and
    ``normalize(normalize(s)) == normalize(s)`` for every ``s``. The rule list
    runs until the text stops changing; a text still changing after 32 passes
    is returned as it stands and a warning is logged.

    Args:
        text: Raw text, any length.
        config: Defaults to :meth:`NormalizerConfig.default`.
    """
    config = config or _default_config()
    current = text
    for _ in range(_MAX_PASSES):
        following = config.apply_once(current)
        if following == current:
            break
        current = following
    else:
        logger.warning("normalization still changing after %d passes; result may not be a fixed point", _MAX_PASSES)
    return current


def _camel_pieces(run: str) -> list[str]:
    pieces: list[str] = []
    start = 0
    for i in range(1, len(run)):
        prev, cur = run[i - 1], run[i]
        nxt = run[i + 1] if i + 1 < len(run) else ""
        if (prev.islower() and cur.isupper()) or (prev.isupper() and cur.isupper() and nxt.islower()):
            pieces.append(run[start:i])
            start = i
    pieces.append(run[start:])
    return pieces


def _lexicon_split(piece: str, lexicon: frozenset[str]) -> list[str]:
    """Fewest words, then longest first word, over full segmentations; whole piece if none."""
    n = len(piece)
    best: list[tuple[str, ...] | None] = [None] * (n + 1)
    best[n] = ()
    for i in range(n - 1, -1, -1):
        candidates: list[tuple[str, ...]] = []
        for j in range(n, i, -1):
            rest = best[j]
            if rest is not None and piece[i:j] in lexicon:
                candidates.append((piece[i:j], *rest))
        if candidates:
            best[i] = min(candidates, key=lambda words: (len(words), [-len(w) for w in words]))
    found = best[0]
    return list(found) if found else [piece]


def segment_hashtag(tag_body: str, lexicon: Iterable[str] | None = None) -> list[str]:
    """Split a hashtag body into words.

    Letter/digit boundaries and camel-case boundaries always split
    (``"HTMLParser2"`` gives ``["HTML", "Parser", "2"]``). An all-lowercase
    piece is split over ``lexicon`` when one is given, preferring the fewest
    words and then the longest leading word; a piece with no complete
    segmentation is kept whole. Joining the result gives back ``tag_body``.

    Examples:
        >>> segment_hashtag("CovidVaccine")
        ['Covid', 'Vaccine']
        >>> segment_hashtag("covidvaccine", {"covid", "vaccine", "vac", "cine"})
        ['covid', 'vaccine']
    """
    words = frozenset(w.lower() for w in lexicon) if lexicon else frozenset[str]()
    result: list[str] = []
    for run in _RUNS.findall(tag_body):
        for piece in _camel_pieces(run) if run[0].isalpha() else [run]:
            if words and piece.islower():
                result.extend(_lexicon_split(piece, words))
            else:
                result.append(piece)
    return result
