"""Corpus ingestion, the unified interchange format, stratified splits and synthetic fixtures.

Every labelled resource, whatever its original shape, is read through a
:class:`CorpusSchema` into a :class:`Dataset` of ``(id, text, label index)``
examples for exactly one task. Two on-disk formats are understood:

``tsv-hasoc``
    UTF-8, tab-separated, header row. Column names come from the schema and
    default to the HASOC subtask 1A names ``text_id``, ``text`` and ``task_1``.

``jsonl-unified``
    One JSON object per line with ``id``, ``text``, ``task`` and ``label``.
    This is also what :func:`write_jsonl` produces, so any corpus can be
    converted once and then loaded uniformly by :func:`load_unified`.

Raw labels go through the schema's ``label_map``. In strict mode (the default)
an unmapped label is an error listing the offenders; in lenient mode the row is
dropped, counted in :attr:`Dataset.dropped`, and a warning is logged.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, get_args

import numpy as np
import numpy.typing as npt
import pandas as pd
import yaml

from hofmtl.errors import ConfigurationError, IngestionError, SplitError
from hofmtl.files import atomic_write_text, read_utf8
from hofmtl.model import DEFAULT_TASKS, TaskSpec, default_task
from hofmtl.types import CorpusFormat, PathArg

__all__ = [
    "CorpusSchema",
    "Dataset",
    "Example",
    "FixtureSpec",
    "load_corpus",
    "load_unified",
    "split",
    "synth_fixture",
    "write_jsonl",
]

logger = logging.getLogger(__name__)

_TSV_COLUMNS = ("text_id", "text", "task_1")
_JSONL_FIELDS = ("id", "text", "label")


@dataclass(frozen=True)
class Example:
    """One labelled text."""

    id: str
    text: str
    label: int


@dataclass(frozen=True)
class Dataset:
    """Examples of one task, with where they came from.

    Attributes:
        task: Task name.
        labels: The task's ordered label set; ``Example.label`` indexes it.
        examples: Examples in file (or split) order.
        provenance: Source path and schema name, or a generator description.
        dropped: Rows skipped by lenient label mapping or because they belong
            to another task.
    """

    task: str
    labels: tuple[str, ...]
    examples: tuple[Example, ...]
    provenance: str = ""
    dropped: int = 0

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for example in self.examples:
            if example.id in seen:
                raise IngestionError(f"{self.provenance or self.task}: duplicate id {example.id!r}")
            seen.add(example.id)
            if not 0 <= example.label < len(self.labels):
                raise IngestionError(
                    f"{self.provenance or self.task}: label index {example.label} of {example.id!r} "
                    f"is outside {len(self.labels)} labels"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    @property
    def texts(self) -> list[str]:
        """Every example text, in order."""
        return [e.text for e in self.examples]

    def label_array(self) -> npt.NDArray[np.int64]:
        """Label indices as an integer vector."""
        return np.array([e.label for e in self.examples], dtype=np.int64)

    def label_counts(self) -> dict[str, int]:
        """Examples per label, in label order (zeros included)."""
        counts = Counter(e.label for e in self.examples)
        return {label: counts.get(i, 0) for i, label in enumerate(self.labels)}

    def spec(self) -> TaskSpec:
        """The task spec this dataset's labels describe."""
        return TaskSpec(self.task, self.labels)


@dataclass(frozen=True)
class CorpusSchema:
    """How to read one corpus file into a task dataset.

    ``labels`` defaults to the task's standard label set and ``label_map`` to
    the identity over it. Column names left as ``None`` take the format's
    defaults.
    """

    task: str
    format: CorpusFormat = "tsv-hasoc"
    name: str = ""
    labels: tuple[str, ...] = ()
    label_map: Mapping[str, str] = field(default_factory=dict[str, str])
    id_column: str | None = None
    text_column: str | None = None
    label_column: str | None = None
    strict: bool = True

    def __post_init__(self) -> None:
        if self.format not in get_args(CorpusFormat):
            raise ConfigurationError(f"corpus schema {self.name!r}: unknown format {self.format!r}")
        labels = tuple(self.labels) if self.labels else default_task(self.task).labels
        object.__setattr__(self, "labels", labels)
        mapping = dict(self.label_map) if self.label_map else {label: label for label in labels}
        foreign = sorted({v for v in mapping.values() if v not in labels})
        if foreign:
            raise ConfigurationError(
                f"corpus schema {self.name!r}: label_map targets {foreign} are not labels of task {self.task}"
            )
        object.__setattr__(self, "label_map", MappingProxyType(mapping))

    @property
    def columns(self) -> tuple[str, str, str]:
        """The id, text and label column (or field) names in effect."""
        defaults = _TSV_COLUMNS if self.format == "tsv-hasoc" else _JSONL_FIELDS
        return (
            self.id_column or defaults[0],
            self.text_column or defaults[1],
            self.label_column or defaults[2],
        )

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], *, source: str = "corpus schema") -> CorpusSchema:
        """Build from a parsed config mapping; unknown keys are errors."""
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigurationError(f"{source}: unknown key(s) {', '.join(map(repr, unknown))}")
        if "task" not in data:
            raise ConfigurationError(f"{source}: 'task' is required")
        values = dict(data)
        if "labels" in values:
            values["labels"] = tuple(str(v) for v in values["labels"])
        if "label_map" in values:
            values["label_map"] = {str(k): str(v) for k, v in dict(values["label_map"]).items()}
        return cls(**values)

    @classmethod
    def from_yaml(cls, path: PathArg) -> CorpusSchema:
        """Read a YAML schema file."""
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"corpus schema {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"corpus schema {path}: expected a mapping at the top level")
        return cls.from_mapping(data, source=f"corpus schema {path}")


# Line number, id, text and raw label; the label is None for a record of another task.
_Row = tuple[int, str, str, str | None]


def _read_tsv(path: Path, schema: CorpusSchema) -> Iterator[_Row]:
    id_col, text_col, label_col = schema.columns
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as exc:
        raise IngestionError(f"corpus {path} is empty") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"corpus {path} is malformed: {exc}") from exc
    missing = [c for c in (id_col, text_col, label_col) if c not in frame.columns]
    if missing:
        raise IngestionError(f"corpus {path} lacks column(s) {', '.join(missing)}")
    for position, (row_id, text, label) in enumerate(
        zip(frame[id_col], frame[text_col], frame[label_col], strict=True)
    ):
        line = position + 2
        if any(not isinstance(v, str) for v in (row_id, text, label)):
            raise IngestionError(f"corpus {path} line {line}: missing field")
        yield line, row_id, text, label


def _read_jsonl(path: Path, schema: CorpusSchema) -> Iterator[_Row]:
    id_field, text_field, label_field = schema.columns
    for number, line in enumerate(read_utf8(path, "corpus").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"corpus {path} line {number}: not JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise IngestionError(f"corpus {path} line {number}: expected an object")
        absent = [f for f in (id_field, text_field, label_field) if f not in record]
        if absent:
            raise IngestionError(f"corpus {path} line {number}: missing field(s) {', '.join(absent)}")
        row_id, text = str(record[id_field]), str(record[text_field])
        if "task" in record and record["task"] != schema.task:
            yield number, row_id, text, None
        else:
            yield number, row_id, text, str(record[label_field])


def load_corpus(path: PathArg, schema: CorpusSchema) -> Dataset:
    """Read one corpus file into a dataset for ``schema.task``.

    Rows of another task in a multi-task jsonl file are dropped and counted
    in :attr:`Dataset.dropped` along with any lenient label drops.

    Raises:
        IngestionError: The file is missing, empty or malformed, has a
            duplicate id, or (strict mode) carries labels the schema does not
            map. The message names the file and, where there is one, the line.
    """
    source = Path(path)
    if not source.is_file():
        raise IngestionError(f"corpus {source} does not exist")
    rows = _read_tsv(source, schema) if schema.format == "tsv-hasoc" else _read_jsonl(source, schema)
    labels = schema.labels
    examples: list[Example] = []
    unmapped: Counter[str] = Counter()
    other_task = 0
    for _, row_id, text, raw_label in rows:
        if raw_label is None:
            other_task += 1
            continue
        canonical = schema.label_map.get(raw_label.strip())
        if canonical is None:
            unmapped[raw_label] += 1
            continue
        examples.append(Example(row_id.strip(), text, labels.index(canonical)))
    if unmapped and schema.strict:
        offenders = ", ".join(f"{label!r} ({count})" for label, count in sorted(unmapped.items()))
        raise IngestionError(f"corpus {source}: unmapped label(s) {offenders}")
    if unmapped:
        logger.warning("corpus %s: dropped %d row(s) with unmapped labels", source, sum(unmapped.values()))
    if other_task:
        logger.warning("corpus %s: dropped %d row(s) of other tasks", source, other_task)
    dropped = sum(unmapped.values()) + other_task
    if not examples:
        raise IngestionError(f"corpus {source} has no {schema.task} examples")
    provenance = f"{source}" + (f" [{schema.name}]" if schema.name else "")
    return Dataset(schema.task, labels, tuple(examples), provenance, dropped)


def write_jsonl(dataset: Dataset, path: PathArg) -> None:
    """Write ``dataset`` in the jsonl-unified format (atomically)."""
    lines = [
        json.dumps(
            {"id": e.id, "text": e.text, "task": dataset.task, "label": dataset.labels[e.label]},
            ensure_ascii=False,
        )
        for e in dataset.examples
    ]
    atomic_write_text(path, "".join(f"{line}\n" for line in lines))


def load_unified(path: PathArg, tasks: Iterable[TaskSpec] = DEFAULT_TASKS) -> dict[str, Dataset]:
    """Load a jsonl-unified file, or every ``*.jsonl`` file of a directory, grouped by task.

    Labels are read as canonical label strings of ``tasks`` (the standard four
    by default). Records of tasks not in ``tasks`` are an error.
    """
    source = Path(path)
    files = sorted(source.glob("*.jsonl")) if source.is_dir() else [source]
    if not files or not all(f.is_file() for f in files):
        raise IngestionError(f"no jsonl-unified corpus at {source}")
    specs = {spec.name: spec for spec in tasks}
    grouped: dict[str, list[Example]] = {}
    for file in files:
        for number, line in enumerate(read_utf8(file, "corpus").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                task, label = str(record["task"]), str(record["label"])
                example_id, text = str(record["id"]), str(record["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestionError(f"corpus {file} line {number}: not a jsonl-unified record ({exc})") from exc
            spec = specs.get(task)
            if spec is None:
                raise IngestionError(f"corpus {file} line {number}: unknown task {task!r}")
            if label not in spec.labels:
                raise IngestionError(f"corpus {file} line {number}: {label!r} is not a {task} label")
            grouped.setdefault(task, []).append(Example(example_id, text, spec.labels.index(label)))
    if not grouped:
        raise IngestionError(f"corpus {source} is empty")
    return {
        task: Dataset(task, specs[task].labels, tuple(examples), str(source))
        for task, examples in sorted(grouped.items(), key=lambda kv: list(specs).index(kv[0]))
    }


def split(
    dataset: Dataset, fractions: Sequence[float] = (0.8, 0.2), seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Stratified, seeded partition into training and validation parts.

    The validation size is ``round(n * fractions[1])`` (at least one example,
    at most ``n - 1``), allotted to labels by largest remainder so each label's
    share is within one example of its overall proportion.

    Raises:
        SplitError: Fewer than two examples, or fractions that are not two
            positive numbers summing to 1.
    """
    if len(fractions) != 2 or any(f <= 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise SplitError(f"split fractions must be two positive numbers summing to 1, got {tuple(fractions)}")
    n = len(dataset)
    if n < 2:
        raise SplitError(f"{dataset.task} dataset of {n} example(s) cannot be split")
    n_val = min(n - 1, max(1, round(n * fractions[1])))
    order = np.random.default_rng(seed).permutation(n)
    labels = dataset.label_array()
    counts = np.bincount(labels, minlength=len(dataset.labels))
    quotas = counts * n_val / n
    allotted = np.floor(quotas).astype(np.int64)
    remainders = quotas - allotted
    for k in sorted(range(len(counts)), key=lambda k: (-remainders[k], k))[: n_val - int(allotted.sum())]:
        allotted[k] += 1
    taken = np.zeros(len(counts), dtype=np.int64)
    train: list[Example] = []
    validation: list[Example] = []
    for i in order:
        example = dataset.examples[int(i)]
        if taken[example.label] < allotted[example.label]:
            taken[example.label] += 1
            validation.append(example)
        else:
            train.append(example)
    return (
        replace(dataset, examples=tuple(train), dropped=0),
        replace(dataset, examples=tuple(validation), dropped=0),
    )


_FILLER = (
    "the", "day", "people", "today", "time", "game", "city", "news", "show", "week",
    "team", "phone", "music", "food", "friend", "school", "work", "movie", "road", "weather",
)  # fmt: skip
_HOF_CUES = ("idiot", "trash", "disgusting", "loser", "pathetic")
_MARKERS: Mapping[str, Mapping[str, str]] = {
    "sentiment": {"negative": "awful", "positive": "great", "neutral": "okay"},
    "emotion": {
        "anger": "furious",
        "disgust": "gross",
        "fear": "scared",
        "joy": "delighted",
        "sadness": "crying",
        "surprise": "wow",
        "enthusiasm": "excited",
        "fun": "hilarious",
        "hate": "despise",
        "neutral": "whatever",
        "love": "adore",
        "boredom": "bored",
        "relief": "phew",
        "none": "hmm",
    },
    "target": {"NONE": "lately", "IND": "you", "GRP": "they", "OTH": "that"},
}
# Auxiliary labels that co-occur with HOF and with NOT.
_HOF_SIDE: Mapping[str, tuple[str, ...]] = {
    "sentiment": ("negative",),
    "emotion": ("anger", "hate"),
    "target": ("IND",),
}
_NOT_SIDE: Mapping[str, tuple[str, ...]] = {"sentiment": ("positive",), "emotion": ("joy",), "target": ("NONE",)}


@dataclass(frozen=True)
class FixtureSpec:
    """Shape of a synthetic multi-task corpus.

    Attributes:
        sizes: Examples per task; keys are standard task names.
        rho: Strength with which auxiliary labels follow the hidden HOF
            status, in [0, 1]. At 0 they are independent of it.
        cue: Probability that an offensive text carries an explicit insult
            word, in [0, 1]. At 1 the hof task is separable.
    """

    sizes: Mapping[str, int] = field(
        default_factory=lambda: {"hof": 500, "sentiment": 500, "emotion": 500, "target": 500}
    )
    rho: float = 0.9
    cue: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"fixture rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.cue <= 1.0:
            raise ConfigurationError(f"fixture cue must lie in [0, 1], got {self.cue}")
        known = {spec.name for spec in DEFAULT_TASKS}
        for task, size in self.sizes.items():
            if task not in known:
                raise ConfigurationError(f"fixture task {task!r} is not one of {sorted(known)}")
            if size < 1:
                raise ConfigurationError(f"fixture size for {task} must be positive, got {size}")


def _synth_text(rng: np.random.Generator, offensive: bool, cue: float, markers: Iterable[str]) -> str:
    words = list(rng.choice(_FILLER, size=int(rng.integers(4, 9))))
    if offensive and rng.random() < cue:
        words.append(str(rng.choice(_HOF_CUES)))
    words.extend(markers)
    rng.shuffle(words)
    return " ".join(str(w) for w in words)


def synth_fixture(spec: FixtureSpec, seed: int) -> dict[str, Dataset]:
    """Generate token-pattern datasets whose auxiliary labels track a hidden HOF status.

    Every example draws a hidden status, offensive or not, with probability
    1/2. For the hof task that status is the label; with probability ``rho``
    the text also carries the markers of the auxiliary labels that go with it
    (negative sentiment, anger or hate, an individual target for offensive
    texts; positive, joy and no target otherwise). For an auxiliary task the
    label follows the status with probability ``rho`` and is uniform
    otherwise; its text carries the label's marker word, plus an insult with
    probability ``cue`` when the status is offensive.
    """
    order = [t.name for t in DEFAULT_TASKS]
    datasets: dict[str, Dataset] = {}
    for task in sorted(spec.sizes, key=order.index):
        labels = default_task(task).labels
        rng = np.random.default_rng([seed, order.index(task)])
        examples: list[Example] = []
        for i in range(spec.sizes[task]):
            offensive = bool(rng.random() < 0.5)
            side = _HOF_SIDE if offensive else _NOT_SIDE
            if task == "hof":
                label = "HOF" if offensive else "NOT"
                markers = (
                    [_MARKERS[aux][str(rng.choice(side[aux]))] for aux in ("sentiment", "emotion", "target")]
                    if rng.random() < spec.rho
                    else []
                )
            else:
                label = str(rng.choice(side[task])) if rng.random() < spec.rho else str(rng.choice(labels))
                markers = [_MARKERS[task][label]]
            text = _synth_text(rng, offensive, spec.cue, markers)
            examples.append(Example(f"{task}-{i:05d}", text, labels.index(label)))
        provenance = f"synthetic(rho={spec.rho}, cue={spec.cue}, seed={seed})"
        datasets[task] = Dataset(task, labels, tuple(examples), provenance)
    return datasets

