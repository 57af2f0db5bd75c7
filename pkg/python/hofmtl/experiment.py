"""Model selection and evaluation over a grid of presets, emotion corpora and seeds.

A grid cell is one ``(preset, emotion corpus, seed)`` triple. For every cell
the hof training pool is split 80/20 into training and validation data with
the cell's seed, a model is trained with the preset's hyperparameters, and its
hof head is scored on the test set. Each cell yields one :class:`CellRecord`:
macro precision, recall and F1, the same three for the HOF class, and the
digest of the checkpoint the cell wrote.

A grid writes, under its output directory::

    results.jsonl                      one record per cell, in cell order
    table.txt                          mean +- standard deviation per preset
    checkpoints/<preset>-seed<s>.mtl1  every trained model

``results.jsonl`` carries no timings, so two runs with the same seeds produce
byte-identical files. A cell that raises is recorded as failed, with the
error's category, and the grid moves on.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import pandas as pd
import yaml

from hofmtl.checkpoint import save_checkpoint
from hofmtl.corpus import Dataset, FixtureSpec, load_unified, split, synth_fixture
from hofmtl.encoder import EncoderConfig
from hofmtl.errors import ConfigurationError, DataError, HofMtlError, IngestionError
from hofmtl.files import atomic_write_text
from hofmtl.metrics import evaluate
from hofmtl.model import MtlModel
from hofmtl.normalizer import NormalizerConfig, normalize
from hofmtl.options import TrainOptions
from hofmtl.tokenizer import Vocab, build_vocab
from hofmtl.trainer import TrainConfig, preset, train
from hofmtl.types import CellRecord, EpochRecord, PathArg

__all__ = [
    "DEFAULT_EMOTION_CORPUS",
    "GridConfig",
    "GridResult",
    "corpus_vocab",
    "fit",
    "render_table",
    "run_grid",
    "run_grid_config",
    "summarize",
]

logger = logging.getLogger(__name__)

DEFAULT_EMOTION_CORPUS = "default"
# Placeholder in the emotion-corpus column for presets that do not train emotion.
_NO_EMOTION = "-"
_SCORE_COLUMNS = ("macro_p", "macro_r", "macro_f1", "hof_p", "hof_r", "hof_f1")
_HEADERS = {
    "preset": "Model",
    "emotion_corpus": "Emotion corpus",
    "macro_p": "Macro P",
    "macro_r": "Macro R",
    "macro_f1": "Macro F1",
    "hof_p": "HOF P",
    "hof_r": "HOF R",
    "hof_f1": "HOF F1",
    "seeds": "Seeds",
}


def corpus_vocab(
    corpora: Mapping[str, Dataset] | Sequence[Dataset],
    target_size: int,
    normalizer: NormalizerConfig | None = None,
) -> Vocab:
    """Build one vocabulary from the normalized texts of every dataset given."""
    normalizer = normalizer or NormalizerConfig.default()
    datasets = corpora.values() if isinstance(corpora, Mapping) else corpora
    texts = [normalize(text, normalizer) for dataset in datasets for text in dataset.texts]
    return build_vocab(texts, target_size, config=normalizer)


def fit(
    corpora: Mapping[str, Dataset],
    config: TrainConfig,
    encoder_config: EncoderConfig,
    vocab: Vocab,
    *,
    validation_fraction: float = 0.2,
    normalizer: NormalizerConfig | None = None,
) -> tuple[MtlModel, list[EpochRecord]]:
    """Split hof, create a model with one head per enabled task, and train it.

    The hof split and the model's initialization both use ``config.seed``;
    ``encoder_config.seed`` and ``vocab_size`` are overridden accordingly.
    ``normalizer`` (``None`` for the shipped one) travels with the model, so a
    saved checkpoint normalizes text the way training did.

    Raises:
        DataError: ``corpora`` has no hof data, or no data for an enabled task.
    """
    if "hof" not in corpora:
        raise DataError("training needs a hof corpus")
    hof_train, validation = split(corpora["hof"], (1.0 - validation_fraction, validation_fraction), config.seed)
    datasets = {**corpora, "hof": hof_train}
    missing = [task for task in config.tasks_enabled if task not in datasets]
    if missing:
        raise DataError(f"preset {config.preset_name} needs corpora for {', '.join(missing)}")
    encoder_config = replace(encoder_config, vocab_size=len(vocab), seed=config.seed)
    tasks = tuple(datasets[task].spec() for task in config.tasks_enabled)
    model = MtlModel.create(encoder_config, tasks, vocab=vocab, normalizer=normalizer)
    return train(model, datasets, config, validation, pipeline=model.pipeline())


def _checkpoint_name(config: TrainConfig, emotion_corpus: str, seed: int) -> str:
    if emotion_corpus in (_NO_EMOTION, DEFAULT_EMOTION_CORPUS):
        return f"{config.preset_name}-seed{seed}.mtl1"
    return f"{config.preset_name}-{emotion_corpus}-seed{seed}.mtl1"


def _failed(config: TrainConfig, emotion_corpus: str, seed: int, exc: HofMtlError) -> CellRecord:
    return {
        "preset": config.preset_name,
        "emotion_corpus": emotion_corpus,
        "seed": seed,
        "status": "failed",
        "macro_p": None,
        "macro_r": None,
        "macro_f1": None,
        "hof_p": None,
        "hof_r": None,
        "hof_f1": None,
        "checkpoint": None,
        "checkpoint_sha256": None,
        "error": f"{exc.category}: {exc}",
    }


def _run_cell(
    corpora: Mapping[str, Dataset],
    config: TrainConfig,
    emotion_corpus: str,
    seed: int,
    test: Dataset,
    encoder_config: EncoderConfig,
    vocab: Vocab,
    out_dir: Path,
) -> CellRecord:
    cell_config = replace(config, seed=seed)
    model, _ = fit(corpora, cell_config, encoder_config, vocab)
    result = evaluate(model, test)
    name = _checkpoint_name(config, emotion_corpus, seed)
    digest = save_checkpoint(model, out_dir / "checkpoints" / name)
    hof = result.per_class["HOF"]
    return {
        "preset": config.preset_name,
        "emotion_corpus": emotion_corpus,
        "seed": seed,
        "status": "ok",
        "macro_p": result.macro.p,
        "macro_r": result.macro.r,
        "macro_f1": result.macro.f1,
        "hof_p": hof.p,
        "hof_r": hof.r,
        "hof_f1": hof.f1,
        "checkpoint": f"checkpoints/{name}",
        "checkpoint_sha256": digest,
        "error": None,
    }


@dataclass(frozen=True)
class GridResult:
    """Every cell record, the aggregated table, and its rendering."""

    cells: list[CellRecord]
    summary: pd.DataFrame
    table: str

    @property
    def failed(self) -> list[CellRecord]:
        """The cells that raised."""
        return [cell for cell in self.cells if cell["status"] == "failed"]


def summarize(cells: Sequence[CellRecord]) -> pd.DataFrame:
    """Mean and sample standard deviation of every score per (preset, emotion corpus).

    Groups keep the order in which their first cell appears. Failed cells are
    left out; a group with a single seed has a standard deviation of 0.
    """
    ok = [cell for cell in cells if cell["status"] == "ok"]
    columns = ["preset", "emotion_corpus", *[f"{c}_{s}" for c in _SCORE_COLUMNS for s in ("mean", "std")], "seeds"]
    if not ok:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame(ok)[["preset", "emotion_corpus", "seed", *_SCORE_COLUMNS]]
    grouped = frame.groupby(["preset", "emotion_corpus"], sort=False)
    stats = grouped[list(_SCORE_COLUMNS)].agg(["mean", "std"]).fillna(0.0)
    stats.columns = [f"{score}_{stat}" for score, stat in stats.columns]
    stats["seeds"] = grouped["seed"].count()
    return stats.reset_index()[columns]


def render_table(summary: pd.DataFrame) -> str:
    """Plain-text comparison table, ``mean ± std`` per score.

    The emotion-corpus column is shown only when some row trained on a
    non-default emotion corpus.
    """
    if summary.empty:
        return "(no successful cells)\n"
    shown = pd.DataFrame({"preset": summary["preset"], "emotion_corpus": summary["emotion_corpus"]})
    for score in _SCORE_COLUMNS:
        shown[score] = [
            f"{mean:.3f} ± {std:.3f}"
            for mean, std in zip(summary[f"{score}_mean"], summary[f"{score}_std"], strict=True)
        ]
    shown["seeds"] = summary["seeds"].astype(int)
    if set(shown["emotion_corpus"]) <= {_NO_EMOTION, DEFAULT_EMOTION_CORPUS}:
        shown = shown.drop(columns="emotion_corpus")
    shown = shown.rename(columns=_HEADERS)
    return shown.to_string(index=False) + "\n"


def run_grid(
    corpora: Mapping[str, Dataset],
    presets: Sequence[TrainConfig],
    test: Dataset,
    seeds: Sequence[int],
    out_dir: PathArg,
    *,
    encoder_config: EncoderConfig,
    vocab: Vocab,
    emotion_variants: Mapping[str, Dataset] | None = None,
) -> GridResult:
    """Train and score every (preset, emotion corpus, seed) cell.

    Presets that train emotion run once per emotion corpus: the one in
    ``corpora`` (named ``default``) and each entry of ``emotion_variants``.
    Other presets run once per seed.

    Args:
        corpora: Training pools per task; hof is split per cell.
        presets: Training configurations; their seeds are replaced per cell.
        test: Held-out hof data every cell is scored on.
        seeds: One cell per seed and preset.
        out_dir: Where results, table and checkpoints go; created if missing.
        encoder_config: Encoder dimensions; ``vocab_size`` and ``seed`` are
            set per cell.
        vocab: Shared vocabulary of every cell.
        emotion_variants: Alternative emotion corpora by name.

    Raises:
        ConfigurationError: No presets or seeds, duplicate seeds, or ``test``
            is not a hof dataset.
    """
    if not presets or not seeds:
        raise ConfigurationError("a grid needs at least one preset and one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError(f"grid seeds {list(seeds)} have duplicates")
    if test.task != "hof" or len(test) == 0:
        raise ConfigurationError("the grid test set must be a non-empty hof dataset")
    variants = dict(emotion_variants or {})
    if DEFAULT_EMOTION_CORPUS in variants:
        raise ConfigurationError(f"{DEFAULT_EMOTION_CORPUS!r} is reserved for the emotion corpus of the main data")
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    cells: list[CellRecord] = []
    for config in presets:
        if "emotion" in config.tasks_enabled:
            emotion_corpora = {DEFAULT_EMOTION_CORPUS: corpora.get("emotion"), **variants}
        else:
            emotion_corpora = {_NO_EMOTION: corpora.get("emotion")}
        for emotion_name, emotion in emotion_corpora.items():
            cell_corpora = {k: v for k, v in corpora.items() if k != "emotion"}
            if emotion is not None:
                cell_corpora["emotion"] = emotion
            for seed in seeds:
                where = f"{config.preset_name} / {emotion_name} / seed {seed}"
                logger.info("grid cell %s", where)
                try:
                    record = _run_cell(cell_corpora, config, emotion_name, seed, test, encoder_config, vocab, out)
                except HofMtlError as exc:
                    logger.warning("grid cell %s failed: %s", where, exc)
                    record = _failed(config, emotion_name, seed, exc)
                cells.append(record)
    lines = "".join(json.dumps(cell, sort_keys=True, ensure_ascii=False) + "\n" for cell in cells)
    atomic_write_text(out / "results.jsonl", lines)
    summary = summarize(cells)
    table = render_table(summary)
    atomic_write_text(out / "table.txt", table)
    return GridResult(cells, summary, table)


@dataclass(frozen=True)
class GridConfig:
    """A grid as read from YAML.

    Attributes:
        presets: Preset keys or display names, in table order.
        seeds: One cell per seed and preset.
        encoder: ``EncoderConfig`` fields other than ``vocab_size`` and ``seed``.
        vocab_size: Target size of the shared vocabulary.
        data: A jsonl-unified file or directory with the training pools.
            When absent, ``synthetic`` generates them.
        synthetic: Shape of the generated fixture when ``data`` is absent.
        data_seed: Seed of the generated fixture and of the held-out test split.
        test: A jsonl-unified file holding the hof test set (evaluation
            phase). When absent, a stratified ``test_fraction`` of the hof
            pool is held out instead (model-selection phase).
        test_fraction: Share of hof held out when there is no ``test`` file.
        emotion_variants: Alternative emotion corpora, name to jsonl-unified path.
        train: Overrides layered onto every preset (for example ``epochs``).
    """

    presets: tuple[str, ...] = ("baseline", "all")
    seeds: tuple[int, ...] = (0,)
    encoder: Mapping[str, Any] = field(default_factory=dict[str, Any])
    vocab_size: int = 300
    data: str | None = None
    synthetic: FixtureSpec = field(default_factory=FixtureSpec)
    data_seed: int = 0
    test: str | None = None
    test_fraction: float = 0.2
    emotion_variants: Mapping[str, str] = field(default_factory=dict[str, str])
    train: TrainOptions = field(default_factory=TrainOptions)

    def __post_init__(self) -> None:
        if not self.presets or not self.seeds:
            raise ConfigurationError("grid config: presets and seeds must be non-empty")
        for key in self.presets:
            preset(key)
        if {"vocab_size", "seed"} & set(self.encoder):
            raise ConfigurationError("grid config: set vocab_size at the top level; seeds come from 'seeds'")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError(f"grid config: test_fraction must lie in (0, 1), got {self.test_fraction}")
        if {"seed", "preset_name", "tasks_enabled"} & set(self.train.as_kwargs()):
            raise ConfigurationError("grid config: 'train' may not override seed, preset_name or tasks_enabled")

    def train_configs(self) -> list[TrainConfig]:
        """Every preset with the ``train`` overrides applied."""
        return [self.train.resolve(preset(key)) for key in self.presets]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready snapshot, as recorded in run manifests."""
        return {
            "presets": list(self.presets),
            "seeds": list(self.seeds),
            "encoder": dict(self.encoder),
            "vocab_size": self.vocab_size,
            "data": self.data,
            "synthetic": {
                "sizes": dict(self.synthetic.sizes),
                "rho": self.synthetic.rho,
                "cue": self.synthetic.cue,
            },
            "data_seed": self.data_seed,
            "test": self.test,
            "test_fraction": self.test_fraction,
            "emotion_variants": dict(self.emotion_variants),
            "train": self.train.as_kwargs(),
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], *, source: str = "grid config") -> GridConfig:
        """Parse a grid mapping; unknown keys are an error naming them."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"{source}: unknown key(s) {', '.join(map(repr, unknown))}")
        values = dict(data)
        for key in ("presets", "seeds"):
            if key in values:
                if not isinstance(values[key], list | tuple):
                    raise ConfigurationError(f"{source}: {key} must be a list")
                values[key] = tuple(values[key])
        if "seeds" in values:
            values["seeds"] = tuple(int(s) for s in values["seeds"])
        if "synthetic" in values:
            synthetic = values["synthetic"] or {}
            if not isinstance(synthetic, dict) or set(synthetic) - {"sizes", "rho", "cue"}:
                raise ConfigurationError(f"{source}: 'synthetic' takes only sizes, rho and cue")
            values["synthetic"] = FixtureSpec(**synthetic)
        if "train" in values:
            values["train"] = TrainOptions.from_mapping(values["train"] or {}, source=f"{source} 'train'")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc

    @classmethod
    def from_yaml(cls, path: PathArg) -> GridConfig:
        """Read a YAML grid config; relative data paths resolve against its directory."""
        source = Path(path)
        try:
            data = yaml.safe_load(source.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"grid config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"grid config {path}: expected a mapping at the top level")
        base = source.parent
        for key in ("data", "test"):
            if data.get(key):
                data[key] = str(base / data[key])
        if data.get("emotion_variants"):
            data["emotion_variants"] = {str(k): str(base / v) for k, v in data["emotion_variants"].items()}
        return cls.from_mapping(data, source=f"grid config {path}")


def _task_corpus(path: PathArg, task: str) -> Dataset:
    corpora = load_unified(path)
    if task not in corpora:
        raise IngestionError(f"corpus {path} has no {task} examples")
    return corpora[task]


def run_grid_config(config: GridConfig, out_dir: PathArg, *, data: PathArg | None = None) -> GridResult:
    """Load or generate the corpora a grid config names and run it.

    ``data`` overrides ``config.data``. Without either, the synthetic
    fixture is generated.
    """
    source = data if data is not None else config.data
    corpora = (
        load_unified(source) if source is not None else synth_fixture(config.synthetic, config.data_seed)
    )
    if "hof" not in corpora:
        raise DataError("grid data has no hof corpus")
    if config.test is not None:
        test = _task_corpus(config.test, "hof")
        pool = corpora["hof"]
    else:
        pool, test = split(corpora["hof"], (1.0 - config.test_fraction, config.test_fraction), config.data_seed)
    corpora = {**corpora, "hof": pool}
    variants = {name: _task_corpus(path, "emotion") for name, path in config.emotion_variants.items()}
    vocab = corpus_vocab([*corpora.values(), *variants.values()], config.vocab_size)
    encoder_config = EncoderConfig.from_mapping({**config.encoder, "vocab_size": len(vocab)})
    return run_grid(
        corpora,
        config.train_configs(),
        test,
        config.seeds,
        out_dir,
        encoder_config=encoder_config,
        vocab=vocab,
        emotion_variants=variants,
    )
