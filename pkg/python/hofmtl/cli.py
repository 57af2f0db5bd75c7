"""The ``hofmtl`` command line.

Subcommands follow the workflow: ``preprocess`` and ``build-vocab`` prepare
text, ``ingest`` converts a labelled corpus to jsonl-unified, ``synth`` writes
a synthetic multi-task corpus, ``train`` fits a model, ``eval`` and
``predict`` use one, and ``experiment`` runs a grid. ``replay`` re-executes
the command a run manifest records.

Every command that writes files also writes one run manifest,
``<artifact>.manifest.json``, next to its main output: the argv, the resolved
configuration, the seed, and SHA-256 digests of every input and output.

Exit status is 0 on success, 2 on a usage error, and 1 on any library error,
which is reported on stderr as a single line ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from hofmtl._version import __version__
from hofmtl.checkpoint import load_checkpoint, save_checkpoint
from hofmtl.corpus import CorpusSchema, FixtureSpec, load_corpus, load_unified, synth_fixture, write_jsonl
from hofmtl.encoder import EncoderConfig
from hofmtl.errors import ConfigurationError, HofMtlError, IngestionError
from hofmtl.experiment import GridConfig, corpus_vocab, fit, run_grid_config
from hofmtl.files import atomic_write_text, file_sha256, read_utf8
from hofmtl.metrics import evaluate
from hofmtl.model import DEFAULT_TASKS, predict_record
from hofmtl.normalizer import NormalizerConfig, normalize
from hofmtl.options import TrainFile, TrainOptions
from hofmtl.tokenizer import Vocab, build_vocab
from hofmtl.trainer import preset
from hofmtl.types import ManifestRecord, PathArg

__all__ = ["DATA_DIR_ENV", "main", "manifest_path", "replay"]

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "HOFMTL_DATA_DIR"
_DEFAULT_VOCAB_SIZE = 300
_LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def manifest_path(artifact: PathArg) -> Path:
    """Where the manifest of ``artifact`` lives."""
    path = Path(artifact)
    return path.with_name(path.name + ".manifest.json")


def _digests(paths: Sequence[PathArg]) -> dict[str, str]:
    digests: dict[str, str] = {}
    for entry in paths:
        path = Path(entry)
        files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
        for file in files:
            digests[str(file)] = file_sha256(file)
    return digests


class _Run:
    """Collects what a command read and wrote, then records it in a manifest."""

    def __init__(self, command: str, argv: Sequence[str], seed: int) -> None:
        self.command = command
        self.argv = list(argv)
        self.seed = seed
        self.started = time.perf_counter()

    def finish(
        self,
        main_artifact: PathArg,
        *,
        config: Mapping[str, Any],
        inputs: Sequence[PathArg],
        artifacts: Sequence[PathArg],
    ) -> Path:
        record: ManifestRecord = {
            "command": self.command,
            "argv": self.argv,
            "config": dict(config),
            "seed": self.seed,
            "inputs": _digests(inputs),
            "artifacts": _digests(artifacts),
            "wall_clock_seconds": round(time.perf_counter() - self.started, 3),
            "version": __version__,
        }
        path = manifest_path(main_artifact)
        atomic_write_text(path, json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
        return path


def _read_lines(path: PathArg) -> list[str]:
    try:
        return read_utf8(path, "input").splitlines()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _seed(args: argparse.Namespace) -> int:
    return 0 if args.seed is None else int(args.seed)


def _normalizer(args: argparse.Namespace) -> NormalizerConfig | None:
    """The config ``--lexicon`` and ``--emoji-aliases`` describe; ``None`` for the shipped one."""
    if args.lexicon is None and args.emoji_aliases is None:
        return None
    return NormalizerConfig.from_files(emoji_aliases=args.emoji_aliases, lexicon=args.lexicon)


def _normalizer_files(args: argparse.Namespace) -> tuple[dict[str, str | None], list[PathArg]]:
    files: dict[str, str | None] = {"lexicon": args.lexicon, "emoji_aliases": args.emoji_aliases}
    return files, [path for path in files.values() if path is not None]


def _cmd_preprocess(args: argparse.Namespace, run: _Run) -> int:
    config = _normalizer(args) or NormalizerConfig.default()
    lines = [normalize(line, config) for line in _read_lines(args.input)]
    atomic_write_text(args.out, "".join(f"{line}\n" for line in lines))
    files, extra = _normalizer_files(args)
    run.finish(args.out, config={"normalizer": files}, inputs=[args.input, *extra], artifacts=[args.out])
    logger.info("normalized %d line(s) into %s", len(lines), args.out)
    return 0


def _cmd_build_vocab(args: argparse.Namespace, run: _Run) -> int:
    config = _normalizer(args) or NormalizerConfig.default()
    texts = [normalize(line, config) for line in _read_lines(args.input)]
    vocab = build_vocab(texts, args.size, config=config, min_frequency=args.min_frequency)
    vocab.save(args.out)
    files, extra = _normalizer_files(args)
    run.finish(
        args.out,
        config={"size": args.size, "min_frequency": args.min_frequency, "normalizer": files},
        inputs=[args.input, *extra],
        artifacts=[args.out],
    )
    return 0


def _cmd_ingest(args: argparse.Namespace, run: _Run) -> int:
    schema = CorpusSchema.from_yaml(args.schema)
    dataset = load_corpus(args.input, schema)
    write_jsonl(dataset, args.out)
    run.finish(
        args.out,
        config={"task": schema.task, "format": schema.format, "name": schema.name, "strict": schema.strict},
        inputs=[args.schema, args.input],
        artifacts=[args.out],
    )
    logger.info("ingested %d %s example(s), dropped %d", len(dataset), dataset.task, dataset.dropped)
    return 0


def _parse_sizes(entries: Sequence[str]) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for entry in entries:
        task, sep, count = entry.partition("=")
        if not sep or not count.strip().isdigit():
            raise ConfigurationError(f"--size takes TASK=COUNT, got {entry!r}")
        sizes[task.strip()] = int(count)
    return sizes


def _cmd_synth(args: argparse.Namespace, run: _Run) -> int:
    spec = FixtureSpec(rho=args.rho, cue=args.cue)
    if args.size:
        spec = replace(spec, sizes={**spec.sizes, **_parse_sizes(args.size)})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[PathArg] = []
    for task, dataset in synth_fixture(spec, _seed(args)).items():
        path = out / f"{task}.jsonl"
        write_jsonl(dataset, path)
        written.append(path)
    run.finish(
        out / "synth",
        config={"sizes": dict(spec.sizes), "rho": spec.rho, "cue": spec.cue},
        inputs=[],
        artifacts=written,
    )
    return 0


def _data_path(flag: str | None) -> str:
    data = flag or os.environ.get(DATA_DIR_ENV)
    if not data:
        raise ConfigurationError(f"no training data: pass --data or set {DATA_DIR_ENV}")
    return data


def _train_options(args: argparse.Namespace) -> TrainOptions:
    flags = {
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }
    return TrainOptions(**{key: value for key, value in flags.items() if value is not None})


def _cmd_train(args: argparse.Namespace, run: _Run) -> int:
    file = TrainFile.from_yaml(args.config) if args.config else TrainFile()
    preset_key = args.preset or file.preset or "baseline"
    config = file.options.merged_with(_train_options(args)).resolve(preset(preset_key))
    run.seed = config.seed
    data = _data_path(args.data)
    corpora = {task: dataset for task, dataset in load_unified(data).items() if task in config.tasks_enabled}
    normalizer = _normalizer(args)
    if args.vocab:
        vocab = Vocab.load(args.vocab)
    else:
        vocab = corpus_vocab(corpora, args.vocab_size or file.vocab_size or _DEFAULT_VOCAB_SIZE, normalizer)
    encoder_config = EncoderConfig.from_mapping({**file.encoder, "vocab_size": len(vocab), "seed": config.seed})
    model, history = fit(
        corpora, config, encoder_config, vocab, validation_fraction=file.validation_fraction, normalizer=normalizer
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "model.mtl1"
    history_path = out / "history.jsonl"
    vocab_path = out / "vocab.txt"
    save_checkpoint(model, checkpoint)
    atomic_write_text(history_path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in history))
    vocab.save(vocab_path)
    files, extra = _normalizer_files(args)
    inputs: list[PathArg] = [data] + ([args.config] if args.config else []) + ([args.vocab] if args.vocab else [])
    inputs += extra
    run.finish(
        checkpoint,
        config={
            "train": config.to_dict(),
            "encoder": model.config.to_dict(),
            "validation_fraction": file.validation_fraction,
            "normalizer": files,
        },
        inputs=inputs,
        artifacts=[checkpoint, history_path, vocab_path],
    )
    if history:
        print(f"hof validation macro F1 {history[-1]['hof_val_macro_f1']:.4f} after {len(history)} epoch(s)")
    return 0


def _cmd_eval(args: argparse.Namespace, run: _Run) -> int:
    model = load_checkpoint(args.ckpt)
    specs = {spec.name: spec for spec in (*DEFAULT_TASKS, *model.tasks)}
    corpora = load_unified(args.data, specs.values())
    if args.task not in corpora:
        raise IngestionError(f"{args.data} has no {args.task} examples")
    record = evaluate(model, corpora[args.task]).to_record()
    line = json.dumps(record, sort_keys=True)
    print(line)
    if args.out:
        atomic_write_text(args.out, line + "\n")
        run.finish(args.out, config={"task": args.task}, inputs=[args.ckpt, args.data], artifacts=[args.out])
    return 0


def _cmd_predict(args: argparse.Namespace, run: _Run) -> int:
    model = load_checkpoint(args.ckpt)
    pipeline = model.pipeline()
    texts = list(args.text or []) + (_read_lines(args.input) if args.input else [])
    if not texts:
        raise ConfigurationError("predict needs --text or --in")
    for text in texts:
        print(json.dumps(predict_record(model, text, pipeline), ensure_ascii=False, sort_keys=True))
    return 0


def _cmd_experiment(args: argparse.Namespace, run: _Run) -> int:
    config = GridConfig.from_yaml(args.grid)
    if args.seed is not None:
        config = replace(config, data_seed=args.seed)
    run.seed = config.data_seed
    data = args.data or config.data or os.environ.get(DATA_DIR_ENV)
    result = run_grid_config(config, args.out, data=data)
    out = Path(args.out)
    results = out / "results.jsonl"
    checkpoints = sorted((out / "checkpoints").glob("*.mtl1"))
    inputs: list[PathArg] = [args.grid] + ([data] if data else [])
    run.finish(
        results,
        config={**config.to_dict(), "data": data},
        inputs=inputs,
        artifacts=[results, out / "table.txt", *checkpoints],
    )
    sys.stdout.write(result.table)
    if result.failed:
        logger.warning("%d of %d grid cell(s) failed; see %s", len(result.failed), len(result.cells), results)
    return 0


def replay(manifest: PathArg) -> int:
    """Re-execute the command recorded in ``manifest``; returns its exit status."""
    try:
        record = json.loads(Path(manifest).read_text(encoding="utf-8"))
        argv = [str(arg) for arg in record["argv"]]
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"{manifest} is not a run manifest: {exc}") from exc
    if argv and argv[0] == "replay":
        raise ConfigurationError(f"{manifest} records a replay; replay the original manifest instead")
    return main(argv)


def _cmd_replay(args: argparse.Namespace, run: _Run) -> int:
    return replay(args.manifest)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="the one seed every random choice derives from")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="stderr logging threshold (default: WARNING)",
    )
    text_files = argparse.ArgumentParser(add_help=False)
    text_files.add_argument("--lexicon", help="hashtag segmentation word list, one word per line")
    text_files.add_argument("--emoji-aliases", help="emoji alias TSV laid over the shipped table")
    parser = argparse.ArgumentParser(prog="hofmtl", description="Multi-task hate and offensive language detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("preprocess", parents=[common, text_files], help="normalize one text per line")
    p.add_argument("--in", dest="input", required=True, help="UTF-8 text, one tweet per line")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser("build-vocab", parents=[common, text_files], help="learn a WordPiece vocabulary")
    p.add_argument("--in", dest="input", required=True, help="UTF-8 text, one tweet per line")
    p.add_argument("--size", type=int, required=True, help="target vocabulary size")
    p.add_argument("--min-frequency", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_build_vocab)

    p = sub.add_parser("ingest", parents=[common], help="convert a labelled corpus to jsonl-unified")
    p.add_argument("--schema", required=True, help="corpus schema YAML")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic multi-task corpus")
    p.add_argument("--out", required=True, help="directory for one <task>.jsonl per task")
    p.add_argument("--rho", type=float, default=0.9, help="auxiliary label correlation with HOF status")
    p.add_argument("--cue", type=float, default=0.8, help="probability of an insult in offensive text")
    p.add_argument("--size", action="append", metavar="TASK=COUNT", help="examples for one task (repeatable)")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", parents=[common, text_files], help="train a model")
    p.add_argument("--preset", help="baseline, sentiment, emotion, target or all (default: baseline)")
    p.add_argument("--config", help="train config YAML; flags override it")
    p.add_argument("--data", help=f"jsonl-unified file or directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--vocab", help="existing vocabulary file; built from the data when absent")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on labelled data")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="jsonl-unified file or directory")
    p.add_argument("--task", default="hof")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="predict every task for raw texts")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", action="append", help="a raw text (repeatable)")
    p.add_argument("--in", dest="input", help="UTF-8 file, one text per line")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("experiment", parents=[common], help="run a preset x seed grid")
    p.add_argument("--grid", required=True, help="grid config YAML")
    p.add_argument("--data", help=f"overrides the grid's data (default: the grid's, then ${DATA_DIR_ENV})")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_experiment)

    p = sub.add_parser("replay", parents=[common], help="re-run the command a manifest records")
    p.add_argument("--manifest", required=True)
    p.set_defaults(handler=_cmd_replay)
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(format=_LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv[1:]``.

    Returns:
        Process exit status.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 2
    _configure_logging(args.log_level)
    handler: Callable[[argparse.Namespace, _Run], int] = args.handler
    try:
        return handler(args, _Run(args.command, argv, _seed(args)))
    except HofMtlError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except UnicodeDecodeError as exc:
        print(f"error: {IngestionError.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
