"""Multi-task hate and offensive language detection on a from-scratch transformer.

One shared encoder feeds four classification heads: hate/offensive (the main
task), sentiment, emotion and target. The heads are trained jointly by
drawing each mini-batch from one task at a time. Everything below the model
(tensors, reverse-mode differentiation, the optimizer) is implemented on
numpy in this package, so a full training run needs nothing else.

The names re-exported here cover the usual workflow: normalize and tokenize
text, load corpora, train, save and load checkpoints, evaluate, predict, and
run preset grids. Submodules hold the rest; ``hofmtl.types`` has the shapes of
every record the library writes and imports nothing beyond the standard
library.

Every failure raised by this library is a :class:`HofMtlError`. Each concrete
class also inherits the builtin a caller would naturally catch, so
``except ValueError`` keeps working -- see ``docs/errors.md``.
"""

from hofmtl._version import __version__
from hofmtl.checkpoint import load_checkpoint, save_checkpoint
from hofmtl.corpus import (
    CorpusSchema,
    Dataset,
    Example,
    FixtureSpec,
    load_corpus,
    load_unified,
    split,
    synth_fixture,
    write_jsonl,
)
from hofmtl.encoder import EncoderConfig
from hofmtl.errors import (
    CheckpointError,
    CheckpointFormatError,
    CheckpointIntegrityError,
    ConfigurationError,
    ContractError,
    DataError,
    DimensionError,
    DivergenceError,
    HofMtlError,
    IngestionError,
    SequenceLengthError,
    SplitError,
    TaskLookupError,
    UnsupportedOperationError,
    VocabularyError,
)
from hofmtl.experiment import GridConfig, run_grid, run_grid_config
from hofmtl.metrics import EvalReport, confusion, evaluate, report
from hofmtl.model import DEFAULT_TASKS, MtlModel, TaskSpec, predict_all
from hofmtl.normalizer import NormalizerConfig, normalize
from hofmtl.options import TrainOptions
from hofmtl.pipeline import TextPipeline
from hofmtl.tokenizer import Vocab, build_vocab, decode, encode
from hofmtl.trainer import PRESETS, TrainConfig, preset, train

__all__ = [
    "DEFAULT_TASKS",
    "PRESETS",
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointIntegrityError",
    "ConfigurationError",
    "ContractError",
    "CorpusSchema",
    "DataError",
    "Dataset",
    "DimensionError",
    "DivergenceError",
    "EncoderConfig",
    "EvalReport",
    "Example",
    "FixtureSpec",
    "GridConfig",
    "HofMtlError",
    "IngestionError",
    "MtlModel",
    "NormalizerConfig",
    "SequenceLengthError",
    "SplitError",
    "TaskLookupError",
    "TaskSpec",
    "TextPipeline",
    "TrainConfig",
    "TrainOptions",
    "UnsupportedOperationError",
    "Vocab",
    "VocabularyError",
    "__version__",
    "build_vocab",
    "confusion",
    "decode",
    "encode",
    "evaluate",
    "load_checkpoint",
    "load_corpus",
    "load_unified",
    "normalize",
    "predict_all",
    "preset",
    "report",
    "run_grid",
    "run_grid_config",
    "save_checkpoint",
    "split",
    "synth_fixture",
    "train",
    "version",
    "write_jsonl",
]


def version() -> str:
    """The installed package version, ``MAJOR.MINOR.PATCH``."""
    return __version__
