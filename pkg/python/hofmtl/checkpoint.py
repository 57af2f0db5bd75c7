"""Reading and writing model checkpoints.

Layout, all integers little-endian::

    b"MTL1"                magic
    u32                    format version (currently 1)
    u64                    manifest length in bytes
    manifest               UTF-8 JSON, keys sorted
    payload                every parameter as raw float32, in manifest order

The manifest holds the encoder config, the task specs, the vocabulary, the
normalizer config (``null`` for the shipped one), an index of every array
(name, shape, byte offset into the payload), and the SHA-256 of the payload.
Writing is atomic: the file is staged next to its destination and moved into
place, so a crash never leaves half a checkpoint under the final name.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from hofmtl.encoder import EncoderConfig
from hofmtl.errors import CheckpointFormatError, CheckpointIntegrityError, ConfigurationError, VocabularyError
from hofmtl.files import atomic_write_bytes
from hofmtl.model import MtlModel, TaskSpec
from hofmtl.normalizer import NormalizerConfig
from hofmtl.tokenizer import Vocab
from hofmtl.types import PathArg

__all__ = ["FORMAT_VERSION", "MAGIC", "load_checkpoint", "save_checkpoint"]

logger = logging.getLogger(__name__)

MAGIC = b"MTL1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_DTYPE = np.dtype("<f4")


def _serialize(model: MtlModel) -> bytes:
    index: list[dict[str, Any]] = []
    chunks: list[bytes] = []
    offset = 0
    for name, tensor in model.parameters().items():
        raw = np.ascontiguousarray(tensor.data, dtype=_DTYPE).tobytes()
        index.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "encoder": model.config.to_dict(),
        "tasks": [{"name": t.name, "labels": list(t.labels)} for t in model.tasks],
        "vocab": list(model.vocab.tokens) if model.vocab is not None else None,
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "arrays": index,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    encoded = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(encoded)) + encoded + payload


def save_checkpoint(model: MtlModel, path: PathArg) -> str:
    """Write ``model`` to ``path`` atomically and return the file's SHA-256."""
    data = _serialize(model)
    atomic_write_bytes(path, data)
    logger.info("wrote checkpoint %s (%d bytes)", path, len(data))
    return hashlib.sha256(data).hexdigest()


def _model_from_manifest(manifest: Mapping[str, Any], payload: bytes, path: PathArg) -> MtlModel:
    arrays: dict[str, np.ndarray[Any, np.dtype[np.float32]]] = {}
    for entry in manifest["arrays"]:
        shape = tuple(int(d) for d in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = int(entry["offset"])
        end = start + count * _DTYPE.itemsize
        if start < 0 or end > len(payload):
            raise CheckpointIntegrityError(f"checkpoint {path}: array {entry['name']} runs past the payload")
        arrays[str(entry["name"])] = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=start).reshape(shape)
    config = EncoderConfig.from_mapping(manifest["encoder"])
    tasks = tuple(TaskSpec(str(t["name"]), tuple(str(lab) for lab in t["labels"])) for t in manifest["tasks"])
    vocab = Vocab(tuple(manifest["vocab"])) if manifest.get("vocab") is not None else None
    described = manifest.get("normalizer")
    if described is not None and not isinstance(described, dict):
        raise CheckpointFormatError(f"checkpoint {path}: normalizer entry is not an object")
    normalizer = NormalizerConfig.from_dict(described) if described is not None else None
    skeleton = MtlModel.create(config, tasks, vocab=vocab, normalizer=normalizer, head_init="zeros")
    return skeleton.with_parameters(arrays)


def load_checkpoint(path: PathArg) -> MtlModel:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Parameters come back bit-identical and task specs verbatim.

    Raises:
        CheckpointFormatError: Wrong magic, unsupported version, or a manifest
            that is not the expected JSON.
        CheckpointIntegrityError: The file is truncated or the payload does not
            match its recorded digest.
    """
    data = Path(path).read_bytes()
    head = data[: len(MAGIC)]
    if head != MAGIC:
        if len(head) < len(MAGIC) and MAGIC.startswith(head):
            raise CheckpointIntegrityError(f"checkpoint {path} is truncated inside its magic bytes")
        raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic bytes)")
    if len(data) < _HEADER.size:
        raise CheckpointIntegrityError(f"checkpoint {path} is truncated inside its header")
    _, version, manifest_len = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"checkpoint {path} has format version {version}; only {FORMAT_VERSION} is read")
    body_start = _HEADER.size + manifest_len
    if body_start > len(data):
        raise CheckpointIntegrityError(f"checkpoint {path} is truncated inside its manifest")
    try:
        manifest = json.loads(data[_HEADER.size : body_start].decode("utf-8"))
        expected_bytes = int(manifest["payload_bytes"])
        expected_digest = str(manifest["payload_sha256"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"checkpoint {path} has an unreadable manifest: {exc}") from exc
    payload = data[body_start:]
    if len(payload) != expected_bytes:
        raise CheckpointIntegrityError(
            f"checkpoint {path} payload is {len(payload)} bytes, manifest records {expected_bytes}"
        )
    if hashlib.sha256(payload).hexdigest() != expected_digest:
        raise CheckpointIntegrityError(f"checkpoint {path} payload does not match its SHA-256")
    try:
        return _model_from_manifest(manifest, payload, path)
    except (ConfigurationError, VocabularyError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (CheckpointFormatError, CheckpointIntegrityError)):
            raise
        raise CheckpointFormatError(f"checkpoint {path} manifest does not describe a valid model: {exc}") from exc
