"""File helpers: UTF-8 reads, atomic writes and content digests."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

from hofmtl.errors import IngestionError
from hofmtl.types import PathArg

__all__ = ["atomic_write_bytes", "atomic_write_text", "file_sha256", "read_utf8"]


def file_sha256(path: PathArg) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path: PathArg, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file in the same directory.

    Readers see either the old file or the complete new one, never a partial write.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, staging = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(staging, target)
    except BaseException:
        Path(staging).unlink(missing_ok=True)
        raise


def atomic_write_text(path: PathArg, text: str) -> None:
    """UTF-8 variant of :func:`atomic_write_bytes`."""
    atomic_write_bytes(path, text.encode("utf-8"))


def read_utf8(path: PathArg, what: str = "file") -> str:
    """The text of a UTF-8 file.

    Raises:
        IngestionError: The bytes are not valid UTF-8; the message names the
            file and the offset of the first bad byte.
        OSError: The file cannot be read at all.
    """
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{what} {path} is not UTF-8: invalid byte at offset {exc.start}") from exc
