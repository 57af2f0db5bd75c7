"""The installed distribution's version."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version as _metadata_version

try:
    __version__ = _metadata_version("hofmtl")
except PackageNotFoundError:  # running from a source tree that was never installed
    __version__ = "0.0.0"
