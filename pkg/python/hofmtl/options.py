"""A sparse, layered bundle of training settings.

A run's :class:`~hofmtl.trainer.TrainConfig` is assembled from three layers:
a named preset, an optional YAML config file, and command-line flags, each
overriding only what it actually sets::

    from hofmtl.options import TrainFile, TrainOptions
    from hofmtl.trainer import preset

    from_file = TrainFile.from_yaml("train.yaml").options
    from_flags = TrainOptions(seed=7)
    config = from_file.merged_with(from_flags).resolve(preset("all"))

**Unset is not the same as ``None``.** ``grad_clip: null`` in a config file
means "no clipping", deliberately shadowing the preset's 1.0. So a field nobody
touched has to be distinguishable from one explicitly set to ``None``; every
lowering omits only the former.

The bundle is flat and mirrors ``TrainConfig`` field for field; a test keeps
the two from drifting apart.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from hofmtl.errors import ConfigurationError
from hofmtl.trainer import TrainConfig
from hofmtl.types import PathArg

__all__ = ["TrainFile", "TrainOptions"]

# Sentinel for "this option was never set", distinct from an explicit `None`.
_UNSET: Any = object()


@dataclass(frozen=True)
class TrainOptions:
    """Any subset of :class:`~hofmtl.trainer.TrainConfig` fields.

    Frozen, so a bundle can be shared as a constant; derive variants with
    :func:`dataclasses.replace`.
    """

    preset_name: str = _UNSET
    epochs: int = _UNSET
    learning_rate: float = _UNSET
    batch_size: int = _UNSET
    beta1: float = _UNSET
    beta2: float = _UNSET
    eps: float = _UNSET
    weight_decay: float = _UNSET
    seed: int = _UNSET
    tasks_enabled: tuple[str, ...] = _UNSET
    grad_clip: float | None = _UNSET

    def as_kwargs(self) -> dict[str, Any]:
        """The set options, by field name."""
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not _UNSET}

    def merged_with(self, other: TrainOptions) -> TrainOptions:
        """A copy with ``other``'s set options layered on top of this one."""
        return TrainOptions(**{**self.as_kwargs(), **other.as_kwargs()})

    def resolve(self, base: TrainConfig) -> TrainConfig:
        """Apply the set options to ``base`` and validate the result."""
        return replace(base, **self.as_kwargs())

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], *, source: str = "train config") -> TrainOptions:
        """Parse a config mapping; unknown keys are an error naming them."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"{source}: unknown key(s) {', '.join(map(repr, unknown))}")
        values = dict(data)
        if "tasks_enabled" in values:
            tasks = values["tasks_enabled"]
            if isinstance(tasks, str) or not isinstance(tasks, list | tuple):
                raise ConfigurationError(f"{source}: tasks_enabled must be a list of task names")
            values["tasks_enabled"] = tuple(str(t) for t in tasks)
        for key in ("learning_rate", "beta1", "beta2", "eps", "weight_decay"):
            if key in values and isinstance(values[key], int | str) and not isinstance(values[key], bool):
                try:
                    values[key] = float(values[key])
                except ValueError:
                    raise ConfigurationError(f"{source}: {key} must be a number, got {values[key]!r}") from None
        return cls(**values)


@dataclass(frozen=True)
class TrainFile:
    """A parsed training config file.

    Top-level keys are :class:`TrainOptions` fields, plus ``preset`` (a preset
    key), ``encoder`` (a mapping of ``EncoderConfig`` fields other than
    ``vocab_size``), ``vocab_size`` (the vocabulary target size) and
    ``validation_fraction`` (share of hof held out, default 0.2).
    """

    options: TrainOptions = field(default_factory=TrainOptions)
    preset: str | None = None
    encoder: Mapping[str, Any] = field(default_factory=dict[str, Any])
    vocab_size: int | None = None
    validation_fraction: float = 0.2

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], *, source: str = "train config") -> TrainFile:
        """Split a mapping into its sections."""
        values = dict(data)
        encoder = values.pop("encoder", None) or {}
        if not isinstance(encoder, dict):
            raise ConfigurationError(f"{source}: 'encoder' must be a mapping")
        if "vocab_size" in encoder:
            raise ConfigurationError(f"{source}: set vocab_size at the top level, not under 'encoder'")
        preset_key = values.pop("preset", None)
        vocab_size = values.pop("vocab_size", None)
        fraction = float(values.pop("validation_fraction", 0.2))
        if not 0.0 < fraction < 1.0:
            raise ConfigurationError(f"{source}: validation_fraction must lie in (0, 1), got {fraction}")
        return cls(
            options=TrainOptions.from_mapping(values, source=source),
            preset=None if preset_key is None else str(preset_key),
            encoder=encoder,
            vocab_size=None if vocab_size is None else int(vocab_size),
            validation_fraction=fraction,
        )

    @classmethod
    def from_yaml(cls, path: PathArg) -> TrainFile:
        """Read a YAML training config."""
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"train config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"train config {path}: expected a mapping at the top level")
        return cls.from_mapping(data, source=f"train config {path}")
