"""Tests for :class:`hofmtl.options.TrainOptions` and :class:`hofmtl.options.TrainFile`.

The bundle mirrors ``TrainConfig`` field for field, so the first guard here is
that the two agree; the rest pins the layering rules, in particular that an
explicit ``None`` is an override and an untouched field is not.
"""

from __future__ import annotations

from dataclasses import FrozenInstanceError, fields
from pathlib import Path

import pytest

from hofmtl.errors import ConfigurationError
from hofmtl.options import TrainFile, TrainOptions
from hofmtl.trainer import TrainConfig, preset


class TestMirrorsTrainConfig:
    """The bundle and the config it resolves into."""

    def test_same_fields_in_the_same_order(self) -> None:
        """Adding a TrainConfig field without an option (or the reverse) fails here."""
        assert tuple(f.name for f in fields(TrainOptions)) == TrainConfig.field_names()

    def test_empty_bundle_changes_nothing(self) -> None:
        """Resolving no options gives the preset back."""
        assert TrainOptions().resolve(preset("all")) == preset("all")

    def test_bundle_is_frozen(self) -> None:
        """Bundles can be shared as constants."""
        options = TrainOptions(epochs=2)
        with pytest.raises(FrozenInstanceError):
            options.epochs = 3  # type: ignore[misc]


class TestLayering:
    """Merging and resolving."""

    def test_as_kwargs_lists_only_what_was_set(self) -> None:
        """Untouched fields are left out."""
        assert TrainOptions(seed=3, epochs=1).as_kwargs() == {"epochs": 1, "seed": 3}

    def test_later_layer_wins(self) -> None:
        """Flags override the file, which overrides the preset."""
        from_file = TrainOptions(epochs=5, learning_rate=1e-4)
        from_flags = TrainOptions(epochs=1)
        config = from_file.merged_with(from_flags).resolve(preset("target"))
        assert config.epochs == 1
        assert config.learning_rate == 1e-4
        assert config.batch_size == preset("target").batch_size
        assert config.tasks_enabled == preset("target").tasks_enabled

    def test_explicit_none_turns_clipping_off(self) -> None:
        """``grad_clip: None`` shadows the preset's value."""
        assert preset("all").grad_clip is not None
        assert TrainOptions(grad_clip=None).resolve(preset("all")).grad_clip is None

    def test_unset_grad_clip_keeps_the_preset(self) -> None:
        """A layer that never mentions grad_clip does not reset it."""
        merged = TrainOptions(grad_clip=None).merged_with(TrainOptions(seed=1))
        assert merged.as_kwargs() == {"seed": 1, "grad_clip": None}

    def test_resolve_validates(self) -> None:
        """Out-of-range values fail when the config is built."""
        with pytest.raises(ConfigurationError, match="batch_size"):
            TrainOptions(batch_size=0).resolve(preset("baseline"))


class TestFromMapping:
    """Parsing config mappings."""

    def test_unknown_keys_are_named(self) -> None:
        """Typos surface with the offending key."""
        with pytest.raises(ConfigurationError, match="'epoch'"):
            TrainOptions.from_mapping({"epoch": 3})

    def test_numbers_written_as_strings(self) -> None:
        """YAML reads ``3e-5`` as a string; it is coerced."""
        options = TrainOptions.from_mapping({"learning_rate": "3e-5", "weight_decay": 0})
        assert options.learning_rate == 3e-5
        assert isinstance(options.weight_decay, float)

    def test_non_numeric_rate(self) -> None:
        """Text that is not a number is rejected by key."""
        with pytest.raises(ConfigurationError, match="learning_rate"):
            TrainOptions.from_mapping({"learning_rate": "fast"})

    def test_tasks_become_a_tuple(self) -> None:
        """Lists from YAML are accepted."""
        assert TrainOptions.from_mapping({"tasks_enabled": ["hof", "target"]}).tasks_enabled == ("hof", "target")

    def test_tasks_as_a_bare_string(self) -> None:
        """A single string is not a list of tasks."""
        with pytest.raises(ConfigurationError, match="tasks_enabled"):
            TrainOptions.from_mapping({"tasks_enabled": "hof"})


class TestTrainFile:
    """Training config files."""

    def test_sections_are_split(self, tmp_path: Path) -> None:
        """Preset, encoder, vocabulary size and options each land in their place."""
        path = tmp_path / "train.yaml"
        path.write_text(
            "preset: emotion\n"
            "epochs: 1\n"
            "grad_clip: null\n"
            "vocab_size: 120\n"
            "validation_fraction: 0.25\n"
            "encoder:\n"
            "  num_layers: 1\n"
            "  hidden_dim: 16\n",
            encoding="utf-8",
        )
        file = TrainFile.from_yaml(path)
        assert file.preset == "emotion"
        assert file.vocab_size == 120
        assert file.validation_fraction == 0.25
        assert dict(file.encoder) == {"num_layers": 1, "hidden_dim": 16}
        assert file.options.as_kwargs() == {"epochs": 1, "grad_clip": None}

    def test_empty_file(self, tmp_path: Path) -> None:
        """An empty file is an empty config."""
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        file = TrainFile.from_yaml(path)
        assert file.options.as_kwargs() == {}
        assert file.preset is None

    def test_top_level_must_be_a_mapping(self, tmp_path: Path) -> None:
        """A YAML list is not a config."""
        path = tmp_path / "list.yaml"
        path.write_text("- epochs\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="mapping"):
            TrainFile.from_yaml(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Unreadable files are configuration errors naming the path."""
        with pytest.raises(ConfigurationError, match=r"absent\.yaml"):
            TrainFile.from_yaml(tmp_path / "absent.yaml")

    def test_vocab_size_under_encoder(self) -> None:
        """The vocabulary size follows the vocabulary, not the encoder section."""
        with pytest.raises(ConfigurationError, match="top level"):
            TrainFile.from_mapping({"encoder": {"vocab_size": 100}})

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_validation_fraction_range(self, fraction: float) -> None:
        """Something must be left on each side of the split."""
        with pytest.raises(ConfigurationError, match="validation_fraction"):
            TrainFile.from_mapping({"validation_fraction": fraction})
