"""Tests for the ``hofmtl`` command line, driven through :func:`hofmtl.cli.main`."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from hofmtl import __version__
from hofmtl.checkpoint import load_checkpoint
from hofmtl.cli import DATA_DIR_ENV, main, manifest_path
from hofmtl.files import file_sha256
from tests.helpers import FIXTURES

_TRAIN_YAML = """\
vocab_size: 150
encoder:
  num_layers: 1
  hidden_dim: 8
  num_heads: 2
  ffn_dim: 16
  max_len: 16
  dropout_rate: 0.0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A synthetic corpus, a small train config and one trained model."""
    root = tmp_path_factory.mktemp("cli")
    sizes = ["--size", "hof=60", "--size", "sentiment=20", "--size", "emotion=20", "--size", "target=20"]
    assert main(["synth", "--out", str(root / "data"), "--seed", "1", "--cue", "1.0", *sizes]) == 0
    (root / "train.yaml").write_text(_TRAIN_YAML, encoding="utf-8")
    argv = ["train", "--config", str(root / "train.yaml"), "--data", str(root / "data"), "--epochs", "1"]
    assert main([*argv, "--out", str(root / "run")]) == 0
    return root


class TestUsage:
    """Argument handling and exit codes."""

    def test_no_command_is_a_usage_error(self, capsys: pytest.CaptureFixture[str]) -> None:
        """argparse's exit status comes back instead of exiting."""
        assert main([]) == 2
        assert "COMMAND" in capsys.readouterr().err

    def test_version(self, capsys: pytest.CaptureFixture[str]) -> None:
        """``--version`` prints and succeeds."""
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out

    def test_library_errors_are_one_line(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """``error: <category>: <message>`` on stderr, status 1."""
        assert main(["predict", "--ckpt", str(tmp_path / "nothing.mtl1"), "--text", "hi"]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error: ")

    def test_train_without_data(
        self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """No --data and no environment variable is a configuration error."""
        monkeypatch.delenv(DATA_DIR_ENV, raising=False)
        assert main(["train", "--out", str(tmp_path / "run")]) == 1
        assert capsys.readouterr().err.startswith(f"error: config: no training data: pass --data or set {DATA_DIR_ENV}")

    def test_bad_size_flag(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """``--size`` takes TASK=COUNT."""
        assert main(["synth", "--out", str(tmp_path), "--size", "hof"]) == 1
        assert "TASK=COUNT" in capsys.readouterr().err


class TestTextCommands:
    """preprocess, build-vocab and ingest."""

    def test_preprocess_matches_the_golden_file(self, tmp_path: Path) -> None:
        """The command writes the normalizer's output line by line."""
        out = tmp_path / "normalized.txt"
        assert main(["preprocess", "--in", str(FIXTURES / "preprocess_input.txt"), "--out", str(out)]) == 0
        expected = (FIXTURES / "preprocess_expected.txt").read_text(encoding="utf-8")
        assert out.read_text(encoding="utf-8") == expected

    def test_manifest_records_inputs_and_outputs(self, tmp_path: Path) -> None:
        """Every writing command leaves a manifest with digests."""
        source = FIXTURES / "preprocess_input.txt"
        out = tmp_path / "normalized.txt"
        main(["preprocess", "--in", str(source), "--out", str(out), "--seed", "4"])
        record = json.loads(manifest_path(out).read_text(encoding="utf-8"))
        assert record["command"] == "preprocess"
        assert record["seed"] == 4
        assert record["inputs"] == {str(source): file_sha256(source)}
        assert record["artifacts"] == {str(out): file_sha256(out)}
        assert record["version"] == __version__

    def test_preprocess_of_undecodable_input(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Non-UTF-8 bytes are a one-line ingestion error naming the offset."""
        bad = tmp_path / "bad.txt"
        bad.write_bytes(b"\xff\xfe")
        assert main(["preprocess", "--in", str(bad), "--out", str(tmp_path / "out.txt")]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error: ingestion: ")
        assert "offset 0" in err[0]
        assert not (tmp_path / "out.txt").exists()

    def test_preprocess_with_a_lexicon(self, tmp_path: Path) -> None:
        """--lexicon splits lowercase hashtags and is recorded as an input."""
        source, lexicon, out = tmp_path / "in.txt", tmp_path / "words.txt", tmp_path / "out.txt"
        source.write_text("so #notgood\n", encoding="utf-8")
        lexicon.write_text("not\ngood\n", encoding="utf-8")
        assert main(["preprocess", "--in", str(source), "--out", str(out), "--lexicon", str(lexicon)]) == 0
        assert out.read_text(encoding="utf-8") == "so not good\n"
        record = json.loads(manifest_path(out).read_text(encoding="utf-8"))
        assert record["config"]["normalizer"] == {"lexicon": str(lexicon), "emoji_aliases": None}
        assert record["inputs"][str(lexicon)] == file_sha256(lexicon)

    def test_build_vocab(self, tmp_path: Path) -> None:
        """The vocabulary file starts with the special tokens."""
        out = tmp_path / "vocab.txt"
        argv = ["build-vocab", "--in", str(FIXTURES / "preprocess_input.txt"), "--size", "400", "--out", str(out)]
        assert main(argv) == 0
        assert out.read_text(encoding="utf-8").splitlines()[:4] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]

    def test_ingest_a_tsv_corpus(self, tmp_path: Path) -> None:
        """An OLID-style file becomes jsonl-unified through a schema."""
        out = tmp_path / "olid.jsonl"
        argv = ["ingest", "--schema", str(FIXTURES / "olid_hof.yaml"), "--in", str(FIXTURES / "olid.tsv")]
        assert main([*argv, "--out", str(out)]) == 0
        rows = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
        assert [row["label"] for row in rows] == ["HOF", "HOF", "NOT", "HOF", "NOT", "HOF"]
        assert {row["task"] for row in rows} == {"hof"}


class TestModelCommands:
    """synth, train, eval, predict and replay."""

    def test_synth_writes_one_file_per_task(self, workspace: Path) -> None:
        """Four jsonl files and a manifest."""
        names = sorted(p.name for p in (workspace / "data").iterdir())
        assert names == ["emotion.jsonl", "hof.jsonl", "sentiment.jsonl", "synth.manifest.json", "target.jsonl"]

    def test_train_outputs(self, workspace: Path) -> None:
        """Checkpoint, history, vocabulary and the checkpoint's manifest."""
        run = workspace / "run"
        assert {p.name for p in run.iterdir()} == {
            "model.mtl1",
            "model.mtl1.manifest.json",
            "history.jsonl",
            "vocab.txt",
        }
        record = json.loads(manifest_path(run / "model.mtl1").read_text(encoding="utf-8"))
        assert record["config"]["train"]["preset_name"] == "baseline"
        assert record["config"]["train"]["epochs"] == 1
        assert record["artifacts"][str(run / "model.mtl1")] == file_sha256(run / "model.mtl1")

    def test_training_twice_gives_the_same_model(self, workspace: Path) -> None:
        """Same data, config and seed: byte-identical checkpoints."""
        argv = ["train", "--config", str(workspace / "train.yaml"), "--data", str(workspace / "data"), "--epochs", "1"]
        assert main([*argv, "--out", str(workspace / "again")]) == 0
        assert file_sha256(workspace / "again" / "model.mtl1") == file_sha256(workspace / "run" / "model.mtl1")

    def test_data_from_the_environment(self, workspace: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Without --data, the environment variable names the corpus."""
        monkeypatch.setenv(DATA_DIR_ENV, str(workspace / "data"))
        out = workspace / "from-env"
        assert main(["train", "--config", str(workspace / "train.yaml"), "--epochs", "1", "--out", str(out)]) == 0
        assert file_sha256(out / "model.mtl1") == file_sha256(workspace / "run" / "model.mtl1")

    def test_replay_reproduces_the_checkpoint(self, workspace: Path) -> None:
        """Re-running a train manifest rewrites the same bytes."""
        checkpoint = workspace / "run" / "model.mtl1"
        before = file_sha256(checkpoint)
        assert main(["replay", "--manifest", str(manifest_path(checkpoint))]) == 0
        assert file_sha256(checkpoint) == before

    def test_replay_of_a_non_manifest(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """A file without argv is rejected."""
        bogus = tmp_path / "bogus.json"
        bogus.write_text("{}", encoding="utf-8")
        assert main(["replay", "--manifest", str(bogus)]) == 1
        assert "not a run manifest" in capsys.readouterr().err

    def test_predict_covers_every_task(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """One JSON line per text, one entry per head."""
        ckpt = str(workspace / "run" / "model.mtl1")
        assert main(["predict", "--ckpt", ckpt, "--text", "@someone you idiot", "--text", "lovely day"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        record = json.loads(lines[0])
        assert record["normalized"] == "<user> you idiot"
        assert set(record["predictions"]) == set(load_checkpoint(ckpt).task_names)

    def test_predict_needs_text(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Nothing to predict is a configuration error."""
        assert main(["predict", "--ckpt", str(workspace / "run" / "model.mtl1")]) == 1
        assert "error: config:" in capsys.readouterr().err

    def test_eval_prints_and_writes_the_report(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """The printed line and the written file hold the same report."""
        out = workspace / "eval.json"
        ckpt, data = str(workspace / "run" / "model.mtl1"), str(workspace / "data" / "hof.jsonl")
        argv = ["eval", "--ckpt", ckpt, "--data", data]
        assert main([*argv, "--out", str(out)]) == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed == json.loads(out.read_text(encoding="utf-8"))
        assert printed["task"] == "hof"
        assert printed["n"] == 60

    def test_experiment(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """A one-cell grid prints its table and writes its results."""
        grid = workspace / "grid.yaml"
        grid.write_text(
            "presets: [baseline]\n"
            "seeds: [0]\n"
            "vocab_size: 150\n"
            "encoder: {num_layers: 1, hidden_dim: 8, num_heads: 2, ffn_dim: 16, max_len: 16}\n"
            "data: data\n"
            "train: {epochs: 1}\n",
            encoding="utf-8",
        )
        out = workspace / "grid-out"
        assert main(["experiment", "--grid", str(grid), "--out", str(out)]) == 0
        assert "Macro F1" in capsys.readouterr().out
        assert manifest_path(out / "results.jsonl").is_file()
        assert len((out / "results.jsonl").read_text(encoding="utf-8").splitlines()) == 1

    def test_lexicon_travels_with_the_checkpoint(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """A model trained with --lexicon predicts with it; the default model does not split."""
        lexicon = workspace / "words.txt"
        lexicon.write_text("not\ngood\n", encoding="utf-8")
        argv = ["train", "--config", str(workspace / "train.yaml"), "--data", str(workspace / "data"), "--epochs", "1"]
        assert main([*argv, "--lexicon", str(lexicon), "--out", str(workspace / "lexicon-run")]) == 0
        capsys.readouterr()
        for run, expected in (("lexicon-run", "so not good"), ("run", "so notgood")):
            assert main(["predict", "--ckpt", str(workspace / run / "model.mtl1"), "--text", "so #notgood"]) == 0
            assert json.loads(capsys.readouterr().out)["normalized"] == expected
