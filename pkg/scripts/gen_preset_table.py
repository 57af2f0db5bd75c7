"""Generate the presets documentation page from the preset table in `hofmtl.trainer`.

A hand-copied table of epochs and learning rates drifts from the code the
first time a preset is tuned. This script renders the page from `PRESETS`
instead.

Run with no arguments to print the page, `--write` to update it in place, or
`--check` to verify the committed page is current (which is what the test does).
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from hofmtl.trainer import PRESETS, TrainConfig

REPO_ROOT = Path(__file__).resolve().parent.parent
DOC_PATH = REPO_ROOT / "docs" / "presets.md"

GENERATED_MARKER = "<!-- generated by scripts/gen_preset_table.py -- do not edit by hand -->"

#: Fields shared by every preset, listed once under the table.
SHARED_FIELDS = ("beta1", "beta2", "eps", "weight_decay", "grad_clip")


def _row(key: str, config: TrainConfig) -> str:
    cells = [f"`{key}`", config.preset_name, ", ".join(config.tasks_enabled)]
    cells += [str(config.epochs), f"{config.learning_rate:g}", str(config.batch_size)]
    return "| " + " | ".join(cells) + " |"


def build_page() -> str:
    """Render the page.

    Returns:
        The Markdown text, ending in a newline.

    Raises:
        ValueError: A shared field differs between presets, so it would need
            its own column.
    """
    shared: dict[str, object] = {}
    for name in SHARED_FIELDS:
        values = {getattr(config, name) for config in PRESETS.values()}
        if len(values) != 1:
            raise ValueError(f"presets disagree on {name}: {sorted(map(str, values))}")
        shared[name] = values.pop()
    lines = [
        GENERATED_MARKER,
        "",
        "# Training presets",
        "",
        "Every run starts from one of these presets. A train config file overrides",
        "any field of it, and command-line flags override the file. `baseline`",
        "trains the hof head alone; the others add auxiliary tasks.",
        "",
        "| Key | Name | Tasks | Epochs | Learning rate | Batch size |",
        "|---|---|---|---|---|---|",
        *(_row(key, config) for key, config in PRESETS.items()),
        "",
        "All presets share the AdamW settings",
        "",
        *(f"- `{name}`: {shared[name]}" for name in SHARED_FIELDS),
        "",
        "and a seed of 0 unless `--seed` says otherwise.",
        "",
        "The learning rate is constant: there is no warmup and no decay. The",
        "`baseline` and `all` rates (4e-4, 3e-4) are large for fine-tuning a",
        "pretrained encoder. They are kept as published; lower them with",
        "`--learning-rate` when training a larger encoder.",
        "",
    ]
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point.

    Args:
        argv: Command-line arguments, defaulting to `sys.argv[1:]`.

    Returns:
        Process exit status.
    """
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--write", action="store_true", help="update the documentation page in place")
    parser.add_argument("--check", action="store_true", help="fail if the committed page is out of date")
    args = parser.parse_args(argv)

    generated = build_page()

    if args.check:
        if not DOC_PATH.exists():
            print(f"[FAIL] {DOC_PATH.relative_to(REPO_ROOT)} does not exist; run with --write")
            return 1
        if DOC_PATH.read_text(encoding="utf-8") != generated:
            print(f"[FAIL] {DOC_PATH.relative_to(REPO_ROOT)} is out of date; run with --write")
            return 1
        print(f"[OK] {DOC_PATH.relative_to(REPO_ROOT)} is current")
        return 0

    if args.write:
        DOC_PATH.parent.mkdir(parents=True, exist_ok=True)
        # newline="\n" keeps the committed bytes independent of the platform.
        DOC_PATH.write_text(generated, encoding="utf-8", newline="\n")
        print(f"[OK] wrote {DOC_PATH.relative_to(REPO_ROOT)}")
        return 0

    print(generated)
    return 0


if __name__ == "__main__":
    sys.exit(main())
