"""Tests guarding the public names of the package."""

from __future__ import annotations

import ast
import importlib
import inspect
import sys

import pytest

import hofmtl

_SUBMODULES = (
    "autodiff",
    "checkpoint",
    "cli",
    "corpus",
    "encoder",
    "errors",
    "experiment",
    "files",
    "metrics",
    "model",
    "normalizer",
    "options",
    "pipeline",
    "tokenizer",
    "trainer",
    "types",
)


def test_all_is_sorted_and_unique() -> None:
    """``__all__`` is kept in ruff's sort order, without repeats."""
    assert len(set(hofmtl.__all__)) == len(hofmtl.__all__)
    assert hofmtl.__all__ == sorted(hofmtl.__all__, key=lambda name: (not name.isupper(), name))


def test_every_exported_name_resolves() -> None:
    """Nothing in ``__all__`` is a stale name."""
    missing = [name for name in hofmtl.__all__ if not hasattr(hofmtl, name)]
    assert not missing


@pytest.mark.parametrize("module", _SUBMODULES)
def test_submodule_all_names_exist(module: str) -> None:
    """Each submodule's ``__all__`` lists only what it defines or imports."""
    mod = importlib.import_module(f"hofmtl.{module}")
    assert mod.__all__, module
    assert [name for name in mod.__all__ if not hasattr(mod, name)] == []


@pytest.mark.parametrize("module", _SUBMODULES)
def test_public_functions_are_documented(module: str) -> None:
    """Every exported function and class has a docstring."""
    mod = importlib.import_module(f"hofmtl.{module}")
    for name in mod.__all__:
        obj = getattr(mod, name)
        if inspect.isfunction(obj) or inspect.isclass(obj):
            assert inspect.getdoc(obj), f"hofmtl.{module}.{name}"


def test_types_module_imports_only_the_standard_library() -> None:
    """``hofmtl.types`` stays importable without numpy or pandas."""
    source = inspect.getsource(importlib.import_module("hofmtl.types"))
    roots: set[str] = set()
    for node in ast.walk(ast.parse(source)):
        if isinstance(node, ast.Import):
            roots.update(alias.name.split(".")[0] for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.module:
            roots.add(node.module.split(".")[0])
    assert roots, "no imports found; the check is looking at the wrong source"
    assert roots <= set(sys.stdlib_module_names) | {"__future__"}
