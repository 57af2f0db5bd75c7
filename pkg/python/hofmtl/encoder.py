"""The shared transformer trunk: embeddings, post-norm encoder blocks and a pooler.

Every computation goes through :func:`hofmtl.autodiff.apply`, so whatever the
encoder does inside a :class:`~hofmtl.autodiff.Tape` is differentiable with
respect to every parameter in :class:`EncoderParams`.

One block, in the original BERT ordering::

    a = LayerNorm(x + Dropout(Attention(x)))
    x = LayerNorm(a + Dropout(W2 · gelu(W1 · a + b1) + b2))

The pooled output is ``tanh(Wp · h[CLS] + bp)``. There are no segment
embeddings and the key projection has no bias.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass, fields
from typing import Any, Literal

import numpy as np
import numpy.typing as npt

from hofmtl.autodiff import MASK_VALUE, Tensor, apply
from hofmtl.errors import ConfigurationError, ContractError, SequenceLengthError, VocabularyError

__all__ = ["EncoderConfig", "EncoderParams", "encode_batch", "init_params", "parameter_layout"]

logger = logging.getLogger(__name__)

_INIT_STD = 0.02

IntArray = npt.NDArray[np.int64]
Fill = Literal["normal", "ones", "zeros"]


@dataclass(frozen=True, kw_only=True)
class EncoderConfig:
    """Dimensions of the encoder.

    The defaults train in seconds on a CPU and still exercise every part of a
    BERT block.
    """

    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 64
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "num_layers", "hidden_dim", "num_heads", "ffn_dim", "max_len"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigurationError(f"encoder config: {name} must be a positive integer, got {value!r}")
        if self.hidden_dim % self.num_heads:
            raise ConfigurationError(
                f"encoder config: hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"encoder config: dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def head_dim(self) -> int:
        """Width of one attention head."""
        return self.hidden_dim // self.num_heads

    def to_dict(self) -> dict[str, Any]:
        """Plain mapping of every field."""
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> EncoderConfig:
        """Build from a mapping, rejecting keys that are not fields."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"encoder config: unknown key(s) {', '.join(map(repr, unknown))}")
        try:
            return cls(**dict(data))
        except TypeError as exc:
            raise ConfigurationError(f"encoder config: {exc}") from exc


def parameter_layout(config: EncoderConfig) -> list[tuple[str, tuple[int, ...], Fill]]:
    """Name, shape and initial fill of every encoder parameter, in canonical order."""
    H, F = config.hidden_dim, config.ffn_dim
    layout: list[tuple[str, tuple[int, ...], Fill]] = [
        ("embeddings.token", (config.vocab_size, H), "normal"),
        ("embeddings.position", (config.max_len, H), "normal"),
        ("embeddings.norm.scale", (H,), "ones"),
        ("embeddings.norm.shift", (H,), "zeros"),
    ]
    for i in range(config.num_layers):
        p = f"layers.{i}"
        layout += [
            (f"{p}.attention.query.weight", (H, H), "normal"),
            (f"{p}.attention.query.bias", (H,), "zeros"),
            (f"{p}.attention.key.weight", (H, H), "normal"),
            (f"{p}.attention.value.weight", (H, H), "normal"),
            (f"{p}.attention.value.bias", (H,), "zeros"),
            (f"{p}.attention.output.weight", (H, H), "normal"),
            (f"{p}.attention.output.bias", (H,), "zeros"),
            (f"{p}.attention.norm.scale", (H,), "ones"),
            (f"{p}.attention.norm.shift", (H,), "zeros"),
            (f"{p}.ffn.inner.weight", (H, F), "normal"),
            (f"{p}.ffn.inner.bias", (F,), "zeros"),
            (f"{p}.ffn.outer.weight", (F, H), "normal"),
            (f"{p}.ffn.outer.bias", (H,), "zeros"),
            (f"{p}.ffn.norm.scale", (H,), "ones"),
            (f"{p}.ffn.norm.shift", (H,), "zeros"),
        ]
    layout += [("pooler.weight", (H, H), "normal"), ("pooler.bias", (H,), "zeros")]
    return layout


@dataclass(frozen=True)
class EncoderParams:
    """Every encoder weight, by name, in the order of :func:`parameter_layout`."""

    config: EncoderConfig
    tensors: Mapping[str, Tensor]

    def __post_init__(self) -> None:
        layout = parameter_layout(self.config)
        if [name for name, _, _ in layout] != list(self.tensors):
            raise ConfigurationError("encoder parameters do not follow the layout of their config")
        for name, shape, _ in layout:
            tensor = self.tensors[name]
            if tensor.shape != shape:
                raise ConfigurationError(f"encoder parameter {name} has shape {tensor.shape}, expected {shape}")
            if not np.all(np.isfinite(tensor.data)):
                raise ConfigurationError(f"encoder parameter {name} has non-finite values")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @classmethod
    def from_arrays(cls, config: EncoderConfig, arrays: Mapping[str, npt.ArrayLike]) -> EncoderParams:
        """Wrap float32 copies of ``arrays`` as trainable tensors, in layout order."""
        tensors = {
            name: Tensor(np.asarray(arrays[name], dtype=np.float32), grad_enabled=True, name=name)
            for name, _, _ in parameter_layout(config)
            if name in arrays
        }
        return cls(config, tensors)


def init_params(config: EncoderConfig) -> EncoderParams:
    """Fresh parameters: Normal(0, 0.02) weights, unit norm scales, zero biases and shifts.

    Draws come from one generator seeded by ``config.seed`` in layout order, so
    the same config always yields bit-identical parameters.
    """
    rng = np.random.default_rng(config.seed)
    arrays: dict[str, npt.NDArray[np.float32]] = {}
    for name, shape, fill in parameter_layout(config):
        if fill == "normal":
            arrays[name] = rng.normal(0.0, _INIT_STD, size=shape).astype(np.float32)
        elif fill == "ones":
            arrays[name] = np.ones(shape, dtype=np.float32)
        else:
            arrays[name] = np.zeros(shape, dtype=np.float32)
    return EncoderParams.from_arrays(config, arrays)


def _dense(x: Tensor, params: EncoderParams, prefix: str, *, bias: bool = True) -> Tensor:
    y = apply("matmul", [x, params[f"{prefix}.weight"]])
    return apply("add", [y, params[f"{prefix}.bias"]]) if bias else y


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate == 0.0:
        return x
    return apply("dropout", [x], {"rate": rate, "seed": int(rng.integers(0, 2**63 - 1))})


def _norm(x: Tensor, params: EncoderParams, prefix: str) -> Tensor:
    return apply("layer_norm", [x, params[f"{prefix}.scale"], params[f"{prefix}.shift"]])


def _attention(
    x: Tensor,
    params: EncoderParams,
    prefix: str,
    additive_mask: npt.NDArray[np.float64],
    rng: np.random.Generator | None,
) -> Tensor:
    config = params.config
    B, L, H = x.shape
    heads, width = config.num_heads, config.head_dim

    def split(t: Tensor, axes: tuple[int, ...]) -> Tensor:
        return apply("transpose", [apply("reshape", [t], {"shape": (B, L, heads, width)})], {"axes": axes})

    query = split(_dense(x, params, f"{prefix}.query"), (0, 2, 1, 3))
    key_t = split(_dense(x, params, f"{prefix}.key", bias=False), (0, 2, 3, 1))
    value = split(_dense(x, params, f"{prefix}.value"), (0, 2, 1, 3))
    scores = apply("mul_scalar", [apply("matmul", [query, key_t])], {"scalar": 1.0 / math.sqrt(width)})
    weights = _dropout(apply("softmax", [scores], {"mask": additive_mask}), config.dropout_rate, rng)
    context = apply("transpose", [apply("matmul", [weights, value])], {"axes": (0, 2, 1, 3)})
    merged = apply("reshape", [context], {"shape": (B, L, H)})
    return _dense(merged, params, f"{prefix}.output")


def encode_batch(
    params: EncoderParams,
    batch_ids: npt.ArrayLike,
    batch_mask: npt.ArrayLike,
    train_mode: bool,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the encoder on a batch of token ids.

    Args:
        params: Encoder parameters.
        batch_ids: ``B x L`` integer token ids.
        batch_mask: ``B x L`` attention mask, 1 for real tokens and 0 for padding.
        train_mode: Enables dropout. Evaluation mode is deterministic.
        rng: Source of dropout seeds in train mode; defaults to a generator
            seeded from the config.

    Returns:
        The ``B x L x H`` sequence output and the ``B x H`` pooled output.

    Raises:
        SequenceLengthError: ``L`` exceeds the positional table.
        VocabularyError: An id is negative or not below ``vocab_size``.
        ContractError: ``batch_ids`` and ``batch_mask`` are not matching matrices.
    """
    config = params.config
    ids: IntArray = np.asarray(batch_ids, dtype=np.int64)
    mask = np.asarray(batch_mask, dtype=np.float64)
    if ids.ndim != 2 or mask.shape != ids.shape or ids.shape[0] == 0:
        raise ContractError(f"batch ids {ids.shape} and mask {mask.shape} must be matching non-empty B x L matrices")
    B, L = ids.shape
    if L > config.max_len:
        raise SequenceLengthError(f"sequence length {L} exceeds the encoder's max_len {config.max_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise VocabularyError(f"token ids must lie in [0, {config.vocab_size}), got [{ids.min()}, {ids.max()}]")
    if train_mode and rng is None:
        rng = np.random.default_rng(config.seed)
    dropout_rng = rng if train_mode else None

    positions = np.broadcast_to(np.arange(L, dtype=np.int64), (B, L))
    x = apply(
        "add",
        [
            apply("embedding", [params["embeddings.token"]], {"ids": ids}),
            apply("embedding", [params["embeddings.position"]], {"ids": positions}),
        ],
    )
    x = _dropout(_norm(x, params, "embeddings.norm"), config.dropout_rate, dropout_rng)
    additive_mask = ((1.0 - mask) * MASK_VALUE)[:, None, None, :]
    for i in range(config.num_layers):
        p = f"layers.{i}"
        attended = _attention(x, params, f"{p}.attention", additive_mask, dropout_rng)
        attended = _dropout(attended, config.dropout_rate, dropout_rng)
        x = _norm(apply("add", [x, attended]), params, f"{p}.attention.norm")
        inner = apply("gelu", [_dense(x, params, f"{p}.ffn.inner")])
        outer = _dropout(_dense(inner, params, f"{p}.ffn.outer"), config.dropout_rate, dropout_rng)
        x = _norm(apply("add", [x, outer]), params, f"{p}.ffn.norm")
    first = apply("select", [x], {"axis": 1, "index": 0})
    pooled = apply("tanh", [_dense(first, params, "pooler")])
    return x, pooled
