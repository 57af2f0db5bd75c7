"""A dense tensor type with reverse-mode automatic differentiation.

Only the operations the encoder, the classification heads and the loss need are
implemented, and nothing broadcasts except a bias added over the last axis.
That keeps the surface small enough to check every backward rule against
central finite differences, which is what :func:`grad_check` is for.

Recording is explicit. Operations applied inside a :class:`Tape` context whose
inputs include a grad-enabled tensor are appended to that tape; outside a tape
nothing is recorded, which is how inference runs::

    w = Tensor(np.ones((3, 2)), grad_enabled=True)
    with Tape() as tape:
        loss = apply("cross_entropy", [apply("matmul", [x, w])], {"labels": y})
    grads = backward(loss, tape)      # {w.id: Tensor of d loss / d w}

Every rule computes in float64 and the result is stored in the widest dtype
among its inputs. Model parameters are float32, so activations are float32;
probes built from float64 arrays stay in float64 end to end, which is the
headroom finite-difference checks need. Gradients are always float64.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from contextvars import ContextVar, Token
from dataclasses import dataclass, field
from types import TracebackType
from typing import Any, get_args

import numpy as np
import numpy.typing as npt

from hofmtl.errors import ContractError, DimensionError, UnsupportedOperationError
from hofmtl.types import OpKind

__all__ = [
    "MASK_VALUE",
    "Node",
    "Probe",
    "Tape",
    "Tensor",
    "apply",
    "backward",
    "grad_check",
    "make_probe",
    "supported_kinds",
]

FloatArray = npt.NDArray[np.float64]
Backward = Callable[[FloatArray], tuple[FloatArray | None, ...]]
Rule = Callable[[tuple[FloatArray, ...], Mapping[str, Any]], tuple[FloatArray, Backward]]

#: Additive value placed on masked positions before a softmax.
MASK_VALUE = -1e9

_LAYER_NORM_EPS = 1e-12
_GELU_C = math.sqrt(2.0 / math.pi)

_ids = itertools.count(1)
_active_tape: ContextVar[Tape | None] = ContextVar("hofmtl_active_tape", default=None)


class Tensor:
    """An immutable n-dimensional real array that may take part in differentiation.

    Attributes:
        id: Process-unique identifier; gradient maps are keyed by it.
        name: Optional label, used by parameter tables and error messages.
        grad_enabled: Whether gradients are tracked for this tensor.
        grad: Set on grad-enabled leaves by :func:`backward`; same shape as ``data``.
    """

    __slots__ = ("_data", "grad", "grad_enabled", "id", "name")

    def __init__(self, data: npt.ArrayLike, *, grad_enabled: bool = False, name: str | None = None) -> None:
        array = np.array(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        array.setflags(write=False)
        self._data: npt.NDArray[np.floating[Any]] = array
        self.grad_enabled = grad_enabled
        self.grad: FloatArray | None = None
        self.name = name
        self.id = next(_ids)

    @property
    def data(self) -> npt.NDArray[np.floating[Any]]:
        """The values, read-only, in row-major order."""
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        """Extents of every axis; ``()`` for a scalar."""
        return self._data.shape

    @property
    def ndim(self) -> int:
        """Number of axes."""
        return self._data.ndim

    @property
    def size(self) -> int:
        """Number of elements, the product of :attr:`shape`."""
        return self._data.size

    @property
    def dtype(self) -> np.dtype[Any]:
        """Storage dtype (float32 for parameters, float64 for probes)."""
        return self._data.dtype

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.size != 1:
            raise ContractError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self._data.reshape(()))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} grad_enabled={self.grad_enabled}>"


@dataclass(frozen=True)
class Node:
    """One recorded operation: which tensors went in, which came out, how to go back."""

    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    rule: Backward

    @property
    def input_ids(self) -> tuple[int, ...]:
        """Ids of the input tensors, in argument order."""
        return tuple(t.id for t in self.inputs)

    @property
    def output_id(self) -> int:
        """Id of the produced tensor."""
        return self.output.id


@dataclass
class Tape:
    """Ordered record of the operations of one forward pass.

    Nodes are appended as operations run, so the list is topologically ordered
    by construction. A tape belongs to one training step and one thread of
    control; use it as a context manager to make it the active recorder.
    """

    nodes: list[Node] = field(default_factory=list[Node])
    _token: Token[Tape | None] | None = field(default=None, repr=False)

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        """Append a node."""
        self.nodes.append(node)


_RULES: dict[str, Rule] = {}


def _rule(kind: OpKind) -> Callable[[Rule], Rule]:
    """Register the forward/backward rule for ``kind``."""

    def register(fn: Rule) -> Rule:
        _RULES[kind] = fn
        return fn

    return register


def supported_kinds() -> tuple[str, ...]:
    """Every operation kind :func:`apply` accepts, in declaration order."""
    return tuple(kind for kind in get_args(OpKind) if kind in _RULES)


def _arity(kind: str, xs: tuple[FloatArray, ...], count: int) -> None:
    if len(xs) != count:
        raise DimensionError(f"{kind}: expected {count} input(s), got {len(xs)}")


def _shapes(xs: Iterable[FloatArray]) -> str:
    return ", ".join(str(x.shape) for x in xs)


@_rule("matmul")
def _matmul(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("matmul", xs, 2)
    a, b = xs
    leading_ok = b.ndim == 2 or (b.ndim == a.ndim and a.shape[:-2] == b.shape[:-2])
    if a.ndim < 2 or b.ndim < 2 or not leading_ok or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {_shapes(xs)}")
    out = np.matmul(a, b)

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        ga = np.matmul(g, np.swapaxes(b, -1, -2))
        if b.ndim == 2:
            gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a, -1, -2), g)
        return ga, gb

    return out, back


@_rule("add")
def _add(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("add", xs, 2)
    a, b = xs
    bias = b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1] and a.shape != b.shape
    if a.shape != b.shape and not bias:
        raise DimensionError(f"add: shapes {_shapes(xs)} are neither equal nor a bias over the last axis")
    out = a + b

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return g, (g.reshape(-1, b.shape[0]).sum(axis=0) if bias else g)

    return out, back


@_rule("mul_scalar")
def _mul_scalar(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("mul_scalar", xs, 1)
    scalar = float(attrs["scalar"])
    if not math.isfinite(scalar):
        raise ContractError(f"mul_scalar: scalar must be finite, got {scalar}")
    (a,) = xs

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (g * scalar,)

    return a * scalar, back


@_rule("embedding")
def _embedding(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("embedding", xs, 1)
    (table,) = xs
    ids = np.asarray(attrs["ids"])
    if table.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise DimensionError(f"embedding: needs a 2-d table and integer ids, got {table.shape} and {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding: ids must lie in [0, {table.shape[0]}), table shape {table.shape}")

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        gt = np.zeros_like(table)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return table[ids], back


@_rule("layer_norm")
def _layer_norm(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("layer_norm", xs, 3)
    x, gamma, beta = xs
    width = x.shape[-1] if x.ndim else 0
    if x.ndim < 1 or gamma.shape != (width,) or beta.shape != (width,):
        raise DimensionError(f"layer_norm: scale and shift must be ({width},), got {_shapes(xs)}")
    eps = float(attrs.get("eps", _LAYER_NORM_EPS))
    centred = x - x.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        g_hat = g * gamma
        gx = inv_std * (
            g_hat - g_hat.mean(axis=-1, keepdims=True) - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        flat = g.reshape(-1, width)
        return gx, (flat * x_hat.reshape(-1, width)).sum(axis=0), flat.sum(axis=0)

    return x_hat * gamma + beta, back


@_rule("softmax")
def _softmax(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("softmax", xs, 1)
    (x,) = xs
    if x.ndim < 1:
        raise DimensionError("softmax: needs at least one axis")
    z = x
    mask = attrs.get("mask")
    if mask is not None:
        additive = np.asarray(mask, dtype=np.float64)
        try:
            broadcast = np.broadcast_shapes(x.shape, additive.shape)
        except ValueError:
            broadcast = None
        if broadcast != x.shape:
            raise DimensionError(f"softmax: mask shape {additive.shape} does not broadcast to {x.shape}")
        z = x + additive
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return p, back


@_rule("gelu")
def _gelu(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("gelu", xs, 1)
    (x,) = xs
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        dt = (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return 0.5 * x * (1.0 + t), back


@_rule("tanh")
def _tanh(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("tanh", xs, 1)
    t = np.tanh(xs[0])

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (g * (1.0 - t**2),)

    return t, back


@_rule("dropout")
def _dropout(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("dropout", xs, 1)
    (x,) = xs
    rate = float(attrs["rate"])
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout: rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return x, lambda g: (g,)
    keep = np.random.default_rng(int(attrs["seed"])).random(x.shape) >= rate
    scale = keep / (1.0 - rate)

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (g * scale,)

    return x * scale, back


@_rule("reshape")
def _reshape(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("reshape", xs, 1)
    (x,) = xs
    shape = tuple(int(d) for d in attrs["shape"])
    if math.prod(shape) != x.size or any(d <= 0 for d in shape):
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (g.reshape(x.shape),)

    return x.reshape(shape), back


@_rule("transpose")
def _transpose(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("transpose", xs, 1)
    (x,) = xs
    axes = tuple(int(a) for a in attrs["axes"])
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} are not a permutation for shape {x.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        return (np.transpose(g, inverse),)

    return np.transpose(x, axes), back


@_rule("select")
def _select(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("select", xs, 1)
    (x,) = xs
    axis, index = int(attrs["axis"]), int(attrs["index"])
    if not 0 <= axis < x.ndim or not 0 <= index < x.shape[axis]:
        raise DimensionError(f"select: index {index} on axis {axis} is outside shape {x.shape}")
    where = (slice(None),) * axis + (index,)

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        gx = np.zeros_like(x)
        gx[where] = g
        return (gx,)

    return x[where], back


@_rule("mean")
def _mean(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("mean", xs, 1)
    (x,) = xs
    axis = attrs.get("axis")
    if axis is not None and not 0 <= int(axis) < x.ndim:
        raise DimensionError(f"mean: axis {axis} is outside shape {x.shape}")

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        if axis is None:
            return (np.full(x.shape, float(g) / x.size),)
        return (np.broadcast_to(np.expand_dims(g, int(axis)) / x.shape[int(axis)], x.shape).copy(),)

    out = x.mean() if axis is None else x.mean(axis=int(axis))
    return np.asarray(out, dtype=np.float64), back


@_rule("cross_entropy")
def _cross_entropy(xs: tuple[FloatArray, ...], attrs: Mapping[str, Any]) -> tuple[FloatArray, Backward]:
    _arity("cross_entropy", xs, 1)
    (logits,) = xs
    labels = np.asarray(attrs["labels"])
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} and labels {labels.shape} do not pair up")
    if labels.size == 0:
        raise ContractError("cross_entropy: the batch is empty")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ContractError(f"cross_entropy: every label index must lie in [0, {logits.shape[1]})")
    rows = np.arange(logits.shape[0])
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = np.asarray((log_z - shifted[rows, labels]).mean(), dtype=np.float64)

    def back(g: FloatArray) -> tuple[FloatArray | None, ...]:
        p = np.exp(shifted - log_z[:, None])
        p[rows, labels] -= 1.0
        return (p * (float(g) / logits.shape[0]),)

    return loss, back


def apply(kind: OpKind | str, inputs: Sequence[Tensor], attrs: Mapping[str, Any] | None = None) -> Tensor:
    """Run one operation and, inside an active tape, record it.

    Args:
        kind: Operation kind; see :func:`supported_kinds`.
        inputs: Input tensors, in the kind's argument order.
        attrs: Non-differentiable parameters: ``ids`` (embedding), ``eps``
            (layer_norm), ``mask`` (softmax, additive), ``rate`` and ``seed``
            (dropout), ``shape`` (reshape), ``axes`` (transpose), ``axis`` and
            ``index`` (select), ``axis`` (mean), ``labels`` (cross_entropy),
            ``scalar`` (mul_scalar).

    Returns:
        The output tensor. It is grad-enabled when any input is.

    Raises:
        UnsupportedOperationError: ``kind`` is not implemented.
        DimensionError: Input shapes do not conform to the kind's signature.
        ContractError: An attribute is out of its documented range.
    """
    rule = _RULES.get(kind)
    if rule is None:
        raise UnsupportedOperationError(f"unsupported operation kind {kind!r}")
    tensors = tuple(inputs)
    out_data, back = rule(tuple(t.data.astype(np.float64) for t in tensors), attrs or {})
    dtype = np.result_type(*(t.dtype for t in tensors)) if tensors else np.dtype(np.float64)
    needs_grad = any(t.grad_enabled for t in tensors)
    out = Tensor(np.asarray(out_data).astype(dtype), grad_enabled=needs_grad)
    tape = _active_tape.get()
    if needs_grad and tape is not None:
        tape.record(Node(kind=kind, inputs=tensors, output=out, rule=back))
    return out


def _propagate(tape: Tape, seeds: Mapping[int, FloatArray]) -> dict[int, FloatArray]:
    """Push output gradients back through ``tape``; return every accumulated gradient."""
    grads: dict[int, FloatArray] = dict(seeds)
    for node in reversed(tape.nodes):
        upstream = grads.get(node.output_id)
        if upstream is None:
            continue
        for tensor, contribution in zip(node.inputs, node.rule(upstream), strict=True):
            if contribution is None or not tensor.grad_enabled:
                continue
            previous = grads.get(tensor.id)
            grads[tensor.id] = contribution if previous is None else previous + contribution
    return grads


def backward(loss: Tensor, tape: Tape) -> dict[int, Tensor]:
    """Differentiate a scalar loss with respect to every grad-enabled leaf on ``tape``.

    Leaves are grad-enabled inputs that no recorded node produced: the
    parameters. Each one that the loss depends on gets its gradient stored in
    :attr:`Tensor.grad` and returned.

    Args:
        loss: A one-element tensor produced on ``tape``.
        tape: The tape of the forward pass.

    Returns:
        Parameter id to gradient tensor (float64, same shape as the parameter).
        Leaves the loss does not depend on are absent.

    Raises:
        ContractError: ``loss`` is not a scalar, or ``tape`` is empty.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.nodes:
        raise ContractError("backward needs a non-empty tape")
    grads = _propagate(tape, {loss.id: np.ones(loss.shape, dtype=np.float64)})
    produced = {node.output_id for node in tape.nodes}
    leaves: dict[int, Tensor] = {}
    for node in tape.nodes:
        for tensor in node.inputs:
            if tensor.grad_enabled and tensor.id not in produced and tensor.id in grads:
                leaves[tensor.id] = tensor
    result: dict[int, Tensor] = {}
    for tensor_id, leaf in leaves.items():
        grad = np.asarray(grads[tensor_id], dtype=np.float64)
        grad.setflags(write=False)
        leaf.grad = grad
        result[tensor_id] = Tensor(grad, name=leaf.name)
    return result


@dataclass(frozen=True)
class Probe:
    """A seeded input set for :func:`grad_check`.

    Attributes:
        inputs: Input arrays, in the kind's argument order.
        attrs: Operation attributes.
        differentiable: Which inputs are checked; defaults to all of them.
        seed: Seeds the random projection that turns the output into a scalar.
    """

    inputs: tuple[FloatArray, ...]
    attrs: Mapping[str, Any] = field(default_factory=dict[str, Any])
    differentiable: tuple[bool, ...] | None = None
    seed: int = 0


def make_probe(kind: OpKind, seed: int) -> Probe:
    """Build the standard seeded probe for ``kind``.

    Inputs are standard-normal draws of small shapes. Even and odd seeds
    alternate between the two call shapes a kind supports where it has two
    (weight-matrix versus batched matmul, bias versus same-shape add, whole
    versus per-axis mean).
    """
    rng = np.random.default_rng([seed, 7919])
    odd = seed % 2 == 1

    def normal(*shape: int) -> FloatArray:
        return rng.standard_normal(shape)

    if kind == "matmul":
        inputs = (normal(2, 2, 3), normal(2, 3, 4)) if odd else (normal(2, 2, 3), normal(3, 4))
        return Probe(inputs, seed=seed)
    if kind == "add":
        return Probe((normal(2, 3, 4), normal(2, 3, 4) if odd else normal(4)), seed=seed)
    if kind == "mul_scalar":
        return Probe((normal(3, 4),), {"scalar": 0.7}, seed=seed)
    if kind == "embedding":
        return Probe((normal(5, 3),), {"ids": rng.integers(0, 5, size=(2, 3))}, seed=seed)
    if kind == "layer_norm":
        return Probe((normal(2, 5), 1.0 + 0.1 * normal(5), normal(5)), seed=seed)
    if kind == "softmax":
        mask = np.where(rng.random((2, 1, 4)) < 0.3, MASK_VALUE, 0.0)
        mask[..., 0] = 0.0
        return Probe((normal(2, 3, 4),), {"mask": mask}, seed=seed)
    if kind in ("gelu", "tanh"):
        return Probe((normal(3, 4),), seed=seed)
    if kind == "dropout":
        return Probe((normal(3, 4),), {"rate": 0.3, "seed": seed}, seed=seed)
    if kind == "reshape":
        return Probe((normal(2, 6),), {"shape": (3, 4)}, seed=seed)
    if kind == "transpose":
        return Probe((normal(2, 3, 4),), {"axes": (1, 0, 2) if odd else (0, 2, 1)}, seed=seed)
    if kind == "select":
        return Probe((normal(2, 3, 4),), {"axis": 1, "index": seed % 3}, seed=seed)
    if kind == "mean":
        return Probe((normal(3, 4),), {"axis": 1} if odd else {}, seed=seed)
    if kind == "cross_entropy":
        return Probe((normal(3, 4),), {"labels": rng.integers(0, 4, size=3)}, seed=seed)
    raise UnsupportedOperationError(f"unsupported operation kind {kind!r}")


def grad_check(kind: OpKind | str, probe: Probe, *, h: float = 1e-4) -> float:
    """Compare the analytic gradient of ``kind`` against central finite differences.

    The output is reduced to a scalar by a fixed random projection, so every
    output element contributes with a different weight.

    Args:
        kind: The operation kind under test.
        probe: Finite float64 inputs and attributes.
        h: Finite-difference step.

    Returns:
        The maximum over checked elements of
        ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    arrays = tuple(np.asarray(x, dtype=np.float64) for x in probe.inputs)
    checked = probe.differentiable or (True,) * len(arrays)
    leaves = [Tensor(x, grad_enabled=flag) for x, flag in zip(arrays, checked, strict=True)]
    with Tape() as tape:
        out = apply(kind, leaves, probe.attrs)
    projection = np.random.default_rng(probe.seed).standard_normal(out.shape)
    grads = _propagate(tape, {out.id: projection})

    def objective(values: list[FloatArray]) -> float:
        result = apply(kind, [Tensor(v) for v in values], probe.attrs)
        return float((result.data * projection).sum())

    worst = 0.0
    for position, (leaf, flag) in enumerate(zip(leaves, checked, strict=True)):
        if not flag:
            continue
        analytic = grads.get(leaf.id, np.zeros_like(arrays[position]))
        numeric = np.empty_like(arrays[position])
        for index in np.ndindex(arrays[position].shape):
            values = [x.copy() for x in arrays]
            values[position][index] += h
            upper = objective(values)
            values[position][index] -= 2 * h
            lower = objective(values)
            numeric[index] = (upper - lower) / (2 * h)
        error = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
        worst = max(worst, float(error.max(initial=0.0)))
    return worst

