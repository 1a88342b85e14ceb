#!/usr/bin/env python
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from actkit.exceptions import NumericalError, OperationError, ShapeError

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

# this_file: src/actkit/autodiff.py
"""Dense matrices and reverse-mode differentiation on a recorded tape.

A :class:`Tape` is a Wengert list of matrix-level primitives. Nodes are
appended in topological order while the graph is built, so a single forward
sweep evaluates it and a single reversed sweep accumulates gradients. The
graph is built once and re-evaluated with new inputs, which is how the
trainer reuses one loss graph for every minibatch.

All values are 64-bit floats. Vectors are 1×k row matrices.
"""

_ZERO_VARIANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Matrix:
    """Validated, read-only 2-D float64 matrix.

    Vectors given as 1-D sequences become 1×k row matrices.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            msg = f"Matrix data must be 1-D or 2-D, got {arr.ndim}-D"
            raise ShapeError(msg)
        if not np.all(np.isfinite(arr)):
            msg = "Matrix entries must be finite (NaN/Inf rejected)"
            raise NumericalError(msg)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> Matrix:
        return cls(np.asarray(rows, dtype=np.float64))

    @classmethod
    def from_flat(cls, rows: int, cols: int, values: Sequence[float]) -> Matrix:
        """Build from a row-major sequence of ``rows*cols`` values."""
        flat = np.asarray(values, dtype=np.float64)
        if flat.size != rows * cols:
            msg = f"expected {rows * cols} values for a {rows}x{cols} matrix, got {flat.size}"
            raise ShapeError(msg)
        return cls(flat.reshape(rows, cols))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> Matrix:
        return cls(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> Matrix:
        return cls(np.eye(n))

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_numpy(self) -> np.ndarray:
        """Return a writable copy of the data."""
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Matrix(rows={self.rows}, cols={self.cols})"


class Op(str, Enum):
    """Primitive operations recorded on a tape."""

    LEAF = "leaf"
    MATMUL = "matmul"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SCALE = "scale"
    ADD_ROW = "add_row"
    RELU = "relu"
    TRANSPOSE = "transpose"
    SUM = "sum"
    MEAN = "mean"
    DETACH = "detach"
    PROJECT_ROWS = "project_rows"
    STANDARDIZE = "standardize"


@dataclass
class Node:
    """One primitive-op record: inputs, kind, declared shape and cached values."""

    id: int
    op: Op
    inputs: tuple[int, ...]
    shape: tuple[int, int]
    name: str | None = None
    trainable: bool = False
    requires_grad: bool = False
    attrs: dict[str, Any] = field(default_factory=dict)
    value: np.ndarray | None = None
    cache: Any = None


class Tape:
    """Recorder for a scalar-valued computation graph.

    Leaves are declared with :meth:`param` (trainable) or :meth:`constant`
    (never receives gradient). Inputs to :func:`evaluate_graph` are bound to
    leaves in declaration order.

    Example:
        >>> tape = Tape()
        >>> x = tape.param("x", (1, 3))
        >>> tape.set_output(tape.sum(tape.mul(x, x)))
        >>> evaluate_graph(tape, [Matrix([1.0, -2.0, 0.5])])
        5.25
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.leaves: list[int] = []
        self.output: int | None = None
        self._evaluated = False

    # -- leaves ---------------------------------------------------------------

    def param(self, name: str, shape: tuple[int, int]) -> int:
        """Declare a trainable leaf."""
        return self._leaf(name, shape, trainable=True)

    def constant(self, name: str, shape: tuple[int, int]) -> int:
        """Declare a constant leaf; its gradient is always zero."""
        return self._leaf(name, shape, trainable=False)

    def _leaf(self, name: str, shape: tuple[int, int], *, trainable: bool) -> int:
        rows, cols = shape
        if rows < 1 or cols < 1:
            msg = f"leaf shape must be positive, got {shape}"
            raise ShapeError(msg, node=len(self.nodes), name=name)
        node_id = self._append(Op.LEAF, (), (rows, cols), name=name, trainable=trainable)
        self.leaves.append(node_id)
        return node_id

    # -- primitives -----------------------------------------------------------

    def matmul(self, a: int, b: int, name: str | None = None) -> int:
        (m, k), (k2, n) = self._shape(a), self._shape(b)
        if k != k2:
            msg = f"matmul inner dimensions differ: {m}x{k} @ {k2}x{n}"
            raise ShapeError(msg, node=len(self.nodes), name=name or "matmul")
        return self._append(Op.MATMUL, (a, b), (m, n), name=name)

    def add(self, a: int, b: int, name: str | None = None) -> int:
        return self._elementwise(Op.ADD, a, b, name)

    def sub(self, a: int, b: int, name: str | None = None) -> int:
        return self._elementwise(Op.SUB, a, b, name)

    def mul(self, a: int, b: int, name: str | None = None) -> int:
        return self._elementwise(Op.MUL, a, b, name)

    def scale(self, a: int, factor: float, name: str | None = None) -> int:
        return self._append(Op.SCALE, (a,), self._shape(a), name=name, factor=float(factor))

    def add_row(self, a: int, row: int, name: str | None = None) -> int:
        """Add a 1×k row vector to every row of an n×k matrix."""
        (n, k), (one, k2) = self._shape(a), self._shape(row)
        if one != 1 or k != k2:
            msg = f"add_row needs a 1x{k} row, got {one}x{k2}"
            raise ShapeError(msg, node=len(self.nodes), name=name or "add_row")
        return self._append(Op.ADD_ROW, (a, row), (n, k), name=name)

    def relu(self, a: int, name: str | None = None) -> int:
        return self._append(Op.RELU, (a,), self._shape(a), name=name)

    def transpose(self, a: int, name: str | None = None) -> int:
        m, n = self._shape(a)
        return self._append(Op.TRANSPOSE, (a,), (n, m), name=name)

    def sum(self, a: int, name: str | None = None) -> int:
        return self._append(Op.SUM, (a,), (1, 1), name=name)

    def mean(self, a: int, name: str | None = None) -> int:
        return self._append(Op.MEAN, (a,), (1, 1), name=name)

    def detach(self, a: int, name: str | None = None) -> int:
        """Identity in the forward pass, gradient barrier in the backward pass."""
        return self._append(Op.DETACH, (a,), self._shape(a), name=name)

    def project_rows(self, a: int, lower: float, upper: float, name: str | None = None) -> int:
        """Clamp each row's Euclidean norm into ``[lower, upper]``.

        A zero row maps to ``clip(1, lower, upper)·e₁``.
        """
        if not 0.0 <= lower <= upper or upper <= 0.0:
            msg = f"invalid norm range [{lower}, {upper}]"
            raise ShapeError(msg, node=len(self.nodes), name=name or "project_rows")
        return self._append(Op.PROJECT_ROWS, (a,), self._shape(a), name=name, lower=lower, upper=upper)

    def standardize(self, a: int, name: str | None = None) -> int:
        """Column-standardize: subtract the column mean, divide by the unbiased std."""
        rows, _ = self._shape(a)
        if rows < 2:
            msg = "standardize needs at least 2 rows"
            raise ShapeError(msg, node=len(self.nodes), name=name or "standardize")
        return self._append(Op.STANDARDIZE, (a,), self._shape(a), name=name)

    def inner(self, a: int, b: int, name: str | None = None) -> int:
        """Frobenius inner product ⟨a, b⟩_F as a 1×1 node."""
        return self.sum(self.mul(a, b), name=name)

    def set_output(self, node: int) -> None:
        if self._shape(node) != (1, 1):
            msg = f"graph output must be 1x1, got {self._shape(node)}"
            raise ShapeError(msg, node=node, name=self.nodes[node].name)
        self.output = node

    # -- internals ------------------------------------------------------------

    def _shape(self, node: int) -> tuple[int, int]:
        if not 0 <= node < len(self.nodes):
            msg = f"unknown node id {node}"
            raise ShapeError(msg, node=node)
        return self.nodes[node].shape

    def _elementwise(self, op: Op, a: int, b: int, name: str | None) -> int:
        sa, sb = self._shape(a), self._shape(b)
        if sa != sb:
            msg = f"{op.value} operands differ in shape: {sa} vs {sb}"
            raise ShapeError(msg, node=len(self.nodes), name=name or op.value)
        return self._append(op, (a, b), sa, name=name)

    def _append(
        self,
        op: Op,
        inputs: tuple[int, ...],
        shape: tuple[int, int],
        *,
        name: str | None = None,
        trainable: bool = False,
        **attrs: Any,
    ) -> int:
        if op is Op.LEAF:
            requires_grad = trainable
        elif op is Op.DETACH:
            requires_grad = False
        else:
            requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        node = Node(
            id=len(self.nodes),
            op=op,
            inputs=inputs,
            shape=shape,
            name=name,
            trainable=trainable,
            requires_grad=requires_grad,
            attrs=attrs,
        )
        self.nodes.append(node)
        self._evaluated = False
        return node.id

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Tape(nodes={len(self.nodes)}, leaves={len(self.leaves)})"


# -- forward rules ------------------------------------------------------------


def _clamp_rows(a: np.ndarray, lower: float, upper: float) -> tuple[np.ndarray, Any]:
    norms = np.sqrt(np.sum(a * a, axis=1))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    target = np.clip(norms, lower, upper)
    out = a * (target / safe)[:, None]
    if np.any(zero):
        out[zero] = 0.0
        out[zero, 0] = min(max(1.0, lower), upper)
    return out, (norms, target, zero)


def clamp_row_norms(a: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """Clamp each row norm of `a` into ``[lower, upper]``; zero rows map to ``clip(1, lower, upper)·e₁``."""
    out, _ = _clamp_rows(np.atleast_2d(np.asarray(a, dtype=np.float64)), lower, upper)
    return out


def _project_rows_forward(node: Node, a: np.ndarray) -> tuple[np.ndarray, Any]:
    return _clamp_rows(a, node.attrs["lower"], node.attrs["upper"])


def _standardize(a: np.ndarray, where: str) -> tuple[np.ndarray, np.ndarray]:
    rows = a.shape[0]
    if rows < 2:
        msg = f"{where}: standardization needs at least 2 rows"
        raise NumericalError(msg)
    centered = a - a.mean(axis=0)
    std = np.sqrt(np.sum(centered * centered, axis=0) / (rows - 1))
    degenerate = np.flatnonzero(std <= _ZERO_VARIANCE)
    if degenerate.size:
        msg = f"{where}: zero variance in dimension {int(degenerate[0])} of a standardized batch"
        raise NumericalError(msg, record={"dimension": int(degenerate[0])})
    return centered / std, std


def standardize_columns(a: np.ndarray) -> np.ndarray:
    """Column-standardize with the unbiased std; zero-variance columns raise NumericalError."""
    z, _ = _standardize(np.asarray(a, dtype=np.float64), "standardize_columns")
    return z


def _standardize_forward(node: Node, a: np.ndarray) -> tuple[np.ndarray, Any]:
    z, std = _standardize(a, f"node {node.id}")
    return z, (z, std)


_FORWARD: dict[Op, Callable[..., tuple[np.ndarray, Any]]] = {
    Op.MATMUL: lambda _n, a, b: (a @ b, None),
    Op.ADD: lambda _n, a, b: (a + b, None),
    Op.SUB: lambda _n, a, b: (a - b, None),
    Op.MUL: lambda _n, a, b: (a * b, None),
    Op.SCALE: lambda n, a: (n.attrs["factor"] * a, None),
    Op.ADD_ROW: lambda _n, a, row: (a + row, None),
    Op.RELU: lambda _n, a: (np.maximum(a, 0.0), None),
    Op.TRANSPOSE: lambda _n, a: (a.T.copy(), None),
    Op.SUM: lambda _n, a: (np.array([[a.sum()]]), None),
    Op.MEAN: lambda _n, a: (np.array([[a.sum() / a.size]]), None),
    Op.DETACH: lambda _n, a: (a.copy(), None),
    Op.PROJECT_ROWS: _project_rows_forward,
    Op.STANDARDIZE: _standardize_forward,
}


# -- backward rules -----------------------------------------------------------


def _project_rows_backward(node: Node, g: np.ndarray, a: np.ndarray) -> tuple[np.ndarray]:
    lower, upper = node.attrs["lower"], node.attrs["upper"]
    norms, target, zero = node.cache
    clamped = (norms < lower) | (norms > upper) | (lower == upper)
    clamped &= ~zero
    grad = g.copy()
    if np.any(clamped):
        x = a[clamped]
        n = norms[clamped][:, None]
        unit = x / n
        gc = g[clamped]
        radial = np.sum(unit * gc, axis=1, keepdims=True)
        grad[clamped] = (target[clamped][:, None] / n) * (gc - unit * radial)
    grad[zero] = 0.0
    return (grad,)


def _standardize_backward(node: Node, g: np.ndarray, _a: np.ndarray) -> tuple[np.ndarray]:
    z, std = node.cache
    rows = g.shape[0]
    grad = (g - g.mean(axis=0) - z * np.sum(g * z, axis=0) / (rows - 1)) / std
    return (grad,)


_BACKWARD: dict[Op, Callable[..., tuple[np.ndarray, ...]]] = {
    Op.MATMUL: lambda _n, g, a, b: (g @ b.T, a.T @ g),
    Op.ADD: lambda _n, g, _a, _b: (g, g),
    Op.SUB: lambda _n, g, _a, _b: (g, -g),
    Op.MUL: lambda _n, g, a, b: (g * b, g * a),
    Op.SCALE: lambda n, g, _a: (n.attrs["factor"] * g,),
    Op.ADD_ROW: lambda _n, g, _a, _row: (g, g.sum(axis=0, keepdims=True)),
    Op.RELU: lambda _n, g, a: (g * (a > 0.0),),
    Op.TRANSPOSE: lambda _n, g, _a: (g.T,),
    Op.SUM: lambda _n, g, a: (np.full(a.shape, g[0, 0]),),
    Op.MEAN: lambda _n, g, a: (np.full(a.shape, g[0, 0] / a.size),),
    Op.PROJECT_ROWS: _project_rows_backward,
    Op.STANDARDIZE: _standardize_backward,
}


# -- public operations ----------------------------------------------------------


def evaluate_graph(tape: Tape, inputs: Sequence[Matrix]) -> float:
    """Run the forward sweep and return the scalar output.

    Args:
        tape: A graph with its output set.
        inputs: One matrix per leaf, in leaf declaration order.

    Returns:
        The forward value of the output node. Intermediates stay cached on
        the tape for :func:`backward_gradients`.

    Raises:
        ShapeError: If an input does not match its leaf's declared shape.
    """
    if tape.output is None:
        msg = "tape has no output node"
        raise OperationError(msg)
    if len(inputs) != len(tape.leaves):
        msg = f"expected {len(tape.leaves)} inputs, got {len(inputs)}"
        raise ShapeError(msg)
    for leaf_id, matrix in zip(tape.leaves, inputs, strict=True):
        leaf = tape.nodes[leaf_id]
        if matrix.shape != leaf.shape:
            msg = f"input shape {matrix.shape} does not match declared {leaf.shape}"
            raise ShapeError(msg, node=leaf_id, name=leaf.name)
        leaf.value = matrix.data

    tape._evaluated = False
    for node in tape.nodes:
        if node.op is Op.LEAF:
            continue
        args = [tape.nodes[i].value for i in node.inputs]
        node.value, node.cache = _FORWARD[node.op](node, *args)
    tape._evaluated = True
    out = tape.nodes[tape.output].value
    return float(out[0, 0])  # type: ignore[index]


def backward_gradients(tape: Tape) -> list[Matrix]:
    """Accumulate d(output)/d(leaf) for every leaf, in declaration order.

    Constant leaves, and anything reachable only through a detach node,
    receive an all-zero gradient.

    Raises:
        OperationError: If called before :func:`evaluate_graph`.
    """
    if not tape._evaluated or tape.output is None:
        msg = "backward_gradients called before evaluate_graph"
        raise OperationError(msg)

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[tape.output] = np.ones((1, 1))
    for node in reversed(tape.nodes[: tape.output + 1]):
        g = grads[node.id]
        if g is None or node.op is Op.LEAF or not node.requires_grad:
            continue
        args = [tape.nodes[i].value for i in node.inputs]
        for src, contrib in zip(node.inputs, _BACKWARD[node.op](node, g, *args), strict=True):
            if not tape.nodes[src].requires_grad:
                continue
            grads[src] = contrib if grads[src] is None else grads[src] + contrib

    result = []
    for leaf_id in tape.leaves:
        leaf = tape.nodes[leaf_id]
        g = grads[leaf_id]
        if not leaf.trainable or g is None:
            g = np.zeros(leaf.shape)
        result.append(Matrix(g))
    return result


def bound_inputs(tape: Tape) -> list[Matrix]:
    """The matrices currently bound to the tape's leaves."""
    if not tape._evaluated:
        msg = "tape has not been evaluated"
        raise OperationError(msg)
    return [Matrix(tape.nodes[i].value) for i in tape.leaves]  # type: ignore[arg-type]


def _central_differences(tape: Tape, leaf: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    if h <= 0:
        msg = f"finite-difference step must be positive, got {h}"
        raise OperationError(msg)
    if leaf not in tape.leaves:
        msg = "not a leaf of this tape"
        raise ShapeError(msg, node=leaf)
    inputs = bound_inputs(tape)
    position = tape.leaves.index(leaf)
    analytic = backward_gradients(tape)[position].data
    base = inputs[position].to_numpy()

    numeric = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        shifted = list(inputs)
        plus = base.copy()
        plus[index] += h
        shifted[position] = Matrix(plus)
        f_plus = evaluate_graph(tape, shifted)
        minus = base.copy()
        minus[index] -= h
        shifted[position] = Matrix(minus)
        f_minus = evaluate_graph(tape, shifted)
        numeric[index] = (f_plus - f_minus) / (2.0 * h)

    evaluate_graph(tape, inputs)
    return numeric, analytic


def finite_difference_check(tape: Tape, leaf: int, h: float = 1e-5) -> float:
    """Compare the tape gradient of one leaf with central differences.

    Uses the inputs bound by the last :func:`evaluate_graph` call and
    restores them afterwards.

    Returns:
        ``max over entries of |fd − g| / (|g| + 1e-12)``. Entries whose
        gradient is exactly zero on both sides contribute zero.
    """
    numeric, analytic = _central_differences(tape, leaf, h)
    return float(np.max(np.abs(numeric - analytic) / (np.abs(analytic) + 1e-12)))


def finite_difference_norm_error(tape: Tape, leaf: int, h: float = 1e-5) -> float:
    """Like :func:`finite_difference_check` but relative to the largest gradient entry.

    Returns:
        ``max|fd − g| / (max|g| + 1e-12)``; never larger than the
        per-entry value.
    """
    numeric, analytic = _central_differences(tape, leaf, h)
    return float(np.max(np.abs(numeric - analytic)) / (np.max(np.abs(analytic)) + 1e-12))
