"""
Define-by-run reverse-mode automatic differentiation over dense float64 arrays.

A graph is built out of Node objects, evaluated with forward(root) and
differentiated with backward(root). Values are cached on the nodes, so a graph
is meant to be built, evaluated and differentiated once (one training step or
one explanation) and then thrown away.
"""

import itertools
import logging
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

Tensor = np.ndarray


class ShapeMismatchError(ValueError):
    pass


class NonFiniteValueError(ArithmeticError):
    pass


class GraphStateError(RuntimeError):
    pass


class Op(str, Enum):
    INPUT = "input"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SCALE = "scale"
    MATMUL = "matmul"
    TANH = "tanh"
    RELU = "relu"
    SUM = "sum"
    MEAN = "mean"
    SQUARE = "square"
    TRANSPOSE = "transpose"
    CONCAT = "concat"
    COLUMNS = "columns"
    AFFINE = "affine"
    SOFTMAX = "softmax"
    COLUMN_SCORES = "column-scores"
    RIDGE_SOLVE = "ridge-solve"


def tensor(values) -> Tensor:
    """Return an immutable float64 array holding `values`."""
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


_ids = itertools.count()


class Node:
    __slots__ = ("op", "parents", "attrs", "name", "value", "grad", "cache", "id")

    def __init__(self, op: Op, parents=(), attrs=None, name=None):
        self.op = op
        self.parents = tuple(parents)
        self.attrs = attrs or {}
        self.id = next(_ids)
        self.name = name or f"{op.value}#{self.id}"
        self.value = None
        self.grad = None
        self.cache = {}

    def __repr__(self):
        shape = None if self.value is None else self.value.shape
        return f"Node({self.name}, shape={shape})"

    @property
    def bound(self) -> bool:
        return self.value is not None

    def bind(self, values) -> "Node":
        if self.op is not Op.INPUT:
            raise GraphStateError(f"Only input nodes can be bound, got {self.name}")
        self.value = tensor(values)
        return self

    def __add__(self, other):
        return add(self, _as_node(other))

    def __radd__(self, other):
        return add(_as_node(other), self)

    def __sub__(self, other):
        return sub(self, _as_node(other))

    def __rsub__(self, other):
        return sub(_as_node(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_node(value) -> Node:
    return value if isinstance(value, Node) else constant(value)


# Graph constructors


def input_node(values=None, name=None) -> Node:
    node = Node(Op.INPUT, name=name)
    if values is not None:
        node.bind(values)
    return node


def constant(values, name=None) -> Node:
    return input_node(values, name=name)


def add(a: Node, b: Node) -> Node:
    return Node(Op.ADD, (a, b))


def sub(a: Node, b: Node) -> Node:
    return Node(Op.SUB, (a, b))


def mul(a: Node, b: Node) -> Node:
    return Node(Op.MUL, (a, b))


def scale(a: Node, factor: float) -> Node:
    return Node(Op.SCALE, (a,), {"factor": float(factor)})


def matmul(a: Node, b: Node) -> Node:
    return Node(Op.MATMUL, (a, b))


def tanh(a: Node) -> Node:
    return Node(Op.TANH, (a,))


def relu(a: Node) -> Node:
    return Node(Op.RELU, (a,))


def sum_all(a: Node) -> Node:
    return Node(Op.SUM, (a,))


def mean(a: Node) -> Node:
    return Node(Op.MEAN, (a,))


def square(a: Node) -> Node:
    return Node(Op.SQUARE, (a,))


def transpose(a: Node) -> Node:
    return Node(Op.TRANSPOSE, (a,))


def concat(nodes, name=None) -> Node:
    """Stack vectors and matrices side by side as columns of one matrix."""
    nodes = tuple(nodes)
    if not nodes:
        raise ShapeMismatchError("concat needs at least one node")
    return Node(Op.CONCAT, nodes, name=name)


def columns(a: Node, index) -> Node:
    """Gather the columns `index` of matrix `a` (repetition allowed)."""
    return Node(Op.COLUMNS, (a,), {"index": np.asarray(index, dtype=np.intp)})


def affine(x: Node, weight: Node, bias: Node) -> Node:
    """x @ weight + bias for a batch x (n×p), weight (p×q), bias (q)."""
    return Node(Op.AFFINE, (x, weight, bias))


def softmax(a: Node) -> Node:
    return Node(Op.SOFTMAX, (a,))


def column_scores(matrix: Node, target: Node, kind: str) -> Node:
    """Score every column of `matrix` against `target` (kind: dot, cosine or pearson)."""
    if kind not in ("dot", "cosine", "pearson"):
        raise ValueError(f"Unknown column score kind `{kind}`")
    return Node(Op.COLUMN_SCORES, (matrix, target), {"kind": kind})


# Evaluation


def topological_order(root: Node) -> list[Node]:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in visited:
            continue
        visited.add(node.id)
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.id not in visited:
                stack.append((parent, False))
    return order


def forward(root: Node) -> Tensor:
    """Evaluate every node below `root` that has no cached value yet and return the root value."""
    for node in topological_order(root):
        if node.value is not None:
            continue
        if node.op is Op.INPUT:
            raise GraphStateError(f"Input node {node.name} is not bound")
        rule = _RULES[node.op]
        inputs = [parent.value for parent in node.parents]
        for parent in node.parents:
            if parent.op is Op.INPUT and not np.all(np.isfinite(parent.value)):
                raise NonFiniteValueError(f"Non-finite value bound to {parent.name} feeding node {node.name}")
        try:
            value = rule.forward(node, *inputs)
        except ValueError as e:
            if isinstance(e, ShapeMismatchError):
                raise
            shapes = ", ".join(str(v.shape) for v in inputs)
            raise ShapeMismatchError(f"Shape mismatch at node {node.name} (inputs {shapes}): {e}") from e
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteValueError(f"Non-finite value produced at node {node.name}")
        value.setflags(write=False)
        node.value = value
    return root.value


def backward(root: Node) -> dict[Node, Tensor]:
    """
    Propagate d(sum of root)/d(node) to every node reachable from `root`.

    The root gradient is seeded with ones, so a scalar root gives plain
    derivatives. Returns the gradients of the input nodes.
    """
    if root.value is None:
        raise GraphStateError(f"backward called on {root.name} before forward")

    order = topological_order(root)
    grads = {root.id: np.ones_like(root.value)}
    for node in reversed(order):
        grad = grads.pop(node.id, None)
        if grad is None:
            grad = np.zeros_like(node.value)
        node.grad = grad
        if node.op is Op.INPUT:
            continue
        parent_grads = _RULES[node.op].vjp(node, grad, *[p.value for p in node.parents])
        for parent, parent_grad in zip(node.parents, parent_grads):
            if parent_grad is None:
                continue
            parent_grad = _unbroadcast(parent_grad, parent.value.shape)
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + parent_grad
            else:
                grads[parent.id] = parent_grad

    return {node: node.grad for node in order if node.op is Op.INPUT}


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# Rules: forward value and vector-Jacobian product per op


class _Rule:
    def __init__(self, forward, vjp):
        self.forward = forward
        self.vjp = vjp


def _elementwise_shape(a, b):
    return np.broadcast_shapes(a.shape, b.shape)


def _add_forward(node, a, b):
    _elementwise_shape(a, b)
    return a + b


def _sub_forward(node, a, b):
    _elementwise_shape(a, b)
    return a - b


def _mul_forward(node, a, b):
    _elementwise_shape(a, b)
    return a * b


def _matmul_forward(node, a, b):
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeMismatchError(f"matmul at {node.name} expects a matrix times a matrix or vector")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul at {node.name}: {a.shape} @ {b.shape}")
    return a @ b


def _matmul_vjp(node, g, a, b):
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


def _as_columns(value):
    return value.reshape(-1, 1) if value.ndim == 1 else value


def _concat_forward(node, *values):
    blocks = [_as_columns(v) for v in values]
    rows = {block.shape[0] for block in blocks}
    if len(rows) != 1 or any(block.ndim != 2 for block in blocks):
        raise ShapeMismatchError(f"concat at {node.name}: row counts {sorted(rows)} differ")
    return np.concatenate(blocks, axis=1)


def _concat_vjp(node, g, *values):
    grads = []
    start = 0
    for value in values:
        width = 1 if value.ndim == 1 else value.shape[1]
        grads.append(g[:, start : start + width].reshape(value.shape))
        start += width
    return grads


def _columns_forward(node, a):
    if a.ndim != 2:
        raise ShapeMismatchError(f"columns at {node.name} expects a matrix")
    return a[:, node.attrs["index"]]


def _columns_vjp(node, g, a):
    grad = np.zeros_like(a)
    np.add.at(grad, (slice(None), node.attrs["index"]), g)
    return (grad,)


def _affine_forward(node, x, weight, bias):
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatchError(f"affine at {node.name}: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    return x @ weight + bias


def _affine_vjp(node, g, x, weight, bias):
    return g @ weight.T, x.T @ g, g.sum(axis=0)


def _softmax_forward(node, a):
    if a.ndim != 1:
        raise ShapeMismatchError(f"softmax at {node.name} expects a vector")
    shifted = np.exp(a - a.max())
    return shifted / shifted.sum()


def _softmax_vjp(node, g, a):
    s = node.value
    return (s * (g - np.dot(g, s)),)


def _center(v, kind):
    return v - v.mean(axis=0) if kind == "pearson" else v


def _column_scores_forward(node, matrix, target):
    kind = node.attrs["kind"]
    if matrix.ndim != 2 or target.shape != (matrix.shape[0],):
        raise ShapeMismatchError(f"column-scores at {node.name}: matrix {matrix.shape}, target {target.shape}")
    if kind == "dot":
        return matrix.T @ target

    cols = _center(matrix, kind)
    y = _center(target, kind)
    col_norms = np.linalg.norm(cols, axis=0)
    y_norm = np.linalg.norm(y)
    if y_norm == 0.0 or np.any(col_norms == 0.0):
        raise NonFiniteValueError(f"{kind} score at {node.name} is undefined for a zero-norm vector")
    node.cache.update(cols=cols, y=y, col_norms=col_norms, y_norm=y_norm)
    return (cols.T @ y) / (col_norms * y_norm)


def _column_scores_vjp(node, g, matrix, target):
    if node.attrs["kind"] == "dot":
        return np.outer(target, g), matrix @ g
    c = node.cache
    scores = node.value
    cols, y, col_norms, y_norm = c["cols"], c["y"], c["col_norms"], c["y_norm"]
    # For pearson the centered inputs make both expressions mean-free, so they
    # are already the gradients with respect to the uncentered inputs.
    d_cols = np.outer(y, g / (col_norms * y_norm)) - cols * (g * scores / col_norms**2)
    d_y = cols @ (g / (col_norms * y_norm)) - y * (np.dot(g, scores) / y_norm**2)
    return d_cols, d_y


def _ridge_forward(node, design, target):
    from autodiff.solve import ridge_forward

    return ridge_forward(node, design, target)


def _ridge_vjp(node, g, design, target):
    from autodiff.solve import ridge_vjp

    return ridge_vjp(node, g, design, target)


_RULES = {
    Op.ADD: _Rule(_add_forward, lambda node, g, a, b: (g, g)),
    Op.SUB: _Rule(_sub_forward, lambda node, g, a, b: (g, -g)),
    Op.MUL: _Rule(_mul_forward, lambda node, g, a, b: (g * b, g * a)),
    Op.SCALE: _Rule(
        lambda node, a: node.attrs["factor"] * a,
        lambda node, g, a: (node.attrs["factor"] * g,),
    ),
    Op.MATMUL: _Rule(_matmul_forward, _matmul_vjp),
    Op.TANH: _Rule(lambda node, a: np.tanh(a), lambda node, g, a: (g * (1.0 - node.value**2),)),
    Op.RELU: _Rule(lambda node, a: np.maximum(a, 0.0), lambda node, g, a: (g * (a > 0.0),)),
    Op.SUM: _Rule(lambda node, a: np.sum(a), lambda node, g, a: (np.full_like(a, g),)),
    Op.MEAN: _Rule(lambda node, a: np.mean(a), lambda node, g, a: (np.full_like(a, g / a.size),)),
    Op.SQUARE: _Rule(lambda node, a: a * a, lambda node, g, a: (2.0 * a * g,)),
    Op.TRANSPOSE: _Rule(lambda node, a: a.T, lambda node, g, a: (g.T,)),
    Op.CONCAT: _Rule(_concat_forward, _concat_vjp),
    Op.COLUMNS: _Rule(_columns_forward, _columns_vjp),
    Op.AFFINE: _Rule(_affine_forward, _affine_vjp),
    Op.SOFTMAX: _Rule(_softmax_forward, _softmax_vjp),
    Op.COLUMN_SCORES: _Rule(_column_scores_forward, _column_scores_vjp),
    Op.RIDGE_SOLVE: _Rule(_ridge_forward, _ridge_vjp),
}
