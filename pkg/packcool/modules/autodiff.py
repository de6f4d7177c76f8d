# modules/autodiff.py

"""
Expression graphs with reverse-mode differentiation whose gradients are
themselves graph nodes, so a loss that contains dV/du can be differentiated
again with respect to the network parameters.

Values are float64 torch tensors; torch.autograd does the differentiation
(create_graph=True keeps every gradient differentiable).
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import torch

from packcool.core.errors import InvalidArgumentError

logger = logging.getLogger("packcool.autodiff")

DTYPE = torch.float64

UNARY_KINDS = {"exp", "tanh", "square", "relu_max0", "neg", "sum"}
BINARY_KINDS = {"add", "sub", "mul", "div"}

_UNARY_OPS = {
    "exp": torch.exp,
    "tanh": torch.tanh,
    "square": torch.square,
    # torch.relu has zero derivative at exactly 0
    "relu_max0": torch.relu,
    "neg": torch.neg,
    "sum": torch.sum,
}
_BINARY_OPS = {
    "add": torch.add,
    "sub": torch.sub,
    "mul": torch.mul,
    "div": torch.div,
}


def as_tensor(value, requires_grad: bool = False) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(value, dtype=float), dtype=DTYPE).clone()
    return tensor.requires_grad_(requires_grad)


def gradients(
    output: torch.Tensor,
    inputs: Sequence[torch.Tensor],
    create_graph: bool = True,
) -> List[torch.Tensor]:
    """
    d(output)/d(inputs) for a scalar output. Inputs the output does not depend
    on get zero gradients. With create_graph the results stay differentiable.
    """
    if output.numel() != 1:
        raise InvalidArgumentError(f"gradients need a scalar output, got shape {tuple(output.shape)}")
    inputs = list(inputs)
    # constants (no requires_grad) cannot be handed to autograd
    live = [i for i, x in enumerate(inputs) if x.requires_grad]
    out = [torch.zeros_like(x) for x in inputs]
    if not output.requires_grad or not live:
        return out
    grads = torch.autograd.grad(
        output.reshape(()),
        [inputs[i] for i in live],
        create_graph=create_graph,
        retain_graph=True,
        allow_unused=True,
    )
    for i, g in zip(live, grads):
        if g is not None:
            out[i] = g
    return out


@dataclass(frozen=True)
class NodeRef:
    graph: "Graph"
    id: int

    @property
    def tensor(self) -> torch.Tensor:
        return self.graph.nodes[self.id].tensor

    @property
    def value(self) -> Union[float, np.ndarray]:
        data = self.tensor.detach().cpu().numpy()
        return float(data) if data.ndim == 0 else data

    def _other(self, other) -> "NodeRef":
        return other if isinstance(other, NodeRef) else self.graph.lift(other)

    def __add__(self, other):
        return self.graph.apply("add", self, self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.graph.apply("sub", self, self._other(other))

    def __rsub__(self, other):
        return self.graph.apply("sub", self._other(other), self)

    def __mul__(self, other):
        return self.graph.apply("mul", self, self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.graph.apply("div", self, self._other(other))

    def __neg__(self):
        return self.graph.apply("neg", self)


@dataclass
class _Node:
    kind: str
    operands: Tuple[int, ...]
    tensor: torch.Tensor


class Graph:
    """
    Append-only list of nodes. Operands always precede the node that uses
    them, so the list is topologically ordered by construction.
    """
    def __init__(self):
        self.nodes: List[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, kind: str, operands: Tuple[int, ...], tensor: torch.Tensor) -> NodeRef:
        self.nodes.append(_Node(kind=kind, operands=operands, tensor=tensor))
        return NodeRef(self, len(self.nodes) - 1)

    def _check(self, ref: NodeRef):
        if not isinstance(ref, NodeRef) or ref.graph is not self or not 0 <= ref.id < len(self.nodes):
            raise InvalidArgumentError(f"node {ref!r} does not belong to this graph")

    def lift(self, value) -> NodeRef:
        """Constant node: zero derivative."""
        return self._append("const", (), as_tensor(value))

    def input(self, value) -> NodeRef:
        """Differentiable leaf."""
        return self._append("input", (), as_tensor(value, requires_grad=True))

    def apply(self, kind: str, *operands: NodeRef) -> NodeRef:
        for ref in operands:
            self._check(ref)
        tensors = [ref.tensor for ref in operands]
        if kind in UNARY_KINDS and len(tensors) == 1:
            out = _UNARY_OPS[kind](tensors[0])
        elif kind in BINARY_KINDS and len(tensors) == 2:
            if kind == "div" and bool(torch.any(tensors[1] == 0)):
                raise InvalidArgumentError("division by a node whose value is zero")
            out = _BINARY_OPS[kind](tensors[0], tensors[1])
        else:
            raise InvalidArgumentError(f"unsupported operation {kind!r} with {len(tensors)} operand(s)")
        return self._append(kind, tuple(ref.id for ref in operands), out)

    def backward(self, output: NodeRef, wrt: Sequence[NodeRef]) -> List[NodeRef]:
        """
        Gradient nodes d(output)/d(wrt). They are ordinary nodes of this graph,
        so backward can be called on them again for second derivatives.
        """
        self._check(output)
        for ref in wrt:
            self._check(ref)
        grads = gradients(output.tensor, [ref.tensor for ref in wrt], create_graph=True)
        return [self._append("grad", (output.id, ref.id), g) for g, ref in zip(grads, wrt)]

    def recompute(self, ref: NodeRef) -> torch.Tensor:
        """Re-evaluate an operation node from its operands' cached values."""
        self._check(ref)
        node = self.nodes[ref.id]
        if node.kind in ("const", "input", "grad"):
            return node.tensor.detach()
        operands = [self.nodes[i].tensor.detach() for i in node.operands]
        op = _UNARY_OPS.get(node.kind) or _BINARY_OPS[node.kind]
        return op(*operands)


ScalarFunction = Callable[[Graph, List[NodeRef]], NodeRef]


def _first_gradient(f: ScalarFunction, x: np.ndarray) -> np.ndarray:
    graph = Graph()
    inputs = [graph.input(v) for v in x]
    grads = graph.backward(f(graph, inputs), inputs)
    return np.array([g.value for g in grads], dtype=float)


def _value(f: ScalarFunction, x: np.ndarray) -> float:
    graph = Graph()
    return float(f(graph, [graph.lift(v) for v in x]).value)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def finite_diff_check(f: ScalarFunction, x, h: float = 1e-5, order: int = 1) -> float:
    """
    Largest component-wise error between backward() and central differences,
    relative to max(1, |value|).

    order=1 compares first gradients with differences of f; order=2 compares
    gradient-of-gradient (double backward) with differences of the first
    gradients.
    """
    if h <= 0:
        raise InvalidArgumentError(f"step h must be positive, got {h}")
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0]

    if order == 1:
        analytic = _first_gradient(f, x)
        numeric = np.empty(n)
        for i in range(n):
            shift = np.zeros(n)
            shift[i] = h
            numeric[i] = (_value(f, x + shift) - _value(f, x - shift)) / (2.0 * h)
        return _relative_error(analytic, numeric)

    if order == 2:
        graph = Graph()
        inputs = [graph.input(v) for v in x]
        first = graph.backward(f(graph, inputs), inputs)
        analytic = np.array(
            [[g.value for g in graph.backward(first[i], inputs)] for i in range(n)], dtype=float
        )
        numeric = np.empty((n, n))
        for j in range(n):
            shift = np.zeros(n)
            shift[j] = h
            numeric[:, j] = (_first_gradient(f, x + shift) - _first_gradient(f, x - shift)) / (2.0 * h)
        return _relative_error(analytic, numeric)

    raise InvalidArgumentError(f"order must be 1 or 2, got {order}")
