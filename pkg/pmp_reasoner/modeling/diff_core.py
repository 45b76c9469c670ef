"""
Minimal reverse-mode differentiation over 64-bit numpy matrices.

Only the operations the message passing models need are provided: affine
maps, ReLU, sigmoid, row/column concatenation, row gathering, masked
neighbour max aggregation, max readout and binary cross-entropy. Each
operation records a closure that accumulates gradients into its inputs;
``Tensor.backward`` replays them in reverse topological order.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..domain.errors import ContractViolationError

BackwardFn = Callable[[np.ndarray], None]


class Tensor:
    """A matrix value with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward: Optional[BackwardFn] = None,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        """Back-propagate from a scalar tensor."""
        if self.data.size != 1:
            raise ContractViolationError(f"backward needs a scalar, got shape {self.shape}")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free intermediate buffers; leaves keep theirs
                if node._parents:
                    node.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        tensor.grad = tensor.grad + grad


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad, parents if requires_grad else (), backward if requires_grad else None)


def constant(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


def parameter(data: np.ndarray, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


# ----------------------------------------------------------------------
# Elementwise and linear operations
# ----------------------------------------------------------------------


def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ContractViolationError(f"matmul shapes {x.shape} and {w.shape}")

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad @ w.data.T)
        _accumulate(w, x.data.T @ grad)

    return _result(x.data @ w.data, (x, w), backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias with x: N x in, weight: in x out, bias: out."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ContractViolationError(f"affine shapes {x.shape} and {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ContractViolationError(f"bias shape {bias.shape} for weight {weight.shape}")

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad @ weight.data.T)
        _accumulate(weight, x.data.T @ grad)
        _accumulate(bias, grad.sum(axis=0))

    return _result(x.data @ weight.data + bias.data, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    active = x.data > 0

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad * active)

    return _result(np.where(active, x.data, 0.0), (x,), backward)


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad * out * (1.0 - out))

    return _result(out, (x,), backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ContractViolationError(f"add shapes {x.shape} and {y.shape}")

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad)
        _accumulate(y, grad)

    return _result(x.data + y.data, (x, y), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad * factor)

    return _result(x.data * factor, (x,), backward)


def scale_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply row j of x by the constant mask[j]."""
    column = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
    if column.shape[0] != x.shape[0]:
        raise ContractViolationError(f"row mask of length {column.shape[0]} for {x.shape}")

    def backward(grad: np.ndarray) -> None:
        _accumulate(x, grad * column)

    return _result(x.data * column, (x,), backward)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ContractViolationError(f"concat_cols row counts {sorted(rows)}")
    widths = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0] + widths)

    def backward(grad: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _accumulate(t, grad[:, lo:hi])

    return _result(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    widths = {t.shape[1] for t in tensors}
    if len(widths) != 1:
        raise ContractViolationError(f"concat_rows widths {sorted(widths)}")
    heights = [t.shape[0] for t in tensors]
    bounds = np.cumsum([0] + heights)

    def backward(grad: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _accumulate(t, grad[lo:hi])

    return _result(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), backward)


def gather_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    rows = np.asarray(index, dtype=np.int64)

    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        np.add.at(full, rows, grad)
        _accumulate(x, full)

    return _result(x.data[rows], (x,), backward)


def reduce_max_rows(x: Tensor) -> Tensor:
    """Column-wise max over rows (1 x d); ties go to the lowest row."""
    if x.shape[0] == 0:
        raise ContractViolationError("max over an empty set of rows")
    winners = x.data.argmax(axis=0)
    columns = np.arange(x.shape[1])

    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[winners, columns] = grad[0]
        _accumulate(x, full)

    return _result(x.data[winners, columns][None, :], (x,), backward)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets."""
    y = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    if logits.data.size == 0:
        return constant(np.zeros((1, 1)))
    x = logits.data
    per_item = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    count = x.size

    def backward(grad: np.ndarray) -> None:
        _accumulate(logits, grad.reshape(-1)[0] * (_sigmoid(x) - y) / count)

    return _result(np.array([[per_item.mean()]]), (logits,), backward)


def sum_scalars(terms: Iterable[Tensor]) -> Tensor:
    total: Optional[Tensor] = None
    for term in terms:
        total = term if total is None else add(total, term)
    return total if total is not None else constant(np.zeros((1, 1)))


# ----------------------------------------------------------------------
# Graph aggregation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SparseAdjacency:
    """Row-wise neighbour lists; row j lists every j' with adjacency(j, j') = 1."""

    neighbors: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_neighbor_sets(cls, rows: Sequence[Iterable[int]]) -> "SparseAdjacency":
        return cls(tuple(tuple(sorted(set(row))) for row in rows))

    @classmethod
    def self_loops(cls, size: int) -> "SparseAdjacency":
        return cls(tuple((j,) for j in range(size)))

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def has_edge(self, j: int, neighbor: int) -> bool:
        return neighbor in self.neighbors[j]

    @cached_property
    def padded(self) -> Tuple[np.ndarray, np.ndarray]:
        """(index, valid): N x max_degree neighbour ids, padded with 0 where invalid."""
        width = max((len(row) for row in self.neighbors), default=0)
        index = np.zeros((self.size, width), dtype=np.int64)
        valid = np.zeros((self.size, width), dtype=bool)
        for j, row in enumerate(self.neighbors):
            index[j, : len(row)] = row
            valid[j, : len(row)] = True
        return index, valid


def _neighbor_max(src_proj: Tensor, dst_proj: Tensor, adjacency: SparseAdjacency) -> Tensor:
    """out[j] = relu(max_{j'} src_proj[j'] + dst_proj[j])."""
    index, valid = adjacency.padded
    pre = src_proj.data[index] + dst_proj.data[:, None, :]
    pre[~valid] = -np.inf
    # neighbour ids are sorted, so argmax picks the lowest id on ties
    winners = pre.argmax(axis=1)
    best = np.take_along_axis(pre, winners[:, None, :], axis=1)[:, 0, :]
    active = best > 0
    rows = np.arange(adjacency.size)[:, None]
    chosen = index[rows, winners]
    channels = np.broadcast_to(np.arange(best.shape[1]), best.shape)

    def backward(grad: np.ndarray) -> None:
        routed = grad * active
        _accumulate(dst_proj, routed)
        if src_proj.requires_grad:
            full = np.zeros_like(src_proj.data)
            np.add.at(full, (chosen, channels), routed)
            _accumulate(src_proj, full)

    return _result(np.where(active, best, 0.0), (src_proj, dst_proj), backward)


@dataclass
class AffineMap:
    """Learnable affine map x -> x @ weight + bias."""

    weight: Tensor
    bias: Tensor

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return affine(x, self.weight, self.bias)

    def split_input(self, width: int) -> Tuple[Tensor, Tensor]:
        """Row blocks of the weight acting on the first ``width`` inputs and the rest."""
        return _row_block(self.weight, 0, width), _row_block(self.weight, width, self.in_dim)


def _row_block(w: Tensor, lo: int, hi: int) -> Tensor:
    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(w.data)
        full[lo:hi] = grad
        _accumulate(w, full)

    return _result(w.data[lo:hi], (w,), backward)


def masked_neighbor_max(
    features: Tensor,
    adjacency: SparseAdjacency,
    message: AffineMap,
    self_features: Optional[Tensor] = None,
) -> Tensor:
    """Elementwise max over neighbours of relu(message([z_j' ; z_j]))."""
    self_features = features if self_features is None else self_features
    if adjacency.size != features.shape[0] or self_features.shape[0] != features.shape[0]:
        raise ContractViolationError(
            f"adjacency over {adjacency.size} nodes for features {features.shape}"
        )
    if any(len(row) == 0 for row in adjacency.neighbors):
        raise ContractViolationError("every node needs at least one neighbour")
    width = features.shape[1]
    if message.in_dim != width + self_features.shape[1]:
        raise ContractViolationError(
            f"message map expects {message.in_dim} inputs, got {width}+{self_features.shape[1]}"
        )
    w_neighbor, w_self = message.split_input(width)
    src_proj = matmul(features, w_neighbor)
    dst_proj = affine(self_features, w_self, message.bias)
    return _neighbor_max(src_proj, dst_proj, adjacency)


# ----------------------------------------------------------------------
# Initialisation and optimisation
# ----------------------------------------------------------------------


def init_affine(rng: np.random.Generator, in_dim: int, out_dim: int, name: str) -> AffineMap:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weight and bias."""
    bound = 1.0 / np.sqrt(in_dim)
    weight = rng.uniform(-bound, bound, size=(in_dim, out_dim))
    bias = rng.uniform(-bound, bound, size=(out_dim,))
    return AffineMap(parameter(weight, f"{name}.weight"), parameter(bias, f"{name}.bias"))


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """One bias-corrected Adam update applied in place to ``params``."""
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, tensor in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if grad.shape != tensor.shape:
            raise ContractViolationError(
                f"gradient for {name} has shape {grad.shape}, parameter {tensor.shape}"
            )
        m = state.first_moment.get(name, np.zeros_like(tensor.data))
        v = state.second_moment.get(name, np.zeros_like(tensor.data))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        step = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        tensor.data = tensor.data - step
