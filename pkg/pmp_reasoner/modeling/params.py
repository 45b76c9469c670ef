"""
Learnable parameters shared by PMP and the baseline MPNNs.
"""

from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from ..domain.entities import ModelKind
from ..domain.errors import ContractViolationError
from ..domain.features import FEATURE_WIDTH, VALUE_BITS
from .diff_core import AffineMap, Tensor, init_affine, parameter

TIME_FEATURES = 4


def component_shapes(hidden_dim: int) -> Dict[str, Tuple[int, int]]:
    """(in, out) width of every affine component."""
    d = hidden_dim
    return {
        "f_relevance": (TIME_FEATURES + d, d),
        "f_operation": (FEATURE_WIDTH + d, d),
        "message": (2 * d, d),
        "update": (2 * d, d),
        "relevance_message": (2 * d, d),
        "relevance_update": (2 * d, d),
        "psi_relevance": (d, 1),
        "psi_persistency": (d, 1),
        "readout": (2 * d, VALUE_BITS),
        "node_value": (d, VALUE_BITS),
    }


def components_for(kind: ModelKind, shared_processor: bool = True) -> List[str]:
    """Components a model kind actually uses."""
    if kind is ModelKind.ORACLE:
        return ["f_operation", "message", "update", "readout"]
    names = [
        "f_relevance",
        "f_operation",
        "message",
        "update",
        "psi_relevance",
        "readout",
        "node_value",
    ]
    if kind is not ModelKind.OVERWRITE:
        names.append("psi_persistency")
    if kind is ModelKind.PMP and not shared_processor:
        names += ["relevance_message", "relevance_update"]
    return names


class ModelParams:
    """Named affine components with flat ``<component>.<weight|bias>`` access."""

    def __init__(self, hidden_dim: int, components: Mapping[str, AffineMap]):
        self.hidden_dim = hidden_dim
        self.components: Dict[str, AffineMap] = dict(components)

    @classmethod
    def initialize(
        cls,
        hidden_dim: int,
        rng: np.random.Generator,
        names: Sequence[str],
    ) -> "ModelParams":
        shapes = component_shapes(hidden_dim)
        components = {}
        # fixed order keeps initialisation reproducible regardless of ``names`` order
        for name in shapes:
            if name in names:
                in_dim, out_dim = shapes[name]
                components[name] = init_affine(rng, in_dim, out_dim, name)
        return cls(hidden_dim, components)

    @classmethod
    def from_arrays(cls, hidden_dim: int, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        shapes = component_shapes(hidden_dim)
        components = {}
        for name, (in_dim, out_dim) in shapes.items():
            weight = arrays.get(f"{name}.weight")
            bias = arrays.get(f"{name}.bias")
            if weight is None and bias is None:
                continue
            if weight is None or bias is None:
                raise ContractViolationError(f"component {name} is incomplete")
            if weight.shape != (in_dim, out_dim) or bias.shape != (out_dim,):
                raise ContractViolationError(
                    f"component {name} has shapes {weight.shape}/{bias.shape}, "
                    f"expected {(in_dim, out_dim)}/{(out_dim,)}"
                )
            components[name] = AffineMap(
                parameter(weight, f"{name}.weight"), parameter(bias, f"{name}.bias")
            )
        return cls(hidden_dim, components)

    def __getitem__(self, name: str) -> AffineMap:
        try:
            return self.components[name]
        except KeyError:
            raise ContractViolationError(f"model has no component '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self.components

    def named_tensors(self) -> Dict[str, Tensor]:
        tensors: Dict[str, Tensor] = {}
        for name, component in self.components.items():
            tensors[f"{name}.weight"] = component.weight
            tensors[f"{name}.bias"] = component.bias
        return tensors

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.named_tensors().items())

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self
        }

    def zero_grad(self) -> None:
        for _, tensor in self:
            tensor.zero_grad()

    def count(self) -> int:
        return sum(t.data.size for _, t in self)
