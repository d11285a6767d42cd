"""
Bank of one-feature subnetworks producing the basis shape functions.

Each subnetwork (i, j) maps feature i to g = (1 − α_ij)·h_ij(x) + α_ij·x, where
h_ij is a small tanh MLP whose output layer starts at zero, so every basis
function starts out as the line α·x.
"""

import logging
from dataclasses import dataclass

import numpy as np

from autodiff.graph import Node, ShapeMismatchError, constant, forward, input_node, mul, sub
from autodiff.nn import Mlp, Parameter, ParameterBinding

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_SIZES = (16, 16)
DEFAULT_ALPHA = 0.9


class InvalidInputError(ValueError):
    pass


@dataclass
class FeatureTransform:
    """Per-feature standardization applied to raw inputs before the subnetworks."""

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "FeatureTransform":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, X: np.ndarray) -> "FeatureTransform":
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(X.mean(axis=0), scale)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.shift == 0.0) and np.all(self.scale == 1.0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return X
        return (X - self.shift) / self.scale


class Subnet:
    def __init__(self, feature: int, basis: int, mlp: Mlp, alpha: Parameter):
        self.feature = feature
        self.basis = basis
        self.mlp = mlp
        self.alpha = alpha

    @classmethod
    def initialize(
        cls, feature: int, basis: int, rng: np.random.Generator, hidden_sizes=DEFAULT_HIDDEN_SIZES, alpha=DEFAULT_ALPHA
    ) -> "Subnet":
        name = f"subnet[{feature},{basis}]"
        mlp = Mlp.initialize(name, [1, *hidden_sizes, 1], "tanh", rng, zero_output=True)
        return cls(feature, basis, mlp, Parameter(f"{name}.alpha", alpha))

    def parameters(self) -> list[Parameter]:
        return [*self.mlp.parameters(), self.alpha]

    def graph(self, x: Node, binding: ParameterBinding) -> Node:
        """Shape function values for an n×1 input column; returns an n×1 node."""
        alpha = binding.node(self.alpha)
        hidden = self.mlp.graph(x, binding)
        return mul(sub(constant(1.0), alpha), hidden) + mul(alpha, x)


def subnet_forward(subnet: Subnet, x_column) -> np.ndarray:
    """Evaluate one basis shape function on a vector of feature values."""
    x_column = np.asarray(x_column, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x_column)):
        raise InvalidInputError(f"Non-finite input for subnet ({subnet.feature}, {subnet.basis})")
    node = subnet.graph(input_node(x_column.reshape(-1, 1)), ParameterBinding())
    return forward(node)[:, 0].copy()


class BasisBank:
    """
    The k·d subnetworks, ordered feature-major: index = i·k + j.

    `pairwise` records whether the bank was trained with pair-product columns,
    which decides whether explanations may build pair heatmaps.
    """

    def __init__(
        self,
        d: int,
        k: int,
        subnets: list[Subnet],
        hidden_sizes=DEFAULT_HIDDEN_SIZES,
        pairwise=False,
        transform: FeatureTransform | None = None,
    ):
        if d < 1 or k < 1:
            raise ValueError(f"A basis bank needs d >= 1 and k >= 1, got d={d}, k={k}")
        if len(subnets) != d * k:
            raise ValueError(f"Expected {d * k} subnets, got {len(subnets)}")
        for index, subnet in enumerate(subnets):
            if (subnet.feature, subnet.basis) != divmod(index, k):
                raise ValueError(f"Subnet at position {index} is ({subnet.feature}, {subnet.basis})")
        self.d = d
        self.k = k
        self.subnets = subnets
        self.hidden_sizes = tuple(hidden_sizes)
        self.pairwise = pairwise
        self.transform = transform or FeatureTransform.identity(d)

    @classmethod
    def initialize(
        cls,
        d: int,
        k: int,
        rng: np.random.Generator,
        hidden_sizes=DEFAULT_HIDDEN_SIZES,
        alpha=DEFAULT_ALPHA,
        pairwise=False,
    ) -> "BasisBank":
        subnets = [
            Subnet.initialize(feature, basis, rng, hidden_sizes, alpha) for feature in range(d) for basis in range(k)
        ]
        logger.debug("Initialized basis bank d=%s k=%s hidden=%s", d, k, hidden_sizes)
        return cls(d, k, subnets, hidden_sizes, pairwise)

    def subnet(self, feature: int, basis: int) -> Subnet:
        return self.subnets[feature * self.k + basis]

    def parameters(self) -> list[Parameter]:
        return [parameter for subnet in self.subnets for parameter in subnet.parameters()]

    def pair_count(self) -> int:
        return self.k * self.k * self.d * (self.d - 1) // 2

    def width(self, pairwise: bool | None = None, bias=True) -> int:
        pairwise = self.pairwise if pairwise is None else pairwise
        return self.k * self.d + (self.pair_count() if pairwise else 0) + (1 if bias else 0)

    def prepare_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ShapeMismatchError(f"Expected an n×{self.d} input matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("Input matrix contains non-finite values")
        return self.transform.apply(X)
