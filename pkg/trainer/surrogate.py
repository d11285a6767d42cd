"""Surrogate network trained jointly with the basis bank to approximate the black box."""

import numpy as np

from autodiff.graph import Node, constant, forward, input_node, matmul
from autodiff.nn import Mlp, Parameter, ParameterBinding

DEFAULT_SURROGATE_SIZES = (10, 10, 10, 10, 10)


class SurrogateNet:
    def __init__(self, mlp: Mlp):
        if mlp.sizes[-1] != 1:
            raise ValueError(f"A surrogate network has one output, got {mlp.sizes[-1]}")
        self.mlp = mlp

    @property
    def d(self) -> int:
        return self.mlp.sizes[0]

    @classmethod
    def initialize(cls, d: int, rng: np.random.Generator, hidden_sizes=DEFAULT_SURROGATE_SIZES) -> "SurrogateNet":
        return cls(Mlp.initialize("surrogate", [d, *hidden_sizes, 1], "relu", rng))

    def parameters(self) -> list[Parameter]:
        return self.mlp.parameters()

    def graph(self, x: Node, binding: ParameterBinding) -> Node:
        """Predictions z for a batch x (n×d) as a length-n vector node."""
        return matmul(self.mlp.graph(x, binding), constant(np.ones(1)))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return forward(self.graph(input_node(X, name="x"), ParameterBinding())).copy()

    def to_dict(self) -> dict:
        return {
            "sizes": self.mlp.sizes,
            "activation": self.mlp.activation,
            "layers": [{"weight": weight, "bias": bias} for weight, bias in self.mlp.to_arrays()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateNet":
        arrays = [(layer["weight"], layer["bias"]) for layer in data["layers"]]
        return cls(Mlp.from_arrays("surrogate", data.get("activation", "relu"), arrays))
