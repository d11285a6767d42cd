"""Trainable parameters and dense networks built on top of the graph engine."""

import math

import numpy as np

from autodiff.graph import Node, affine, input_node, relu, tanh

ACTIVATIONS = {
    "tanh": tanh,
    "relu": relu,
}


class Parameter:
    """A named, trainable float64 array that outlives the per-step graphs."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class ParameterBinding:
    """
    Maps parameters to input nodes of one graph.

    Each parameter gets exactly one node per binding, so gradients from every
    use of the parameter accumulate on the same node.
    """

    def __init__(self):
        self._nodes: dict[Parameter, Node] = {}

    def node(self, parameter: Parameter) -> Node:
        if parameter not in self._nodes:
            self._nodes[parameter] = input_node(parameter.value.copy(), name=parameter.name)
        return self._nodes[parameter]

    def gradients(self) -> dict[Parameter, np.ndarray]:
        return {
            parameter: node.grad if node.grad is not None else np.zeros_like(parameter.value)
            for parameter, node in self._nodes.items()
        }


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Mlp:
    """
    Dense network: every hidden layer is affine + activation, the output layer is affine.

    With zero_output the last layer starts at zero, so the network initially outputs 0.
    """

    def __init__(self, name: str, sizes: list[int], activation: str, layers: list[tuple[Parameter, Parameter]]):
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation `{activation}`, expected one of {sorted(ACTIVATIONS)}")
        self.name = name
        self.sizes = list(sizes)
        self.activation = activation
        self.layers = layers

    @classmethod
    def initialize(
        cls, name: str, sizes: list[int], activation: str, rng: np.random.Generator, zero_output=False
    ) -> "Mlp":
        layers = []
        for index, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            is_output = index == len(sizes) - 2
            if is_output and zero_output:
                weight = np.zeros((fan_in, fan_out))
            else:
                weight = glorot_uniform(rng, fan_in, fan_out)
            layers.append(
                (
                    Parameter(f"{name}.layer{index}.weight", weight),
                    Parameter(f"{name}.layer{index}.bias", np.zeros(fan_out)),
                )
            )
        return cls(name, sizes, activation, layers)

    @classmethod
    def from_arrays(cls, name: str, activation: str, arrays: list[tuple]) -> "Mlp":
        layers = []
        sizes = []
        for index, (weight, bias) in enumerate(arrays):
            weight = np.array(weight, dtype=np.float64)
            bias = np.array(bias, dtype=np.float64)
            if weight.ndim != 2 or bias.shape != (weight.shape[1],):
                raise ValueError(f"{name}: layer {index} has weight {weight.shape} and bias {bias.shape}")
            if sizes and sizes[-1] != weight.shape[0]:
                raise ValueError(f"{name}: layer {index} expects {weight.shape[0]} inputs, previous gives {sizes[-1]}")
            if not sizes:
                sizes.append(weight.shape[0])
            sizes.append(weight.shape[1])
            layers.append(
                (Parameter(f"{name}.layer{index}.weight", weight), Parameter(f"{name}.layer{index}.bias", bias))
            )
        return cls(name, sizes, activation, layers)

    def parameters(self) -> list[Parameter]:
        return [parameter for layer in self.layers for parameter in layer]

    def graph(self, x: Node, binding: ParameterBinding) -> Node:
        """Build the network applied to a batch x (n×inputs); returns an n×outputs node."""
        activation = ACTIVATIONS[self.activation]
        out = x
        for index, (weight, bias) in enumerate(self.layers):
            out = affine(out, binding.node(weight), binding.node(bias))
            if index < len(self.layers) - 1:
                out = activation(out)
        return out

    def to_arrays(self) -> list[tuple[list, list]]:
        return [(weight.value.tolist(), bias.value.tolist()) for weight, bias in self.layers]
