"""
Finite-difference utilities for checking analytic gradients in tests.
"""

import numpy as np

from autodiff.graph import backward, forward, input_node


def numerical_gradient(function, value, step=1e-5):
    """
    Central finite differences of a scalar function at `value`.

    Args:
        function: Callable taking an array shaped like `value` and returning a float
        value: Point where the gradient is estimated
        step: Perturbation size

    Returns:
        Array shaped like `value`
    """
    value = np.array(value, dtype=np.float64)
    grad = np.zeros_like(value)
    for index in np.ndindex(value.shape):
        plus = value.copy()
        minus = value.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (function(plus) - function(minus)) / (2.0 * step)
    return grad


def relative_error(analytic, numeric) -> float:
    """Max-norm relative error with a unit floor on the scale."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(1.0, float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradients(build, values, step=1e-5):
    """
    Compare analytic and numerical gradients of a scalar graph.

    Args:
        build: Callable receiving one input node per entry of `values` and returning a scalar root node
        values: List of arrays bound to the inputs

    Returns:
        List with one relative error per input
    """

    def evaluate(arrays):
        return float(forward(build(*[input_node(a) for a in arrays])))

    nodes = [input_node(v) for v in values]
    root = build(*nodes)
    forward(root)
    grads = backward(root)

    errors = []
    for position, node in enumerate(nodes):

        def partial(array, position=position):
            arrays = [np.array(v, dtype=np.float64) for v in values]
            arrays[position] = array
            return evaluate(arrays)

        errors.append(relative_error(grads[node], numerical_gradient(partial, values[position], step)))
    return errors


def random_full_rank(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Gaussian matrix; full column rank with probability one."""
    return rng.normal(size=(rows, cols))
