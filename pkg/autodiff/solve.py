"""
Differentiable least-squares solve.

The node value is the w solving (FᵀF + λI) w = Fᵀy. With λ > 0 the SPD system
is solved through a Cholesky factorization; with λ = 0 the design must have
full column rank and w comes from an economic QR factorization of F.

Gradients use the implicit function theorem on the same system: with v solving
(FᵀF + λI) v = ḡ and r = y − Fw,

    dL/dy = F v
    dL/dF = r vᵀ − (F v) wᵀ
"""

import numpy as np
import scipy.linalg

from autodiff.graph import NonFiniteValueError, Node, Op, ShapeMismatchError


class SingularSystemError(RuntimeError):
    pass


def ridge_solve_node(design: Node, target: Node, ridge_lambda: float, name=None) -> Node:
    if ridge_lambda < 0:
        raise ValueError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    return Node(Op.RIDGE_SOLVE, (design, target), {"lambda": float(ridge_lambda)}, name=name)


def _finite_rhs(node: Node, rhs: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteValueError(f"ridge-solve at {node.name}: right-hand side overflows")
    return rhs


def ridge_forward(node: Node, design: np.ndarray, target: np.ndarray) -> np.ndarray:
    if design.ndim != 2 or target.shape != (design.shape[0],):
        raise ShapeMismatchError(f"ridge-solve at {node.name}: F {design.shape}, y {target.shape}")
    n, m = design.shape
    if n < 1 or m < 1:
        raise ShapeMismatchError(f"ridge-solve at {node.name} needs a non-empty design, got {design.shape}")

    ridge_lambda = node.attrs["lambda"]
    if ridge_lambda > 0:
        gram = design.T @ design + ridge_lambda * np.eye(m)
        rhs = _finite_rhs(node, design.T @ target)
        factor = scipy.linalg.cho_factor(gram, lower=False)
        node.cache["cholesky"] = factor
        return scipy.linalg.cho_solve(factor, rhs)

    if n < m:
        raise SingularSystemError(
            f"ridge-solve at {node.name}: {n} rows cannot determine {m} weights without ridge, use lambda > 0"
        )
    q, r = scipy.linalg.qr(design, mode="economic")
    diagonal = np.abs(np.diag(r))
    if diagonal.min() <= np.finfo(np.float64).eps * max(n, m) * diagonal.max():
        raise SingularSystemError(
            f"ridge-solve at {node.name}: design is rank-deficient, fall back to ridge (lambda > 0)"
        )
    node.cache["r"] = r
    return scipy.linalg.solve_triangular(r, _finite_rhs(node, q.T @ target), lower=False)


def _solve_system(node: Node, rhs: np.ndarray) -> np.ndarray:
    if "cholesky" in node.cache:
        return scipy.linalg.cho_solve(node.cache["cholesky"], rhs)
    # FᵀF = RᵀR on the QR path
    r = node.cache["r"]
    return scipy.linalg.solve_triangular(r, scipy.linalg.solve_triangular(r, rhs, trans="T", lower=False), lower=False)


def ridge_vjp(node: Node, grad: np.ndarray, design: np.ndarray, target: np.ndarray):
    weights = node.value
    v = _solve_system(node, grad)
    fitted_v = design @ v
    residual = target - design @ weights
    return np.outer(residual, v) - np.outer(fitted_v, weights), fitted_v
