"""
Feature attention: weights of the feature-matrix columns for one batch.

The production method solves min ‖Fw − y‖² on every batch. When F has full
column rank the plain least-squares problem is solved through QR; otherwise
the ridge system (FᵀF + λI)w = Fᵀy is solved instead. Both are graph nodes, so
the training loss can be backpropagated through the solve.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from afex_explainer.env import getEnvConfig
from autodiff.graph import Node, ShapeMismatchError, column_scores, forward, input_node, matmul, softmax
from autodiff.solve import SingularSystemError, ridge_solve_node
from basis.features import BiasColumn, FeatureMatrix, SingleColumn

logger = logging.getLogger(__name__)


class EmptyBatchError(ValueError):
    pass


class WeightingMethod(str, Enum):
    LINEAR_REGRESSION = "linear-regression"
    DOT_SOFTMAX = "dot-softmax"
    COSINE = "cosine"
    PEARSON = "pearson"
    PEARSON_SOFTMAX = "pearson-softmax"

    @classmethod
    def parse(cls, name: str) -> "WeightingMethod":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(method.value for method in cls)
            raise ValueError(f"Unknown weighting method `{name}`, expected one of: {choices}") from None

    @property
    def uses_bias(self) -> bool:
        return self is WeightingMethod.LINEAR_REGRESSION


class SolvePath(str, Enum):
    QR = "qr"
    RIDGE = "ridge"


@dataclass(frozen=True)
class RankReport:
    estimated_rank: int
    threshold: float
    path: SolvePath


@dataclass(frozen=True)
class AttentionWeights:
    """Column weights as a graph node, with the descriptors of the columns they weigh."""

    node: Node
    method: WeightingMethod
    columns: tuple
    ridge_lambda: float | None = None
    pair_offsets: tuple | None = None

    @property
    def values(self) -> np.ndarray:
        return forward(self.node)

    @property
    def bias(self) -> float:
        if not self.columns or not isinstance(self.columns[-1], BiasColumn):
            return 0.0
        return float(self.values[-1])

    def weight_of(self, column) -> float:
        return float(self.values[self.columns.index(column)])

    def pair_offset_of(self, column: SingleColumn) -> float:
        """Mean subtracted from `column` inside the pair products (0 for raw products)."""
        if self.pair_offsets is None:
            return 0.0
        singles = [entry for entry in self.columns if isinstance(entry, SingleColumn)]
        return self.pair_offsets[singles.index(column)]


def _target_node(y) -> Node:
    return y if isinstance(y, Node) else input_node(np.asarray(y, dtype=np.float64).reshape(-1), name="y")


def estimate_rank(values: np.ndarray, tolerance: float) -> tuple[int, float]:
    """Rank from a column-pivoted QR: diagonal entries above tolerance·max|R_ii|."""
    r, _ = scipy.linalg.qr(values, mode="r", pivoting=True)
    diagonal = np.abs(np.diag(r))
    if diagonal.size == 0 or diagonal.max() == 0.0:
        return 0, 0.0
    threshold = tolerance * diagonal.max()
    return int(np.count_nonzero(diagonal > threshold)), float(threshold)


def solve_weights_regression(
    F: FeatureMatrix, y, ridge_lambda: float | None = None, rank_tolerance: float | None = None
) -> tuple[AttentionWeights, RankReport]:
    """
    Least-squares column weights for one batch.

    Args:
        F: Feature matrix (normally with the bias column appended)
        y: Target vector, as an array or a graph node (e.g. surrogate outputs)
        ridge_lambda: Ridge parameter for the rank-deficient path (env default when None)
        rank_tolerance: Relative threshold for the rank estimate (env default when None)

    Returns:
        Tuple of (AttentionWeights, RankReport)

    Raises:
        EmptyBatchError: If F has no rows
    """
    env_config = getEnvConfig()
    if ridge_lambda is None:
        ridge_lambda = env_config.AFEX_RIDGE_LAMBDA
    if rank_tolerance is None:
        rank_tolerance = env_config.AFEX_RANK_TOLERANCE

    values = F.values
    n, m = values.shape
    if n == 0:
        raise EmptyBatchError("Cannot solve column weights on an empty batch")
    if n <= m:
        logger.warning("Batch has %s rows for %s columns; least squares is not well posed", n, m)

    target = _target_node(y)
    rank, threshold = estimate_rank(values, rank_tolerance)

    if rank == m:
        node = ridge_solve_node(F.node, target, 0.0, name="w")
        try:
            forward(node)
            report = RankReport(rank, threshold, SolvePath.QR)
            return AttentionWeights(node, WeightingMethod.LINEAR_REGRESSION, F.columns, 0.0, F.pair_offsets), report
        except SingularSystemError:
            logger.warning("QR solve is singular despite rank estimate %s, falling back to ridge", rank)

    node = ridge_solve_node(F.node, target, ridge_lambda, name="w")
    forward(node)
    report = RankReport(rank, threshold, SolvePath.RIDGE)
    weights = AttentionWeights(node, WeightingMethod.LINEAR_REGRESSION, F.columns, ridge_lambda, F.pair_offsets)
    return weights, report


def solve_weights(
    F: FeatureMatrix,
    y,
    method: WeightingMethod | str,
    ridge_lambda: float | None = None,
    rank_tolerance: float | None = None,
) -> tuple[AttentionWeights, RankReport | None]:
    """Dispatch to the least-squares solve or to one of the score-based comparison methods."""
    method = WeightingMethod.parse(method) if isinstance(method, str) else method
    if method is WeightingMethod.LINEAR_REGRESSION:
        return solve_weights_regression(F, y, ridge_lambda, rank_tolerance)

    if F.values.shape[0] == 0:
        raise EmptyBatchError("Cannot score columns on an empty batch")
    target = _target_node(y)
    kind = {
        WeightingMethod.DOT_SOFTMAX: "dot",
        WeightingMethod.COSINE: "cosine",
        WeightingMethod.PEARSON: "pearson",
        WeightingMethod.PEARSON_SOFTMAX: "pearson",
    }[method]
    scores = column_scores(F.node, target, kind)
    node = softmax(scores) if method in (WeightingMethod.DOT_SOFTMAX, WeightingMethod.PEARSON_SOFTMAX) else scores
    forward(node)
    return AttentionWeights(node, method, F.columns), None


def prediction_node(F: FeatureMatrix, weights: AttentionWeights) -> Node:
    if F.width != len(weights.columns):
        raise ShapeMismatchError(f"Feature matrix has {F.width} columns but {len(weights.columns)} weights")
    return matmul(F.node, weights.node)


def predict(F: FeatureMatrix, weights: AttentionWeights) -> np.ndarray:
    """F·w: multiply every column by its weight and sum."""
    return forward(prediction_node(F, weights))
