"""
Feature matrix assembly.

Column order is fixed so explanations can be rebuilt from saved weights:
single columns feature-major (i, j), then pair columns ordered by (i, s) with
i < s and then by (j, l), then one all-ones bias column.

Pair columns may be built from centred factors (each single column minus its
mean over the rows). The span of the matrix is the same either way; with
centred factors the single-column weights hold the main effects.
"""

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from autodiff.graph import Node, concat, columns, constant, forward, input_node, mul, sub
from autodiff.nn import ParameterBinding
from basis.bank import BasisBank

COLUMN_ORDER = "singles-feature-major/pairs-lexicographic/bias-last/v1"


class FeatureMatrixStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class SingleColumn:
    feature: int
    basis: int


@dataclass(frozen=True)
class PairColumn:
    feature: int
    basis: int
    other_feature: int
    other_basis: int


@dataclass(frozen=True)
class BiasColumn:
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """
    A graph node holding an n×m matrix plus one descriptor per column.

    `pair_offsets` holds the means subtracted from the single columns before
    their pair products were formed, in single-column order (None when the
    pair columns are raw products).
    """

    node: Node
    columns: tuple
    pair_offsets: tuple | None = None

    @property
    def values(self) -> np.ndarray:
        return forward(self.node)

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def has_bias(self) -> bool:
        return any(isinstance(column, BiasColumn) for column in self.columns)

    @property
    def has_pairs(self) -> bool:
        return any(isinstance(column, PairColumn) for column in self.columns)

    def index(self, column) -> int:
        return self.columns.index(column)


def build_feature_matrix(bank: BasisBank, X, binding: ParameterBinding | None = None) -> FeatureMatrix:
    """
    Evaluate every subnetwork on its feature column.

    Args:
        bank: Basis bank with d features and k basis functions per feature
        X: n×d input matrix
        binding: Parameter binding of the current graph (a fresh one when None)

    Returns:
        FeatureMatrix with k·d single columns in feature-major order
    """
    binding = binding or ParameterBinding()
    inputs = bank.prepare_inputs(X)
    feature_nodes = [input_node(inputs[:, [feature]], name=f"x[{feature}]") for feature in range(bank.d)]
    blocks = [subnet.graph(feature_nodes[subnet.feature], binding) for subnet in bank.subnets]
    descriptors = tuple(SingleColumn(subnet.feature, subnet.basis) for subnet in bank.subnets)
    return FeatureMatrix(concat(blocks, name="F"), descriptors)


def pair_layout(single_columns) -> tuple[list[PairColumn], list[int], list[int]]:
    """Pair descriptors with the positions of their two factor columns among the single columns."""
    positions = {(column.feature, column.basis): position for position, column in enumerate(single_columns)}
    features = sorted({column.feature for column in single_columns})
    bases = sorted({column.basis for column in single_columns})

    pairs, left, right = [], [], []
    for feature, other_feature in combinations(features, 2):
        for basis, other_basis in product(bases, bases):
            pairs.append(PairColumn(feature, basis, other_feature, other_basis))
            left.append(positions[(feature, basis)])
            right.append(positions[(other_feature, other_basis)])
    return pairs, left, right


def build_pair_columns(F: FeatureMatrix, centered: bool = False) -> FeatureMatrix:
    """Pairwise products of single columns belonging to different features (the G block)."""
    if not all(isinstance(column, SingleColumn) for column in F.columns):
        raise FeatureMatrixStateError("Pair columns can only be built from a matrix holding single columns only")
    pairs, left, right = pair_layout(F.columns)
    factors, offsets = F.node, None
    if centered:
        means = F.values.mean(axis=0)
        factors = sub(F.node, constant(means[None, :], name="pair offsets"))
        offsets = tuple(float(value) for value in means)
    node = mul(columns(factors, left), columns(factors, right))
    return FeatureMatrix(node, tuple(pairs), offsets)


def join(F: FeatureMatrix, G: FeatureMatrix) -> FeatureMatrix:
    """F* = (F, G)."""
    if F.has_bias:
        raise FeatureMatrixStateError("The bias column must stay last; join blocks before appending it")
    offsets = G.pair_offsets if G.pair_offsets is not None else F.pair_offsets
    return FeatureMatrix(concat([F.node, G.node], name="F*"), F.columns + G.columns, offsets)


def append_bias(F: FeatureMatrix) -> FeatureMatrix:
    if F.has_bias:
        raise FeatureMatrixStateError("The feature matrix already has a bias column")
    rows = F.values.shape[0]
    bias = constant(np.ones(rows), name="bias")
    return FeatureMatrix(concat([F.node, bias]), F.columns + (BiasColumn(),), F.pair_offsets)


def assemble_feature_matrix(
    bank: BasisBank,
    X,
    binding: ParameterBinding | None = None,
    pairwise: bool | None = None,
    bias=True,
    centered_pairs=False,
) -> FeatureMatrix:
    """Single columns, then pair columns when the bank uses them, then the bias column."""
    F = build_feature_matrix(bank, X, binding)
    if bank.pairwise if pairwise is None else pairwise:
        F = join(F, build_pair_columns(F, centered_pairs))
    if bias:
        F = append_bias(F)
    return F
