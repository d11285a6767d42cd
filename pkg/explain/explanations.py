"""
Local explanation of one point with a trained, frozen basis bank.

Points are sampled uniformly in a box around the explained point, the oracle
labels them, and the column weights are solved once with the same procedure
as in training. Shape curves and pair heatmaps then weigh the basis
functions evaluated on regular grids spanning the box.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from basis.bank import BasisBank, subnet_forward
from basis.features import PairColumn, SingleColumn, assemble_feature_matrix
from oracle.oracles import Oracle, OracleError
from weighting.regression import AttentionWeights, RankReport, predict, solve_weights_regression

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 1000
DEFAULT_GRID_RESOLUTION = 101
DEFAULT_HEATMAP_RESOLUTION = 51


class CapabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExplainRequest:
    """
    A point to explain and the box around it.

    `pairs` is either a tuple of (i, s) feature pairs or the string "all".
    """

    center: tuple
    half_widths: tuple
    n_samples: int = DEFAULT_SAMPLES
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    heatmap_resolution: int = DEFAULT_HEATMAP_RESOLUTION
    pairs: tuple | str = ()
    use_surrogate: bool = False
    seed: int = 0
    neighborhood: dict = field(default_factory=dict)

    @classmethod
    def box(cls, center, half_widths, **options) -> "ExplainRequest":
        center = tuple(float(value) for value in center)
        if np.isscalar(half_widths):
            half_widths = [half_widths] * len(center)
        half_widths = tuple(float(value) for value in half_widths)
        neighborhood = {"kind": "box", "half_widths": list(half_widths)}
        return cls(center, half_widths, neighborhood=neighborhood, **options)

    @classmethod
    def fraction_of_range(cls, center, fraction: float, minimums, maximums, **options) -> "ExplainRequest":
        """Box whose side is `fraction` of each feature's range, e.g. 0.1 for a 10% interval."""
        minimums = np.asarray(minimums, dtype=np.float64)
        maximums = np.asarray(maximums, dtype=np.float64)
        if minimums.shape != maximums.shape or np.any(maximums < minimums):
            raise ValueError("Feature minimums and maximums must have equal length with min <= max")
        half_widths = tuple(float(value) for value in fraction / 2 * (maximums - minimums))
        neighborhood = {
            "kind": "fraction-of-range",
            "fraction": float(fraction),
            "minimums": minimums.tolist(),
            "maximums": maximums.tolist(),
        }
        return cls(tuple(float(value) for value in center), half_widths, neighborhood=neighborhood, **options)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.half_widths)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.half_widths)

    def resolved_pairs(self, d: int) -> list[tuple[int, int]]:
        if self.pairs == "all":
            return [(i, s) for i in range(d) for s in range(i + 1, d)]
        return [tuple(pair) for pair in self.pairs]

    def validate(self, bank: BasisBank) -> "ExplainRequest":
        d = len(self.center)
        if d != bank.d:
            raise ValueError(f"The request centre has {d} coordinates, the bank explains {bank.d} features")
        if len(self.half_widths) != d:
            raise ValueError(f"Expected {d} half-widths, got {len(self.half_widths)}")
        if not all(np.isfinite(self.center)) or any(not value > 0 for value in self.half_widths):
            raise ValueError("The centre must be finite and every half-width positive")
        width = bank.width()
        if self.n_samples <= width:
            raise ValueError(f"n_samples ({self.n_samples}) must exceed the feature matrix width ({width})")
        if self.grid_resolution < 2 or self.heatmap_resolution < 2:
            raise ValueError("Grid and heatmap resolutions must be at least 2")
        if self.pairs != "all" and not isinstance(self.pairs, (tuple, list)):
            raise ValueError(f"pairs must be a list of feature pairs or 'all', got {self.pairs!r}")
        for pair in self.resolved_pairs(d):
            if len(pair) != 2 or not 0 <= pair[0] < pair[1] < d:
                raise ValueError(f"Invalid feature pair {pair}; expected (i, s) with 0 <= i < s < {d}")
        return self

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "neighborhood": self.neighborhood or {"kind": "box", "half_widths": list(self.half_widths)},
            "n_samples": self.n_samples,
            "grid_resolution": self.grid_resolution,
            "heatmap_resolution": self.heatmap_resolution,
            "pairs": self.pairs if self.pairs == "all" else [list(pair) for pair in self.pairs],
            "use_surrogate": self.use_surrogate,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ShapeCurve:
    feature: int
    grid: np.ndarray
    contributions: np.ndarray

    @property
    def importance(self) -> float:
        return float(self.contributions.max() - self.contributions.min())


@dataclass(frozen=True)
class PairHeatmap:
    """Adjusted values (marginal curves plus cross terms) and raw values (cross terms only)."""

    features: tuple[int, int]
    grid_x: np.ndarray
    grid_y: np.ndarray
    values: np.ndarray
    raw: np.ndarray

    @property
    def value_range(self) -> float:
        return float(self.values.max() - self.values.min())

    @property
    def raw_range(self) -> float:
        return float(self.raw.max() - self.raw.min())


@dataclass
class Explanation:
    request: ExplainRequest
    weights: AttentionWeights
    rank_report: RankReport
    curves: list[ShapeCurve]
    heatmaps: list[PairHeatmap]
    residual_mse: float

    def curve(self, feature: int) -> ShapeCurve:
        return self.curves[feature]

    def heatmap(self, i: int, s: int) -> PairHeatmap:
        for heatmap in self.heatmaps:
            if heatmap.features == (i, s):
                return heatmap
        raise KeyError(f"No heatmap for pair ({i}, {s})")


def _check_feature(bank: BasisBank, feature: int):
    if not 0 <= feature < bank.d:
        raise ValueError(f"Feature index {feature} out of range for {bank.d} features")


def feature_basis_values(bank: BasisBank, feature: int, grid, center=None) -> np.ndarray:
    """
    The k basis functions of one feature on a grid, as a len(grid)×k matrix.

    The other coordinates are held at `center` (zeros when None) so the
    bank's input transform sees complete rows.
    """
    _check_feature(bank, feature)
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    rows = np.tile(np.zeros(bank.d) if center is None else np.asarray(center, dtype=np.float64), (grid.size, 1))
    rows[:, feature] = grid
    inputs = bank.prepare_inputs(rows)
    return np.column_stack([subnet_forward(bank.subnet(feature, basis), inputs[:, feature]) for basis in range(bank.k)])


def feature_weights(bank: BasisBank, weights: AttentionWeights, feature: int) -> np.ndarray:
    return np.array([weights.weight_of(SingleColumn(feature, basis)) for basis in range(bank.k)])


def pair_offsets(bank: BasisBank, weights: AttentionWeights, feature: int) -> np.ndarray:
    return np.array([weights.pair_offset_of(SingleColumn(feature, basis)) for basis in range(bank.k)])


def pair_weights(bank: BasisBank, weights: AttentionWeights, i: int, s: int) -> np.ndarray:
    """k×k matrix of the weights of the pair columns of features i and s."""
    return np.array(
        [[weights.weight_of(PairColumn(i, basis, s, other)) for other in range(bank.k)] for basis in range(bank.k)]
    )


def shape_curve(bank: BasisBank, weights: AttentionWeights, i: int, grid, center=None) -> ShapeCurve:
    """Σ_j w_ij·g_i^j on the grid; the bias weight is not part of any curve."""
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    contributions = feature_basis_values(bank, i, grid, center) @ feature_weights(bank, weights, i)
    return ShapeCurve(i, grid, contributions)


def pair_heatmap(bank: BasisBank, weights: AttentionWeights, i: int, s: int, grids, center=None) -> PairHeatmap:
    """
    Joint contribution of features i < s over the product of two grids.

    Pair columns built from centred factors are rebuilt with the same offsets,
    so the cross terms average out over the sampled box.

    Raises:
        CapabilityError: If the bank was trained without pair columns
    """
    if not bank.pairwise or not any(isinstance(column, PairColumn) for column in weights.columns):
        raise CapabilityError("Pair heatmaps need a bank trained with pairwise interactions")
    _check_feature(bank, i)
    _check_feature(bank, s)
    if i >= s:
        raise ValueError(f"Pair heatmaps take i < s, got ({i}, {s})")

    grid_x = np.asarray(grids[0], dtype=np.float64).reshape(-1)
    grid_y = np.asarray(grids[1], dtype=np.float64).reshape(-1)
    basis_x = feature_basis_values(bank, i, grid_x, center)
    basis_y = feature_basis_values(bank, s, grid_y, center)
    centered_x = basis_x - pair_offsets(bank, weights, i)
    centered_y = basis_y - pair_offsets(bank, weights, s)
    raw = centered_x @ pair_weights(bank, weights, i, s) @ centered_y.T
    marginal_x = basis_x @ feature_weights(bank, weights, i)
    marginal_y = basis_y @ feature_weights(bank, weights, s)
    values = marginal_x[:, None] + marginal_y[None, :] + raw
    return PairHeatmap((i, s), grid_x, grid_y, values, raw)


def explain_point(
    bank: BasisBank,
    oracle: Oracle,
    request: ExplainRequest,
    ridge_lambda: float | None = None,
    rank_tolerance: float | None = None,
) -> Explanation:
    """
    Explain the model around `request.center` without touching the bank.

    Args:
        bank: Trained basis bank
        oracle: Prediction source for the sampled points
        request: Point, box and resolutions
        ridge_lambda: Ridge parameter for rank-deficient solves (env default when None)
        rank_tolerance: Relative rank threshold (env default when None)

    Raises:
        CapabilityError: If pairs are requested from a bank trained without them
        OracleError: If the oracle fails on the sampled points
    """
    request.validate(bank)
    pairs = request.resolved_pairs(bank.d)
    if pairs and not bank.pairwise:
        raise CapabilityError("The request asks for pair heatmaps but the bank was trained without pairs")

    rng = np.random.default_rng(request.seed)
    lower, upper = request.lower, request.upper
    X = rng.uniform(lower, upper, size=(request.n_samples, bank.d))
    try:
        y = oracle(X)
    except OracleError as e:
        logger.exception("Oracle failed while explaining %s", list(request.center))
        raise OracleError(f"Oracle failed on the neighbourhood of {list(request.center)}: {e}") from e

    F = assemble_feature_matrix(bank, X, centered_pairs=True)
    weights, rank_report = solve_weights_regression(F, y, ridge_lambda, rank_tolerance)
    residual_mse = float(np.mean((predict(F, weights) - y) ** 2))

    center = np.asarray(request.center)
    curves = [
        shape_curve(bank, weights, i, np.linspace(lower[i], upper[i], request.grid_resolution), center)
        for i in range(bank.d)
    ]
    heatmaps = [
        pair_heatmap(
            bank,
            weights,
            i,
            s,
            (
                np.linspace(lower[i], upper[i], request.heatmap_resolution),
                np.linspace(lower[s], upper[s], request.heatmap_resolution),
            ),
            center,
        )
        for i, s in pairs
    ]
    explanation = Explanation(request, weights, rank_report, curves, heatmaps, residual_mse)

    top_feature, top_importance = rank_features(explanation)[0]
    logger.info(
        "Explained %s: residual mse=%.6g, %s solve, top feature %s (importance %.6g)",
        list(request.center),
        residual_mse,
        rank_report.path.value,
        top_feature,
        top_importance,
    )
    return explanation


def rank_features(explanation: Explanation) -> list[tuple[int, float]]:
    """Features by decreasing importance, ties broken by the lower index."""
    return sorted(
        ((curve.feature, curve.importance) for curve in explanation.curves), key=lambda item: (-item[1], item[0])
    )
