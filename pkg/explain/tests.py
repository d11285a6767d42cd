import json
import tempfile
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
from django.test import SimpleTestCase

from autodiff.graph import constant
from basis.bank import FeatureTransform
from basis.features import PairColumn, SingleColumn, assemble_feature_matrix, build_feature_matrix
from basis.serializers import (
    bank_from_dict,
    checkpoint_checksum,
    checkpoint_to_dict,
    dumps_checkpoint,
    loads_checkpoint,
)
from basis.test_helpers.banks import perturbed_bank, set_alpha
from cli_io.datasets import read_csv, write_csv
from explain.explanations import (
    CapabilityError,
    Explanation,
    ExplainRequest,
    ShapeCurve,
    explain_point,
    pair_heatmap,
    rank_features,
    shape_curve,
)
from explain.serializers import (
    CURVE_HEADER,
    curve_rows,
    explanation_to_dict,
    heatmap_rows,
    weights_from_dict,
)
from oracle.oracles import AnalyticOracle, Oracle, OracleError
from weighting.regression import AttentionWeights, WeightingMethod, predict, solve_weights_regression


class LinearOracle(Oracle):
    def __init__(self, coefficients, intercept=0.0):
        super().__init__(len(coefficients))
        self.coefficients = np.asarray(coefficients, dtype=np.float64)
        self.intercept = intercept

    def evaluate(self, X):
        return X @ self.coefficients + self.intercept


def weights_for(bank, values=None, seed=0, pair_offsets=None) -> AttentionWeights:
    """Weights over every column a bank assembles, random unless given."""
    columns = assemble_feature_matrix(bank, np.zeros((1, bank.d))).columns
    if values is None:
        values = np.random.default_rng(seed).normal(size=len(columns))
    values = constant(np.asarray(values, dtype=np.float64))
    return AttentionWeights(values, WeightingMethod.LINEAR_REGRESSION, columns, None, pair_offsets)


class ExplainRequestTest(SimpleTestCase):
    def test_scalar_box(self):
        request = ExplainRequest.box([0.0, 2.0], 0.5)
        self.assertEqual(request.half_widths, (0.5, 0.5))
        np.testing.assert_array_equal(request.lower, [-0.5, 1.5])
        self.assertEqual(request.n_samples, 1000)
        self.assertEqual(request.grid_resolution, 101)
        self.assertEqual(request.heatmap_resolution, 51)

    def test_fraction_of_range(self):
        request = ExplainRequest.fraction_of_range([5.0, 20.0], 0.1, [0.0, 10.0], [10.0, 30.0])
        self.assertEqual(request.half_widths, (0.5, 1.0))
        self.assertEqual(request.to_dict()["neighborhood"]["kind"], "fraction-of-range")

    def test_samples_must_exceed_width(self):
        bank = perturbed_bank(2, 2)
        with self.assertRaises(ValueError):
            ExplainRequest.box([0.0, 0.0], 1.0, n_samples=5).validate(bank)
        ExplainRequest.box([0.0, 0.0], 1.0, n_samples=6).validate(bank)

    def test_invalid_requests(self):
        bank = perturbed_bank(2, 2, pairwise=True)
        invalid = [
            ExplainRequest.box([0.0, 0.0], 1.0, grid_resolution=1),
            ExplainRequest.box([0.0, 0.0], 1.0, pairs=((1, 0),)),
            ExplainRequest.box([0.0, 0.0, 0.0], 1.0),
            ExplainRequest.box([0.0, 0.0], 0.0),
        ]
        for request in invalid:
            with self.assertRaises(ValueError):
                request.validate(bank)


class ShapeCurveTest(SimpleTestCase):
    """Per-feature weighted sums of basis functions"""

    def test_zero_weights(self):
        bank = perturbed_bank(2, 3)
        curve = shape_curve(bank, weights_for(bank, np.zeros(7)), 1, np.linspace(-1, 1, 11))
        np.testing.assert_array_equal(curve.contributions, np.zeros(11))
        self.assertEqual(curve.importance, 0.0)

    def test_identity(self):
        bank = perturbed_bank(1, 1)
        set_alpha(bank, 1.0)
        grid = np.linspace(-2, 3, 21)
        curve = shape_curve(bank, weights_for(bank, [1.0, 5.0]), 0, grid)
        np.testing.assert_array_equal(curve.contributions, grid)

    def test_matches_feature_matrix_path(self):
        bank = perturbed_bank(3, 2, seed=4)
        bank.transform = FeatureTransform(np.array([0.5, -1.0, 2.0]), np.array([2.0, 0.5, 1.5]))
        weights = weights_for(bank, seed=5)
        center = np.array([0.3, -0.2, 1.1])
        grid = np.linspace(-1.0, 1.5, 17)
        rows = np.tile(center, (grid.size, 1))
        rows[:, 1] = grid
        values = build_feature_matrix(bank, rows).values
        expected = values[:, [2, 3]] @ weights.values[[2, 3]]
        curve = shape_curve(bank, weights, 1, grid, center)
        np.testing.assert_allclose(curve.contributions, expected, rtol=1e-12, atol=1e-14)

    def test_feature_out_of_range(self):
        bank = perturbed_bank(2, 1)
        with self.assertRaises(ValueError):
            shape_curve(bank, weights_for(bank), 2, [0.0, 1.0])


class PairHeatmapTest(SimpleTestCase):
    def setUp(self):
        self.bank = perturbed_bank(3, 2, seed=6, pairwise=True)
        self.grids = (np.linspace(-1, 1, 5), np.linspace(0, 2, 4))

    def test_zero_pair_weights_give_additive_surface(self):
        """Without pair weights the heatmap should be the sum of the two curves"""
        weights = weights_for(self.bank, seed=7)
        values = weights.values.copy()
        for index, column in enumerate(weights.columns):
            if isinstance(column, PairColumn):
                values[index] = 0.0
        weights = weights_for(self.bank, values)
        heatmap = pair_heatmap(self.bank, weights, 0, 2, self.grids)
        first = shape_curve(self.bank, weights, 0, self.grids[0]).contributions
        second = shape_curve(self.bank, weights, 2, self.grids[1]).contributions
        np.testing.assert_allclose(heatmap.values, first[:, None] + second[None, :], rtol=1e-12)
        np.testing.assert_array_equal(heatmap.raw, np.zeros((5, 4)))

    def test_raw_is_the_weighted_cross_sum(self):
        weights = weights_for(self.bank, seed=8)
        heatmap = pair_heatmap(self.bank, weights, 1, 2, self.grids)
        rows = np.zeros((20, 3))
        rows[:, 1] = np.repeat(self.grids[0], 4)
        rows[:, 2] = np.tile(self.grids[1], 5)
        F = build_feature_matrix(self.bank, rows).values
        expected = np.zeros(20)
        for j in range(2):
            for other in range(2):
                weight = weights.weight_of(PairColumn(1, j, 2, other))
                expected += weight * F[:, 1 * 2 + j] * F[:, 2 * 2 + other]
        np.testing.assert_allclose(heatmap.raw.reshape(-1), expected, rtol=1e-10, atol=1e-12)
        self.assertEqual(heatmap.values.shape, (5, 4))

    def test_centered_cross_sum(self):
        """Saved pair offsets should be subtracted from both factors of every cross term"""
        offsets = tuple(np.random.default_rng(9).normal(size=6))
        weights = weights_for(self.bank, seed=8, pair_offsets=offsets)
        heatmap = pair_heatmap(self.bank, weights, 1, 2, self.grids)
        rows = np.zeros((20, 3))
        rows[:, 1] = np.repeat(self.grids[0], 4)
        rows[:, 2] = np.tile(self.grids[1], 5)
        F = build_feature_matrix(self.bank, rows).values - np.asarray(offsets)
        expected = np.zeros(20)
        for j in range(2):
            for other in range(2):
                expected += weights.weight_of(PairColumn(1, j, 2, other)) * F[:, 2 + j] * F[:, 4 + other]
        np.testing.assert_allclose(heatmap.raw.reshape(-1), expected, rtol=1e-10, atol=1e-12)

    def test_requires_pairwise_bank(self):
        bank = perturbed_bank(3, 2)
        with self.assertRaises(CapabilityError):
            pair_heatmap(bank, weights_for(bank), 0, 1, self.grids)

    def test_requires_ordered_pair(self):
        with self.assertRaises(ValueError):
            pair_heatmap(self.bank, weights_for(self.bank), 2, 1, self.grids)


class ExplainPointTest(SimpleTestCase):
    """Explaining one point with a frozen bank"""

    def test_exact_linear_recovery(self):
        """A linear oracle should be recovered exactly by a linear basis"""
        bank = perturbed_bank(1, 1)
        set_alpha(bank, 1.0)
        explanation = explain_point(bank, LinearOracle([3.0], 1.0), ExplainRequest.box([0.5], 1.0))
        self.assertLess(explanation.residual_mse, 1e-8)
        curve = explanation.curve(0)
        np.testing.assert_allclose(curve.contributions, 3.0 * curve.grid, atol=1e-8)
        self.assertAlmostEqual(explanation.weights.bias, 1.0, places=8)

    def test_bank_is_not_mutated(self):
        """Explaining should leave the checkpoint checksum unchanged"""
        bank = perturbed_bank(2, 2, seed=9, pairwise=True)
        before = checkpoint_checksum(checkpoint_to_dict(bank))
        explain_point(bank, AnalyticOracle("product"), ExplainRequest.box([0.2, 0.4], 0.5, pairs="all"))
        self.assertEqual(checkpoint_checksum(checkpoint_to_dict(bank)), before)

    def test_residual_is_the_local_fit_error(self):
        bank = perturbed_bank(2, 2, seed=10)
        oracle = AnalyticOracle("conditional")
        request = ExplainRequest.box([0.0, 2.0], 1.0, n_samples=300, seed=11)
        explanation = explain_point(bank, oracle, request)
        X = np.random.default_rng(11).uniform(request.lower, request.upper, size=(300, 2))
        y = oracle(X)
        recomputed = float(np.mean((predict(assemble_feature_matrix(bank, X), explanation.weights) - y) ** 2))
        self.assertAlmostEqual(explanation.residual_mse, recomputed, delta=1e-12)

    def test_curves_span_the_box(self):
        bank = perturbed_bank(3, 2, seed=12)
        request = ExplainRequest.box([0.0, 1.0, -1.0], [0.5, 1.0, 2.0], grid_resolution=9)
        explanation = explain_point(bank, LinearOracle([1.0, -1.0, 0.5]), request)
        self.assertEqual(len(explanation.curves), 3)
        for curve, low, high in zip(explanation.curves, request.lower, request.upper):
            self.assertEqual(curve.grid.size, 9)
            self.assertTrue(np.all(np.diff(curve.grid) > 0))
            self.assertEqual((curve.grid[0], curve.grid[-1]), (low, high))

    def test_all_pairs(self):
        bank = perturbed_bank(3, 1, seed=13, pairwise=True)
        request = ExplainRequest.box([0.0, 0.0, 0.0], 1.0, heatmap_resolution=6, pairs="all")
        explanation = explain_point(bank, LinearOracle([1.0, 1.0, 1.0]), request)
        self.assertEqual([heatmap.features for heatmap in explanation.heatmaps], [(0, 1), (0, 2), (1, 2)])
        self.assertEqual(explanation.heatmap(1, 2).values.shape, (6, 6))

    def test_main_effects_are_the_average_slopes(self):
        """For x0·x1 each shape curve should have the sampled mean of the other coordinate as slope"""
        bank = perturbed_bank(2, 1, seed=16, pairwise=True)
        set_alpha(bank, 1.0)
        request = ExplainRequest.box([1.0, 2.0], 0.5, n_samples=200, heatmap_resolution=5, pairs=((0, 1),), seed=17)
        explanation = explain_point(bank, AnalyticOracle("product"), request)
        X = np.random.default_rng(17).uniform(request.lower, request.upper, size=(200, 2))

        self.assertLess(explanation.residual_mse, 1e-12)
        for feature, other in ((0, 1), (1, 0)):
            curve = explanation.curve(feature)
            slopes = np.diff(curve.contributions) / np.diff(curve.grid)
            np.testing.assert_allclose(slopes, X[:, other].mean(), rtol=1e-7)
        heatmap = explanation.heatmap(0, 1)
        product = heatmap.grid_x[:, None] * heatmap.grid_y[None, :]
        np.testing.assert_allclose(heatmap.values + explanation.weights.bias, product, atol=1e-8)

    def test_centered_pairs_leave_the_fit_unchanged(self):
        bank = perturbed_bank(2, 2, seed=18, alpha=0.5, pairwise=True)
        request = ExplainRequest.box([0.5, -0.5], 1.0, n_samples=300, seed=19)
        explanation = explain_point(bank, AnalyticOracle("product"), request)
        X = np.random.default_rng(19).uniform(request.lower, request.upper, size=(300, 2))
        y = X[:, 0] * X[:, 1]

        F = assemble_feature_matrix(bank, X)
        weights, _ = solve_weights_regression(F, y)
        raw_mse = float(np.mean((predict(F, weights) - y) ** 2))
        self.assertAlmostEqual(explanation.residual_mse, raw_mse, delta=1e-8)
        singles = build_feature_matrix(bank, X).values
        np.testing.assert_allclose(explanation.weights.pair_offsets, singles.mean(axis=0), rtol=1e-12)

    def test_pairs_need_pairwise_bank(self):
        bank = perturbed_bank(2, 2)
        with self.assertRaises(CapabilityError):
            explain_point(bank, AnalyticOracle("product"), ExplainRequest.box([0.0, 0.0], 1.0, pairs=((0, 1),)))

    def test_oracle_failure(self):
        oracle = MagicMock(d=2, side_effect=OracleError("unreachable"))
        with self.assertLogs("explain.explanations", level="ERROR"):
            with self.assertRaises(OracleError):
                explain_point(perturbed_bank(2, 1), oracle, ExplainRequest.box([0.0, 0.0], 1.0))


class RankFeaturesTest(SimpleTestCase):
    def explanation(self, importances):
        curves = [
            ShapeCurve(feature, np.array([0.0, 1.0]), np.array([0.0, importance]))
            for feature, importance in enumerate(importances)
        ]
        return Explanation(None, None, None, curves, [], 0.0)

    def test_single_feature(self):
        self.assertEqual(rank_features(self.explanation([0.7])), [(0, 0.7)])

    def test_descending_with_index_ties(self):
        ranking = rank_features(self.explanation([0.5, 2.0, 0.5, 1.0]))
        self.assertEqual([feature for feature, _ in ranking], [1, 3, 0, 2])


class ExportTest(SimpleTestCase):
    def test_stored_curves_reconstruct_bit_exactly(self):
        """Curves rebuilt from the exported weights should match the CSV exactly"""
        bank = perturbed_bank(2, 2, seed=14)
        explanation = explain_point(bank, AnalyticOracle("quad-linear"), ExplainRequest.box([0.3, -0.3], 0.5))
        document = json.loads(json.dumps(explanation_to_dict(explanation)))
        restored_bank = bank_from_dict(loads_checkpoint(dumps_checkpoint(checkpoint_to_dict(bank)))["bank"])
        restored_weights = weights_from_dict(document["weights"])
        center = np.array(document["request"]["center"])

        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / document["curves"][1]["file"]
            write_csv(path, CURVE_HEADER, curve_rows(explanation.curve(1)))
            header, rows = read_csv(path)

        self.assertEqual(header, CURVE_HEADER)
        stored = np.array(rows)
        curve = shape_curve(restored_bank, restored_weights, 1, stored[:, 0], center)
        np.testing.assert_array_equal(curve.contributions, stored[:, 1])

    def test_summary_document(self):
        bank = perturbed_bank(2, 1, seed=15, pairwise=True)
        request = ExplainRequest.box([0.0, 0.0], 1.0, heatmap_resolution=3, pairs=((0, 1),))
        explanation = explain_point(bank, AnalyticOracle("product"), request)
        document = explanation_to_dict(explanation)
        self.assertEqual(document["weights"]["columns"][-1], {"type": "bias"})
        self.assertEqual(len(document["importances"]), 2)
        self.assertEqual(document["heatmaps"][0]["raw_file"], "heatmap_0_1_raw.csv")
        self.assertEqual(len(heatmap_rows(explanation.heatmaps[0])), 9)
        self.assertGreaterEqual(document["residual_mse"], 0.0)
        self.assertIn(SingleColumn(1, 0), weights_from_dict(document["weights"]).columns)

        without_raw = explanation_to_dict(explanation, raw_heatmaps=False)
        self.assertNotIn("raw_file", without_raw["heatmaps"][0])
        self.assertEqual(without_raw["heatmaps"][0]["file"], "heatmap_0_1.csv")
