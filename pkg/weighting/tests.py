import math

import numpy as np
from django.test import SimpleTestCase

from autodiff.graph import ShapeMismatchError, constant
from basis.features import BiasColumn, FeatureMatrix, SingleColumn
from weighting.regression import (
    AttentionWeights,
    EmptyBatchError,
    SolvePath,
    WeightingMethod,
    estimate_rank,
    predict,
    solve_weights,
    solve_weights_regression,
)
from weighting.scorers import DegenerateScoreError, score_cosine, score_dot, score_pearson, softmax_weights


def matrix(values, bias_last=False) -> FeatureMatrix:
    """Wrap raw values as a feature matrix with generic descriptors."""
    values = np.asarray(values, dtype=np.float64)
    width = values.shape[1]
    descriptors = [SingleColumn(index, 0) for index in range(width)]
    if bias_last:
        descriptors[-1] = BiasColumn()
    return FeatureMatrix(constant(values), tuple(descriptors))


def weights(values) -> AttentionWeights:
    values = np.asarray(values, dtype=np.float64)
    columns = tuple(SingleColumn(index, 0) for index in range(values.size))
    return AttentionWeights(constant(values), WeightingMethod.LINEAR_REGRESSION, columns)


class ScoreDotTest(SimpleTestCase):
    def test_orthogonal(self):
        self.assertEqual(score_dot([1, 0], [0, 1]), 0.0)

    def test_definition(self):
        self.assertEqual(score_dot([1, 1], [1, 1]), 2.0)

    def test_arithmetic(self):
        self.assertEqual(score_dot([2, 3], [4, -1]), 5.0)

    def test_length_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            score_dot([1, 2], [1, 2, 3])


class ScoreCosineTest(SimpleTestCase):
    def test_self_similarity(self):
        self.assertAlmostEqual(score_cosine([1, 2, 3], [1, 2, 3]), 1.0)

    def test_antiparallel(self):
        self.assertAlmostEqual(score_cosine([1, 2, 3], [-1, -2, -3]), -1.0)

    def test_analytic(self):
        self.assertAlmostEqual(score_cosine([1, 0], [1, 1]), 1 / math.sqrt(2))

    def test_zero_vector(self):
        with self.assertRaises(DegenerateScoreError):
            score_cosine([0, 0], [1, 1])


class ScorePearsonTest(SimpleTestCase):
    def test_positive_affine(self):
        y = np.array([1.0, 4.0, -2.0, 3.0])
        self.assertAlmostEqual(score_pearson(y, 3 * y + 7), 1.0)

    def test_negative_affine(self):
        y = np.array([1.0, 4.0, -2.0, 3.0])
        self.assertAlmostEqual(score_pearson(y, -y + 5), -1.0)

    def test_direct_formula(self):
        self.assertAlmostEqual(score_pearson([1, 2, 3], [1, 3, 2]), 0.5)

    def test_zero_variance(self):
        with self.assertRaises(DegenerateScoreError):
            score_pearson([1, 1, 1], [1, 2, 3])

    def test_shift_and_scale_invariance(self):
        """Pearson scores should ignore shifts and flip sign with negative scales"""
        rng = np.random.default_rng(0)
        for _ in range(10):
            y = rng.normal(size=30)
            g = rng.normal(size=30)
            shift = rng.normal() * 10
            factor = rng.normal() * 5
            base = score_pearson(y, g)
            self.assertAlmostEqual(score_pearson(y + shift, g), base, places=12)
            self.assertAlmostEqual(score_pearson(factor * y + shift, g), math.copysign(1, factor) * base, places=12)


class SoftmaxWeightsTest(SimpleTestCase):
    def test_uniform(self):
        np.testing.assert_allclose(softmax_weights([2.0, 2.0, 2.0, 2.0]), np.full(4, 0.25))

    def test_saturation(self):
        np.testing.assert_allclose(softmax_weights([0.0, 1000.0]), [0.0, 1.0], atol=1e-300)

    def test_underflow_keeps_every_weight_positive(self):
        """Scores thousands below the maximum should still get a positive weight"""
        result = softmax_weights([-5000.0, 0.0, -800.0])
        self.assertTrue(np.all(result > 0))
        self.assertEqual(result[0], np.finfo(np.float64).tiny)
        self.assertEqual(result[1], 1.0)

    def test_direct_formula(self):
        expected = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
        np.testing.assert_allclose(softmax_weights([1.0, 2.0, 3.0]), expected, rtol=1e-14)

    def test_sums_to_one_and_positive(self):
        scores = np.random.default_rng(1).normal(size=50) * 3
        result = softmax_weights(scores)
        self.assertAlmostEqual(result.sum(), 1.0, delta=1e-12)
        self.assertTrue(np.all(result > 0))

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            softmax_weights([1.0, np.inf])


class RegressionWeightsTest(SimpleTestCase):
    """Least-squares column weights"""

    def test_exact_line(self):
        F = matrix([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]], bias_last=True)
        result, report = solve_weights_regression(F, [1.0, 3.0, 5.0])
        np.testing.assert_allclose(result.values, [2.0, 1.0], atol=1e-12)
        self.assertEqual(report.path, SolvePath.QR)
        self.assertEqual(report.estimated_rank, 2)
        self.assertAlmostEqual(result.bias, 1.0)
        np.testing.assert_allclose(predict(F, result), [1.0, 3.0, 5.0], atol=1e-10)

    def test_rank_deficient_takes_ridge_path(self):
        """Duplicate columns should switch the solve to ridge"""
        rng = np.random.default_rng(2)
        column = rng.normal(size=20)
        F = matrix(np.column_stack([column, column, np.ones(20)]), bias_last=True)
        result, report = solve_weights_regression(F, rng.normal(size=20), ridge_lambda=0.1)
        self.assertEqual(report.path, SolvePath.RIDGE)
        self.assertEqual(report.estimated_rank, 2)
        self.assertAlmostEqual(result.values[0], result.values[1], places=10)
        self.assertEqual(result.ridge_lambda, 0.1)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(50, 6))
        y = rng.normal(size=50)
        result, report = solve_weights_regression(matrix(values), y)
        self.assertEqual(report.path, SolvePath.QR)
        expected = np.linalg.solve(values.T @ values, values.T @ y)
        np.testing.assert_allclose(result.values, expected, atol=1e-8)

    def test_residual_orthogonality(self):
        """Test that the residual is orthogonal to every column"""
        rng = np.random.default_rng(4)
        values = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        result, _ = solve_weights_regression(matrix(values), y)
        residual = values @ result.values - y
        self.assertLess(np.max(np.abs(values.T @ residual)), 1e-8 * np.max(np.abs(values.T @ y)))

    def test_empty_batch(self):
        with self.assertRaises(EmptyBatchError):
            solve_weights_regression(matrix(np.zeros((0, 2))), np.zeros(0))

    def test_rank_report_bounded(self):
        values = np.random.default_rng(5).normal(size=(3, 6))
        rank, _ = estimate_rank(values, 1e-10)
        self.assertLessEqual(rank, 3)

    def test_dispatch_is_pure(self):
        rng = np.random.default_rng(6)
        values = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        for method in WeightingMethod:
            first, _ = solve_weights(matrix(values), y, method)
            second, _ = solve_weights(matrix(values), y, method.value)
            self.assertEqual(first.values.tobytes(), second.values.tobytes())


class ComparisonMethodsTest(SimpleTestCase):
    def test_softmax_family_is_a_distribution(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        for method in (WeightingMethod.DOT_SOFTMAX, WeightingMethod.PEARSON_SOFTMAX):
            result, report = solve_weights(matrix(values), y, method)
            self.assertIsNone(report)
            self.assertAlmostEqual(result.values.sum(), 1.0, delta=1e-12)
            self.assertTrue(np.all(result.values >= 0))

    def test_cosine_weights_are_scores(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        result, _ = solve_weights(matrix(values), y, WeightingMethod.COSINE)
        expected = [score_cosine(y, values[:, column]) for column in range(3)]
        np.testing.assert_allclose(result.values, expected, rtol=1e-12)

    def test_pearson_weights_are_scores(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        result, _ = solve_weights(matrix(values), y, "pearson")
        expected = [score_pearson(y, values[:, column]) for column in range(3)]
        np.testing.assert_allclose(result.values, expected, rtol=1e-12)

    def test_unknown_method(self):
        with self.assertRaises(ValueError) as cm:
            solve_weights(matrix(np.eye(3)), [1.0, 2.0, 3.0], "general")
        self.assertIn("general", str(cm.exception))


class PredictTest(SimpleTestCase):
    def test_zero_weights(self):
        F = matrix(np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_array_equal(predict(F, weights(np.zeros(3))), np.zeros(5))

    def test_identity(self):
        np.testing.assert_array_equal(predict(matrix(np.eye(2)), weights([3.0, -4.0])), [3.0, -4.0])

    def test_width_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            predict(matrix(np.eye(2)), weights([1.0, 2.0, 3.0]))
