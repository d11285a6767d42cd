"""
Explanations of the synthetic test functions after full training runs.

Every class trains once in setUpClass and explains several points with the
same frozen bank. Run with `uv run manage.py test explain --tag slow`.
"""

import numpy as np
from django.test import SimpleTestCase, tag

from basis.serializers import checkpoint_checksum, checkpoint_to_dict
from explain.explanations import ExplainRequest, explain_point, rank_features
from oracle.oracles import AnalyticOracle
from trainer.config import TrainConfig
from trainer.training import initialize_system, train


def trained(oracle: AnalyticOracle, seed=0, **options):
    config = TrainConfig(seed=seed, **options).validate(oracle.d)
    bank, surrogate = initialize_system(config, oracle.d)
    report = train(bank, surrogate, oracle, config)
    return bank, surrogate, report


def r_squared(x, y, degree: int) -> float:
    fitted = np.polyval(np.polyfit(x, y, degree), x)
    total = np.sum((y - y.mean()) ** 2)
    return 1.0 - np.sum((y - fitted) ** 2) / total


def tail_mean(values, fraction=0.1) -> float:
    return float(np.mean(values[-max(1, int(len(values) * fraction)) :]))


def head_mean(values, fraction=0.1) -> float:
    return float(np.mean(values[: max(1, int(len(values) * fraction))]))


class ConditionalDichotomyMixin:
    def assert_parabola_and_line(self, bank, oracle):
        checksum = checkpoint_checksum(checkpoint_to_dict(bank))
        upper = explain_point(bank, oracle, ExplainRequest.box([0.0, 2.0], 1.0))
        lower = explain_point(bank, oracle, ExplainRequest.box([0.0, -2.0], 1.0))
        self.assertEqual(checkpoint_checksum(checkpoint_to_dict(bank)), checksum)

        parabola = upper.curve(0)
        self.assertGreater(r_squared(parabola.grid, parabola.contributions, 2), 0.95)
        line = lower.curve(0)
        self.assertGreater(r_squared(line.grid, line.contributions, 1), 0.95)
        return upper


@tag("slow")
class ConditionalFunctionTest(ConditionalDichotomyMixin, SimpleTestCase):
    """One training run explains both the quadratic and the linear regime"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.oracle = AnalyticOracle("conditional")
        cls.bank, _, _ = trained(cls.oracle)

    def test_parabola_and_line_without_retraining(self):
        """Both regimes should be explained by one trained bank"""
        upper = self.assert_parabola_and_line(self.bank, self.oracle)
        self.assertEqual(rank_features(upper)[0][0], 0)


@tag("slow")
class SurrogateVariantTest(ConditionalDichotomyMixin, SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.oracle = AnalyticOracle("conditional")
        cls.bank, cls.surrogate, cls.report = trained(cls.oracle, seed=1, surrogate_enabled=True)

    def test_joint_loss_decreases(self):
        self.assertLess(tail_mean(self.report.losses), head_mean(self.report.losses))

    def test_explanations_still_separate_the_regimes(self):
        self.assert_parabola_and_line(self.bank, self.oracle)


@tag("slow")
class ChessboardSingleFeatureTest(SimpleTestCase):
    """Near the border between two cells only x₁ changes the cell"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.oracle = AnalyticOracle("chessboard")
        cls.bank, _, _ = trained(cls.oracle)
        cls.explanation = explain_point(cls.bank, cls.oracle, ExplainRequest.box([0.5, 0.0, 0.0, 0.0, 0.0], 0.5))

    def test_second_feature_dominates(self):
        """Test that x₁ carries the cell change near the border"""
        importances = [curve.importance for curve in self.explanation.curves]
        for feature in (0, 2, 3, 4):
            self.assertGreater(importances[1], 5 * importances[feature])

    def test_jump_at_zero(self):
        """The steepest part of the x₁ curve should sit at zero"""
        curve = self.explanation.curve(1)
        slopes = np.abs(np.diff(curve.contributions) / np.diff(curve.grid))
        midpoints = (curve.grid[1:] + curve.grid[:-1]) / 2
        self.assertLess(abs(midpoints[np.argmax(slopes)]), 0.25)

    def test_unused_features_are_unimportant(self):
        importances = [curve.importance for curve in self.explanation.curves]
        for feature in (2, 3, 4):
            self.assertLess(importances[feature], 0.1 * max(importances))


@tag("slow")
class PairwiseFunctionsTest(SimpleTestCase):
    """Pair heatmaps of banks trained with pair-product columns"""

    def test_chessboard_junction(self):
        """Only the (0, 1) surface should carry the alternation of the cells"""
        oracle = AnalyticOracle("chessboard")
        bank, _, _ = trained(oracle, pairwise_enabled=True)
        # one full period of x₁ and a symmetric x₀ interval: both averaged single-feature effects vanish
        request = ExplainRequest.box([0.0, 0.5, 0.0, 0.0, 0.0], [1.0, 2.0, 1.0, 1.0, 1.0], n_samples=20000, pairs="all")
        explanation = explain_point(bank, oracle, request)
        target = explanation.heatmap(0, 1).value_range
        for heatmap in explanation.heatmaps:
            if heatmap.features != (0, 1):
                self.assertGreater(target, 3 * heatmap.value_range, heatmap.features)

    def test_product_recovery(self):
        """The (0, 1) surface should follow x₀·x₁"""
        oracle = AnalyticOracle("product", 5)
        bank, _, _ = trained(oracle, pairwise_enabled=True)
        explanation = explain_point(bank, oracle, ExplainRequest.box([0.5] * 5, 1.0, n_samples=10000, pairs=((0, 1),)))
        heatmap = explanation.heatmap(0, 1)
        truth = np.outer(heatmap.grid_x, heatmap.grid_y)
        self.assertGreater(np.corrcoef(heatmap.values.ravel(), truth.ravel())[0, 1], 0.9)

    def test_wedge_pattern(self):
        """The median split of the (0, 1) surface should trace the wedge at every centre"""
        oracle = AnalyticOracle("wedge")
        bank, _, _ = trained(oracle, pairwise_enabled=True)
        for center in ([-1.0, 2.0, 0.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0, 0.0]):
            request = ExplainRequest.box(center, 0.5, n_samples=20000, pairs=((0, 1),))
            heatmap = explain_point(bank, oracle, request).heatmap(0, 1)
            # half of every box lies inside the wedge
            threshold = np.median(heatmap.values)
            predicted = heatmap.values > threshold
            expected = 2 * np.abs(heatmap.grid_x)[:, None] > np.abs(heatmap.grid_y)[None, :]
            self.assertGreater(np.mean(predicted == expected), 0.8, center)
