"""
Convergence runs on full training budgets.

Run with `uv run manage.py test trainer --tag slow`; excluded from the fast loop
with `--exclude-tag slow`.
"""

import numpy as np
from django.test import SimpleTestCase, tag

from oracle.oracles import AnalyticOracle
from trainer.config import TrainConfig
from trainer.training import compare_weighting, initialize_system, train
from weighting.regression import WeightingMethod


def tail_mean(values, fraction=0.1) -> float:
    count = max(1, int(len(values) * fraction))
    return float(np.mean(values[-count:]))


def head_mean(values, fraction=0.1) -> float:
    count = max(1, int(len(values) * fraction))
    return float(np.mean(values[:count]))


@tag("slow")
class QuadLinearConvergenceTest(SimpleTestCase):
    """Linear-regression weighting on x₀² + 0.5·x₁ with default hyperparameters"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = TrainConfig(seed=0).validate(2)
        bank, _ = initialize_system(cls.config, 2)
        cls.report = train(bank, None, AnalyticOracle("quad-linear"), cls.config)

    def test_final_mse_below_tenth_of_target_variance(self):
        """The final fit error should be below a tenth of the target variance"""
        self.assertLess(tail_mean(self.report.mse), 0.1 * tail_mean(self.report.target_variances))

    def test_trace_is_eventually_decreasing(self):
        """The end of the loss trace should lie below its start"""
        self.assertLess(tail_mean(self.report.losses), head_mean(self.report.losses))

    def test_trace_length(self):
        """Test that the trace holds one entry per iteration"""
        self.assertEqual(self.report.iterations_run, self.config.iterations)


@tag("slow")
class SurrogateConvergenceTest(SimpleTestCase):
    def test_joint_loss_decreases(self):
        """The joint bank and surrogate loss should decrease"""
        config = TrainConfig(seed=1, surrogate_enabled=True).validate(2)
        bank, surrogate = initialize_system(config, 2)
        report = train(bank, surrogate, AnalyticOracle("conditional"), config)
        self.assertLess(tail_mean(report.losses), head_mean(report.losses))


@tag("slow")
class WeightingComparisonTest(SimpleTestCase):
    """Linear regression against the score-based column weightings"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        methods = [method.value for method in WeightingMethod]
        cls.reports = compare_weighting(AnalyticOracle("quad-linear"), TrainConfig(seed=0), methods)

    def relative_mse(self, method: WeightingMethod) -> float:
        report = self.reports[method]
        return tail_mean(report.mse) / tail_mean(report.target_variances)

    def test_linear_regression_is_strictly_lowest(self):
        """Least squares should end below every score-based method"""
        best = self.relative_mse(WeightingMethod.LINEAR_REGRESSION)
        self.assertLess(best, 0.1)
        for method in WeightingMethod:
            if method is not WeightingMethod.LINEAR_REGRESSION:
                self.assertLess(best, self.relative_mse(method), method.value)

    def test_a_softmax_method_stays_poor(self):
        """At least one softmax method should keep a large error"""
        softmax_family = (WeightingMethod.DOT_SOFTMAX, WeightingMethod.PEARSON_SOFTMAX)
        self.assertGreater(max(self.relative_mse(method) for method in softmax_family), 0.5)
