from dataclasses import replace
from unittest.mock import MagicMock

import numpy as np
from django.test import SimpleTestCase

from autodiff.graph import input_node
from autodiff.nn import Mlp, Parameter, ParameterBinding
from basis.bank import BasisBank
from basis.features import assemble_feature_matrix
from basis.serializers import bank_to_dict, checkpoint_checksum, checkpoint_to_dict
from oracle.oracles import AnalyticOracle, FileOracle, OracleError
from trainer.config import TrainConfig
from trainer.optim import Adam
from trainer.surrogate import DEFAULT_SURROGATE_SIZES, SurrogateNet
from trainer.training import (
    TrainingAbortedError,
    build_optimizer,
    compare_weighting,
    initialize_system,
    sample_batch,
    train,
    train_step,
)
from weighting.regression import SolvePath, WeightingMethod, solve_weights


def small_config(**overrides) -> TrainConfig:
    values = {"batch_size": 120, "iterations": 4, "k": 2, "learning_rate": 1e-2, "seed": 3}
    values.update(overrides)
    return TrainConfig(**values)


def parameter_snapshot(bank: BasisBank) -> dict[str, np.ndarray]:
    return {parameter.name: parameter.value.copy() for parameter in bank.parameters()}


class TrainConfigTest(SimpleTestCase):
    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual(config.batch_size, 1000)
        self.assertEqual(config.iterations, 2000)
        self.assertEqual(config.learning_rate, 1e-3)
        self.assertEqual(config.center_stddev, 1.0)
        self.assertEqual(config.local_radius, 0.5)
        self.assertEqual(config.lambda_ridge, 0.1)
        self.assertEqual(config.lambda_surrogate, 1.0)
        self.assertEqual(config.method, WeightingMethod.LINEAR_REGRESSION)

    def test_width(self):
        self.assertEqual(TrainConfig(k=2).width(3), 7)
        self.assertEqual(TrainConfig(k=2, pairwise_enabled=True).width(3), 7 + 12)
        self.assertEqual(TrainConfig(k=2, method=WeightingMethod.COSINE).width(3), 6)

    def test_batch_must_exceed_width(self):
        with self.assertRaises(ValueError) as cm:
            TrainConfig(k=5, batch_size=11).validate(2)
        self.assertIn("batch_size", str(cm.exception))
        TrainConfig(k=5, batch_size=12).validate(2)

    def test_positive_rates(self):
        for field_name in ("learning_rate", "center_stddev", "local_radius", "lambda_ridge"):
            with self.assertRaises(ValueError) as cm:
                replace(TrainConfig(), **{field_name: 0.0}).validate(2)
            self.assertIn(field_name, str(cm.exception))

    def test_pairwise_needs_two_features(self):
        with self.assertRaises(ValueError):
            TrainConfig(pairwise_enabled=True).validate(1)

    def test_dataset_source_needs_dataset(self):
        with self.assertRaises(ValueError):
            TrainConfig(center_source="dataset").validate(2)
        TrainConfig(center_source="dataset").validate(2, has_dataset=True)


class SampleBatchTest(SimpleTestCase):
    """Batch synthesis around random centres"""

    def test_zero_radius_collapses_to_center(self):
        config = TrainConfig(batch_size=20, local_radius=0.0)
        X, _ = sample_batch(config, np.random.default_rng(0), AnalyticOracle("product"))
        self.assertTrue(np.all(X == X[0]))

    def test_deterministic(self):
        config = TrainConfig(batch_size=50)
        oracle = AnalyticOracle("conditional")
        X1, y1 = sample_batch(config, np.random.default_rng(9), oracle)
        X2, y2 = sample_batch(config, np.random.default_rng(9), oracle)
        np.testing.assert_array_equal(X1, X2)
        np.testing.assert_array_equal(y1, y2)

    def test_shape_and_box(self):
        X, y = sample_batch(TrainConfig(), np.random.default_rng(1), AnalyticOracle("quad-linear"))
        self.assertEqual(X.shape, (1000, 2))
        self.assertEqual(y.shape, (1000,))
        self.assertLessEqual(np.ptp(X, axis=0).max(), 1.0)

    def test_dataset_centres(self):
        rng = np.random.default_rng(2)
        dataset = rng.uniform(0.0, 10.0, size=(30, 2))
        config = TrainConfig(batch_size=40, center_source="dataset", radius_fraction=0.1)
        X, _ = sample_batch(config, rng, AnalyticOracle("product"), dataset)
        half_width = 0.05 * np.ptp(dataset, axis=0)
        inside = [np.all(np.abs(X - row) <= half_width + 1e-12) for row in dataset]
        self.assertTrue(any(inside))

    def test_oracle_failure_carries_context(self):
        oracle = MagicMock(d=2, side_effect=OracleError("offline"))
        with self.assertRaises(OracleError) as cm:
            sample_batch(TrainConfig(batch_size=10), np.random.default_rng(0), oracle)
        self.assertIn("centred at", str(cm.exception))
        self.assertIn("offline", str(cm.exception))


class TrainStepTest(SimpleTestCase):
    def linear_setup(self):
        bank = BasisBank.initialize(1, 1, np.random.default_rng(0), alpha=1.0)
        X = np.random.default_rng(1).uniform(-1.0, 1.0, size=(50, 1))
        config = TrainConfig(batch_size=50, k=1)
        return bank, (X, X[:, 0].copy()), config

    def test_exact_linear_fit(self):
        bank, batch, config = self.linear_setup()
        result = train_step(bank, None, batch, config, build_optimizer(bank, None, config))
        self.assertLess(result.loss, 1e-10)
        self.assertEqual(result.path, SolvePath.QR)

    def test_loss_is_fit_term_without_surrogate(self):
        bank = BasisBank.initialize(2, 2, np.random.default_rng(3))
        config = small_config(lambda_surrogate=123.0)
        batch = sample_batch(config, np.random.default_rng(4), AnalyticOracle("quad-linear"))
        result = train_step(bank, None, batch, config, build_optimizer(bank, None, config))
        self.assertEqual(result.loss, result.mse)

    def test_gradient_reaches_every_parameter(self):
        """Test that every subnetwork parameter moves during training steps"""
        for seed in range(3):
            bank = BasisBank.initialize(2, 2, np.random.default_rng(seed))
            config = small_config(seed=seed)
            optimizer = build_optimizer(bank, None, config)
            before = parameter_snapshot(bank)
            rng = np.random.default_rng(seed + 10)
            for iteration in range(2):
                batch = sample_batch(config, rng, AnalyticOracle("quad-linear"))
                train_step(bank, None, batch, config, optimizer, iteration)
            for name, value in parameter_snapshot(bank).items():
                self.assertFalse(np.array_equal(value, before[name]), f"{name} did not move")

    def test_surrogate_parameters_are_trained(self):
        bank = BasisBank.initialize(2, 2, np.random.default_rng(5))
        surrogate = SurrogateNet.initialize(2, np.random.default_rng(6))
        config = small_config(surrogate_enabled=True)
        optimizer = build_optimizer(bank, surrogate, config)
        before = [parameter.value.copy() for parameter in surrogate.parameters()]
        batch = sample_batch(config, np.random.default_rng(7), AnalyticOracle("conditional"))
        result = train_step(bank, surrogate, batch, config, optimizer)
        self.assertGreater(result.loss, result.mse)
        moved = [not np.array_equal(a, b.value) for a, b in zip(before, surrogate.parameters())]
        self.assertTrue(any(moved))

    def test_linearity_penalty_adds_to_loss(self):
        bank = BasisBank.initialize(2, 2, np.random.default_rng(8))
        config = small_config(lambda_linear=2.0)
        batch = sample_batch(config, np.random.default_rng(9), AnalyticOracle("quad-linear"))
        result = train_step(bank, None, batch, config, build_optimizer(bank, None, config))
        # every α starts at 0.9
        self.assertAlmostEqual(result.loss - result.mse, 2.0 * 0.01, places=12)

    def test_non_finite_loss_aborts(self):
        bank, (X, _), config = self.linear_setup()
        with self.assertRaises(TrainingAbortedError) as cm:
            train_step(bank, None, (X, np.full(50, 1e308)), config, build_optimizer(bank, None, config), iteration=7)
        self.assertEqual(cm.exception.iteration, 7)

    def test_surrogate_matching_the_oracle_gives_the_same_weights(self):
        """Solving against a surrogate equal to the target should give the same weights"""
        mlp = Mlp.from_arrays("surrogate", "relu", [([[2.0], [-1.0]], [0.5])])
        surrogate = SurrogateNet(mlp)
        bank = BasisBank.initialize(2, 2, np.random.default_rng(10))
        X = np.random.default_rng(11).normal(size=(80, 2))
        y = 2 * X[:, 0] - X[:, 1] + 0.5
        F = assemble_feature_matrix(bank, X)
        against_y, _ = solve_weights(F, y, WeightingMethod.LINEAR_REGRESSION)
        z = surrogate.graph(input_node(X), ParameterBinding())
        against_z, _ = solve_weights(F, z, WeightingMethod.LINEAR_REGRESSION)
        np.testing.assert_allclose(against_z.values, against_y.values, atol=1e-3)


class TrainTest(SimpleTestCase):
    def test_zero_iterations(self):
        config = small_config(iterations=0)
        bank, _ = initialize_system(config, 2)
        checksum = checkpoint_checksum(checkpoint_to_dict(bank))
        report = train(bank, None, AnalyticOracle("product"), config)
        self.assertEqual(report.losses, [])
        self.assertIsNone(report.final_loss)
        self.assertEqual(checkpoint_checksum(checkpoint_to_dict(bank)), checksum)

    def test_same_seed_same_parameters(self):
        config = small_config()
        results = []
        for _ in range(2):
            bank, _ = initialize_system(config, 2)
            report = train(bank, None, AnalyticOracle("quad-linear"), config)
            results.append((bank_to_dict(bank), report.losses))
        self.assertEqual(results[0], results[1])

    def test_trace_and_path_counts(self):
        config = small_config(iterations=5)
        bank, _ = initialize_system(config, 2)
        report = train(bank, None, AnalyticOracle("quad-linear"), config)
        self.assertEqual(report.iterations_run, 5)
        self.assertEqual(len(report.mse), 5)
        self.assertEqual(len(report.target_variances), 5)
        self.assertEqual(sum(report.path_counts.values()), 5)
        self.assertEqual(report.optimizer_state["t"], 5)

    def test_standardize_from_dataset(self):
        dataset = np.random.default_rng(12).normal(loc=5.0, scale=3.0, size=(200, 2))
        config = small_config(standardize=True, center_source="dataset")
        bank, _ = initialize_system(config, 2, dataset)
        np.testing.assert_allclose(bank.transform.shift, dataset.mean(axis=0))
        np.testing.assert_allclose(bank.transform.scale, dataset.std(axis=0))
        oracle = FileOracle(dataset, dataset[:, 0])
        report = train(bank, None, oracle, config, dataset)
        self.assertEqual(report.iterations_run, config.iterations)

    def test_standardize_from_pilot_sample(self):
        bank, _ = initialize_system(small_config(standardize=True), 2)
        self.assertFalse(bank.transform.is_identity)


class CompareWeightingTest(SimpleTestCase):
    def test_single_method_matches_train(self):
        config = small_config()
        oracle = AnalyticOracle("quad-linear")
        reports = compare_weighting(oracle, config, ["linear-regression"])
        bank, _ = initialize_system(config, 2)
        self.assertEqual(reports[WeightingMethod.LINEAR_REGRESSION].losses, train(bank, None, oracle, config).losses)

    def test_deterministic(self):
        config = small_config(iterations=3)
        methods = ["linear-regression", "dot-softmax", "pearson"]
        first = compare_weighting(AnalyticOracle("quad-linear"), config, methods)
        second = compare_weighting(AnalyticOracle("quad-linear"), config, methods)
        self.assertEqual(list(first), [WeightingMethod.parse(method) for method in methods])
        for method in first:
            self.assertEqual(first[method].losses, second[method].losses)

    def test_unknown_method(self):
        with self.assertRaises(ValueError):
            compare_weighting(AnalyticOracle("quad-linear"), small_config(), ["general"])

    def test_needs_a_method(self):
        with self.assertRaises(ValueError):
            compare_weighting(AnalyticOracle("quad-linear"), small_config(), [])


class AdamTest(SimpleTestCase):
    def test_first_step_moves_by_learning_rate(self):
        """The first Adam step should move every coordinate by the learning rate"""
        parameter = Parameter("p", [1.0, -2.0])
        optimizer = Adam([parameter], learning_rate=0.1)
        optimizer.step({parameter: np.array([3.0, -0.5])})
        np.testing.assert_allclose(parameter.value, [0.9, -1.9], atol=1e-6)

    def test_minimizes_a_quadratic(self):
        parameter = Parameter("p", [5.0])
        optimizer = Adam([parameter], learning_rate=0.1)
        for _ in range(500):
            optimizer.step({parameter: 2 * parameter.value})
        self.assertLess(abs(parameter.value[0]), 0.1)

    def test_state_round_trip(self):
        parameter = Parameter("p", [1.0])
        optimizer = Adam([parameter])
        optimizer.step({parameter: np.array([1.0])})
        restored = Adam([parameter])
        restored.load_state_dict(optimizer.state_dict())
        self.assertEqual(restored.t, 1)
        np.testing.assert_array_equal(restored.m["p"], optimizer.m["p"])


class SurrogateNetTest(SimpleTestCase):
    def test_default_architecture(self):
        surrogate = SurrogateNet.initialize(3, np.random.default_rng(0))
        self.assertEqual(surrogate.mlp.sizes, [3, *DEFAULT_SURROGATE_SIZES, 1])
        self.assertEqual(surrogate.mlp.activation, "relu")
        self.assertEqual(surrogate.predict(np.zeros((7, 3))).shape, (7,))

    def test_dict_round_trip_predicts_the_same(self):
        surrogate = SurrogateNet.initialize(2, np.random.default_rng(1))
        X = np.random.default_rng(2).normal(size=(5, 2))
        np.testing.assert_array_equal(SurrogateNet.from_dict(surrogate.to_dict()).predict(X), surrogate.predict(X))
