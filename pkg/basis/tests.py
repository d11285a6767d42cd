import numpy as np
from django.test import SimpleTestCase

from autodiff.graph import ShapeMismatchError
from basis.bank import BasisBank, FeatureTransform, InvalidInputError, subnet_forward
from basis.features import (
    BiasColumn,
    FeatureMatrixStateError,
    PairColumn,
    SingleColumn,
    append_bias,
    assemble_feature_matrix,
    build_feature_matrix,
    build_pair_columns,
    join,
)
from basis.serializers import (
    CheckpointFormatError,
    bank_from_dict,
    checkpoint_checksum,
    checkpoint_to_dict,
    dumps_checkpoint,
    loads_checkpoint,
)
from basis.test_helpers.banks import perturbed_bank, set_alpha


class SubnetForwardTest(SimpleTestCase):
    """Shape function of one subnetwork with the shortcut mix"""

    def test_pure_shortcut(self):
        bank = perturbed_bank(1, 1)
        set_alpha(bank, 1.0)
        np.testing.assert_array_equal(subnet_forward(bank.subnet(0, 0), [0.3, -2.0]), [0.3, -2.0])

    def test_pure_network(self):
        bank = perturbed_bank(1, 1)
        set_alpha(bank, 0.0)
        subnet = bank.subnet(0, 0)
        x = np.array([0.5, -1.0, 2.0])
        (w0, b0), (w1, b1), (w2, b2) = [(weight.value, bias.value) for weight, bias in subnet.mlp.layers]
        hidden = np.tanh(np.tanh(x[:, None] @ w0 + b0) @ w1 + b1)
        expected = (hidden @ w2 + b2)[:, 0]
        np.testing.assert_allclose(subnet_forward(subnet, x), expected, rtol=1e-12)

    def test_convex_combination(self):
        bank = BasisBank.initialize(1, 1, np.random.default_rng(0))
        subnet = bank.subnet(0, 0)
        # Make h constant 2: zero output weights and output bias 2
        subnet.mlp.layers[-1][1].value = np.array([2.0])
        self.assertAlmostEqual(float(subnet_forward(subnet, [1.0])[0]), 1.1)

    def test_initial_shape_function_is_linear(self):
        """Fresh subnetworks should output 0.9·x"""
        bank = BasisBank.initialize(2, 3, np.random.default_rng(1))
        x = np.linspace(-2, 2, 9)
        for subnet in bank.subnets:
            np.testing.assert_allclose(subnet_forward(subnet, x), 0.9 * x)

    def test_non_finite_input(self):
        bank = BasisBank.initialize(1, 1, np.random.default_rng(0))
        with self.assertRaises(InvalidInputError):
            subnet_forward(bank.subnet(0, 0), [1.0, np.nan])


class BasisBankTest(SimpleTestCase):
    def test_subnet_count_and_order(self):
        bank = BasisBank.initialize(3, 2, np.random.default_rng(0))
        self.assertEqual(len(bank.subnets), 6)
        self.assertEqual([(s.feature, s.basis) for s in bank.subnets], [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)])

    def test_subnets_do_not_share_parameters(self):
        bank = BasisBank.initialize(2, 2, np.random.default_rng(0))
        ids = [id(parameter) for parameter in bank.parameters()]
        self.assertEqual(len(ids), len(set(ids)))
        arrays = [id(parameter.value) for parameter in bank.parameters()]
        self.assertEqual(len(arrays), len(set(arrays)))

    def test_width(self):
        bank = BasisBank.initialize(5, 2, np.random.default_rng(0), pairwise=True)
        self.assertEqual(bank.pair_count(), 40)
        self.assertEqual(bank.width(), 10 + 40 + 1)
        self.assertEqual(bank.width(pairwise=False, bias=False), 10)


class FeatureMatrixTest(SimpleTestCase):
    def test_shape(self):
        bank = BasisBank.initialize(2, 5, np.random.default_rng(0))
        X = np.random.default_rng(1).normal(size=(1000, 2))
        F = build_feature_matrix(bank, X)
        self.assertEqual(F.values.shape, (1000, 10))
        self.assertEqual(F.columns[0], SingleColumn(0, 0))
        self.assertEqual(F.columns[5], SingleColumn(1, 0))

    def test_shortcut_identity(self):
        bank = perturbed_bank(1, 1)
        set_alpha(bank, 1.0)
        X = np.random.default_rng(2).normal(size=(7, 1))
        np.testing.assert_array_equal(build_feature_matrix(bank, X).values, X)

    def test_matches_per_subnet_evaluation(self):
        bank = perturbed_bank(3, 2, seed=3)
        X = np.random.default_rng(4).normal(size=(11, 3))
        F = build_feature_matrix(bank, X).values
        for position, subnet in enumerate(bank.subnets):
            column = subnet_forward(subnet, X[:, subnet.feature])
            np.testing.assert_array_equal(F[:, position], column)
            for row in range(3):
                scalar = subnet_forward(subnet, [X[row, subnet.feature]])[0]
                self.assertAlmostEqual(F[row, position], scalar, places=12)

    def test_column_count_mismatch(self):
        bank = BasisBank.initialize(2, 1, np.random.default_rng(0))
        with self.assertRaises(ShapeMismatchError):
            build_feature_matrix(bank, np.zeros((4, 3)))

    def test_row_permutation_equivariance(self):
        """Permuting the rows should permute the feature matrix the same way"""
        bank = perturbed_bank(2, 2, seed=5)
        X = np.random.default_rng(6).normal(size=(9, 2))
        permutation = np.random.default_rng(7).permutation(9)
        F = build_feature_matrix(bank, X).values
        F_permuted = build_feature_matrix(bank, X[permutation]).values
        np.testing.assert_allclose(F_permuted, F[permutation], rtol=0, atol=1e-14)


class PairColumnsTest(SimpleTestCase):
    def test_pair_count(self):
        bank = BasisBank.initialize(5, 2, np.random.default_rng(0))
        F = build_feature_matrix(bank, np.random.default_rng(1).normal(size=(20, 5)))
        G = build_pair_columns(F)
        self.assertEqual(G.values.shape, (20, 40))
        self.assertEqual(G.width, 40)

    def test_single_feature_has_no_pairs(self):
        bank = BasisBank.initialize(1, 3, np.random.default_rng(0))
        G = build_pair_columns(build_feature_matrix(bank, np.ones((4, 1))))
        self.assertEqual(G.values.shape, (4, 0))

    def test_one_pair(self):
        bank = perturbed_bank(2, 1, seed=2)
        X = np.random.default_rng(3).normal(size=(6, 2))
        F = build_feature_matrix(bank, X)
        G = build_pair_columns(F)
        np.testing.assert_array_equal(G.values[:, 0], F.values[:, 0] * F.values[:, 1])
        self.assertEqual(G.columns, (PairColumn(0, 0, 1, 0),))

    def test_pair_ordering_and_content(self):
        bank = perturbed_bank(3, 2, seed=8)
        X = np.random.default_rng(9).normal(size=(5, 3))
        F = build_feature_matrix(bank, X)
        G = build_pair_columns(F)
        expected_order = [
            PairColumn(i, j, s, l) for i, s in ((0, 1), (0, 2), (1, 2)) for j in range(2) for l in range(2)
        ]
        self.assertEqual(list(G.columns), expected_order)
        for position, column in enumerate(G.columns):
            left = F.values[:, F.index(SingleColumn(column.feature, column.basis))]
            right = F.values[:, F.index(SingleColumn(column.other_feature, column.other_basis))]
            np.testing.assert_array_equal(G.values[:, position], left * right)
            np.testing.assert_array_equal(G.values[:, position], right * left)

    def test_raw_products_with_full_shortcut(self):
        bank = perturbed_bank(3, 1, seed=1)
        set_alpha(bank, 1.0)
        X = np.random.default_rng(2).normal(size=(8, 3))
        F_star = assemble_feature_matrix(bank, X, pairwise=True, bias=False)
        np.testing.assert_array_equal(F_star.values[:, :3], X)
        np.testing.assert_array_equal(F_star.values[:, 3], X[:, 0] * X[:, 1])
        np.testing.assert_array_equal(F_star.values[:, 5], X[:, 1] * X[:, 2])

    def test_centered_products(self):
        """Centred pair columns should multiply the single columns minus their means"""
        bank = perturbed_bank(3, 1, seed=4)
        set_alpha(bank, 1.0)
        X = np.random.default_rng(5).uniform(1.0, 3.0, size=(40, 3))
        F_star = assemble_feature_matrix(bank, X, pairwise=True, centered_pairs=True)
        means = X.mean(axis=0)
        np.testing.assert_allclose(F_star.values[:, 3], (X[:, 0] - means[0]) * (X[:, 1] - means[1]), rtol=1e-12)
        np.testing.assert_allclose(F_star.values[:, 5], (X[:, 1] - means[1]) * (X[:, 2] - means[2]), rtol=1e-12)
        np.testing.assert_allclose(F_star.pair_offsets, means, rtol=1e-12)
        self.assertIsNone(assemble_feature_matrix(bank, X, pairwise=True).pair_offsets)

    def test_centering_keeps_the_span(self):
        bank = perturbed_bank(2, 2, seed=6)
        X = np.random.default_rng(7).uniform(0.5, 2.5, size=(30, 2))
        raw = assemble_feature_matrix(bank, X, pairwise=True).values
        centered = assemble_feature_matrix(bank, X, pairwise=True, centered_pairs=True).values
        coefficients, *_ = np.linalg.lstsq(raw, centered, rcond=None)
        np.testing.assert_allclose(raw @ coefficients, centered, atol=1e-8)

    def test_rejects_matrix_with_bias(self):
        bank = BasisBank.initialize(2, 1, np.random.default_rng(0))
        F = append_bias(build_feature_matrix(bank, np.ones((3, 2))))
        with self.assertRaises(FeatureMatrixStateError):
            build_pair_columns(F)

    def test_rejects_matrix_with_pairs(self):
        bank = BasisBank.initialize(2, 1, np.random.default_rng(0))
        F = build_feature_matrix(bank, np.ones((3, 2)))
        with self.assertRaises(FeatureMatrixStateError):
            build_pair_columns(join(F, build_pair_columns(F)))


class BiasColumnTest(SimpleTestCase):
    def test_appends_ones(self):
        bank = BasisBank.initialize(2, 1, np.random.default_rng(0))
        F = append_bias(build_feature_matrix(bank, np.arange(6.0).reshape(3, 2)))
        self.assertEqual(F.values.shape, (3, 3))
        np.testing.assert_array_equal(F.values[:, -1], np.ones(3))
        self.assertIsInstance(F.columns[-1], BiasColumn)

    def test_widths(self):
        bank = BasisBank.initialize(3, 2, np.random.default_rng(0))
        X = np.zeros((10, 3))
        self.assertEqual(assemble_feature_matrix(bank, X, pairwise=False).width, 7)
        self.assertEqual(assemble_feature_matrix(bank, X, pairwise=True).width, 6 + 12 + 1)

    def test_duplicate_bias(self):
        bank = BasisBank.initialize(1, 1, np.random.default_rng(0))
        F = append_bias(build_feature_matrix(bank, np.ones((2, 1))))
        with self.assertRaises(FeatureMatrixStateError):
            append_bias(F)


class FeatureTransformTest(SimpleTestCase):
    def test_standardized_inputs_reach_the_subnets(self):
        bank = perturbed_bank(2, 1)
        set_alpha(bank, 1.0)
        X = np.array([[1.0, 10.0], [3.0, 30.0]])
        bank.transform = FeatureTransform.fit(X)
        np.testing.assert_allclose(build_feature_matrix(bank, X).values, [[-1.0, -1.0], [1.0, 1.0]])


class CheckpointTest(SimpleTestCase):
    def test_round_trip_is_byte_stable(self):
        bank = perturbed_bank(2, 3, seed=11, pairwise=True)
        text = dumps_checkpoint(checkpoint_to_dict(bank))
        reloaded = bank_from_dict(loads_checkpoint(text)["bank"])
        self.assertEqual(dumps_checkpoint(checkpoint_to_dict(reloaded)), text)

    def test_reloaded_bank_reproduces_columns(self):
        """A reloaded bank should give the same feature matrix bit for bit"""
        bank = perturbed_bank(2, 2, seed=12)
        X = np.random.default_rng(13).normal(size=(6, 2))
        reloaded = bank_from_dict(loads_checkpoint(dumps_checkpoint(checkpoint_to_dict(bank)))["bank"])
        np.testing.assert_array_equal(build_feature_matrix(reloaded, X).values, build_feature_matrix(bank, X).values)

    def test_rejects_unknown_version(self):
        document = checkpoint_to_dict(BasisBank.initialize(1, 1, np.random.default_rng(0)))
        document["format_version"] = 99
        with self.assertRaises(CheckpointFormatError) as cm:
            loads_checkpoint(dumps_checkpoint(document))
        self.assertIn("format_version", str(cm.exception))

    def test_rejects_unknown_column_order(self):
        document = checkpoint_to_dict(BasisBank.initialize(1, 1, np.random.default_rng(0)))
        document["column_order"] = "something-else"
        with self.assertRaises(CheckpointFormatError) as cm:
            loads_checkpoint(dumps_checkpoint(document))
        self.assertIn("column_order", str(cm.exception))

    def test_checksum_changes_with_parameters(self):
        bank = BasisBank.initialize(1, 1, np.random.default_rng(0))
        before = checkpoint_checksum(checkpoint_to_dict(bank))
        bank.subnet(0, 0).alpha.value = np.array(0.5)
        self.assertNotEqual(before, checkpoint_checksum(checkpoint_to_dict(bank)))
