import numpy as np
from django.test import SimpleTestCase

from autodiff.graph import (
    GraphStateError,
    NonFiniteValueError,
    ShapeMismatchError,
    affine,
    backward,
    column_scores,
    columns,
    concat,
    forward,
    input_node,
    matmul,
    mean,
    relu,
    softmax,
    square,
    sum_all,
    tanh,
    transpose,
)
from autodiff.nn import Mlp, ParameterBinding
from autodiff.solve import SingularSystemError, ridge_solve_node
from autodiff.test_helpers.gradcheck import check_gradients, numerical_gradient, random_full_rank, relative_error


class ForwardTest(SimpleTestCase):
    """Forward evaluation of small graphs"""

    def test_square_of_scalar(self):
        x = input_node(3.0)
        self.assertEqual(float(forward(square(x))), 9.0)

    def test_tanh_at_zero(self):
        self.assertEqual(float(forward(tanh(input_node(0.0)))), 0.0)

    def test_identity_matmul(self):
        result = forward(matmul(input_node(np.eye(2)), input_node([[1.0], [2.0]])))
        np.testing.assert_array_equal(result, [[1.0], [2.0]])

    def test_unbound_input_is_rejected(self):
        with self.assertRaises(GraphStateError):
            forward(square(input_node()))

    def test_shape_mismatch_names_the_node(self):
        a = input_node(np.ones((2, 3)))
        b = input_node(np.ones((2, 3)))
        root = matmul(a, b)
        with self.assertRaises(ShapeMismatchError) as cm:
            forward(root)
        self.assertIn(root.name, str(cm.exception))

    def test_non_finite_value_names_the_node(self):
        x = input_node(1e200)
        root = square(x)
        with self.assertRaises(NonFiniteValueError) as cm:
            forward(root)
        self.assertIn(root.name, str(cm.exception))

    def test_non_finite_input_is_rejected(self):
        x = input_node([1.0, np.inf], name="x")
        with self.assertRaises(NonFiniteValueError) as cm:
            forward(square(x))
        self.assertIn("x", str(cm.exception))

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 4))
        b = rng.normal(size=(4, 3))
        first = forward(tanh(matmul(input_node(a), input_node(b))))
        second = forward(tanh(matmul(input_node(a), input_node(b))))
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_concat_promotes_vectors_to_columns(self):
        result = forward(concat([input_node([1.0, 2.0]), input_node([[3.0, 4.0], [5.0, 6.0]])]))
        np.testing.assert_array_equal(result, [[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]])

    def test_bound_values_are_read_only(self):
        """Test that bound arrays cannot be changed in place"""
        node = input_node([1.0, 2.0])
        with self.assertRaises(ValueError):
            node.value[0] = 5.0


class BackwardTest(SimpleTestCase):
    """Reverse-mode gradients"""

    def test_square_gradient(self):
        x = input_node(3.0)
        root = square(x)
        forward(root)
        grads = backward(root)
        self.assertEqual(float(grads[x]), 6.0)

    def test_sum_tanh_at_zero(self):
        x = input_node(np.zeros(4))
        root = sum_all(tanh(x))
        forward(root)
        np.testing.assert_array_equal(backward(root)[x], np.ones(4))

    def test_backward_before_forward(self):
        with self.assertRaises(GraphStateError):
            backward(square(input_node(1.0)))

    def test_gradient_shapes_match_values(self):
        x = input_node(np.ones((3, 2)))
        w = input_node(np.ones((2, 4)))
        hidden = matmul(x, w)
        root = sum_all(square(hidden))
        forward(root)
        backward(root)
        for node in (x, w, hidden, root):
            self.assertEqual(node.grad.shape, node.value.shape)

    def test_shared_node_accumulates(self):
        """A node used twice should receive the sum of both gradients"""
        x = input_node(2.0)
        root = x * x + x
        forward(root)
        self.assertAlmostEqual(float(backward(root)[x]), 5.0)

    def test_matmul_chain_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 2))
        errors = check_gradients(lambda x, y: sum_all(square(matmul(x, y))), [a, b])
        for error in errors:
            self.assertLess(error, 1e-4)


class OpGradientTest(SimpleTestCase):
    """Every differentiable op against central finite differences on several seeds"""

    def assertGradientsClose(self, build, shapes, seeds=range(10), positive=False):
        for seed in seeds:
            rng = np.random.default_rng(seed)
            values = [rng.normal(size=shape) for shape in shapes]
            if positive:
                values = [np.abs(v) + 0.5 for v in values]
            for error in check_gradients(build, values):
                self.assertLess(error, 1e-3, f"seed {seed}")

    def test_add_sub_mul_broadcasting(self):
        self.assertGradientsClose(lambda a, b: sum_all(square((a + b) * a - b)), [(5, 3), (3,)])

    def test_scale_and_mean(self):
        self.assertGradientsClose(lambda a: mean(square(a * 2.5)), [(4, 2)])

    def test_tanh(self):
        self.assertGradientsClose(lambda a: sum_all(tanh(a) * a), [(6,)])

    def test_relu_away_from_kink(self):
        self.assertGradientsClose(lambda a: sum_all(square(relu(a))), [(7,)], positive=True)

    def test_transpose(self):
        self.assertGradientsClose(lambda a, b: sum_all(square(matmul(transpose(a), b))), [(4, 3), (4, 2)])

    def test_concat_and_columns(self):
        self.assertGradientsClose(
            lambda a, b: sum_all(square(columns(concat([a, b]), [0, 2, 2, 3]))),
            [(5,), (5, 3)],
        )

    def test_affine(self):
        self.assertGradientsClose(lambda x, w, b: sum_all(tanh(affine(x, w, b))), [(6, 3), (3, 4), (4,)])

    def test_softmax(self):
        self.assertGradientsClose(lambda a, b: sum_all(softmax(a) * b), [(5,), (5,)])

    def test_column_scores(self):
        for kind in ("dot", "cosine", "pearson"):
            self.assertGradientsClose(
                lambda m, y, kind=kind: sum_all(square(column_scores(m, y, kind))), [(8, 3), (8,)], seeds=range(3)
            )

    def test_ridge_solve(self):
        self.assertGradientsClose(
            lambda f, y: sum_all(square(ridge_solve_node(f, y, 0.1))), [(12, 3), (12,)], seeds=range(10)
        )

    def test_mlp(self):
        rng = np.random.default_rng(3)
        mlp = Mlp.initialize("net", [1, 4, 4, 1], "tanh", rng)
        x = rng.normal(size=(5, 1))
        binding = ParameterBinding()
        root = sum_all(square(mlp.graph(input_node(x), binding)))
        forward(root)
        backward(root)
        grads = binding.gradients()
        weight = mlp.layers[0][0]

        def loss(value):
            original = weight.value
            weight.value = value
            try:
                return float(forward(sum_all(square(mlp.graph(input_node(x), ParameterBinding())))))
            finally:
                weight.value = original

        numeric = numerical_gradient(loss, weight.value)
        self.assertLess(relative_error(grads[weight], numeric), 1e-4)


class RidgeSolveTest(SimpleTestCase):
    """Differentiable least-squares solve"""

    def solve(self, design, target, ridge_lambda):
        return forward(ridge_solve_node(input_node(design), input_node(target), ridge_lambda))

    def test_identity_system(self):
        np.testing.assert_allclose(self.solve(np.eye(2), [1.0, 2.0], 0.0), [1.0, 2.0])

    def test_exact_overdetermined_fit(self):
        np.testing.assert_allclose(self.solve([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0], 0.0), [2.0])

    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(4)
        design = rng.normal(size=(20, 4))
        target = rng.normal(size=20)
        expected = np.linalg.inv(design.T @ design + 0.1 * np.eye(4)) @ design.T @ target
        np.testing.assert_allclose(self.solve(design, target, 0.1), expected, atol=1e-8)

    def test_random_instances_match_dense_solve_and_finite_differences(self):
        """Twenty random ridge problems should match the normal equations and their finite differences"""

        def objective(f, y):
            weights = ridge_solve_node(f, y, 0.1)
            return sum_all(square(weights)) + sum_all(tanh(weights))

        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            design = random_full_rank(rng, 50, 8)
            target = rng.normal(size=50)
            expected = np.linalg.solve(design.T @ design + 0.1 * np.eye(8), design.T @ target)
            np.testing.assert_allclose(self.solve(design, target, 0.1), expected, rtol=0, atol=1e-8)
            for error in check_gradients(objective, [design, target]):
                self.assertLess(error, 1e-3, f"seed {seed}")

    def test_overflowing_target_is_non_finite(self):
        """A finite target whose normal equations overflow should raise NonFiniteValueError"""
        design = np.ones((50, 2))
        design[:, 1] = np.linspace(-1.0, 1.0, 50)
        for ridge_lambda in (0.0, 0.1):
            with self.assertRaises(NonFiniteValueError):
                self.solve(design, np.full(50, 1e308), ridge_lambda)

    def test_gradient_of_weight_norm(self):
        rng = np.random.default_rng(5)
        errors = check_gradients(
            lambda f, y: sum_all(square(ridge_solve_node(f, y, 0.1))),
            [rng.normal(size=(20, 4)), rng.normal(size=20)],
        )
        for error in errors:
            self.assertLess(error, 1e-3)

    def test_qr_path_gradient(self):
        rng = np.random.default_rng(6)
        errors = check_gradients(
            lambda f, y: sum_all(square(ridge_solve_node(f, y, 0.0))),
            [rng.normal(size=(15, 3)), rng.normal(size=15)],
        )
        for error in errors:
            self.assertLess(error, 1e-3)

    def test_residual_bound(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            design = rng.normal(size=(30, 5))
            target = rng.normal(size=30)
            weights = self.solve(design, target, 0.1)
            rhs = design.T @ target
            residual = (design.T @ design + 0.1 * np.eye(5)) @ weights - rhs
            self.assertLess(np.max(np.abs(residual)), 1e-8 * (1 + np.max(np.abs(rhs))))

    def test_small_lambda_converges_to_least_squares(self):
        """A tiny ridge parameter should give the least-squares solution"""
        rng = np.random.default_rng(7)
        design = random_full_rank(rng, 40, 4)
        target = rng.normal(size=40)
        self.assertLess(np.linalg.cond(design), 1e3)
        np.testing.assert_allclose(
            self.solve(design, target, 1e-8), self.solve(design, target, 0.0), atol=1e-4
        )

    def test_rank_deficient_without_ridge(self):
        """Duplicate columns without ridge should fail and suggest ridge"""
        design = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with self.assertRaises(SingularSystemError) as cm:
            self.solve(design, [1.0, 2.0, 3.0], 0.0)
        self.assertIn("ridge", str(cm.exception))

    def test_negative_lambda_rejected(self):
        with self.assertRaises(ValueError):
            ridge_solve_node(input_node(np.eye(2)), input_node([1.0, 1.0]), -1.0)
