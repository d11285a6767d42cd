import subprocess
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
from django.test import SimpleTestCase

from autodiff.nn import Mlp
from oracle.oracles import (
    AnalyticOracle,
    CommandOracle,
    FileOracle,
    OracleError,
    SurrogateOracle,
    UnknownOracleError,
    build_oracle,
    eval_analytic,
    eval_command,
    eval_file,
)
from oracle.tables import DatasetFormatError
from trainer.surrogate import SurrogateNet

ECHO_FIRST_COLUMN = "import sys\nfor line in sys.stdin:\n    print(line.split(',')[0])\n"
PRINT_ZERO = "import sys\nfor line in sys.stdin:\n    print(0)\n"
PRODUCT = "import sys\nfor line in sys.stdin:\n    a, b = line.split(',')[:2]\n    print(repr(float(a) * float(b)))\n"


def python_command(source: str) -> list[str]:
    return [sys.executable, "-c", source]


class AnalyticOracleTest(SimpleTestCase):
    """Builtin test functions"""

    def test_conditional(self):
        np.testing.assert_array_equal(eval_analytic("conditional", [[2.0, 1.0], [2.0, -1.0]]), [4.0, 2.0])

    def test_conditional_boundary_includes_zero(self):
        self.assertEqual(eval_analytic("conditional", [[3.0, 0.0]])[0], 9.0)

    def test_chessboard(self):
        self.assertEqual(eval_analytic("chessboard", [[0.5, 0.5, 0, 0, 0]])[0], 0.0)
        self.assertEqual(eval_analytic("chessboard", [[0.5, -0.5, 0, 0, 0]])[0], 1.0)

    def test_wedge(self):
        np.testing.assert_array_equal(eval_analytic("wedge", [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0]]), [1.0, 0.0])

    def test_product_and_quad_linear(self):
        self.assertEqual(eval_analytic("product", [[3.0, -2.0]])[0], -6.0)
        self.assertEqual(eval_analytic("quad-linear", [[3.0, -2.0]])[0], 8.0)

    def test_unknown_name(self):
        with self.assertRaises(UnknownOracleError):
            eval_analytic("general", [[0.0, 0.0]])

    def test_wrong_dimension(self):
        with self.assertRaises(ValueError):
            eval_analytic("conditional", [[1.0]])
        with self.assertRaises(ValueError):
            eval_analytic("chessboard", [[1.0, 2.0, 3.0]])
        with self.assertRaises(ValueError):
            AnalyticOracle("wedge")(np.zeros((3, 2)))

    def test_indicator_outputs_and_conditional_square(self):
        X = np.random.default_rng(0).normal(size=(200, 5)) * 2
        for name in ("chessboard", "wedge"):
            self.assertTrue(set(np.unique(eval_analytic(name, X))) <= {0.0, 1.0})
        upper = X[X[:, 1] >= 0]
        np.testing.assert_array_equal(eval_analytic("conditional", upper[:, :2]), upper[:, 0] ** 2)

    def test_stateless_over_batches(self):
        """Splitting a batch should not change any analytic prediction"""
        rng = np.random.default_rng(1)
        first, second = rng.normal(size=(7, 5)), rng.normal(size=(4, 5))
        for name in ("conditional", "chessboard", "product", "wedge", "quad-linear"):
            oracle = AnalyticOracle(name, 5)
            joined = oracle(np.vstack([first, second]))
            np.testing.assert_array_equal(joined, np.concatenate([oracle(first), oracle(second)]))


class FileOracleTest(SimpleTestCase):
    def test_exact_hit(self):
        oracle = FileOracle([[0.0, 0.0], [1.0, 2.0]], [5.0, 7.0])
        y, distances = eval_file(oracle, [[1.0, 2.0]])
        self.assertEqual(y[0], 7.0)
        self.assertEqual(distances[0], 0.0)

    def test_single_row(self):
        oracle = FileOracle([[0.5, -0.5]], [3.0])
        np.testing.assert_array_equal(oracle(np.random.default_rng(2).normal(size=(6, 2))), np.full(6, 3.0))

    def test_matches_linear_scan(self):
        """The KD-tree lookup should agree with a brute-force nearest row"""
        rng = np.random.default_rng(3)
        stored, targets = rng.normal(size=(100, 3)), rng.normal(size=100)
        queries = rng.normal(size=(10, 3))
        y, distances = eval_file(FileOracle(stored, targets), queries)
        for query, value, distance in zip(queries, y, distances):
            gaps = np.linalg.norm(stored - query, axis=1)
            self.assertEqual(value, targets[np.argmin(gaps)])
            self.assertAlmostEqual(distance, gaps.min(), places=12)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            FileOracle([[0.0, 0.0]], [1.0])([[1.0, 2.0, 3.0]])

    def test_from_csv(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "predictions.csv"
            path.write_text("x0,x1,y\n0,0,1\n1,1,2\n", encoding="utf-8")
            oracle = FileOracle.from_csv(path)
            self.assertEqual(oracle.d, 2)
            self.assertEqual(oracle([[0.9, 1.2]])[0], 2.0)

    def test_empty_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "empty.csv"
            path.write_text("", encoding="utf-8")
            with self.assertRaises(DatasetFormatError):
                FileOracle.from_csv(path)
        with self.assertRaises(OracleError):
            FileOracle(np.zeros((0, 2)), np.zeros(0))


class CommandOracleTest(SimpleTestCase):
    """External program oracles"""

    def test_echo(self):
        X = np.array([[0.25], [-1.5], [3.0]])
        np.testing.assert_array_equal(eval_command(CommandOracle(python_command(ECHO_FIRST_COLUMN), 1), X), X[:, 0])

    def test_constant(self):
        y = CommandOracle(python_command(PRINT_ZERO), 2)(np.ones((4, 2)))
        np.testing.assert_array_equal(y, np.zeros(4))

    def test_matches_builtin_product(self):
        X = np.random.default_rng(4).normal(size=(20, 2))
        y = CommandOracle(python_command(PRODUCT), 2)(X)
        np.testing.assert_allclose(y, eval_analytic("product", X), rtol=1e-15)

    def test_nonzero_exit(self):
        oracle = CommandOracle(python_command("import sys\nsys.stderr.write('boom')\nsys.exit(3)"), 1)
        with self.assertRaises(OracleError) as cm:
            oracle(np.zeros((2, 1)))
        self.assertIn("status 3", str(cm.exception))

    def test_malformed_output(self):
        oracle = CommandOracle(python_command("import sys\nsys.stdin.read()\nprint('a')\nprint('b')"), 1)
        with self.assertRaises(OracleError):
            oracle(np.zeros((2, 1)))

    def test_count_mismatch(self):
        oracle = CommandOracle(python_command("import sys\nsys.stdin.read()\nprint(1)"), 1)
        with self.assertRaises(OracleError) as cm:
            oracle(np.zeros((3, 1)))
        self.assertIn("1 values for 3 rows", str(cm.exception))

    def test_timeout_is_reported(self):
        """A command that times out should be logged and raised as an oracle error"""
        oracle = CommandOracle(["slow-model"], 1, timeout=0.1)
        with patch("oracle.oracles.subprocess.run", side_effect=subprocess.TimeoutExpired("slow-model", 0.1)):
            with self.assertLogs("oracle.oracles", level="ERROR"):
                with self.assertRaises(OracleError):
                    oracle(np.zeros((1, 1)))

    def test_payload_is_csv(self):
        """Test that commands receive one CSV row per point on stdin"""
        completed = subprocess.CompletedProcess(["model"], 0, stdout="1\n2\n", stderr="")
        with patch("oracle.oracles.subprocess.run", return_value=completed) as run:
            CommandOracle(["model"], 2, timeout=5)(np.array([[1.0, 0.5], [-2.0, 3.0]]))
        self.assertEqual(run.call_args.kwargs["input"], "1.0,0.5\n-2.0,3.0\n")
        self.assertEqual(run.call_args.kwargs["timeout"], 5)


class BuildOracleTest(SimpleTestCase):
    def test_analytic(self):
        oracle = build_oracle({"kind": "analytic", "name": "wedge"})
        self.assertIsInstance(oracle, AnalyticOracle)
        self.assertEqual(oracle.d, 5)

    def test_file_relative_to_base_dir(self):
        """Relative file paths should resolve against the configuration directory"""
        with tempfile.TemporaryDirectory() as directory:
            Path(directory, "rows.csv").write_text("1,2\n3,4\n", encoding="utf-8")
            oracle = build_oracle({"kind": "file", "path": "rows.csv"}, base_dir=directory)
            self.assertEqual(oracle([[2.9]])[0], 4.0)

    def test_command(self):
        oracle = build_oracle({"kind": "command", "argv": python_command(PRINT_ZERO), "d": 3})
        self.assertIsInstance(oracle, CommandOracle)
        self.assertEqual(oracle.d, 3)

    def test_surrogate(self):
        surrogate = SurrogateNet.initialize(2, np.random.default_rng(5))
        oracle = build_oracle({"kind": "surrogate"}, surrogate=surrogate)
        X = np.random.default_rng(6).normal(size=(4, 2))
        np.testing.assert_array_equal(oracle(X), surrogate.predict(X))
        with self.assertRaises(ValueError):
            build_oracle({"kind": "surrogate"})

    def test_unknown_kind(self):
        with self.assertRaises(UnknownOracleError):
            build_oracle({"kind": "boosting"})

    def test_missing_key(self):
        with self.assertRaises(ValueError) as cm:
            build_oracle({"kind": "command", "argv": ["model"]})
        self.assertIn("'d'", str(cm.exception))


class SurrogateOracleTest(SimpleTestCase):
    def test_linear_surrogate(self):
        mlp = Mlp.from_arrays("surrogate", "relu", [([[2.0], [-1.0]], [0.5])])
        oracle = SurrogateOracle(SurrogateNet(mlp))
        np.testing.assert_allclose(oracle([[1.0, 1.0], [0.0, 2.0]]), [1.5, -1.5])

    def test_any_predictor_is_accepted(self):
        """Objects with a dimension and a predict method should stand in for the surrogate network"""

        class Halving:
            d = 2

            def predict(self, X):
                return np.asarray(X)[:, 0] / 2

        np.testing.assert_array_equal(SurrogateOracle(Halving())([[4.0, 1.0], [-2.0, 0.0]]), [2.0, -1.0])
