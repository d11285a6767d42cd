import io
import json
import os
import sys
import tempfile
from contextlib import redirect_stderr
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from autodiff.graph import NonFiniteValueError
from basis.serializers import bank_to_dict
from cli_io.datasets import DatasetFormatError, load_csv_dataset, parse_numeric_rows, read_csv, write_csv
from cli_io.files import atomic_write_text
from cli_io.forms import ConfigError, ExplainRequestForm, load_explain_requests, load_run_config
from cli_io.management.commands.train import Command as TrainCommand
from cli_io.plots import PlotSpec, ramp_color, render_plot, write_plot
from cli_io.runs import command_errors
from explain.explanations import PairHeatmap, ShapeCurve
from trainer.training import initialize_system
from weighting.regression import WeightingMethod

SMALL_RUN = {
    "oracle": {"kind": "analytic", "name": "quad-linear"},
    "k": 2,
    "hidden_sizes": [4],
    "surrogate_sizes": [4],
    "batch_size": 40,
    "iterations": 3,
}
SMALL_REQUEST = {"center": [0.0, 0.0], "half_width": 1.0, "n_samples": 50, "grid_resolution": 11}


class TempDirMixin:
    def setUp(self):
        super().setUp()
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.dir = Path(directory.name)

    def write_json(self, name: str, document) -> Path:
        path = self.dir / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path


class LoadCsvDatasetTest(TempDirMixin, SimpleTestCase):
    def test_two_rows(self):
        """Every column but the last should become a feature"""
        X, y = load_csv_dataset(self.write_text("data.csv", "1,2\n3,4"))
        np.testing.assert_array_equal(X, [[1.0], [3.0]])
        np.testing.assert_array_equal(y, [2.0, 4.0])

    def test_header_is_skipped(self):
        """A non-numeric first row should be read as a header"""
        X, y = load_csv_dataset(self.write_text("data.csv", "a,b,target\n1,2,3\n4,5,6\n"))
        np.testing.assert_array_equal(X, [[1.0, 2.0], [4.0, 5.0]])
        np.testing.assert_array_equal(y, [3.0, 6.0])

    def test_thirteen_features(self):
        """Test that a 506×14 table loads as 13 features and a target"""
        values = np.random.default_rng(0).normal(size=(506, 14))
        path = self.dir / "housing.csv"
        write_csv(path, [f"c{index}" for index in range(14)], values.tolist())

        X, y = load_csv_dataset(path)
        self.assertEqual(X.shape, (506, 13))
        self.assertEqual(y.shape, (506,))
        np.testing.assert_array_equal(y, values[:, -1])

    def test_ragged_rows(self):
        """Rows with a different column count should be reported by row"""
        with self.assertRaises(DatasetFormatError) as cm:
            load_csv_dataset(self.write_text("data.csv", "1,2\n3,4,5\n"))
        self.assertEqual(cm.exception.row, 2)

    def test_non_numeric_cell_has_coordinates(self):
        """Bad cells should be reported with 1-based row and column"""
        with self.assertRaises(DatasetFormatError) as cm:
            load_csv_dataset(self.write_text("data.csv", "1,2\n3,x\n"))
        self.assertEqual((cm.exception.row, cm.exception.column), (2, 2))
        self.assertIn("row 2, column 2", str(cm.exception))

    def test_non_finite_value(self):
        with self.assertRaises(DatasetFormatError):
            load_csv_dataset(self.write_text("data.csv", "1,2\n3,nan\n"))

    def test_empty_file(self):
        """An empty dataset should be rejected"""
        with self.assertRaises(DatasetFormatError):
            load_csv_dataset(self.write_text("data.csv", ""))

    def test_parse_without_header(self):
        header, values = parse_numeric_rows("0.5,1\n2,3\n")
        self.assertIsNone(header)
        self.assertEqual(values.shape, (2, 2))


class CsvExportTest(TempDirMixin, SimpleTestCase):
    def test_read_inverts_write(self):
        """Floats should survive write_csv and read_csv unchanged"""
        rows = [(1, "cosine", 0.1, 1 / 3, 1e-300), (2, "pearson", -2.5e10, np.float64(np.pi), 0.0)]
        path = write_csv(self.dir / "trace.csv", ["iteration", "method", "a", "b", "c"], rows)

        header, restored = read_csv(path)
        self.assertEqual(header, ["iteration", "method", "a", "b", "c"])
        self.assertEqual(restored, [[1.0, "cosine", 0.1, 1 / 3, 1e-300], [2.0, "pearson", -2.5e10, np.pi, 0.0]])

    def test_atomic_write_leaves_only_the_target(self):
        """No temporary file should be left next to the target"""
        atomic_write_text(self.dir / "nested" / "out.txt", "content")
        self.assertEqual(os.listdir(self.dir / "nested"), ["out.txt"])
        self.assertEqual((self.dir / "nested" / "out.txt").read_text(), "content")


class RunConfigFormTest(TempDirMixin, SimpleTestCase):
    def test_defaults_and_seed_override(self):
        """Missing keys should take their defaults and the seed override should win"""
        form = load_run_config(self.write_json("run.json", {"oracle": {"kind": "analytic", "name": "conditional"}}))
        config = form.train_config(seed=7)
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.batch_size, 1000)
        self.assertIs(config.method, WeightingMethod.LINEAR_REGRESSION)
        self.assertTrue(form.export_plots)

    def test_values_are_passed_through(self):
        document = {**SMALL_RUN, "method": "cosine", "pairwise_enabled": True, "lambda_linear": 0.5, "plots": False}
        form = load_run_config(self.write_json("run.json", document))
        config = form.train_config()
        self.assertEqual((config.k, config.batch_size, config.iterations), (2, 40, 3))
        self.assertEqual(config.hidden_sizes, (4,))
        self.assertIs(config.method, WeightingMethod.COSINE)
        self.assertTrue(config.pairwise_enabled)
        self.assertEqual(config.lambda_linear, 0.5)
        self.assertFalse(form.export_plots)

    def test_unknown_key_is_named(self):
        """Test that an unknown configuration key is named in the error"""
        with self.assertRaisesMessage(ConfigError, "Unknown key `iteration`"):
            load_run_config(self.write_json("run.json", {**SMALL_RUN, "iteration": 5}))

    def test_bad_value_names_the_key(self):
        with self.assertRaisesMessage(ConfigError, "`batch_size`"):
            load_run_config(self.write_json("run.json", {**SMALL_RUN, "batch_size": "many"}))

    def test_invalid_json_reports_the_line(self):
        """Syntax errors should carry the line of the configuration file"""
        with self.assertRaisesMessage(ConfigError, "line 2"):
            load_run_config(self.write_text("run.json", '{"k": 2,\n "oracle": }'))

    def test_missing_dataset(self):
        """A dataset path that does not exist should be rejected"""
        with self.assertRaisesMessage(ConfigError, "`dataset`"):
            load_run_config(self.write_json("run.json", {**SMALL_RUN, "dataset": "missing.csv"}))

    def test_unknown_oracle_kind(self):
        with self.assertRaisesMessage(ConfigError, "`oracle`"):
            load_run_config(self.write_json("run.json", {"oracle": {"kind": "crystal-ball"}}))

    def test_unknown_method(self):
        with self.assertRaisesMessage(ConfigError, "`methods`"):
            load_run_config(self.write_json("run.json", {**SMALL_RUN, "methods": ["cosine", "attention"]}))

    def test_inline_explain_requests(self):
        form = load_run_config(self.write_json("run.json", {**SMALL_RUN, "explain": [SMALL_REQUEST, SMALL_REQUEST]}))
        self.assertEqual(len(form.cleaned_data["explain"]), 2)


class ExplainRequestFormTest(TempDirMixin, SimpleTestCase):
    def request(self, **document):
        return ExplainRequestForm(document).validated().to_request()

    def test_scalar_half_width(self):
        """A scalar half-width should apply to every coordinate"""
        request = self.request(center=[0, 2], half_width=0.5)
        self.assertEqual(request.half_widths, (0.5, 0.5))
        self.assertEqual(request.n_samples, 1000)
        self.assertEqual(request.pairs, ())

    def test_fraction_of_explicit_ranges(self):
        request = self.request(center=[0, 0], fraction=0.1, minimums=[-1, 0], maximums=[1, 10], pairs="all")
        np.testing.assert_allclose(request.half_widths, [0.1, 0.5])
        self.assertEqual(request.pairs, "all")
        self.assertEqual(request.neighborhood["kind"], "fraction-of-range")

    def test_fraction_of_dataset_ranges(self):
        """Fractions without explicit ranges should use the ranges of the dataset"""
        self.write_text("data.csv", "x0,x1,y\n0,-2,1\n4,2,0\n")
        requests = load_explain_requests(
            self.write_json("request.json", {"center": [1, 0], "fraction": 0.5, "dataset": "data.csv"})
        )
        self.assertEqual(requests[0].half_widths, (1.0, 1.0))

    def test_exactly_one_neighbourhood(self):
        """Test that a request gives exactly one way of sizing its box"""
        with self.assertRaisesMessage(ConfigError, "exactly one"):
            self.request(center=[0, 0], half_width=1.0, fraction=0.1, minimums=[0, 0], maximums=[1, 1])
        with self.assertRaisesMessage(ConfigError, "exactly one"):
            self.request(center=[0, 0])

    def test_half_width_length(self):
        with self.assertRaisesMessage(ConfigError, "`half_width`"):
            self.request(center=[0, 0], half_width=[1.0, 1.0, 1.0])

    def test_pairs_shape(self):
        """Pairs should be a list of two-element lists or the string all"""
        with self.assertRaisesMessage(ConfigError, "`pairs`"):
            self.request(center=[0, 0], half_width=1.0, pairs=[[0, 1, 2]])
        self.assertEqual(self.request(center=[0, 0], half_width=1.0, pairs=[[0, 1]]).pairs, ((0, 1),))

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigError, "Unknown key `radius`"):
            self.request(center=[0, 0], half_width=1.0, radius=2)


class PlotTest(TempDirMixin, SimpleTestCase):
    def curve(self) -> ShapeCurve:
        grid = np.linspace(-1, 1, 11)
        return ShapeCurve(0, grid, grid**2)

    def test_output_must_be_svg(self):
        """Plots should only be written to .svg paths"""
        with self.assertRaises(ValueError):
            PlotSpec.curve(self.curve(), self.dir / "curve_0.png")

    def test_curve_polyline(self):
        """A curve should render as one polyline through every grid point"""
        svg = render_plot(PlotSpec.curve(self.curve(), self.dir / "curve_0.svg"))
        self.assertTrue(svg.startswith("<svg"))
        self.assertEqual(svg.count("<polyline"), 1)
        points = svg.split('points="')[1].split('"')[0].split()
        self.assertEqual(len(points), 11)

    def test_heatmap_grid(self):
        """A heatmap should render one rectangle per cell"""
        grid = np.linspace(0, 1, 4)
        values = np.outer(grid, np.linspace(0, 1, 3))
        heatmap = PairHeatmap((0, 1), grid, np.linspace(0, 1, 3), values, values)
        svg = render_plot(PlotSpec.heatmap(heatmap, self.dir / "heatmap.svg"))
        # background and colour bar besides the 4×3 cells
        self.assertEqual(svg.count("<rect"), 4 * 3 + 2)
        self.assertIn(ramp_color(1.0), svg)

    def test_overlay_has_one_series_per_trace(self):
        spec = PlotSpec.loss_trace({"cosine": [1.0, 0.5], "pearson": [2.0, 1.0]}, self.dir / "traces.svg")
        svg = render_plot(spec)
        self.assertEqual(svg.count("<polyline"), 2)
        self.assertIn(">pearson<", svg)

    def test_empty_trace_is_rejected(self):
        """A loss trace without points should not be plotted"""
        with self.assertRaises(ValueError):
            PlotSpec.loss_trace({"cosine": []}, self.dir / "traces.svg")

    def test_color_ramp(self):
        self.assertEqual(ramp_color(0.0), "#ffffff")
        self.assertEqual(ramp_color(1.0), "#08306b")
        self.assertEqual(ramp_color(2.0), "#08306b")

    def test_rendering_is_deterministic(self):
        """Rendering the same spec twice should give the same bytes"""
        first = write_plot(PlotSpec.curve(self.curve(), self.dir / "a.svg")).read_bytes()
        second = write_plot(PlotSpec.curve(self.curve(), self.dir / "b.svg")).read_bytes()
        self.assertEqual(first, second)


class CommandTestCase(TempDirMixin, SimpleTestCase):
    def run_command(self, name: str, *args) -> str:
        stdout = io.StringIO()
        call_command(name, *[str(arg) for arg in args], stdout=stdout)
        return stdout.getvalue()

    def train(self, name="run", **overrides) -> Path:
        config = self.write_json(f"{name}.json", {**SMALL_RUN, **overrides})
        self.run_command("train", "--config", config, "--out", self.dir / name)
        return self.dir / name


class TrainCommandTest(CommandTestCase):
    def test_writes_checkpoint_trace_and_manifest(self):
        """Training should write the checkpoint, the loss trace and the manifest"""
        out = self.train()
        header, rows = read_csv(out / "loss_trace.csv")
        self.assertEqual(header, ["iteration", "method", "loss", "mse", "target_variance"])
        self.assertEqual([row[0] for row in rows], [1.0, 2.0, 3.0])
        self.assertTrue((out / "loss_trace.svg").exists())

        manifest = json.loads((out / "manifest.json").read_text())
        self.assertEqual(manifest["seed"], 0)
        self.assertEqual(set(manifest["versions"]), {"python", "django", "numpy", "scipy"})
        self.assertIn("checkpoint.json", manifest["outputs"])
        self.assertEqual(manifest["config"]["k"], 2)

    def test_zero_iterations_saves_the_fresh_bank(self):
        """Zero iterations should save the freshly initialized bank"""
        out = self.train(iterations=0)
        checkpoint = json.loads((out / "checkpoint.json").read_text())
        config = load_run_config(self.dir / "run.json").train_config()
        fresh, _ = initialize_system(config, 2)
        self.assertEqual(checkpoint["bank"], json.loads(json.dumps(bank_to_dict(fresh))))

        header, rows = read_csv(out / "loss_trace.csv")
        self.assertEqual(rows, [])
        self.assertFalse((out / "loss_trace.svg").exists())

    def test_same_seed_same_bytes(self):
        """Test that two runs with the same seed write identical files"""
        first = self.train("first")
        second = self.train("second")
        for name in ("checkpoint.json", "loss_trace.csv"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_seed_option_overrides_config(self):
        first = self.train("first")
        config = self.write_json("other.json", SMALL_RUN)
        self.run_command("train", "--config", config, "--out", self.dir / "other", "--seed", 5)
        other = self.dir / "other"
        self.assertNotEqual((first / "checkpoint.json").read_bytes(), (other / "checkpoint.json").read_bytes())
        self.assertEqual(json.loads((other / "manifest.json").read_text())["seed"], 5)

    def test_config_errors_exit_with_one(self):
        """Configuration errors should exit with the usage code"""
        config = self.write_json("run.json", {**SMALL_RUN, "unknown": 1})
        with self.assertRaises(CommandError) as cm:
            self.run_command("train", "--config", config, "--out", self.dir / "run")
        self.assertEqual(cm.exception.returncode, 1)

    def test_batch_not_exceeding_width_exits_with_one(self):
        """A batch no wider than the feature matrix should be rejected before training"""
        config = self.write_json("run.json", {**SMALL_RUN, "batch_size": 5})
        with self.assertRaises(CommandError) as cm:
            self.run_command("train", "--config", config, "--out", self.dir / "run")
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn("batch_size", str(cm.exception))

    def test_failing_oracle_exits_with_two(self):
        """A failing oracle should exit with the runtime code"""
        oracle = {"kind": "command", "argv": [sys.executable, "-c", "import sys; sys.exit(3)"], "d": 2}
        config = self.write_json("run.json", {**SMALL_RUN, "oracle": oracle})
        with self.assertRaises(CommandError) as cm:
            self.run_command("train", "--config", config, "--out", self.dir / "run")
        self.assertEqual(cm.exception.returncode, 2)

    def test_missing_config_exits_with_one(self):
        """A missing required option should exit with the usage code"""
        with redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as cm:
            TrainCommand().run_from_argv(["manage.py", "train"])
        self.assertEqual(cm.exception.code, 1)

    def test_non_integer_seed_exits_with_one(self):
        config = self.write_json("run.json", SMALL_RUN)
        argv = ["manage.py", "train", "--config", str(config), "--seed", "notanint"]
        with redirect_stderr(io.StringIO()) as stderr, self.assertRaises(SystemExit) as cm:
            TrainCommand().run_from_argv(argv)
        self.assertEqual(cm.exception.code, 1)
        self.assertIn("--seed", stderr.getvalue())

    def test_non_finite_values_exit_with_two(self):
        """Overflow inside the numerics should map to the runtime code"""
        with self.assertRaises(CommandError) as cm, command_errors():
            raise NonFiniteValueError("ridge-solve at w: right-hand side overflows")
        self.assertEqual(cm.exception.returncode, 2)


class ExplainCommandTest(CommandTestCase):
    def test_one_curve_per_feature(self):
        """Explaining should write one curve CSV per feature"""
        out = self.train()
        request = self.write_json("request.json", SMALL_REQUEST)
        self.run_command("explain", "--checkpoint", out / "checkpoint.json", "--request", request, "--out", out / "x")

        explained = out / "x"
        self.assertEqual(sorted(path.name for path in explained.glob("curve_*.csv")), ["curve_0.csv", "curve_1.csv"])
        self.assertEqual(sorted(path.name for path in explained.glob("curve_*.svg")), ["curve_0.svg", "curve_1.svg"])
        header, rows = read_csv(explained / "curve_0.csv")
        self.assertEqual(header, ["x", "contribution"])
        self.assertEqual(len(rows), 11)

        summary = json.loads((explained / "explanation.json").read_text())
        self.assertEqual(len(summary["importances"]), 2)
        manifest = json.loads((explained / "manifest.json").read_text())
        self.assertEqual(manifest["checkpoint_sha256"], summary["metadata"]["checkpoint_sha256"])

    def test_pair_heatmaps(self):
        """Requested pairs should produce adjusted and raw heatmap CSVs"""
        out = self.train(pairwise_enabled=True)
        request = self.write_json("request.json", {**SMALL_REQUEST, "pairs": [[0, 1]], "heatmap_resolution": 5})
        self.run_command("explain", "--checkpoint", out / "checkpoint.json", "--request", request, "--out", out / "x")

        for name in ("heatmap_0_1.csv", "heatmap_0_1_raw.csv"):
            header, rows = read_csv(out / "x" / name)
            self.assertEqual(header, ["x", "y", "value"])
            self.assertEqual(len(rows), 25)
        self.assertTrue((out / "x" / "heatmap_0_1.svg").exists())

    def test_raw_heatmaps_can_be_switched_off(self):
        """Without raw heatmaps neither the file nor its summary entry should appear"""
        out = self.train(pairwise_enabled=True, raw_heatmaps=False)
        request = self.write_json("request.json", {**SMALL_REQUEST, "pairs": [[0, 1]], "heatmap_resolution": 5})
        argv = ["--checkpoint", out / "checkpoint.json", "--request", request, "--config", self.dir / "run.json"]
        self.run_command("explain", *argv, "--out", out / "x")

        self.assertTrue((out / "x" / "heatmap_0_1.csv").exists())
        self.assertFalse((out / "x" / "heatmap_0_1_raw.csv").exists())
        summary = json.loads((out / "x" / "explanation.json").read_text())
        self.assertNotIn("raw_file", summary["heatmaps"][0])

    def test_pairs_without_pairwise_training(self):
        """Test that pairs against a bank without pair columns exit with the runtime code"""
        out = self.train()
        request = self.write_json("request.json", {**SMALL_REQUEST, "pairs": "all"})
        with self.assertRaises(CommandError) as cm:
            self.run_command("explain", "--checkpoint", out / "checkpoint.json", "--request", request)
        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn("pair", str(cm.exception))

    def test_version_mismatch_names_the_tag(self):
        """An unsupported checkpoint version should be named in the error"""
        out = self.train()
        checkpoint = json.loads((out / "checkpoint.json").read_text())
        checkpoint["format_version"] = 99
        path = self.write_json("old.json", checkpoint)
        request = self.write_json("request.json", SMALL_REQUEST)
        with self.assertRaises(CommandError) as cm:
            self.run_command("explain", "--checkpoint", path, "--request", request)
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn("format_version 99", str(cm.exception))

    def test_requests_and_output_from_config(self):
        """Requests and output directory should be taken from the configuration"""
        requests = [SMALL_REQUEST, {**SMALL_REQUEST, "center": [1.0, 1.0]}]
        out = self.train(explain=requests, out="explained")
        self.run_command("explain", "--checkpoint", out / "checkpoint.json", "--config", self.dir / "run.json")
        for index in (0, 1):
            self.assertTrue((self.dir / "explained" / f"request_{index}" / "curve_1.csv").exists())
        summary = json.loads((self.dir / "explained" / "request_1" / "explanation.json").read_text())
        self.assertEqual(summary["request"]["center"], [1.0, 1.0])

    def test_surrogate_without_surrogate(self):
        out = self.train()
        request = self.write_json("request.json", {**SMALL_REQUEST, "use_surrogate": True})
        with self.assertRaises(CommandError) as cm:
            self.run_command("explain", "--checkpoint", out / "checkpoint.json", "--request", request)
        self.assertEqual(cm.exception.returncode, 2)


class CompareWeightingCommandTest(CommandTestCase):
    def compare(self, *methods, out="compare") -> Path:
        config = self.write_json("compare.json", {**SMALL_RUN, "methods": list(methods)})
        self.run_command("compare_weighting", "--config", config, "--out", self.dir / out)
        return self.dir / out

    def test_one_method_one_series(self):
        """Each compared method should get one series in the traces CSV"""
        out = self.compare("linear-regression")
        _, rows = read_csv(out / "weighting_traces.csv")
        self.assertEqual({row[1] for row in rows}, {"linear-regression"})
        self.assertEqual(len(rows), 3)
        self.assertEqual((out / "weighting_traces.svg").read_text().count("<polyline"), 1)

    def test_series_per_method_and_determinism(self):
        """Every method should get a series and repeated comparisons should write identical traces"""
        first = self.compare("linear-regression", "cosine", "dot-softmax", out="first")
        second = self.compare("linear-regression", "cosine", "dot-softmax", out="second")
        self.assertEqual((first / "weighting_traces.svg").read_text().count("<polyline"), 3)
        self.assertEqual((first / "weighting_traces.csv").read_bytes(), (second / "weighting_traces.csv").read_bytes())

    def test_methods_option(self):
        config = self.write_json("compare.json", SMALL_RUN)
        self.run_command("compare_weighting", "--config", config, "--methods", "pearson", "--out", self.dir / "out")
        _, rows = read_csv(self.dir / "out" / "weighting_traces.csv")
        self.assertEqual({row[1] for row in rows}, {"pearson"})

    def test_unknown_method(self):
        config = self.write_json("compare.json", SMALL_RUN)
        with self.assertRaises(CommandError) as cm:
            self.run_command("compare_weighting", "--config", config, "--methods", "attention", "--out", self.dir)
        self.assertEqual(cm.exception.returncode, 1)


class OracleEvalCommandTest(CommandTestCase):
    def test_analytic_predictions(self):
        """Analytic oracle predictions should be written one per input row"""
        config = self.write_json("run.json", SMALL_RUN)
        points = self.write_text("points.csv", "a,b\n1,2\n-3,0.5\n")
        self.run_command("oracle_eval", "--config", config, "--input", points, "--out", self.dir / "eval")

        header, rows = read_csv(self.dir / "eval" / "predictions.csv")
        self.assertEqual(header, ["a", "b", "y"])
        self.assertEqual([row[2] for row in rows], [1.0 + 0.5 * 2.0, 9.0 + 0.5 * 0.5])

    def test_file_oracle_reports_distances(self):
        """File oracles should report the distance to the matched row"""
        self.write_text("predictions.csv", "0,0,1\n1,1,5\n")
        config = self.write_json("run.json", {**SMALL_RUN, "oracle": {"kind": "file", "path": "predictions.csv"}})
        points = self.write_text("points.csv", "0.9,1\n")
        self.run_command("oracle_eval", "--config", config, "--input", points, "--out", self.dir / "eval")

        header, rows = read_csv(self.dir / "eval" / "predictions.csv")
        self.assertEqual(header, ["x0", "x1", "y", "distance"])
        self.assertEqual(rows[0][2], 5.0)
        self.assertAlmostEqual(rows[0][3], 0.1)

    def test_dimension_mismatch(self):
        """Inputs with the wrong width should exit with the usage code"""
        config = self.write_json("run.json", SMALL_RUN)
        points = self.write_text("points.csv", "1,2,3\n")
        with self.assertRaises(CommandError) as cm:
            self.run_command("oracle_eval", "--config", config, "--input", points, "--out", self.dir)
        self.assertEqual(cm.exception.returncode, 1)
