"""
Train one system per column weighting method and compare their loss traces

Usage:
    python manage.py compare_weighting --config run.json [--methods linear-regression,cosine] [--out output/]

Every method runs from the same seed. Writes weighting_traces.csv (one row per
method and iteration), weighting_traces.svg with one series per method, and
manifest.json.
"""

import numpy as np

from cli_io.forms import load_run_config
from cli_io.manifest import MANIFEST_FILENAME, build_manifest, write_manifest
from cli_io.plots import PlotSpec, write_plot
from cli_io.runs import RunCommand, command_errors, load_features, oracle_from_config, output_dir, write_traces
from trainer.training import compare_weighting
from weighting.regression import WeightingMethod

TRACES_FILENAME = "weighting_traces.csv"
TRACES_PLOT_FILENAME = "weighting_traces.svg"


class Command(RunCommand):
    help = "Compare the column weighting methods on identical training runs"

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Run configuration JSON")
        parser.add_argument("--methods", help="Comma separated methods (default: `methods` from the config, then all)")
        parser.add_argument("--out", help="Output directory (default: `out` from the config, then AFEX_OUTPUT_DIR)")
        parser.add_argument("--seed", type=int, help="Overrides the seed of the configuration")
        parser.add_argument("--workers", type=int, help="Methods trained in parallel (default: one thread each)")

    def handle(self, *args, **options):
        with command_errors():
            form = load_run_config(options["config"])
            config = form.train_config(options["seed"])
            if options["methods"]:
                methods = [WeightingMethod.parse(name.strip()) for name in options["methods"].split(",")]
            else:
                methods = form.cleaned_data["methods"] or list(WeightingMethod)
            dataset = load_features(form)
            oracle = oracle_from_config(form)
            out = output_dir(options["out"], form)

            self.stdout.write(f"Comparing {', '.join(method.value for method in methods)} on {oracle!r}...")
            reports = compare_weighting(oracle, config, methods, dataset, options["workers"])

            outputs = [write_traces(out / TRACES_FILENAME, list(reports.values())).name]
            if form.export_plots and config.iterations:
                traces = {method.value: report.mse for method, report in reports.items()}
                plot = PlotSpec.loss_trace(traces, out / TRACES_PLOT_FILENAME, "Column weighting comparison")
                outputs.append(write_plot(plot).name)
            outputs.append(MANIFEST_FILENAME)
            echo = {**config.to_dict(), "methods": [method.value for method in methods]}
            write_manifest(out, build_manifest("compare_weighting", config.seed, echo, outputs))

        for method, report in reports.items():
            if report.iterations_run:
                relative = np.mean(report.mse[-10:]) / max(np.mean(report.target_variances[-10:]), 1e-300)
                self.stdout.write(f"  {method.value:<18} final mse {report.mse[-1]:.6g} ({relative:.1%} of variance)")
        self.stdout.write(self.style.SUCCESS(f"✓ Traces written to {out / TRACES_FILENAME}"))
