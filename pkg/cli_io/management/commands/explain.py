"""
Explain points with a trained checkpoint

Usage:
    python manage.py explain --checkpoint output/checkpoint.json --request point.json [--config run.json]

The oracle comes from --config when given, otherwise from the run that
produced the checkpoint. Requests come from --request, otherwise from the
`explain` list of the configuration. Each request writes explanation.json,
curve_<i>.csv for every feature and heatmap_<i>_<s>.csv (plus the raw
cross-term grid) for every requested pair, with an SVG next to each CSV.
"""

from dataclasses import replace
from pathlib import Path

from basis.serializers import checkpoint_checksum
from cli_io.datasets import write_csv
from cli_io.files import atomic_write_json
from cli_io.forms import load_explain_requests, load_run_config
from cli_io.manifest import MANIFEST_FILENAME, build_manifest, write_manifest
from cli_io.plots import PlotSpec, write_plot
from cli_io.runs import RunCommand, command_errors, load_checkpoint, oracle_from_config, output_dir
from explain.explanations import CapabilityError, explain_point, rank_features
from explain.serializers import (
    CURVE_HEADER,
    HEATMAP_HEADER,
    curve_filename,
    curve_rows,
    explanation_to_dict,
    heatmap_filename,
    heatmap_rows,
)
from oracle.oracles import SurrogateOracle, build_oracle

EXPLANATION_FILENAME = "explanation.json"


def _svg(name: str) -> str:
    return str(Path(name).with_suffix(".svg"))


class Command(RunCommand):
    help = "Explain points with a trained basis bank"

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", required=True, help="Checkpoint JSON written by `train`")
        parser.add_argument("--request", help="Explain request JSON (one object or a list)")
        parser.add_argument("--config", help="Run configuration providing the oracle and default requests")
        parser.add_argument("--out", help="Output directory (default: `out` from the config, then AFEX_OUTPUT_DIR)")
        parser.add_argument("--seed", type=int, help="Overrides the sampling seed of every request")

    def handle(self, *args, **options):
        with command_errors():
            document, bank, surrogate = load_checkpoint(options["checkpoint"])
            checksum = checkpoint_checksum(document)
            form = load_run_config(options["config"]) if options["config"] else None

            if options["request"]:
                requests = load_explain_requests(options["request"])
            elif form is not None and form.cleaned_data["explain"]:
                requests = form.cleaned_data["explain"]
            else:
                raise ValueError("No explain request: pass --request or an `explain` list in --config")
            if options["seed"] is not None:
                requests = [replace(request, seed=options["seed"]) for request in requests]

            out = output_dir(options["out"], form)
            plots = form.export_plots if form is not None else True
            raw_heatmaps = form.export_raw_heatmaps if form is not None else True
            train_config = document.get("metadata", {}).get("config", {})
            oracle = None
            outputs = []

            for index, request in enumerate(requests):
                if request.use_surrogate:
                    if surrogate is None:
                        raise CapabilityError("The request asks for the surrogate but the checkpoint has none")
                    source = SurrogateOracle(surrogate)
                else:
                    oracle = oracle or self.resolve_oracle(form, document, surrogate)
                    source = oracle

                explanation = explain_point(
                    bank, source, request, train_config.get("lambda_ridge"), train_config.get("rank_tolerance")
                )
                target = out if len(requests) == 1 else out / f"request_{index}"
                written = self.export(explanation, target, checksum, plots, raw_heatmaps)
                outputs.extend(str(path.relative_to(out)) for path in written)

                feature, importance = rank_features(explanation)[0]
                self.stdout.write(
                    f"Explained {list(request.center)}: residual mse {explanation.residual_mse:.6g}, "
                    f"most important feature x{feature} ({importance:.6g})"
                )

            outputs.append(MANIFEST_FILENAME)
            config_echo = {
                "checkpoint": str(options["checkpoint"]),
                "requests": [request.to_dict() for request in requests],
            }
            seed = requests[0].seed if len(requests) == 1 else None
            write_manifest(out, build_manifest("explain", seed, config_echo, outputs, checksum))

        self.stdout.write(self.style.SUCCESS(f"✓ {len(requests)} explanation(s) written to {out}"))

    def resolve_oracle(self, form, document, surrogate):
        if form is not None:
            return oracle_from_config(form, surrogate)
        oracle = document.get("metadata", {}).get("oracle")
        if not oracle:
            raise ValueError("The checkpoint does not record its oracle; pass --config")
        return build_oracle(oracle["spec"], surrogate=surrogate, base_dir=oracle.get("base_dir"))

    def export(self, explanation, target: Path, checksum: str, plots: bool, raw_heatmaps: bool) -> list[Path]:
        metadata = {"checkpoint_sha256": checksum}
        document = explanation_to_dict(explanation, metadata, raw_heatmaps)
        written = [atomic_write_json(target / EXPLANATION_FILENAME, document)]

        for curve in explanation.curves:
            name = curve_filename(curve.feature)
            written.append(write_csv(target / name, CURVE_HEADER, curve_rows(curve)))
            if plots:
                title = f"Shape function of x{curve.feature}"
                written.append(write_plot(PlotSpec.curve(curve, target / _svg(name), title)))

        for heatmap in explanation.heatmaps:
            i, s = heatmap.features
            variants = [False, True] if raw_heatmaps else [False]
            for raw in variants:
                name = heatmap_filename(i, s, raw)
                written.append(write_csv(target / name, HEATMAP_HEADER, heatmap_rows(heatmap, raw)))
                if plots:
                    title = f"{'Cross terms' if raw else 'Joint contribution'} of x{i} and x{s}"
                    written.append(write_plot(PlotSpec.heatmap(heatmap, target / _svg(name), raw, title)))
        return written
