"""
Train a basis bank against an oracle and save the checkpoint

Usage:
    python manage.py train --config run.json [--out output/] [--seed 3]

Writes checkpoint.json, loss_trace.csv (plus loss_trace.svg) and manifest.json.
"""

from basis.serializers import checkpoint_checksum, checkpoint_to_dict
from cli_io.forms import load_run_config
from cli_io.manifest import MANIFEST_FILENAME, build_manifest, write_manifest
from cli_io.plots import PlotSpec, write_plot
from cli_io.runs import (
    CHECKPOINT_FILENAME,
    TRACE_FILENAME,
    TRACE_PLOT_FILENAME,
    RunCommand,
    command_errors,
    load_features,
    oracle_from_config,
    oracle_metadata,
    output_dir,
    save_checkpoint,
    write_traces,
)
from trainer.training import build_optimizer, initialize_system, train


class Command(RunCommand):
    help = "Train a basis bank against the configured oracle"

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Run configuration JSON")
        parser.add_argument("--out", help="Output directory (default: `out` from the config, then AFEX_OUTPUT_DIR)")
        parser.add_argument("--seed", type=int, help="Overrides the seed of the configuration")

    def handle(self, *args, **options):
        with command_errors():
            form = load_run_config(options["config"])
            config = form.train_config(options["seed"])
            dataset = load_features(form)
            oracle = oracle_from_config(form)
            config.validate(oracle.d, has_dataset=dataset is not None)
            if dataset is not None and dataset.shape[1] != oracle.d:
                raise ValueError(f"The dataset has {dataset.shape[1]} features, the oracle expects {oracle.d}")
            out = output_dir(options["out"], form)

            self.stdout.write(f"Training {config.method.value} on {oracle!r} for {config.iterations} iterations...")
            bank, surrogate = initialize_system(config, oracle.d, dataset)
            optimizer = build_optimizer(bank, surrogate, config)
            report = train(bank, surrogate, oracle, config, dataset, optimizer)

            document = checkpoint_to_dict(
                bank,
                surrogate.to_dict() if surrogate is not None else None,
                report.optimizer_state,
                metadata={
                    "config": config.to_dict(),
                    "oracle": oracle_metadata(form),
                    "iterations_run": report.iterations_run,
                    "path_counts": report.path_counts,
                },
            )
            checkpoint_path = save_checkpoint(out / CHECKPOINT_FILENAME, document)
            outputs = [checkpoint_path.name, write_traces(out / TRACE_FILENAME, [report]).name]
            if form.export_plots and report.iterations_run:
                plot = PlotSpec.loss_trace({config.method.value: report.mse}, out / TRACE_PLOT_FILENAME)
                outputs.append(write_plot(plot).name)

            checksum = checkpoint_checksum(document)
            outputs.append(MANIFEST_FILENAME)
            write_manifest(out, build_manifest("train", config.seed, config.to_dict(), outputs, checksum))

        if report.final_loss is not None:
            self.stdout.write(f"Final loss {report.final_loss:.6g} (mse {report.mse[-1]:.6g})")
        self.stdout.write(self.style.SUCCESS(f"✓ Checkpoint written to {checkpoint_path} (sha256 {checksum[:12]})"))
