"""
Evaluate the configured oracle on the rows of a CSV file

Usage:
    python manage.py oracle_eval --config run.json --input points.csv [--checkpoint checkpoint.json] [--out output/]

The input holds one point per row (d numeric columns, optional header).
Writes predictions.csv with the input columns followed by `y`; file oracles
add the distance to the stored row that answered.
"""

from pathlib import Path

import numpy as np

from cli_io.datasets import parse_numeric_rows, write_csv
from cli_io.forms import load_run_config
from cli_io.runs import RunCommand, command_errors, load_checkpoint, oracle_from_config, output_dir
from oracle.oracles import FileOracle, eval_file

PREDICTIONS_FILENAME = "predictions.csv"


class Command(RunCommand):
    help = "Evaluate an oracle on a CSV of input rows"

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Run configuration JSON providing the oracle")
        parser.add_argument("--input", required=True, help="CSV of input rows")
        parser.add_argument("--checkpoint", help="Checkpoint providing the surrogate for oracle kind `surrogate`")
        parser.add_argument("--out", help="Output directory (default: `out` from the config, then AFEX_OUTPUT_DIR)")

    def handle(self, *args, **options):
        with command_errors():
            form = load_run_config(options["config"])
            surrogate = load_checkpoint(options["checkpoint"])[2] if options["checkpoint"] else None
            oracle = oracle_from_config(form, surrogate)

            path = Path(options["input"])
            header, X = parse_numeric_rows(path.read_text(encoding="utf-8"), str(path))
            if X.shape[1] != oracle.d:
                raise ValueError(f"{path} has {X.shape[1]} columns, the oracle expects {oracle.d}")
            names = header or [f"x{index}" for index in range(oracle.d)]

            if isinstance(oracle, FileOracle):
                y, distances = eval_file(oracle, X)
                rows = np.column_stack([X, y, distances])
                names = [*names, "y", "distance"]
            else:
                rows = np.column_stack([X, oracle(X)])
                names = [*names, "y"]

            target = write_csv(output_dir(options["out"], form) / PREDICTIONS_FILENAME, names, rows.tolist())

        self.stdout.write(self.style.SUCCESS(f"✓ {X.shape[0]} predictions of {oracle!r} written to {target}"))
