"""
Pieces shared by the management commands.

Exit codes: 1 for usage and configuration errors (the ValueError family and
missing files), 2 for runtime and numerical failures (the RuntimeError family
and other OS errors).
"""

import logging
import sys
from contextlib import contextmanager
from functools import partial
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from basis.bank import BasisBank
from basis.serializers import CheckpointFormatError, bank_from_dict, dumps_checkpoint, loads_checkpoint
from cli_io.datasets import load_csv_dataset, write_csv
from cli_io.files import atomic_write_text
from cli_io.forms import RunConfigForm
from oracle.oracles import Oracle, build_oracle
from trainer.surrogate import SurrogateNet
from trainer.training import TrainReport

logger = logging.getLogger(__name__)

USAGE_ERROR = 1
RUNTIME_ERROR = 2

CHECKPOINT_FILENAME = "checkpoint.json"
TRACE_FILENAME = "loss_trace.csv"
TRACE_PLOT_FILENAME = "loss_trace.svg"
TRACE_HEADER = ["iteration", "method", "loss", "mse", "target_variance"]


def _usage_error(parser, message):
    if not parser.called_from_command_line:
        raise CommandError(f"Error: {message}", returncode=USAGE_ERROR)
    parser.print_usage(sys.stderr)
    parser.exit(USAGE_ERROR, f"{parser.prog}: error: {message}\n")


class RunCommand(BaseCommand):
    """Base of the project commands: bad or missing arguments exit with USAGE_ERROR."""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser


@contextmanager
def command_errors():
    try:
        yield
    except CommandError:
        raise
    except (ValueError, FileNotFoundError) as e:
        raise CommandError(str(e), returncode=USAGE_ERROR) from e
    except (RuntimeError, ArithmeticError, OSError) as e:
        logger.exception("Command failed")
        raise CommandError(str(e), returncode=RUNTIME_ERROR) from e


def output_dir(out_option: str | None, form: RunConfigForm | None = None) -> Path:
    """--out, then the configuration's `out`, then AFEX_OUTPUT_DIR."""
    if out_option:
        return Path(out_option)
    if form is not None and form.cleaned_data.get("out"):
        return form.base_dir / form.cleaned_data["out"]
    return Path(settings.AFEX_OUTPUT_DIR)


def load_features(form: RunConfigForm) -> np.ndarray | None:
    """Feature columns of the configured dataset; the target column is dropped."""
    path = form.cleaned_data.get("dataset")
    if path is None:
        return None
    X, _ = load_csv_dataset(path)
    return X


def oracle_from_config(form: RunConfigForm, surrogate: SurrogateNet | None = None) -> Oracle:
    return build_oracle(form.cleaned_data["oracle"], surrogate=surrogate, base_dir=form.base_dir)


def oracle_metadata(form: RunConfigForm) -> dict:
    return {"spec": form.cleaned_data["oracle"], "base_dir": str(Path(form.base_dir).resolve())}


def save_checkpoint(path, document: dict) -> Path:
    return atomic_write_text(path, dumps_checkpoint(document))


def load_checkpoint(path) -> tuple[dict, BasisBank, SurrogateNet | None]:
    """
    Raises:
        FileNotFoundError: If the checkpoint does not exist
        CheckpointFormatError: On an unknown format_version or column_order tag
    """
    path = Path(path)
    document = loads_checkpoint(path.read_text(encoding="utf-8"))
    if not isinstance(document.get("bank"), dict):
        raise CheckpointFormatError(f"{path} has no basis bank")
    bank = bank_from_dict(document["bank"])
    try:
        surrogate = SurrogateNet.from_dict(document["surrogate"]) if document.get("surrogate") else None
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"Malformed surrogate in {path}: missing or invalid {e}") from e
    logger.info("Loaded checkpoint %s: d=%s, k=%s, pairwise=%s", path, bank.d, bank.k, bank.pairwise)
    return document, bank, surrogate


def trace_rows(report: TrainReport) -> list[tuple]:
    return [
        (iteration + 1, report.method.value, loss, mse, variance)
        for iteration, (loss, mse, variance) in enumerate(zip(report.losses, report.mse, report.target_variances))
    ]


def write_traces(path, reports: list[TrainReport]) -> Path:
    return write_csv(path, TRACE_HEADER, [row for report in reports for row in trace_rows(report)])
