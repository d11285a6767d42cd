"""
CSV export.

Every CSV the commands emit goes through write_csv, which writes floats in
their shortest round-trip form. Dataset parsing lives in oracle.tables.
"""

import csv
import io
from pathlib import Path

from cli_io.files import atomic_write_text
from oracle.tables import DatasetFormatError, format_cell, is_number, load_csv_dataset, parse_numeric_rows

__all__ = [
    "DatasetFormatError",
    "format_csv",
    "load_csv_dataset",
    "parse_numeric_rows",
    "read_csv",
    "write_csv",
]


def format_csv(header: list[str], rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


def write_csv(path, header: list[str], rows) -> Path:
    return atomic_write_text(path, format_csv(header, rows))


def read_csv(path) -> tuple[list[str], list[list]]:
    """Inverse of write_csv: numeric cells come back as floats, anything else as text."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError(f"{path} is empty")
        rows = [[float(cell) if is_number(cell) else cell for cell in row] for row in reader if row]
    return header, rows
