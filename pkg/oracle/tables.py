"""
Numeric CSV tables.

Datasets are numeric CSV files whose last column is the target; a header row
is allowed and recognized by its first row not being numeric.
"""

import csv
import io
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(f"{message}{where}")


def is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_numeric_rows(text: str, source: str = "<text>") -> tuple[list[str] | None, np.ndarray]:
    """
    Parse CSV text into a float matrix.

    Returns:
        Tuple of (header or None, n×c array)

    Raises:
        DatasetFormatError: On empty input, ragged rows or non-numeric cells (1-based coordinates)
    """
    rows = [row for row in csv.reader(io.StringIO(text)) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DatasetFormatError(f"{source} contains no rows")

    header = None
    first_line = 1
    if not all(is_number(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        first_line = 2
        if not rows:
            raise DatasetFormatError(f"{source} has a header but no data rows")

    width = len(header) if header is not None else len(rows[0])
    values = np.empty((len(rows), width), dtype=np.float64)
    for offset, row in enumerate(rows):
        line = first_line + offset
        if len(row) != width:
            raise DatasetFormatError(f"{source}: expected {width} columns, found {len(row)}", row=line)
        for column, cell in enumerate(row):
            try:
                values[offset, column] = float(cell)
            except ValueError:
                raise DatasetFormatError(f"{source}: non-numeric cell {cell!r}", row=line, column=column + 1) from None
    return header, values


def load_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset CSV: every column but the last is a feature, the last one is the target."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetFormatError(f"Cannot read dataset {path}: {e.strerror}") from e
    header, values = parse_numeric_rows(text, source=str(path))
    if values.shape[1] < 2:
        raise DatasetFormatError(f"{path} needs at least one feature column and a target column")
    if not np.all(np.isfinite(values)):
        row, column = np.argwhere(~np.isfinite(values))[0]
        line = int(row) + (2 if header else 1)
        raise DatasetFormatError(f"{path}: non-finite value", row=line, column=int(column) + 1)
    logger.debug("Loaded %s rows with %s features from %s", values.shape[0], values.shape[1] - 1, path)
    return values[:, :-1].copy(), values[:, -1].copy()


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
