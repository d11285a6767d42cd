"""
Black-box prediction sources queried by training and explanation.

An oracle maps an n×d matrix of points to n finite predictions. Builtins
cover the synthetic test functions; prediction files and external commands
let users plug in their own models.
"""

import logging
import subprocess
import threading
from pathlib import Path
from typing import Protocol

import numpy as np
import scipy.spatial

from afex_explainer.env import getEnvConfig
from oracle.tables import format_cell, load_csv_dataset

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


class UnknownOracleError(ValueError):
    pass


class Predictor(Protocol):
    d: int

    def predict(self, X) -> np.ndarray: ...


class Oracle:
    kind = "oracle"

    def __init__(self, d: int):
        if d < 1:
            raise ValueError(f"An oracle needs at least one input dimension, got {d}")
        self.d = d

    def __call__(self, X) -> np.ndarray:
        X = self.check_inputs(X)
        y = np.asarray(self.evaluate(X), dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise OracleError(f"{self} returned {y.shape[0]} predictions for {X.shape[0]} rows")
        if not np.all(np.isfinite(y)):
            raise OracleError(f"{self} returned non-finite predictions")
        return y

    def check_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"{self} expects an n×{self.d} matrix, got shape {X.shape}")
        return X

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "d": self.d}

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d})"


# Builtin functions


def _conditional(X):
    return np.where(X[:, 1] >= 0.0, X[:, 0] ** 2, X[:, 0])


def _chessboard(X):
    left = np.sin(X[:, 0] * np.pi / 2) > 0
    right = np.sin(X[:, 1] * np.pi / 2) > 0
    return (left != right).astype(np.float64)


def _product(X):
    return X[:, 0] * X[:, 1]


def _wedge(X):
    return (2.0 * np.abs(X[:, 0]) > np.abs(X[:, 1])).astype(np.float64)


def _quad_linear(X):
    return X[:, 0] ** 2 + 0.5 * X[:, 1]


# name -> (function, minimum dimension, dimension of the reference setup)
ANALYTIC_FUNCTIONS = {
    "conditional": (_conditional, 2, 2),
    "chessboard": (_chessboard, 5, 5),
    "product": (_product, 2, 2),
    "wedge": (_wedge, 5, 5),
    "quad-linear": (_quad_linear, 2, 2),
}


class AnalyticOracle(Oracle):
    """One of the builtin test functions; coordinates past the ones it reads are ignored."""

    kind = "analytic"

    def __init__(self, name: str, d: int | None = None):
        if name not in ANALYTIC_FUNCTIONS:
            choices = ", ".join(sorted(ANALYTIC_FUNCTIONS))
            raise UnknownOracleError(f"Unknown analytic oracle `{name}`, expected one of: {choices}")
        function, minimum, default = ANALYTIC_FUNCTIONS[name]
        d = default if d is None else d
        if d < minimum:
            raise ValueError(f"Analytic oracle `{name}` needs at least {minimum} features, got {d}")
        super().__init__(d)
        self.name = name
        self.function = function

    def evaluate(self, X):
        return self.function(X)

    def describe(self) -> dict:
        return {**super().describe(), "name": self.name}

    def __repr__(self):
        return f"AnalyticOracle({self.name}, d={self.d})"


def eval_analytic(name: str, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"Expected an n×d matrix, got shape {X.shape}")
    return AnalyticOracle(name, X.shape[1])(X)


class FileOracle(Oracle):
    """Nearest stored row under Euclidean distance; no interpolation."""

    kind = "file"

    def __init__(self, X, y, path=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise OracleError("A prediction file oracle needs at least one stored row")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} stored rows but {y.shape[0]} stored predictions")
        super().__init__(X.shape[1])
        self.X = X
        self.y = y
        self.path = path
        self.tree = scipy.spatial.KDTree(X)

    @classmethod
    def from_csv(cls, path) -> "FileOracle":
        X, y = load_csv_dataset(path)
        logger.info("Loaded prediction file %s with %s rows", path, X.shape[0])
        return cls(X, y, path=str(path))

    def lookup(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Stored predictions of the nearest rows together with their distances."""
        X = self.check_inputs(X)
        distances, indices = self.tree.query(X, k=1)
        return self.y[indices], np.asarray(distances, dtype=np.float64)

    def evaluate(self, X):
        return self.lookup(X)[0]

    def describe(self) -> dict:
        return {**super().describe(), "path": self.path, "rows": int(self.X.shape[0])}


def eval_file(oracle: FileOracle, X) -> tuple[np.ndarray, np.ndarray]:
    return oracle.lookup(X)


class CommandOracle(Oracle):
    """
    External program: CSV rows on stdin, one real per line on stdout.

    Invocations on one instance are serialized.
    """

    kind = "command"

    def __init__(self, argv: list[str], d: int, timeout: float | None = None, cwd=None):
        if not argv:
            raise ValueError("A command oracle needs a non-empty argv")
        super().__init__(d)
        self.argv = [str(arg) for arg in argv]
        self.timeout = timeout if timeout is not None else getEnvConfig().AFEX_COMMAND_TIMEOUT_SECONDS
        self.cwd = cwd
        self._lock = threading.Lock()

    def evaluate(self, X):
        payload = "".join(",".join(format_cell(float(value)) for value in row) + "\n" for row in X)
        with self._lock:
            try:
                completed = subprocess.run(
                    self.argv,
                    input=payload,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                    cwd=self.cwd,
                    check=False,
                )
            except (OSError, subprocess.TimeoutExpired) as e:
                logger.exception("Command oracle %s failed to run", self.argv[0])
                raise OracleError(f"Command oracle `{' '.join(self.argv)}` failed: {e}") from e

        if completed.returncode != 0:
            stderr = completed.stderr.strip().splitlines()[-5:]
            raise OracleError(f"Command oracle exited with status {completed.returncode}: {' | '.join(stderr)}")

        lines = [line.strip() for line in completed.stdout.splitlines() if line.strip()]
        if len(lines) != X.shape[0]:
            raise OracleError(f"Command oracle printed {len(lines)} values for {X.shape[0]} rows")
        try:
            return np.array([float(line) for line in lines], dtype=np.float64)
        except ValueError as e:
            raise OracleError(f"Command oracle printed a malformed value: {e}") from e

    def describe(self) -> dict:
        return {**super().describe(), "argv": self.argv}

    def __repr__(self):
        return f"CommandOracle({self.argv[0]}, d={self.d})"


def eval_command(oracle: CommandOracle, X) -> np.ndarray:
    return oracle(X)


class SurrogateOracle(Oracle):
    """Predictions of a trained surrogate network standing in for the black box."""

    kind = "surrogate"

    def __init__(self, surrogate: Predictor):
        super().__init__(surrogate.d)
        self.surrogate = surrogate

    def evaluate(self, X):
        return self.surrogate.predict(X)


def build_oracle(spec: dict, surrogate: Predictor | None = None, base_dir=None) -> Oracle:
    """
    Oracle from its JSON specification.

    Args:
        spec: Dict with a `kind` key (analytic, file, command or surrogate) and kind-specific keys
        surrogate: Trained surrogate, required for kind `surrogate`
        base_dir: Directory relative file paths are resolved against

    Raises:
        UnknownOracleError: If the kind or the analytic name is unknown
        ValueError: If keys are missing
    """
    if not isinstance(spec, dict):
        raise ValueError("The oracle specification must be a JSON object")
    kind = spec.get("kind")

    def resolve(value):
        path = Path(value)
        return path if path.is_absolute() or base_dir is None else Path(base_dir) / path

    try:
        if kind == "analytic":
            return AnalyticOracle(spec["name"], spec.get("d"))
        if kind == "file":
            return FileOracle.from_csv(resolve(spec["path"]))
        if kind == "command":
            return CommandOracle(spec["argv"], int(spec["d"]), spec.get("timeout"), cwd=base_dir)
        if kind == "surrogate":
            if surrogate is None:
                raise ValueError("Oracle kind `surrogate` needs a checkpoint trained with a surrogate")
            return SurrogateOracle(surrogate)
    except KeyError as e:
        raise ValueError(f"Oracle specification of kind `{kind}` is missing key {e}") from e
    raise UnknownOracleError(f"Unknown oracle kind {kind!r}, expected analytic, file, command or surrogate")
