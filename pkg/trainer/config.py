"""Training hyperparameters."""

from dataclasses import asdict, dataclass, field

from afex_explainer.env import getEnvConfig
from basis.bank import DEFAULT_ALPHA, DEFAULT_HIDDEN_SIZES
from trainer.surrogate import DEFAULT_SURROGATE_SIZES
from weighting.regression import WeightingMethod

CENTER_SOURCES = ("normal", "dataset")


def _default_k() -> int:
    return getEnvConfig().AFEX_DEFAULT_K


def _default_ridge_lambda() -> float:
    return getEnvConfig().AFEX_RIDGE_LAMBDA


def _default_rank_tolerance() -> float:
    return getEnvConfig().AFEX_RANK_TOLERANCE


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1000
    iterations: int = 2000
    learning_rate: float = 1e-3
    center_stddev: float = 1.0
    # Half-width of the uniform sampling box around each centre
    local_radius: float = 0.5
    k: int = field(default_factory=_default_k)
    lambda_ridge: float = field(default_factory=_default_ridge_lambda)
    rank_tolerance: float = field(default_factory=_default_rank_tolerance)
    surrogate_enabled: bool = False
    lambda_surrogate: float = 1.0
    pairwise_enabled: bool = False
    seed: int = 0
    method: WeightingMethod = WeightingMethod.LINEAR_REGRESSION
    lambda_linear: float = 0.0
    center_source: str = "normal"
    radius_fraction: float = 0.1
    standardize: bool = False
    hidden_sizes: tuple = DEFAULT_HIDDEN_SIZES
    surrogate_sizes: tuple = DEFAULT_SURROGATE_SIZES
    alpha_init: float = DEFAULT_ALPHA

    def width(self, d: int) -> int:
        """Columns of the assembled feature matrix for d features."""
        pairs = self.k * self.k * d * (d - 1) // 2 if self.pairwise_enabled else 0
        return self.k * d + pairs + (1 if self.method.uses_bias else 0)

    def validate(self, d: int, has_dataset=False) -> "TrainConfig":
        """
        Check the configuration against the input dimension.

        Raises:
            ValueError: Naming the first offending field
        """
        if not isinstance(self.method, WeightingMethod):
            raise ValueError(f"method must be a WeightingMethod, got {self.method!r}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be non-negative, got {self.iterations}")
        for name in ("learning_rate", "center_stddev", "local_radius", "lambda_ridge", "radius_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda_surrogate", "lambda_linear", "rank_tolerance"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.center_source not in CENTER_SOURCES:
            raise ValueError(f"center_source must be one of {', '.join(CENTER_SOURCES)}, got {self.center_source!r}")
        if self.center_source == "dataset" and not has_dataset:
            raise ValueError("center_source `dataset` needs a dataset")
        if self.pairwise_enabled and d < 2:
            raise ValueError("pairwise_enabled needs at least two features")
        if any(size < 1 for size in (*self.hidden_sizes, *self.surrogate_sizes)):
            raise ValueError("hidden_sizes and surrogate_sizes must be positive")
        width = self.width(d)
        if self.batch_size <= width:
            raise ValueError(f"batch_size ({self.batch_size}) must exceed the feature matrix width ({width})")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data["method"] = self.method.value
        data["hidden_sizes"] = list(self.hidden_sizes)
        data["surrogate_sizes"] = list(self.surrogate_sizes)
        return data
