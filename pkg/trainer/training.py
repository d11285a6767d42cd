"""
End-to-end training of the basis bank.

Every iteration draws a batch around a random centre, builds the feature
matrix with fresh graph nodes for all parameters, solves the column weights
from scratch, and backpropagates the loss through the solve into the
subnetworks (and the surrogate when enabled).
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from autodiff.graph import NonFiniteValueError, add, backward, constant, forward, input_node, mean, scale, square, sub
from autodiff.nn import ParameterBinding
from basis.bank import BasisBank, FeatureTransform
from basis.features import assemble_feature_matrix
from oracle.oracles import Oracle, OracleError
from trainer.config import TrainConfig
from trainer.optim import Adam
from trainer.surrogate import SurrogateNet
from weighting.regression import SolvePath, WeightingMethod, prediction_node, solve_weights

logger = logging.getLogger(__name__)

LOG_EVERY = 100
PILOT_BATCHES = 10


class TrainingAbortedError(RuntimeError):
    def __init__(self, iteration: int, reason: str):
        self.iteration = iteration
        super().__init__(f"Training aborted at iteration {iteration}: {reason}")


@dataclass(frozen=True)
class StepResult:
    loss: float
    mse: float
    target_variance: float
    path: SolvePath | None


@dataclass
class TrainReport:
    method: WeightingMethod
    losses: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    target_variances: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    path_counts: dict = field(default_factory=lambda: {path.value: 0 for path in SolvePath})
    optimizer_state: dict | None = None

    @property
    def final_loss(self) -> float | None:
        return self.losses[-1] if self.losses else None

    @property
    def iterations_run(self) -> int:
        return len(self.losses)

    def record(self, result: StepResult):
        self.losses.append(result.loss)
        self.mse.append(result.mse)
        self.target_variances.append(result.target_variance)
        if result.path is not None:
            self.path_counts[result.path.value] += 1


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for initialization, batch sampling and the standardization pilot."""
    return tuple(np.random.default_rng(sequence) for sequence in np.random.SeedSequence(seed).spawn(3))


def sample_batch(
    config: TrainConfig, rng: np.random.Generator, oracle: Oracle, dataset: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw one training batch.

    The centre is either Normal(0, center_stddev²) per coordinate or a random
    dataset row; rows are uniform in the box around it whose half-width is
    local_radius (normal centres) or radius_fraction/2 of each feature's
    range (dataset centres).

    Returns:
        Tuple of (X, y) with X of shape batch_size×d

    Raises:
        OracleError: If the oracle fails, with the batch centre in the message
    """
    d = oracle.d
    if config.center_source == "dataset":
        if dataset is None or len(dataset) == 0:
            raise ValueError("Dataset-centred sampling needs dataset rows")
        center = dataset[rng.integers(dataset.shape[0])]
        half_width = config.radius_fraction / 2 * (dataset.max(axis=0) - dataset.min(axis=0))
    else:
        center = rng.normal(0.0, config.center_stddev, size=d)
        half_width = np.full(d, config.local_radius)
    X = rng.uniform(center - half_width, center + half_width, size=(config.batch_size, d))
    try:
        y = oracle(X)
    except OracleError as e:
        raise OracleError(f"Oracle failed on the batch centred at {np.round(center, 4).tolist()}: {e}") from e
    return X, y


def initialize_system(
    config: TrainConfig, d: int, dataset: np.ndarray | None = None
) -> tuple[BasisBank, SurrogateNet | None]:
    """Fresh bank (and surrogate when enabled) for a configuration; deterministic in the seed."""
    init_rng, _, pilot_rng = seed_streams(config.seed)
    bank = BasisBank.initialize(
        d, config.k, init_rng, config.hidden_sizes, config.alpha_init, pairwise=config.pairwise_enabled
    )
    surrogate = SurrogateNet.initialize(d, init_rng, config.surrogate_sizes) if config.surrogate_enabled else None

    if config.standardize:
        if dataset is not None:
            rows = dataset
        else:
            pilot = replace(config, center_source="normal")
            rows = np.vstack([sample_batch(pilot, pilot_rng, _Unqueried(d))[0] for _ in range(PILOT_BATCHES)])
        bank.transform = FeatureTransform.fit(rows)
        logger.info("Standardizing inputs with shift %s and scale %s", bank.transform.shift, bank.transform.scale)
    return bank, surrogate


class _Unqueried(Oracle):
    """Placeholder answering zeros, for drawing input rows without querying the black box."""

    def evaluate(self, X):
        return np.zeros(X.shape[0])


def _linearity_penalty(bank: BasisBank, binding: ParameterBinding):
    terms = [square(sub(constant(1.0), binding.node(subnet.alpha))) for subnet in bank.subnets]
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term)
    return scale(total, 1.0 / len(terms))


def train_step(
    bank: BasisBank,
    surrogate: SurrogateNet | None,
    batch: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    optimizer: Adam,
    iteration: int = 0,
) -> StepResult:
    """
    One optimizer update on one batch; returns the loss before the update.

    The loss is mean((Fw − y)²), plus lambda_surrogate·mean((y − z)²) with a
    surrogate (whose outputs z replace y in the weight solve), plus
    lambda_linear·mean((1 − α)²).

    Raises:
        TrainingAbortedError: If the loss or a gradient is not finite
    """
    X, y = batch
    binding = ParameterBinding()
    F = assemble_feature_matrix(bank, X, binding, bias=config.method.uses_bias)
    y_node = input_node(np.asarray(y, dtype=np.float64), name="y")

    surrogate_node = None
    if surrogate is not None:
        surrogate_node = surrogate.graph(input_node(np.asarray(X, dtype=np.float64), name="x"), binding)

    try:
        weights, report = solve_weights(
            F,
            surrogate_node if surrogate_node is not None else y_node,
            config.method,
            ridge_lambda=config.lambda_ridge,
            rank_tolerance=config.rank_tolerance,
        )
        fit = mean(square(sub(prediction_node(F, weights), y_node)))
        loss = fit
        if surrogate_node is not None:
            loss = add(loss, scale(mean(square(sub(y_node, surrogate_node))), config.lambda_surrogate))
        if config.lambda_linear > 0:
            loss = add(loss, scale(_linearity_penalty(bank, binding), config.lambda_linear))
        loss_value = float(forward(loss))
    except NonFiniteValueError as e:
        raise TrainingAbortedError(iteration, str(e)) from e

    backward(loss)
    gradients = binding.gradients()
    for parameter, grad in gradients.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingAbortedError(iteration, f"non-finite gradient for {parameter.name}")
    optimizer.step(gradients)

    return StepResult(
        loss=loss_value,
        mse=float(forward(fit)),
        target_variance=float(np.var(y)),
        path=report.path if report is not None else None,
    )


def build_optimizer(bank: BasisBank, surrogate: SurrogateNet | None, config: TrainConfig) -> Adam:
    parameters = bank.parameters() + (surrogate.parameters() if surrogate is not None else [])
    return Adam(parameters, learning_rate=config.learning_rate)


def train(
    bank: BasisBank,
    surrogate: SurrogateNet | None,
    oracle: Oracle,
    config: TrainConfig,
    dataset: np.ndarray | None = None,
    optimizer: Adam | None = None,
) -> TrainReport:
    """
    Run `iterations` steps of sampling plus update; the bank is trained in place.

    Args:
        bank: Basis bank to train
        surrogate: Surrogate network trained jointly, or None
        oracle: Black box providing the batch targets
        config: Validated training configuration
        dataset: Feature rows for dataset-centred sampling
        optimizer: Optimizer to continue from (a fresh Adam when None)

    Returns:
        TrainReport with the loss trace and solve path counts
    """
    _, sampling_rng, _ = seed_streams(config.seed)
    optimizer = optimizer or build_optimizer(bank, surrogate, config)
    report = TrainReport(method=config.method)
    started = time.perf_counter()

    for iteration in range(config.iterations):
        batch = sample_batch(config, sampling_rng, oracle, dataset)
        result = train_step(bank, surrogate, batch, config, optimizer, iteration)
        report.record(result)
        if iteration % LOG_EVERY == 0 or iteration == config.iterations - 1:
            logger.info(
                "[%s] iteration %s/%s loss=%.6g mse=%.6g target variance=%.6g",
                config.method.value,
                iteration + 1,
                config.iterations,
                result.loss,
                result.mse,
                result.target_variance,
            )

    report.wall_time = time.perf_counter() - started
    report.optimizer_state = optimizer.state_dict()
    logger.info(
        "[%s] finished %s iterations in %.1fs, solve paths %s",
        config.method.value,
        report.iterations_run,
        report.wall_time,
        report.path_counts,
    )
    return report


def compare_weighting(
    oracle: Oracle,
    config: TrainConfig,
    methods: list,
    dataset: np.ndarray | None = None,
    max_workers: int | None = None,
) -> dict[WeightingMethod, TrainReport]:
    """
    Train one independent system per weighting method under identical seeds.

    Raises:
        ValueError: If no method is given or a method name is unknown
    """
    if not methods:
        raise ValueError("compare_weighting needs at least one method")
    parsed = [WeightingMethod.parse(method) if isinstance(method, str) else method for method in methods]
    if len(set(parsed)) != len(parsed):
        raise ValueError("compare_weighting got a method twice")

    def run(method: WeightingMethod) -> TrainReport:
        method_config = replace(config, method=method).validate(oracle.d, dataset is not None)
        bank, surrogate = initialize_system(method_config, oracle.d, dataset)
        return train(bank, surrogate, oracle, method_config, dataset)

    with ThreadPoolExecutor(max_workers=max_workers or len(parsed)) as executor:
        reports = list(executor.map(run, parsed))
    return dict(zip(parsed, reports))
