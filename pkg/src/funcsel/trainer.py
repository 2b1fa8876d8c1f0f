"""MAP fitting by mini-batch SGD with early stopping and random restarts.

The step descends the per-sample objective ``L(theta) / n_train``: each
update is ``theta -= lr / n * ((n / b) * grad_data_batch + grad_prior)``,
where the bracket is an unbiased estimate of the full gradient of ``L``.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Final

import numpy as np

from funcsel.errors import ConfigError, DivergenceError, FuncselWarning, ShapeError
from funcsel.network import (
    NetworkParams,
    architecture,
    data_loss_and_grad,
    forward,
    init_params,
)
from funcsel.prior import SparsityHyper, neg_log_marginal_prior, prior_grad

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_LEARNING_RATE: Final = 1e-3
DEFAULT_BATCH_SIZE: Final = 64
DEFAULT_MAX_ITERS: Final = 80_001
DEFAULT_PATIENCE_ITERS: Final = 3_000
DEFAULT_EVAL_EVERY: Final = 50
DEFAULT_RESTARTS: Final = 5
DEFAULT_HIDDEN: Final = (64, 64, 64)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_iters: int = DEFAULT_MAX_ITERS
    patience_iters: int = DEFAULT_PATIENCE_ITERS
    eval_every: int = DEFAULT_EVAL_EVERY
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self) -> None:
        for name in ("batch_size", "max_iters", "patience_iters", "eval_every", "restarts"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value > 0):
                raise ConfigError(f"train.{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"train.learning_rate must be positive, got {self.learning_rate}")
        if self.eval_every > self.patience_iters:
            raise ConfigError("train.eval_every must not exceed train.patience_iters")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"train.momentum must lie in [0, 1), got {self.momentum}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FitRecord:
    """Best-by-validation snapshot of one SGD run."""

    params: NetworkParams
    train_objective: float
    val_mse: float
    iterations_run: int
    seed_used: int
    best_iteration: int = 0
    val_history: tuple[tuple[int, float], ...] = ()


@dataclass(frozen=True)
class DivergedFit:
    """Marker for a restart whose objective became non-finite."""

    seed_used: int
    iteration: int
    learning_rate: float
    message: str


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def objective(
    params: NetworkParams,
    features: np.ndarray,
    responses: np.ndarray,
    hyper: SparsityHyper,
) -> float:
    """Negative log-posterior: data loss plus negative log marginal prior."""
    loss, _ = data_loss_and_grad(params, features, responses, hyper.noise_var)
    return loss + neg_log_marginal_prior(params, hyper)


def objective_grad(
    params: NetworkParams,
    features: np.ndarray,
    responses: np.ndarray,
    hyper: SparsityHyper,
) -> tuple[float, np.ndarray]:
    """Objective value and its flat gradient."""
    loss, g_data = data_loss_and_grad(params, features, responses, hyper.noise_var)
    g_prior = prior_grad(params, hyper)
    value = loss + neg_log_marginal_prior(params, hyper)
    return value, g_data.flatten() + g_prior.flatten()


def mse(params: NetworkParams, features: np.ndarray, responses: np.ndarray) -> float:
    resid = np.asarray(forward(params, np.atleast_2d(features))) - responses
    return float(np.mean(resid * resid))


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------


def _check_split(name: str, features: np.ndarray, responses: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeError(f"{name} features must be a non-empty 2-D array")
    if responses.shape != (features.shape[0],):
        raise ShapeError(
            f"{name} has {features.shape[0]} feature rows but {responses.size} responses"
        )


def fit_map(
    features_train: np.ndarray,
    y_train: np.ndarray,
    features_val: np.ndarray,
    y_val: np.ndarray,
    hyper: SparsityHyper,
    config: TrainConfig,
    *,
    hidden_widths: Sequence[int] = DEFAULT_HIDDEN,
    seed: int | None = None,
) -> FitRecord:
    """One seeded SGD run; returns the snapshot with the lowest validation MSE."""
    x_tr = np.asarray(features_train, dtype=np.float64)
    y_tr = np.asarray(y_train, dtype=np.float64).ravel()
    x_va = np.asarray(features_val, dtype=np.float64)
    y_va = np.asarray(y_val, dtype=np.float64).ravel()
    _check_split("training", x_tr, y_tr)
    _check_split("validation", x_va, y_va)

    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    params = init_params(architecture(x_tr.shape[1], hidden_widths), rng)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    n = x_tr.shape[0]
    batch = min(config.batch_size, n)
    step = config.learning_rate / n
    batch_scale = n / batch

    epoch = 0
    order = rng.permutation(n)
    pos = 0

    best_val = np.inf
    best_params = params
    best_iter = 0
    history: list[tuple[int, float]] = []
    iteration = 0

    for iteration in range(1, config.max_iters + 1):
        if pos + batch > n:
            epoch += 1
            order = np.random.default_rng((seed, epoch)).permutation(n)
            pos = 0
        idx = order[pos : pos + batch]
        pos += batch

        current = NetworkParams(tuple(weights), tuple(biases))
        loss, g_data = data_loss_and_grad(current, x_tr[idx], y_tr[idx], hyper.noise_var)
        g_prior = prior_grad(current, hyper)
        if not np.isfinite(loss):
            raise DivergenceError(
                "mini-batch objective is not finite",
                iteration=iteration,
                learning_rate=config.learning_rate,
            )
        for h in range(len(weights)):
            gw = batch_scale * g_data.weights[h] + g_prior.weights[h]
            gb = batch_scale * g_data.biases[h] + g_prior.biases[h]
            vel_w[h] = config.momentum * vel_w[h] - step * gw
            vel_b[h] = config.momentum * vel_b[h] - step * gb
            weights[h] = weights[h] + vel_w[h]
            biases[h] = biases[h] + vel_b[h]
        if not all(np.all(np.isfinite(w)) for w in weights):
            raise DivergenceError(
                "parameters are not finite",
                iteration=iteration,
                learning_rate=config.learning_rate,
            )

        if iteration % config.eval_every == 0:
            snapshot = NetworkParams(tuple(weights), tuple(biases))
            val = mse(snapshot, x_va, y_va)
            if not np.isfinite(val):
                raise DivergenceError(
                    "validation MSE is not finite",
                    iteration=iteration,
                    learning_rate=config.learning_rate,
                )
            history.append((iteration, val))
            if val < best_val:
                best_val, best_params, best_iter = val, snapshot.copy(), iteration
            elif iteration - best_iter >= config.patience_iters:
                break

    if best_iter == 0:
        # max_iters below eval_every: score the final iterate
        best_params = NetworkParams(tuple(weights), tuple(biases)).copy()
        best_val = mse(best_params, x_va, y_va)
        best_iter = iteration
        history.append((iteration, best_val))

    train_obj = objective(best_params, x_tr, y_tr, hyper)
    if not np.isfinite(train_obj):
        raise DivergenceError(
            "objective at the best checkpoint is not finite",
            iteration=best_iter,
            learning_rate=config.learning_rate,
        )
    return FitRecord(
        params=best_params,
        train_objective=train_obj,
        val_mse=float(best_val),
        iterations_run=iteration,
        seed_used=seed,
        best_iteration=best_iter,
        val_history=tuple(history),
    )


def _fit_one(args: tuple) -> FitRecord | DivergedFit:
    x_tr, y_tr, x_va, y_va, hyper, config, hidden, seed = args
    try:
        return fit_map(x_tr, y_tr, x_va, y_va, hyper, config, hidden_widths=hidden, seed=seed)
    except DivergenceError as exc:
        return DivergedFit(seed, exc.iteration, exc.learning_rate, str(exc))


def run_restarts(
    features_train: np.ndarray,
    y_train: np.ndarray,
    features_val: np.ndarray,
    y_val: np.ndarray,
    hyper: SparsityHyper,
    config: TrainConfig,
    *,
    hidden_widths: Sequence[int] = DEFAULT_HIDDEN,
    workers: int = 1,
) -> list[FitRecord | DivergedFit]:
    """Every restart's outcome in seed order, diverged ones included; never raises
    for divergence."""
    jobs = [
        (features_train, y_train, features_val, y_val, hyper, config, tuple(hidden_widths), config.seed + r)
        for r in range(1, config.restarts + 1)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_fit_one, jobs))
    return [_fit_one(job) for job in jobs]


def fit_restarts(
    features_train: np.ndarray,
    y_train: np.ndarray,
    features_val: np.ndarray,
    y_val: np.ndarray,
    hyper: SparsityHyper,
    config: TrainConfig,
    *,
    hidden_widths: Sequence[int] = DEFAULT_HIDDEN,
    workers: int = 1,
) -> list[FitRecord | DivergedFit]:
    """``config.restarts`` independent fits seeded ``seed + 1 .. seed + R``.

    A diverged restart is returned as :class:`DivergedFit`; only when every
    restart diverges is :class:`DivergenceError` raised.
    """
    outcomes = run_restarts(
        features_train,
        y_train,
        features_val,
        y_val,
        hyper,
        config,
        hidden_widths=hidden_widths,
        workers=workers,
    )
    for outcome in outcomes:
        if isinstance(outcome, DivergedFit):
            warnings.warn(
                f"restart with seed {outcome.seed_used} diverged: {outcome.message}",
                FuncselWarning,
                stacklevel=2,
            )
    if all(isinstance(o, DivergedFit) for o in outcomes):
        last = outcomes[-1]
        raise DivergenceError(
            f"all {len(outcomes)} restarts diverged",
            iteration=last.iteration,
            learning_rate=last.learning_rate,
        )
    return outcomes
