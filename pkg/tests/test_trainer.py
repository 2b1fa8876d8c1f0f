"""Tests for the MAP objective and the SGD fitting loop."""

from __future__ import annotations

import numpy as np
import pytest

from funcsel.errors import ConfigError, DivergenceError, FuncselWarning
from funcsel.network import NetworkParams, architecture, data_loss_and_grad, init_params, zeros_like
from funcsel.prior import SparsityHyper, neg_log_marginal_prior
from funcsel.simulate import SimScenario, gen_dataset
from funcsel.splines import build_basis, project
from funcsel.trainer import (
    DEFAULT_HIDDEN,
    DivergedFit,
    FitRecord,
    TrainConfig,
    fit_map,
    fit_restarts,
    objective,
    objective_grad,
    run_restarts,
)

_WEAK = SparsityHyper(lambda_n=0.5, sigma0_sq=1e-2, sigma1_sq=10.0, sigma_sq=100.0)


def _regression(n: int, seed: int, n_features: int = 2) -> tuple[np.ndarray, np.ndarray]:
    x = np.random.default_rng(seed).normal(size=(n, n_features))
    return x, 2.0 * x[:, 0]


def _quick(**kwargs) -> TrainConfig:
    base = dict(learning_rate=0.01, batch_size=16, max_iters=200, patience_iters=100, eval_every=50)
    base.update(kwargs)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# TrainConfig
# ---------------------------------------------------------------------------


def test_eval_every_above_patience_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(eval_every=100, patience_iters=50)


@pytest.mark.parametrize("field", ["batch_size", "max_iters", "restarts"])
def test_nonpositive_counts_rejected(field):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: 0})


def test_learning_rate_must_be_positive():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)


# ---------------------------------------------------------------------------
# objective / objective_grad
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_objective_is_data_plus_prior(seed):
    rng = np.random.default_rng(seed)
    params = init_params((4, 3, 1), rng)
    x, y = rng.normal(size=(9, 4)), rng.normal(size=9)
    data, _ = data_loss_and_grad(params, x, y, _WEAK.noise_var)
    assert objective(params, x, y, _WEAK) == pytest.approx(data + neg_log_marginal_prior(params, _WEAK))


def test_doubling_noise_variance_halves_data_term():
    rng = np.random.default_rng(1)
    params = init_params((3, 4, 1), rng)
    x, y = rng.normal(size=(7, 3)), rng.normal(size=7)
    low = SparsityHyper(noise_var=1.0)
    high = SparsityHyper(noise_var=2.0)
    prior = neg_log_marginal_prior(params, low)
    assert objective(params, x, y, high) - prior == pytest.approx((objective(params, x, y, low) - prior) / 2)


def test_zero_residual_objective_is_prior():
    hyper = SparsityHyper(lambda_n=1.0)
    params = zeros_like(init_params((3, 2, 1), np.random.default_rng(0)))
    x = np.random.default_rng(1).normal(size=(5, 3))
    assert objective(params, x, np.zeros(5), hyper) == pytest.approx(neg_log_marginal_prior(params, hyper))


def test_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    step = 1e-7
    for _ in range(50):
        widths = (int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(1, 4)), 1)
        sigma0 = rng.uniform(0.05, 0.2)
        hyper = SparsityHyper(
            lambda_n=rng.uniform(0.1, 0.9),
            sigma0_sq=sigma0,
            sigma1_sq=sigma0 * rng.uniform(2, 10),
            sigma_sq=rng.uniform(0.5, 2),
            noise_var=rng.uniform(0.5, 2),
        )
        params = init_params(widths, rng)
        params = NetworkParams(params.weights, tuple(rng.normal(0, 0.1, b.shape) for b in params.biases))
        x, y = rng.normal(size=(8, widths[0])), rng.normal(size=8)
        theta = params.flatten()

        def value(t: np.ndarray) -> float:
            return objective(NetworkParams.from_flat(widths, t), x, y, hyper)

        fd = np.array(
            [(value(theta + step * e) - value(theta - step * e)) / (2 * step) for e in np.eye(theta.size)]
        )
        _, grad = objective_grad(params, x, y, hyper)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# fit_map
# ---------------------------------------------------------------------------


def test_fit_map_learns_noiseless_linear_map():
    x_tr, y_tr = _regression(400, 0)
    x_va, y_va = _regression(100, 1)
    config = TrainConfig(
        learning_rate=0.02, batch_size=32, max_iters=20_000, patience_iters=5_000, eval_every=50
    )
    record = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, config, hidden_widths=(16,), seed=3)
    assert record.val_mse < 1e-2


def test_patience_stops_a_converged_run():
    x = np.zeros((20, 3))
    y = np.zeros(20)
    config = TrainConfig(learning_rate=1e-3, batch_size=8, max_iters=10_000, patience_iters=500, eval_every=50)
    record = fit_map(x, y, x, y, _WEAK, config, hidden_widths=(4,), seed=0)
    assert record.val_mse == 0.0
    assert record.best_iteration == 50
    assert record.iterations_run == 550


def test_returned_snapshot_is_best_checkpoint():
    x_tr, y_tr = _regression(60, 4, n_features=3)
    x_va, y_va = _regression(20, 5, n_features=3)
    record = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, _quick(max_iters=600, patience_iters=600), hidden_widths=(4,), seed=1)
    assert record.val_mse == min(v for _, v in record.val_history)
    assert record.iterations_run - record.best_iteration <= 600 + 50


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_best_so_far_validation_is_monotone(seed):
    x_tr, y_tr = _regression(60, 10 + seed, n_features=3)
    x_va, y_va = _regression(20, 20 + seed, n_features=3)
    record = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, _quick(max_iters=1000, patience_iters=1000), hidden_widths=(4,), seed=seed)
    iterations = [i for i, _ in record.val_history]
    running = np.minimum.accumulate([v for _, v in record.val_history])
    assert iterations == sorted(iterations)
    assert np.all(np.diff(running) <= 0)
    assert running[-1] == record.val_mse
    assert dict(record.val_history)[record.best_iteration] == record.val_mse


def test_objective_decreases_early_on_simulated_data():
    dataset, _ = gen_dataset(SimScenario(seed=0))
    basis = build_basis(55)
    x_tr = project(dataset.curve_grid("train"), basis)
    y_tr = dataset.responses_of("train", standardized=True)
    x_va = project(dataset.curve_grid("val"), basis)
    y_va = dataset.responses_of("val", standardized=True)
    hyper = SparsityHyper()
    config = TrainConfig(learning_rate=1e-3, batch_size=64, max_iters=100, patience_iters=100, eval_every=100)
    for seed in (1, 2, 3):
        start = init_params(architecture(55, DEFAULT_HIDDEN), np.random.default_rng(seed))
        record = fit_map(x_tr, y_tr, x_va, y_va, hyper, config, seed=seed)
        assert record.iterations_run == 100
        assert record.train_objective < objective(start, x_tr, y_tr, hyper)


def test_same_seed_same_record():
    x_tr, y_tr = _regression(60, 6, n_features=3)
    x_va, y_va = _regression(20, 7, n_features=3)
    a = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, _quick(), hidden_widths=(4, 4), seed=9)
    b = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, _quick(), hidden_widths=(4, 4), seed=9)
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    assert a.val_mse == b.val_mse
    assert a.iterations_run == b.iterations_run


def test_huge_learning_rate_diverges():
    x_tr, y_tr = _regression(20, 8)
    with np.errstate(all="ignore"), pytest.raises(DivergenceError) as info:
        fit_map(x_tr, y_tr, x_tr, y_tr, _WEAK, _quick(learning_rate=1e6), hidden_widths=(4,), seed=0)
    assert info.value.learning_rate == 1e6
    assert info.value.iteration >= 1


# ---------------------------------------------------------------------------
# fit_restarts
# ---------------------------------------------------------------------------


def test_single_restart_uses_next_seed():
    x_tr, y_tr = _regression(40, 10, n_features=3)
    x_va, y_va = _regression(15, 11, n_features=3)
    config = _quick(restarts=1, seed=5)
    (record,) = fit_restarts(x_tr, y_tr, x_va, y_va, _WEAK, config, hidden_widths=(4,))
    direct = fit_map(x_tr, y_tr, x_va, y_va, _WEAK, config, hidden_widths=(4,), seed=6)
    assert isinstance(record, FitRecord)
    assert record.seed_used == 6
    np.testing.assert_array_equal(record.params.flatten(), direct.params.flatten())


def test_restarts_differ():
    x_tr, y_tr = _regression(40, 12, n_features=3)
    x_va, y_va = _regression(15, 13, n_features=3)
    records = fit_restarts(x_tr, y_tr, x_va, y_va, _WEAK, _quick(restarts=3), hidden_widths=(4,))
    assert [r.seed_used for r in records] == [1, 2, 3]
    assert len({r.val_mse for r in records}) == 3


def test_all_restarts_diverging_raises_after_warnings():
    x_tr, y_tr = _regression(20, 14)
    config = _quick(learning_rate=1e6, restarts=2)
    with np.errstate(all="ignore"), pytest.warns(FuncselWarning), pytest.raises(DivergenceError):
        fit_restarts(x_tr, y_tr, x_tr, y_tr, _WEAK, config, hidden_widths=(4,))


def test_run_restarts_reports_divergence_without_raising():
    x_tr, y_tr = _regression(20, 15)
    with np.errstate(all="ignore"):
        outcomes = run_restarts(x_tr, y_tr, x_tr, y_tr, _WEAK, _quick(learning_rate=1e6, restarts=2), hidden_widths=(4,))
    assert all(isinstance(o, DivergedFit) for o in outcomes)
    assert [o.seed_used for o in outcomes] == [1, 2]
