"""Tests for B-spline construction, evaluation, projection and smoothing."""

from __future__ import annotations

import numpy as np
import pytest

from funcsel.errors import ConditioningError, ConfigError, DataError, DomainError
from funcsel.splines import (
    CurveGrid,
    build_basis,
    denoise,
    eval_basis,
    project,
    trapezoid_weights,
)


def _uniform(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


# ---------------------------------------------------------------------------
# build_basis
# ---------------------------------------------------------------------------


def test_linear_basis_knots_and_support():
    basis = build_basis(5, 1)
    np.testing.assert_allclose(basis.knots, [0, 0, 0.25, 0.5, 0.75, 1, 1])
    assert basis.support(2) == (0.25, 0.75)
    assert basis.count == 5
    assert len(basis.supports) == 5


def test_degree_four_interior_knots_equally_spaced():
    basis = build_basis(55, 4)
    assert basis.knots.size == 55 + 4 + 1
    np.testing.assert_array_equal(basis.knots[:5], 0.0)
    np.testing.assert_array_equal(basis.knots[-5:], 1.0)
    np.testing.assert_allclose(basis.knots[5:55], np.arange(1, 51) / 51, atol=1e-15)


def test_too_few_functions_for_degree():
    with pytest.raises(ConfigError):
        build_basis(3, 4)


def test_degree_must_be_positive():
    with pytest.raises(ConfigError):
        build_basis(5, 0)


def test_supports_nonempty_and_inside_domain():
    basis = build_basis(20, 8)
    for lo, hi in basis.supports:
        assert 0.0 <= lo < hi <= 1.0


# ---------------------------------------------------------------------------
# eval_basis
# ---------------------------------------------------------------------------


def test_hat_function_peak_at_knot():
    basis = build_basis(5, 1)
    values = [eval_basis(basis, j, 0.5) for j in range(5)]
    assert values == pytest.approx([0, 0, 1, 0, 0], abs=1e-15)


@pytest.mark.parametrize("count,degree", [(55, 4), (80, 4), (20, 8)])
def test_partition_of_unity(count, degree):
    basis = build_basis(count, degree)
    rng = np.random.default_rng(0)
    t = np.concatenate([rng.uniform(0, 1, 998), [0.0, 1.0]])
    sums = basis.design_matrix(t).sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-12


def test_partition_of_unity_single_point():
    basis = build_basis(55, 4)
    total = sum(eval_basis(basis, j, 0.37) for j in range(55))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_zero_outside_support():
    basis = build_basis(20, 4)
    rng = np.random.default_rng(1)
    for j in range(basis.count):
        lo, hi = basis.support(j)
        outside = rng.uniform(0, 1, 200)
        outside = outside[(outside < lo) | (outside > hi)]
        values = basis.design_matrix(outside)[:, j]
        assert np.all(values == 0.0)


def test_nonnegative_inside_support():
    basis = build_basis(12, 3)
    values = basis.design_matrix(_uniform(301))
    assert np.all(values >= 0.0)


def test_eval_outside_domain_raises():
    basis = build_basis(5, 1)
    with pytest.raises(DomainError):
        eval_basis(basis, 0, 1.5)
    with pytest.raises(DomainError):
        eval_basis(basis, 0, -0.01)


def test_eval_bad_index_raises():
    basis = build_basis(5, 1)
    with pytest.raises(DomainError):
        eval_basis(basis, 5, 0.5)


# ---------------------------------------------------------------------------
# CurveGrid
# ---------------------------------------------------------------------------


def test_curve_grid_rejects_unsorted_points():
    with pytest.raises(DataError):
        CurveGrid(np.array([0.0, 0.5, 0.4, 1.0]), np.zeros((1, 4)))


def test_curve_grid_rejects_wrong_row_length():
    with pytest.raises(DataError):
        CurveGrid(_uniform(5), np.zeros((2, 4)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_curve_grid_rejects_non_finite_values(bad):
    values = np.zeros((2, 5))
    values[1, 3] = bad
    with pytest.raises(DataError, match="finite"):
        CurveGrid(_uniform(5), values)


def test_curve_grid_stack_requires_same_grid():
    a = CurveGrid(_uniform(11), np.zeros((1, 11)))
    b = CurveGrid(_uniform(11) ** 2, np.zeros((1, 11)))
    with pytest.raises(DataError):
        CurveGrid.stack([a, b])


def test_trapezoid_weights_sum_to_length():
    assert trapezoid_weights(_uniform(17)).sum() == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------


def test_project_constant_curve_sums_to_one():
    basis = build_basis(55, 4)
    curves = CurveGrid(_uniform(101), np.ones((3, 101)))
    features = project(curves, basis)
    assert features.shape == (3, 55)
    np.testing.assert_allclose(features.sum(axis=1), 1.0, atol=1e-10)


def test_project_zero_curve():
    basis = build_basis(10, 4)
    features = project(CurveGrid(_uniform(101), np.zeros((2, 101))), basis)
    assert np.all(features == 0.0)


def test_project_identity_curve_against_hat_integral():
    basis = build_basis(5, 1)
    t = _uniform(1001)
    features = project(CurveGrid(t, t[None, :]), basis)
    assert features[0, 2] == pytest.approx(0.125, abs=1e-4)


def test_project_mismatched_grids():
    basis = build_basis(5, 1)
    a = CurveGrid(_uniform(11), np.ones((1, 11)))
    b = CurveGrid(_uniform(21), np.ones((1, 21)))
    with pytest.raises(DataError):
        project([a, b], basis)


def test_project_list_of_shared_grid_curves():
    basis = build_basis(6, 2)
    t = _uniform(41)
    a = CurveGrid(t, np.sin(t)[None, :])
    b = CurveGrid(t, np.cos(t)[None, :])
    stacked = project([a, b], basis)
    np.testing.assert_allclose(stacked[0], project(a, basis)[0])
    np.testing.assert_allclose(stacked[1], project(b, basis)[0])


def test_project_grid_too_coarse():
    basis = build_basis(5, 4)
    with pytest.raises(DataError):
        project(CurveGrid(_uniform(5), np.ones((1, 5))), basis)


def test_quadrature_error_quarters_when_grid_halves():
    basis = build_basis(10, 4)

    def feature(n_points: int) -> float:
        t = _uniform(n_points)
        x = np.exp(t) * np.cos(5 * t)
        return project(CurveGrid(t, x[None, :]), basis)[0, 0]

    oracle = feature(1001)
    coarse = abs(feature(51) - oracle)
    fine = abs(feature(101) - oracle)
    assert coarse / fine == pytest.approx(4.0, rel=0.25)


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------


def test_denoise_keeps_span_members():
    basis = build_basis(10, 4)
    t = _uniform(101)
    coef = np.random.default_rng(2).normal(size=(3, 10))
    curves = CurveGrid(t, coef @ basis.design_matrix(t).T)
    np.testing.assert_allclose(denoise(curves, basis).values, curves.values, atol=1e-8)


def test_denoise_keeps_constants():
    basis = build_basis(12, 4)
    t = _uniform(51)
    curves = CurveGrid(t, np.full((2, 51), 3.5))
    np.testing.assert_allclose(denoise(curves, basis).values, 3.5, atol=1e-8)


def test_denoise_reduces_white_noise_variance():
    basis = build_basis(8, 4)
    t = _uniform(201)
    noise = np.random.default_rng(3).normal(size=(1, 201))
    smoothed = denoise(CurveGrid(t, noise), basis)
    assert smoothed.values.var() < noise.var()


def test_denoise_underdetermined_grid():
    basis = build_basis(10, 4)
    with pytest.raises(ConditioningError):
        denoise(CurveGrid(_uniform(6), np.ones((1, 6))), basis)
