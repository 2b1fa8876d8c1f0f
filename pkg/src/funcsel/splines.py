"""Clamped B-spline bases on [0, 1] and projection of sampled curves.

Basis indices are 0-based: basis ``j`` is supported on
``[knots[j], knots[j + degree + 1]]``.  Evaluation follows the Cox-de Boor
convention of half-open knot spans with the last span closed, which is what
:class:`scipy.interpolate.BSpline` implements.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Final

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import lstsq

from funcsel.errors import ConditioningError, ConfigError, DataError, DomainError

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_DEGREE: Final = 4
MIN_GRID_POINTS: Final = 2
DOMAIN: Final = (0.0, 1.0)


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped uniform B-spline basis of ``count`` functions on [0, 1]."""

    degree: int
    count: int
    knots: np.ndarray
    supports: tuple[tuple[float, float], ...] = field(repr=False)

    def support(self, j: int) -> tuple[float, float]:
        return self.supports[j]

    def midpoints(self) -> np.ndarray:
        return np.array([(a + b) / 2.0 for a, b in self.supports])

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        """Dense ``len(points) x count`` matrix of basis values."""
        points = np.asarray(points, dtype=np.float64)
        _check_domain(points)
        return BSpline.design_matrix(points, self.knots, self.degree).toarray()


@dataclass(frozen=True, eq=False)
class CurveGrid:
    """Curves sampled on one shared grid: ``values`` is ``n x len(points)``."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if points.ndim != 1 or points.size < MIN_GRID_POINTS:
            raise DataError(
                f"grid must be a 1-D sequence of at least {MIN_GRID_POINTS} points"
            )
        if np.any(np.diff(points) <= 0):
            raise DataError("grid points must be strictly increasing")
        _check_domain(points)
        if values.shape[1] != points.size:
            raise DataError(
                f"curve rows have {values.shape[1]} values but the grid has "
                f"{points.size} points"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("curve values must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @property
    def n_curves(self) -> int:
        return self.values.shape[0]

    def take(self, rows: np.ndarray) -> CurveGrid:
        return CurveGrid(self.points, self.values[rows])

    def same_grid(self, other: CurveGrid | np.ndarray) -> bool:
        pts = other.points if isinstance(other, CurveGrid) else np.asarray(other)
        return pts.shape == self.points.shape and bool(np.all(pts == self.points))

    @classmethod
    def stack(cls, curves: Sequence[CurveGrid]) -> CurveGrid:
        """Concatenate curve sets; every member must use the same grid."""
        if not curves:
            raise DataError("no curves to stack")
        first = curves[0]
        for i, other in enumerate(curves[1:], start=1):
            if not first.same_grid(other):
                raise DataError(
                    f"curve set {i} is observed on a different grid; per-curve "
                    f"grids are not resampled"
                )
        return cls(first.points, np.vstack([c.values for c in curves]))


def _check_domain(points: np.ndarray) -> None:
    lo, hi = DOMAIN
    if np.any(points < lo) or np.any(points > hi) or not np.all(np.isfinite(points)):
        raise DomainError("evaluation points must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Basis construction and evaluation
# ---------------------------------------------------------------------------


def build_basis(count: int, degree: int = DEFAULT_DEGREE) -> SplineBasis:
    """Clamped knot vector with ``count - degree - 1`` equally spaced interior knots."""
    if degree < 1:
        raise ConfigError(f"spline degree must be >= 1, got {degree}")
    if count < degree + 1:
        raise ConfigError(
            f"basis size {count} is too small for degree {degree} "
            f"(need at least {degree + 1})"
        )
    n_interior = count - degree - 1
    interior = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.concatenate(
        [np.zeros(degree + 1), interior, np.ones(degree + 1)]
    )
    supports = tuple(
        (float(knots[j]), float(knots[j + degree + 1])) for j in range(count)
    )
    return SplineBasis(degree=degree, count=count, knots=knots, supports=supports)


def eval_basis(basis: SplineBasis, j: int, t: float) -> float:
    """Value of basis function ``j`` at ``t``; zero off its support."""
    if not 0 <= j < basis.count:
        raise DomainError(f"basis index {j} out of range 0..{basis.count - 1}")
    row = basis.design_matrix(np.array([t], dtype=np.float64))
    return float(row[0, j])


# ---------------------------------------------------------------------------
# Projection and smoothing
# ---------------------------------------------------------------------------


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Quadrature weights ``w`` with ``sum(w * f(points))`` = trapezoid rule."""
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2.0
    w[1:] += h / 2.0
    return w


def projection_matrix(points: np.ndarray, basis: SplineBasis) -> np.ndarray:
    """``L x J`` matrix mapping grid values to spline features."""
    return trapezoid_weights(points)[:, None] * basis.design_matrix(points)


def project(
    curves: CurveGrid | Sequence[CurveGrid], basis: SplineBasis
) -> np.ndarray:
    """Spline features ``x_ij = int X_i(t) B_j(t) dt`` by the trapezoid rule."""
    if not isinstance(curves, CurveGrid):
        curves = CurveGrid.stack(list(curves))
    if curves.points.size < basis.degree + 2:
        raise DataError(
            f"grid of {curves.points.size} points is too coarse for degree "
            f"{basis.degree} (need {basis.degree + 2})"
        )
    return curves.values @ projection_matrix(curves.points, basis)


def denoise(curves: CurveGrid, basis: SplineBasis) -> CurveGrid:
    """Replace each curve by its least-squares fit in the span of ``basis``."""
    design = basis.design_matrix(curves.points)
    if design.shape[0] < design.shape[1]:
        raise ConditioningError(
            f"{design.shape[0]} grid points cannot determine {design.shape[1]} "
            f"spline coefficients"
        )
    coef, _, rank, _ = lstsq(design, curves.values.T)
    if rank < design.shape[1]:
        raise ConditioningError(
            f"spline design on this grid has rank {rank} < {design.shape[1]}"
        )
    return CurveGrid(curves.points, (design @ coef).T)
