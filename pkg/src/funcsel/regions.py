"""Active regions on [0, 1] and the metrics that score them."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np

from funcsel.errors import DomainError, ShapeError
from funcsel.splines import SplineBasis

DEFAULT_PIP_TAU: Final = 0.5

Interval = tuple[float, float]


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Sorted, disjoint closed intervals; touching intervals are merged."""

    intervals: tuple[Interval, ...] = ()

    def __post_init__(self) -> None:
        prev_hi = -np.inf
        for lo, hi in self.intervals:
            if not 0.0 <= lo <= hi <= 1.0:
                raise DomainError(f"interval [{lo}, {hi}] is not inside [0, 1]")
            if lo <= prev_hi:
                raise DomainError("region intervals must be sorted and disjoint")
            prev_hi = hi

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> Region:
        """Union of arbitrary closed intervals."""
        return cls(_merge([(float(a), float(b)) for a, b in intervals]))

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def is_empty(self) -> bool:
        return not self.intervals

    def intersection_measure(self, other: Region) -> float:
        total = 0.0
        i = k = 0
        a, b = self.intervals, other.intervals
        while i < len(a) and k < len(b):
            lo = max(a[i][0], b[k][0])
            hi = min(a[i][1], b[k][1])
            if hi > lo:
                total += hi - lo
            if a[i][1] < b[k][1]:
                i += 1
            else:
                k += 1
        return total

    def to_list(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self.intervals]


@dataclass(frozen=True)
class RegionMetrics:
    recall: float
    precision: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


def _merge(intervals: list[Interval]) -> tuple[Interval, ...]:
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if lo > hi:
            raise DomainError(f"interval [{lo}, {hi}] has its endpoints reversed")
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def features_to_region(
    selected: Iterable[int], basis: SplineBasis | Sequence[Interval]
) -> Region:
    """Union of the supports of the selected basis functions."""
    supports = basis.supports if isinstance(basis, SplineBasis) else tuple(basis)
    chosen: list[Interval] = []
    for j in selected:
        if not 0 <= j < len(supports):
            raise DomainError(f"feature index {j} out of range 0..{len(supports) - 1}")
        chosen.append(supports[j])
    return Region(_merge(chosen))


def select_features(pips: np.ndarray, tau: float = DEFAULT_PIP_TAU) -> np.ndarray:
    """Indices with ``q_j > tau`` (strict)."""
    if not 0.0 < tau < 1.0:
        raise DomainError(f"PIP threshold must lie in (0, 1), got {tau}")
    return np.flatnonzero(np.asarray(pips) > tau)


def region_metrics(estimated: Region, truth: Region) -> RegionMetrics:
    """Recall, precision and F1 by Lebesgue measure of the overlap."""
    overlap = estimated.intersection_measure(truth)
    true_size = truth.measure
    est_size = estimated.measure
    recall = 1.0 if true_size == 0 else overlap / true_size
    if est_size == 0:
        precision = 1.0 if true_size == 0 else 0.0
    else:
        precision = overlap / est_size
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RegionMetrics(recall=recall, precision=precision, f1=f1)


def prediction_metrics(y_hat: np.ndarray, y_true: np.ndarray) -> tuple[float, float]:
    """``(rmse, mae)`` on whatever scale the inputs are in."""
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    if y_hat.size == 0 or y_hat.shape != y_true.shape:
        raise ShapeError(
            f"{y_hat.size} predictions for {y_true.size} responses"
        )
    resid = y_hat - y_true
    return float(np.sqrt(np.mean(resid * resid))), float(np.mean(np.abs(resid)))
