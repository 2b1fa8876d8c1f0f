"""Synthetic single-index data: cosine-expansion curves through a localized
coefficient function and a link, with SNR-calibrated noise."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Final

import numpy as np
from scipy.special import expit

from funcsel.data import FunctionalDataset
from funcsel.errors import CalibrationError, ConfigError
from funcsel.regions import Region
from funcsel.splines import CurveGrid, trapezoid_weights

# ---------------------------------------------------------------------------
# Generator constants
# ---------------------------------------------------------------------------

N_COSINE_TERMS: Final = 50
LEADING_SCALES: Final = (20.0, 15.0, 15.0)  # z_1..z_3; z_k = 1 afterwards
UNIFORM_HALF_WIDTH: Final = float(np.sqrt(3.0))  # unit-variance uniform
REFINE_FACTOR: Final = 10

DEFAULT_CURVE_SNR: Final = 10.0
DEFAULT_GRID_LEN: Final = 101
DEFAULT_N_TRAIN: Final = 1000
DEFAULT_N_VAL: Final = 200
DEFAULT_N_TEST: Final = 200


class _CaseInsensitive(str, Enum):
    @classmethod
    def _missing_(cls, value: object):
        if isinstance(value, str):
            for member in cls:
                if member.value == value.lower():
                    return member
        return None


class BetaKind(_CaseInsensitive):
    SIMPLE = "simple"
    MEDIUM = "medium"
    COMPLEX = "complex"


class LinkKind(_CaseInsensitive):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    SINUSOIDAL = "sinusoidal"
    COMPOSITE = "composite"


_BUMPS: Final[dict[BetaKind, tuple[tuple[float, float], ...]]] = {
    BetaKind.SIMPLE: ((0.4, 0.6),),
    BetaKind.MEDIUM: ((0.1, 0.3),),
    BetaKind.COMPLEX: ((0.05, 0.15), (0.75, 0.85)),
}


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimScenario:
    beta_kind: BetaKind = BetaKind.SIMPLE
    link_kind: LinkKind = LinkKind.LINEAR
    response_snr: float = 10.0
    curve_snr: float = DEFAULT_CURVE_SNR
    grid_len: int = DEFAULT_GRID_LEN
    n_train: int = DEFAULT_N_TRAIN
    n_val: int = DEFAULT_N_VAL
    n_test: int = DEFAULT_N_TEST
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "beta_kind", BetaKind(self.beta_kind))
            object.__setattr__(self, "link_kind", LinkKind(self.link_kind))
        except ValueError as exc:
            raise ConfigError(f"scenario: {exc}") from None
        for name in ("response_snr", "curve_snr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"scenario.{name} must be positive")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"scenario.{name} must be at least 1")
        if self.grid_len < 2:
            raise ConfigError("scenario.grid_len must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def n_total(self) -> int:
        return self.n_train + self.n_val + self.n_test

    @property
    def name(self) -> str:
        """Directory-friendly label, e.g. ``simple-linear-snr10``."""
        return f"{self.beta_kind.value}-{self.link_kind.value}-snr{self.response_snr:g}"

    def to_dict(self) -> dict:
        return {
            "beta_kind": self.beta_kind.value,
            "link_kind": self.link_kind.value,
            "response_snr": self.response_snr,
            "curve_snr": self.curve_snr,
            "grid_len": self.grid_len,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class SimTruth:
    true_region: Region
    beta_values_on_grid: np.ndarray
    sigma_eps_sq: float
    signal_var: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "true_region": self.true_region.to_list(),
            "beta_values_on_grid": self.beta_values_on_grid.tolist(),
            "sigma_eps_sq": self.sigma_eps_sq,
            "signal_var": self.signal_var,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> SimTruth:
        return cls(
            true_region=Region.from_intervals(payload["true_region"]),
            beta_values_on_grid=np.asarray(payload.get("beta_values_on_grid", []), dtype=np.float64),
            sigma_eps_sq=float(payload.get("sigma_eps_sq", float("nan"))),
            signal_var=float(payload.get("signal_var", float("nan"))),
        )


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


def observation_grid(grid_len: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, grid_len)


def cosine_basis(points: np.ndarray) -> np.ndarray:
    """``len(points) x K`` matrix of ``phi_1 = 1`` and ``sqrt(2) cos((k-1) pi t)``."""
    k = np.arange(N_COSINE_TERMS)
    phi = np.sqrt(2.0) * np.cos(np.pi * np.outer(points, k))
    phi[:, 0] = 1.0
    return phi


def _scales() -> np.ndarray:
    z = np.ones(N_COSINE_TERMS)
    z[: len(LEADING_SCALES)] = LEADING_SCALES
    return z


def draw_coefficients(n: int, rng: np.random.Generator) -> np.ndarray:
    r = rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, size=(n, N_COSINE_TERMS))
    return r * _scales()


def gen_curves(n: int, grid_len: int = DEFAULT_GRID_LEN, seed: int = 0) -> CurveGrid:
    """Noise-free curves on a uniform ``grid_len``-point grid."""
    if n < 1:
        raise ConfigError(f"need at least one curve, got n={n}")
    coef = draw_coefficients(n, np.random.default_rng(seed))
    points = observation_grid(grid_len)
    return CurveGrid(points, coef @ cosine_basis(points).T)


# ---------------------------------------------------------------------------
# Coefficient functions and links
# ---------------------------------------------------------------------------


def _bump(t: np.ndarray, a: float, b: float) -> np.ndarray:
    """Quadratic bump on [a, b] with peak 1, zero elsewhere."""
    inside = (t >= a) & (t <= b)
    return np.where(inside, 4.0 * (t - a) * (b - t) / (b - a) ** 2, 0.0)


def beta_true(kind: BetaKind | str, t: float | np.ndarray) -> float | np.ndarray:
    kind = BetaKind(kind)
    arr = np.asarray(t, dtype=np.float64)
    if kind is BetaKind.SIMPLE:
        out = 5.0 * _bump(arr, 0.4, 0.6)
    elif kind is BetaKind.MEDIUM:
        out = 5.0 * _bump(arr, 0.1, 0.3)
    else:
        bumps = sum(_bump(arr, a, b) for a, b in _BUMPS[kind])
        out = 2.5 * bumps * np.sin(2.0 * np.pi * (arr + 0.1))
    return float(out) if np.ndim(t) == 0 else out


def link(kind: LinkKind | str, u: float | np.ndarray) -> float | np.ndarray:
    kind = LinkKind(kind)
    arr = np.asarray(u, dtype=np.float64)
    if kind is LinkKind.LINEAR:
        out = arr
    elif kind is LinkKind.LOGISTIC:
        out = expit(-arr)
    elif kind is LinkKind.SINUSOIDAL:
        out = np.sin(arr)
    else:
        out = np.tanh(arr) + np.sin(4.0 * arr) * np.exp(-0.01 * arr * arr)
    return float(out) if np.ndim(u) == 0 else out


def true_region(kind: BetaKind | str) -> Region:
    return Region(_BUMPS[BetaKind(kind)])


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


def calibrate_noise(signal: np.ndarray, snr: float) -> float:
    """Noise variance giving ``Var(signal) / Var(noise) = snr``."""
    var = float(np.var(signal))
    if not var > 0:
        raise CalibrationError(
            "signal variance is zero; cannot calibrate noise to a target SNR"
        )
    return var / snr


def gen_dataset(scenario: SimScenario) -> tuple[FunctionalDataset, SimTruth]:
    """Draw one dataset; rows are ordered train, then val, then test."""
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n_total
    coef = draw_coefficients(n, rng)

    fine = np.linspace(0.0, 1.0, REFINE_FACTOR * (scenario.grid_len - 1) + 1)
    beta_fine = beta_true(scenario.beta_kind, fine)
    index = (coef @ cosine_basis(fine).T) @ (trapezoid_weights(fine) * beta_fine)
    signal = link(scenario.link_kind, index)
    sigma_eps_sq = calibrate_noise(signal, scenario.response_snr)
    responses = signal + rng.normal(0.0, np.sqrt(sigma_eps_sq), size=n)

    grid = observation_grid(scenario.grid_len)
    clean = coef @ cosine_basis(grid).T
    point_var = np.var(clean, axis=0)
    observed = clean + rng.normal(size=clean.shape) * np.sqrt(point_var / scenario.curve_snr)

    split = np.array(
        ["train"] * scenario.n_train + ["val"] * scenario.n_val + ["test"] * scenario.n_test,
        dtype=object,
    )
    dataset = FunctionalDataset.build(grid, observed, responses, split)
    truth = SimTruth(
        true_region=true_region(scenario.beta_kind),
        beta_values_on_grid=beta_true(scenario.beta_kind, grid),
        sigma_eps_sq=sigma_eps_sq,
        signal_var=float(np.var(signal)),
    )
    return dataset, truth
