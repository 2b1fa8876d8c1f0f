"""Column-wise spike-and-slab prior on the first layer, Gaussian elsewhere.

All mixture arithmetic runs in log space: at the default hyperparameters the
spike normalizer ``(1 - lambda) * sigma0^(-L_1)`` overflows a double long
before any weight is evaluated.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Final

import numpy as np
from scipy.special import expit

from funcsel.errors import ConfigError
from funcsel.network import GradientBuffer, NetworkParams

_LOG_2PI: Final = float(np.log(2.0 * np.pi))

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_LAMBDA: Final = 1e-5
DEFAULT_SIGMA0_SQ: Final = 1e-5
DEFAULT_SIGMA1_SQ: Final = 2e-3
DEFAULT_SIGMA_SQ: Final = 1.0
DEFAULT_NOISE_VAR: Final = 1.0


@dataclass(frozen=True)
class SparsityHyper:
    """Prior and noise configuration ``(lambda, sigma0^2, sigma1^2, sigma^2, sigma_eps^2)``."""

    lambda_n: float = DEFAULT_LAMBDA
    sigma0_sq: float = DEFAULT_SIGMA0_SQ
    sigma1_sq: float = DEFAULT_SIGMA1_SQ
    sigma_sq: float = DEFAULT_SIGMA_SQ
    noise_var: float = DEFAULT_NOISE_VAR

    def __post_init__(self) -> None:
        if not 0.0 < self.lambda_n <= 1.0:
            raise ConfigError(f"lambda_n must lie in (0, 1], got {self.lambda_n}")
        for name in ("sigma0_sq", "sigma1_sq", "sigma_sq", "noise_var"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value}")

    def require_separated(self) -> None:
        """Thresholding needs a slab strictly wider than the spike."""
        if not self.sigma1_sq > self.sigma0_sq:
            raise ConfigError(
                f"slab variance sigma1_sq={self.sigma1_sq} must exceed spike "
                f"variance sigma0_sq={self.sigma0_sq}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Mixture components
# ---------------------------------------------------------------------------


def _log_components(
    sq_norms: np.ndarray, width: int, hyper: SparsityHyper
) -> tuple[np.ndarray, np.ndarray]:
    """Log joint density of each column with the slab and with the spike."""
    with np.errstate(divide="ignore"):
        log_lam = np.log(hyper.lambda_n)
        log_one_minus = np.log1p(-hyper.lambda_n)
    slab = (
        log_lam
        - 0.5 * width * (_LOG_2PI + np.log(hyper.sigma1_sq))
        - sq_norms / (2.0 * hyper.sigma1_sq)
    )
    spike = (
        log_one_minus
        - 0.5 * width * (_LOG_2PI + np.log(hyper.sigma0_sq))
        - sq_norms / (2.0 * hyper.sigma0_sq)
    )
    return slab, spike


def column_sq_norms(params: NetworkParams) -> np.ndarray:
    w1 = params.first_layer
    return np.einsum("ij,ij->j", w1, w1)


def pip_from_sq_norms(
    sq_norms: np.ndarray, width: int, hyper: SparsityHyper
) -> np.ndarray:
    slab, spike = _log_components(np.asarray(sq_norms, dtype=np.float64), width, hyper)
    return expit(slab - spike)


def _deep_tensors(params: NetworkParams) -> list[np.ndarray]:
    return [*params.weights[1:], *params.biases]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def neg_log_marginal_prior(params: NetworkParams, hyper: SparsityHyper) -> float:
    """``-log pi(theta)`` with the inclusion indicators summed out."""
    slab, spike = _log_components(column_sq_norms(params), params.widths[1], hyper)
    first = -float(np.sum(np.logaddexp(slab, spike)))
    deep_sq = sum(float(np.sum(t * t)) for t in _deep_tensors(params))
    deep_count = sum(t.size for t in _deep_tensors(params))
    deep = deep_sq / (2.0 * hyper.sigma_sq) + 0.5 * deep_count * (
        _LOG_2PI + np.log(hyper.sigma_sq)
    )
    return first + float(deep)


def pip(params: NetworkParams, hyper: SparsityHyper) -> np.ndarray:
    """Plug-in posterior inclusion probability of every spline feature."""
    return pip_from_sq_norms(column_sq_norms(params), params.widths[1], hyper)


def prior_grad(params: NetworkParams, hyper: SparsityHyper) -> GradientBuffer:
    """Gradient of :func:`neg_log_marginal_prior`.

    Column ``j`` of the first layer is pulled toward zero with precision
    ``q_j / sigma1^2 + (1 - q_j) / sigma0^2``.
    """
    q = pip(params, hyper)
    precision = q / hyper.sigma1_sq + (1.0 - q) / hyper.sigma0_sq
    first = params.first_layer * precision[None, :]
    rest = tuple(w / hyper.sigma_sq for w in params.weights[1:])
    biases = tuple(b / hyper.sigma_sq for b in params.biases)
    return NetworkParams((first, *rest), biases)


def norm_threshold(hyper: SparsityHyper, first_layer_width: int) -> float:
    """Squared column norm at which the inclusion probability crosses 1/2."""
    hyper.require_separated()
    with np.errstate(divide="ignore"):
        log_odds = np.log1p(-hyper.lambda_n) - np.log(hyper.lambda_n)
    numerator = log_odds + 0.5 * first_layer_width * np.log(
        hyper.sigma1_sq / hyper.sigma0_sq
    )
    denominator = 1.0 / (2.0 * hyper.sigma0_sq) - 1.0 / (2.0 * hyper.sigma1_sq)
    return float(numerator / denominator)
