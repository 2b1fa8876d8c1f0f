"""Laplace-approximated log-evidence of a sparsified network.

The curvature comes from central differences of the analytic gradient over
the retained parameters: every bias, every deep weight, and the first-layer
weights of the columns the norm threshold keeps.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable
from dataclasses import dataclass
from typing import Final

import numpy as np
from scipy.linalg import eigh

from funcsel.errors import EvidenceTooLargeError, FuncselWarning, NumericalError
from funcsel.network import NetworkParams
from funcsel.prior import SparsityHyper, column_sq_norms, norm_threshold
from funcsel.trainer import objective_grad

_LOG_2PI: Final = float(np.log(2.0 * np.pi))

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_HESSIAN_CAP: Final = 5000
DEFAULT_FD_STEP: Final = 1e-5
DEFAULT_JITTER: Final = 1e-6
DEFAULT_EIG_FLOOR: Final = 1e-10
MODE_GRAD_WARN: Final = 1e-2
SYMMETRY_WARN: Final = 1e-6


@dataclass(frozen=True)
class EvidenceReport:
    log_evidence: float
    retained_dim: int
    n_train: int
    logdet_term: float  # log det of the stabilized negative Hessian
    jitter_used: float
    clamped_eigs: int


@dataclass(frozen=True, eq=False)
class SparsifiedParams:
    """Network with first-layer columns outside ``mask`` set to exactly zero."""

    params: NetworkParams
    mask: np.ndarray

    def retained_indices(self) -> np.ndarray:
        """Flat indices of the free parameters under this mask."""
        widths = self.params.widths
        n_first = widths[0] * widths[1]
        keep_first = np.tile(self.mask, widths[1])
        rest = np.arange(n_first, self.params.size)
        return np.concatenate([np.flatnonzero(keep_first), rest])


# ---------------------------------------------------------------------------
# Sparsification
# ---------------------------------------------------------------------------


def _apply_mask(params: NetworkParams, mask: np.ndarray) -> NetworkParams:
    return params.with_first_layer(params.first_layer * mask[None, :])


def sparsify(params: NetworkParams, hyper: SparsityHyper) -> SparsifiedParams:
    """Zero the first-layer columns whose squared norm is at most ``tau_n``."""
    tau = norm_threshold(hyper, params.widths[1])
    mask = column_sq_norms(params) > tau
    return SparsifiedParams(_apply_mask(params, mask), mask)


# ---------------------------------------------------------------------------
# Generic Laplace machinery (flat parameter vectors)
# ---------------------------------------------------------------------------


def finite_difference_hessian(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    step: float = DEFAULT_FD_STEP,
) -> tuple[np.ndarray, float]:
    """Symmetrized Hessian from central differences of ``grad_fn``.

    Returns the matrix and the relative asymmetry
    ``max|M - M^T| / max|M|`` measured before symmetrizing.
    """
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.size
    m = np.empty((d, d))
    for k in range(d):
        up = theta.copy()
        down = theta.copy()
        up[k] += step
        down[k] -= step
        m[:, k] = (grad_fn(up) - grad_fn(down)) / (2.0 * step)
    if not np.all(np.isfinite(m)):
        raise NumericalError("finite-difference Hessian has non-finite entries")
    scale = float(np.max(np.abs(m))) if d else 0.0
    asym = float(np.max(np.abs(m - m.T))) / scale if scale > 0 else 0.0
    return (m + m.T) / 2.0, asym


def log_evidence_from_curvature(
    n_h: float,
    neg_hessian: np.ndarray,
    n_train: int,
    *,
    jitter: float = DEFAULT_JITTER,
    eig_floor: float = DEFAULT_EIG_FLOOR,
) -> EvidenceReport:
    """``n h + d/2 log 2pi - d/2 log n - 1/2 log det(-H)`` with stabilization.

    ``neg_hessian`` is ``-H`` for ``h = -objective / n``; ``jitter`` is added
    to its diagonal and eigenvalues below ``eig_floor`` are raised to it.
    """
    d = neg_hessian.shape[0]
    if d:
        eigvals = eigh(neg_hessian + jitter * np.eye(d), eigvals_only=True)
        clamped = int(np.sum(eigvals < eig_floor))
        logdet = float(np.sum(np.log(np.maximum(eigvals, eig_floor))))
    else:
        clamped, logdet = 0, 0.0
    value = n_h + 0.5 * d * _LOG_2PI - 0.5 * d * np.log(n_train) - 0.5 * logdet
    if not np.isfinite(value):
        raise NumericalError("log-evidence is not finite")
    return EvidenceReport(
        log_evidence=float(value),
        retained_dim=d,
        n_train=n_train,
        logdet_term=logdet,
        jitter_used=jitter,
        clamped_eigs=clamped,
    )


# ---------------------------------------------------------------------------
# Network wrappers
# ---------------------------------------------------------------------------


def _scaled_grad_fn(
    sparsified: SparsifiedParams,
    features: np.ndarray,
    responses: np.ndarray,
    hyper: SparsityHyper,
    n_train: int,
) -> tuple[np.ndarray, np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    params = _apply_mask(sparsified.params, sparsified.mask)
    widths = params.widths
    base = params.flatten()
    idx = sparsified.retained_indices()

    def grad_h(sub: np.ndarray) -> np.ndarray:
        theta = base.copy()
        theta[idx] = sub
        _, g = objective_grad(NetworkParams.from_flat(widths, theta), features, responses, hyper)
        return -g[idx] / n_train

    return base, idx, grad_h


def restricted_hessian(
    sparsified: SparsifiedParams,
    features: np.ndarray,
    responses: np.ndarray,
    hyper: SparsityHyper,
    fd_step: float = DEFAULT_FD_STEP,
    *,
    cap: int = DEFAULT_HESSIAN_CAP,
    n_train: int | None = None,
) -> np.ndarray:
    """Hessian of ``h = -objective / n`` over the retained parameters."""
    n_train = len(responses) if n_train is None else n_train
    d = int(sparsified.retained_indices().size)
    if d > cap:
        raise EvidenceTooLargeError(d, cap)
    base, idx, grad_h = _scaled_grad_fn(sparsified, features, responses, hyper, n_train)
    hess, asym = finite_difference_hessian(grad_h, base[idx], fd_step)
    if asym > SYMMETRY_WARN:
        warnings.warn(
            f"finite-difference Hessian asymmetry {asym:.2e} (symmetrized)",
            FuncselWarning,
            stacklevel=2,
        )
    return hess


def laplace_log_evidence(
    sparsified: SparsifiedParams,
    features: np.ndarray,
    responses: np.ndarray,
    hyper: SparsityHyper,
    n_train: int | None = None,
    *,
    fd_step: float = DEFAULT_FD_STEP,
    cap: int = DEFAULT_HESSIAN_CAP,
    jitter: float = DEFAULT_JITTER,
    eig_floor: float = DEFAULT_EIG_FLOOR,
) -> EvidenceReport:
    """Laplace log-evidence at the sparsified surrogate on the training data."""
    n_train = len(responses) if n_train is None else n_train
    params = _apply_mask(sparsified.params, sparsified.mask)
    value, grad = objective_grad(params, features, responses, hyper)
    idx = sparsified.retained_indices()
    if idx.size and float(np.max(np.abs(grad[idx]))) / n_train > MODE_GRAD_WARN:
        warnings.warn(
            "gradient at the evidence surrogate is large; the Laplace "
            "approximation may be poor",
            FuncselWarning,
            stacklevel=2,
        )
    hess = restricted_hessian(
        sparsified, features, responses, hyper, fd_step, cap=cap, n_train=n_train
    )
    return log_evidence_from_curvature(
        -value, -hess, n_train, jitter=jitter, eig_floor=eig_floor
    )
