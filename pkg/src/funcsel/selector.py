"""Projection-size selection: fit every candidate basis size with restarts,
score each size by mean Laplace evidence or mean validation MSE, then keep the
best restart at the chosen size for interpretation and all of its restarts
for prediction.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Final

import numpy as np
from sklearn.linear_model import RidgeCV

from funcsel.data import FunctionalDataset, ResponseStats, destandardize
from funcsel.errors import (
    ConfigError,
    DataError,
    DivergenceError,
    EvidenceTooLargeError,
    FuncselWarning,
    NumericalError,
)
from funcsel.evidence import (
    DEFAULT_EIG_FLOOR,
    DEFAULT_FD_STEP,
    DEFAULT_HESSIAN_CAP,
    DEFAULT_JITTER,
    laplace_log_evidence,
    sparsify,
)
from funcsel.network import NetworkParams, forward
from funcsel.prior import SparsityHyper, pip
from funcsel.regions import DEFAULT_PIP_TAU, Region, features_to_region, select_features
from funcsel.splines import DEFAULT_DEGREE, CurveGrid, SplineBasis, build_basis, denoise, project
from funcsel.trainer import DEFAULT_HIDDEN, DivergedFit, FitRecord, TrainConfig, run_restarts

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_J_CANDIDATES: Final = (55, 60, 70, 80)
CRITERIA: Final = ("evidence", "val")
RIDGE_ALPHAS: Final = tuple(np.logspace(-4, 4, 17))

Progress = Callable[[str], None]


def _silent(_message: str) -> None:
    return None


@dataclass(frozen=True)
class SelectorConfig:
    j_candidates: tuple[int, ...] = DEFAULT_J_CANDIDATES
    criterion: str = "evidence"
    spline_degree: int = DEFAULT_DEGREE
    train: TrainConfig = field(default_factory=TrainConfig)
    hyper: SparsityHyper = field(default_factory=SparsityHyper)
    hidden_widths: tuple[int, ...] = DEFAULT_HIDDEN
    hessian_cap: int = DEFAULT_HESSIAN_CAP
    fd_step: float = DEFAULT_FD_STEP
    jitter: float = DEFAULT_JITTER
    eig_floor: float = DEFAULT_EIG_FLOOR
    pip_tau: float = DEFAULT_PIP_TAU
    denoise: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "j_candidates", tuple(int(j) for j in self.j_candidates))
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if not self.j_candidates:
            raise ConfigError("j_candidates must not be empty")
        if len(set(self.j_candidates)) != len(self.j_candidates):
            raise ConfigError("j_candidates must not repeat a value")
        if self.spline_degree < 1:
            raise ConfigError(f"spline_degree must be >= 1, got {self.spline_degree}")
        too_small = [j for j in self.j_candidates if j < self.spline_degree + 1]
        if too_small:
            raise ConfigError(
                f"projection sizes {too_small} are below degree + 1 = {self.spline_degree + 1}"
            )
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {', '.join(CRITERIA)}, got {self.criterion!r}")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ConfigError("hidden_widths must be a non-empty list of positive ints")
        if self.hessian_cap < 0:
            raise ConfigError("hessian_cap must be non-negative")
        for name in ("fd_step", "jitter", "eig_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.pip_tau < 1.0:
            raise ConfigError(f"pip_tau must lie in (0, 1), got {self.pip_tau}")

    def to_dict(self) -> dict:
        return {
            "j_candidates": list(self.j_candidates),
            "criterion": self.criterion,
            "spline_degree": self.spline_degree,
            "train": self.train.to_dict(),
            "hyper": self.hyper.to_dict(),
            "hidden_widths": list(self.hidden_widths),
            "hessian_cap": self.hessian_cap,
            "fd_step": self.fd_step,
            "jitter": self.jitter,
            "eig_floor": self.eig_floor,
            "pip_tau": self.pip_tau,
            "denoise": self.denoise,
        }


# ---------------------------------------------------------------------------
# Score table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RestartScore:
    """One (J, r) cell of the score table; diverged cells carry no scores."""

    j: int
    restart: int
    seed: int
    val_mse: float | None
    log_evidence: float | None = None
    retained_dim: int | None = None
    n_selected: int | None = None
    iterations_run: int | None = None
    diverged: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "restart": self.restart,
            "seed": self.seed,
            "val_mse": self.val_mse,
            "log_evidence": self.log_evidence,
            "retained_dim": self.retained_dim,
            "n_selected": self.n_selected,
            "iterations_run": self.iterations_run,
            "diverged": self.diverged,
            "note": self.note,
        }


@dataclass(frozen=True)
class JScore:
    j: int
    mean_evidence: float | None
    mean_val: float | None
    n_survivors: int
    restarts: tuple[RestartScore, ...]

    @classmethod
    def aggregate(cls, j: int, restarts: Sequence[RestartScore]) -> JScore:
        """Means over the restarts that did not diverge."""
        vals = [r.val_mse for r in restarts if not r.diverged and r.val_mse is not None]
        evs = [r.log_evidence for r in restarts if not r.diverged and r.log_evidence is not None]
        return cls(
            j=j,
            mean_evidence=float(np.mean(evs)) if evs else None,
            mean_val=float(np.mean(vals)) if vals else None,
            n_survivors=len(vals),
            restarts=tuple(restarts),
        )

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "mean_evidence": self.mean_evidence,
            "mean_val": self.mean_val,
            "n_survivors": self.n_survivors,
        }


def select_projection(table: Sequence[JScore], criterion: str) -> JScore:
    """Highest mean evidence or lowest mean validation MSE; ties go to the smaller J."""
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}")
    if criterion == "evidence":
        scored = [(-s.mean_evidence, s.j, s) for s in table if s.mean_evidence is not None]
    else:
        scored = [(s.mean_val, s.j, s) for s in table if s.mean_val is not None]
    if not scored:
        raise DivergenceError(
            "no projection size has a usable score", iteration=0, learning_rate=float("nan")
        )
    return min(scored, key=lambda item: item[:2])[2]


def select_restart(restarts: Sequence[RestartScore]) -> int:
    """Position of the restart with the lowest validation MSE; ties go to the first."""
    best, best_pos = np.inf, -1
    for pos, r in enumerate(restarts):
        if not r.diverged and r.val_mse is not None and r.val_mse < best:
            best, best_pos = r.val_mse, pos
    if best_pos < 0:
        raise DivergenceError(
            "every restart at the selected size diverged",
            iteration=0,
            learning_rate=float("nan"),
        )
    return best_pos


# ---------------------------------------------------------------------------
# Result
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SelectionResult:
    j_star: int
    r_star: int  # position among the restarts at j_star
    criterion_used: str
    basis: SplineBasis
    grid: np.ndarray
    stats: ResponseStats
    final_params: NetworkParams
    final_mask: np.ndarray
    pips: np.ndarray
    selected: np.ndarray
    region: Region
    per_j: tuple[JScore, ...]
    ensemble: tuple[NetworkParams, ...]
    denoise: bool = False

    @property
    def restart_table(self) -> list[RestartScore]:
        return [r for score in self.per_j for r in score.restarts]


@dataclass
class _Candidate:
    basis: SplineBasis
    outcomes: list[FitRecord | DivergedFit]
    scores: list[RestartScore]


def _prepare(curves: CurveGrid, basis: SplineBasis, smooth: bool) -> np.ndarray:
    return project(denoise(curves, basis) if smooth else curves, basis)


def _score_restart(
    j: int,
    restart: int,
    outcome: FitRecord | DivergedFit,
    x_tr: np.ndarray,
    y_tr: np.ndarray,
    config: SelectorConfig,
) -> RestartScore:
    if isinstance(outcome, DivergedFit):
        return RestartScore(
            j=j, restart=restart, seed=outcome.seed_used, val_mse=None,
            diverged=True, note=outcome.message,
        )
    sparsified = sparsify(outcome.params, config.hyper)
    evidence = retained = None
    note = ""
    if config.criterion == "evidence":
        try:
            report = laplace_log_evidence(
                sparsified, x_tr, y_tr, config.hyper,
                fd_step=config.fd_step, cap=config.hessian_cap,
                jitter=config.jitter, eig_floor=config.eig_floor,
            )
            evidence, retained = report.log_evidence, report.retained_dim
        except (EvidenceTooLargeError, NumericalError) as exc:
            note = str(exc)
    return RestartScore(
        j=j,
        restart=restart,
        seed=outcome.seed_used,
        val_mse=outcome.val_mse,
        log_evidence=evidence,
        retained_dim=retained,
        n_selected=int(sparsified.mask.sum()),
        iterations_run=outcome.iterations_run,
        note=note,
    )


def run_selection(
    dataset: FunctionalDataset,
    config: SelectorConfig,
    *,
    progress: Progress | None = None,
    workers: int = 1,
) -> SelectionResult:
    """Fit, score and select over ``config.j_candidates``."""
    report = progress or _silent
    config.hyper.require_separated()
    dataset.require_fit_splits()
    train_curves = dataset.curve_grid("train")
    val_curves = dataset.curve_grid("val")
    y_tr = dataset.responses_of("train", standardized=True)
    y_va = dataset.responses_of("val", standardized=True)

    candidates: dict[int, _Candidate] = {}
    table: list[JScore] = []
    for j in config.j_candidates:
        basis = build_basis(j, config.spline_degree)
        x_tr = _prepare(train_curves, basis, config.denoise)
        x_va = _prepare(val_curves, basis, config.denoise)
        report(f"J={j}: fitting {config.train.restarts} restart(s)")
        outcomes = run_restarts(
            x_tr, y_tr, x_va, y_va, config.hyper, config.train,
            hidden_widths=config.hidden_widths, workers=workers,
        )
        scores = []
        for r, outcome in enumerate(outcomes):
            score = _score_restart(j, r, outcome, x_tr, y_tr, config)
            if score.diverged:
                warnings.warn(
                    f"J={j} restart {r + 1} (seed {score.seed}) diverged: {score.note}",
                    FuncselWarning,
                    stacklevel=2,
                )
            report(
                f"J={j} restart {r + 1}: val_mse={score.val_mse} "
                f"log_evidence={score.log_evidence}"
            )
            scores.append(score)
        summary = JScore.aggregate(j, scores)
        if summary.n_survivors == 0:
            warnings.warn(
                f"every restart at J={j} diverged; J={j} is excluded",
                FuncselWarning,
                stacklevel=2,
            )
        candidates[j] = _Candidate(basis, outcomes, scores)
        table.append(summary)

    surviving = [s for s in table if s.n_survivors > 0]
    if not surviving:
        raise DivergenceError(
            "every restart at every projection size diverged",
            iteration=0,
            learning_rate=config.train.learning_rate,
        )
    criterion = config.criterion
    if criterion == "evidence" and any(s.mean_evidence is None for s in surviving):
        missing = [s.j for s in surviving if s.mean_evidence is None]
        warnings.warn(
            f"no evidence score for J={missing} (Hessian above the cap of "
            f"{config.hessian_cap} or not finite); selecting by validation MSE",
            FuncselWarning,
            stacklevel=2,
        )
        criterion = "val"

    best = select_projection(surviving, criterion)
    chosen = candidates[best.j]
    r_star = select_restart(chosen.scores)
    final = chosen.outcomes[r_star]
    assert isinstance(final, FitRecord)
    pips = pip(final.params, config.hyper)
    selected = select_features(pips, config.pip_tau)
    report(f"selected J={best.j}, restart {r_star + 1} by {criterion}")
    return SelectionResult(
        j_star=best.j,
        r_star=r_star,
        criterion_used=criterion,
        basis=chosen.basis,
        grid=dataset.grid,
        stats=dataset.stats,
        final_params=final.params,
        final_mask=sparsify(final.params, config.hyper).mask,
        pips=pips,
        selected=selected,
        region=features_to_region(selected, chosen.basis),
        per_j=tuple(table),
        ensemble=tuple(o.params for o in chosen.outcomes if isinstance(o, FitRecord)),
        denoise=config.denoise,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def _features_for(
    grid: np.ndarray, basis: SplineBasis, curves: CurveGrid, smooth: bool
) -> np.ndarray:
    if not curves.same_grid(grid):
        raise DataError("curves are observed on a different grid than the fitted model")
    return _prepare(curves, basis, smooth)


def predict_ensemble(result: SelectionResult, curves: CurveGrid) -> np.ndarray:
    """Mean restart output at ``j_star``, on the original response scale."""
    x = _features_for(result.grid, result.basis, curves, result.denoise)
    outputs = np.stack([forward(p, x) for p in result.ensemble])
    return destandardize(outputs.mean(axis=0), result.stats)


def predict_point(
    params: NetworkParams,
    basis: SplineBasis,
    curve: CurveGrid,
    stats: ResponseStats,
) -> float:
    """One network's prediction for a single curve, on the original response scale."""
    if curve.n_curves != 1:
        raise DataError(f"expected one curve, got {curve.n_curves}")
    value = forward(params, project(curve, basis)[0])
    return float(destandardize(value, stats))


# ---------------------------------------------------------------------------
# Linear single-index baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RidgeBaseline:
    model: RidgeCV
    basis: SplineBasis
    grid: np.ndarray
    smooth: bool = False

    @property
    def alpha(self) -> float:
        return float(self.model.alpha_)

    def predict(self, curves: CurveGrid) -> np.ndarray:
        x = _features_for(self.grid, self.basis, curves, self.smooth)
        return self.model.predict(x)


def ridge_baseline(
    dataset: FunctionalDataset, basis: SplineBasis, *, smooth: bool = False
) -> RidgeBaseline:
    """Ridge regression of the training responses on spline features.

    With ``smooth`` the curves are denoised first, matching a network fitted
    with ``denoise`` on.
    """
    model = RidgeCV(alphas=RIDGE_ALPHAS)
    model.fit(_prepare(dataset.curve_grid("train"), basis, smooth), dataset.responses_of("train"))
    return RidgeBaseline(model, basis, dataset.grid, smooth)
