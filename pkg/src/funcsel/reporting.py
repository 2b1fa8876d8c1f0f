"""Output files: result, model and metrics JSON, PIP and metric tables.

JSON is written with sorted keys and no timestamps so that repeating a run
reproduces every file byte for byte.  Non-finite floats become ``null``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, Final

import numpy as np
import pandas as pd

from funcsel.config import ExperimentConfig, semantic_config
from funcsel.data import FLOAT_FORMAT, PROVENANCE_PREFIX, FunctionalDataset, ResponseStats
from funcsel.errors import DataError
from funcsel.network import NetworkParams
from funcsel.regions import Region, prediction_metrics, region_metrics
from funcsel.selector import SelectionResult, predict_ensemble, ridge_baseline
from funcsel.simulate import SimTruth
from funcsel.splines import build_basis

MODEL_FORMAT: Final = "funcsel-model/1"
SUMMARY_METRICS: Final = (
    "recall", "precision", "f1", "rmse", "mae", "ridge_rmse", "ridge_mae", "j_star",
)
SCENARIO_KEYS: Final = ("scenario", "beta_kind", "link_kind", "response_snr")


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return value.as_posix()
    return value


def write_json(path: Path, payload: Mapping) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def write_table(path: Path, frame: pd.DataFrame, provenance: Mapping | None = None) -> Path:
    """CSV with an optional ``# funcsel {...}`` provenance line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if provenance is not None:
            fh.write(PROVENANCE_PREFIX + json.dumps(_jsonable(provenance), sort_keys=True) + "\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def provenance(command: str, config: ExperimentConfig, *, seed: int | None = None) -> dict:
    from funcsel import __version__

    return {
        "version": __version__,
        "command": command,
        "seed": config.seed if seed is None else seed,
        "config_hash": config.hash,
        "config": semantic_config(config.raw),
    }


# ---------------------------------------------------------------------------
# Selection result and model
# ---------------------------------------------------------------------------


def pip_table(result: SelectionResult) -> pd.DataFrame:
    """One row per spline feature: index, support midpoint and ends, PIP."""
    supports = np.array(result.basis.supports)
    return pd.DataFrame(
        {
            "feature": np.arange(result.basis.count),
            "t": result.basis.midpoints(),
            "t_lo": supports[:, 0],
            "t_hi": supports[:, 1],
            "pip": result.pips,
        }
    )


def result_payload(result: SelectionResult, prov: Mapping) -> dict:
    return {
        "provenance": prov,
        "j_star": result.j_star,
        "r_star": result.r_star,
        "criterion_used": result.criterion_used,
        "mask": result.final_mask,
        "selected": result.selected,
        "pips": pip_table(result).to_dict(orient="records"),
        "region": result.region.to_list(),
        "per_j": [s.to_dict() for s in result.per_j],
        "scores": [r.to_dict() for r in result.restart_table],
    }


def _params_payload(params: NetworkParams) -> dict:
    return {
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def _params_from_payload(payload: Mapping) -> NetworkParams:
    return NetworkParams(
        tuple(np.asarray(w, dtype=np.float64).reshape(len(w), -1) for w in payload["weights"]),
        tuple(np.asarray(b, dtype=np.float64) for b in payload["biases"]),
    )


def model_payload(result: SelectionResult, prov: Mapping) -> dict:
    """Everything needed to predict again.

    Weights are nested per layer as ``weights[h][out][in]``; flattening layer
    by layer, row-major, each layer's weights before its bias, gives the
    parameter order used by the evidence computation.
    """
    return {
        "provenance": prov,
        "format": MODEL_FORMAT,
        "basis": {
            "degree": result.basis.degree,
            "count": result.basis.count,
            "knots": result.basis.knots,
        },
        "grid": result.grid,
        "standardization": result.stats.to_dict(),
        "widths": list(result.final_params.widths),
        "denoise": result.denoise,
        "j_star": result.j_star,
        "r_star": result.r_star,
        "criterion_used": result.criterion_used,
        "mask": result.final_mask,
        "pips": result.pips,
        "selected": result.selected,
        "region": result.region.to_list(),
        "final_params": _params_payload(result.final_params),
        "ensemble": [_params_payload(p) for p in result.ensemble],
    }


def load_model(path: Path) -> SelectionResult:
    """Rebuild a :class:`SelectionResult` (without its score table) from model JSON."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}; run 'funcsel fit' first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from None
    if payload.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} file")
    basis_info = payload["basis"]
    basis = build_basis(basis_info["count"], basis_info["degree"])
    if not np.allclose(basis.knots, basis_info["knots"], rtol=0, atol=1e-12):
        raise DataError(f"{path}: knot vector does not match a clamped uniform basis")
    return SelectionResult(
        j_star=payload["j_star"],
        r_star=payload["r_star"],
        criterion_used=payload["criterion_used"],
        basis=basis,
        grid=np.asarray(payload["grid"], dtype=np.float64),
        stats=ResponseStats(**payload["standardization"]),
        final_params=_params_from_payload(payload["final_params"]),
        final_mask=np.asarray(payload["mask"], dtype=bool),
        pips=np.asarray(payload["pips"], dtype=np.float64),
        selected=np.asarray(payload["selected"], dtype=np.int64),
        region=Region.from_intervals(payload["region"]),
        per_j=(),
        ensemble=tuple(_params_from_payload(p) for p in payload["ensemble"]),
        denoise=bool(payload.get("denoise", False)),
    )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def evaluate(
    result: SelectionResult,
    dataset: FunctionalDataset,
    truth: SimTruth | None = None,
) -> dict:
    """Region metrics against ``truth`` and test-split errors of the ensemble
    and of the ridge baseline at ``j_star``."""
    metrics: dict[str, Any] = {
        "j_star": result.j_star,
        "criterion_used": result.criterion_used,
        "n_selected": int(result.selected.size),
        "region_measure": result.region.measure,
        "region": region_metrics(result.region, truth.true_region).to_dict() if truth else None,
    }
    test = dataset.rows("test")
    if not test.size:
        metrics["prediction"] = None
        metrics["baseline"] = None
        return metrics
    curves = dataset.curve_grid("test")
    y_test = dataset.responses_of("test")
    rmse, mae = prediction_metrics(predict_ensemble(result, curves), y_test)
    ridge = ridge_baseline(dataset, result.basis, smooth=result.denoise)
    ridge_rmse, ridge_mae = prediction_metrics(ridge.predict(curves), y_test)
    metrics["prediction"] = {"rmse": rmse, "mae": mae, "n_test": int(test.size)}
    metrics["baseline"] = {"rmse": ridge_rmse, "mae": ridge_mae, "alpha": ridge.alpha}
    return metrics


def metrics_row(metrics: Mapping) -> dict[str, Any]:
    """Flatten one metrics object for the replicate table."""
    region = metrics.get("region") or {}
    pred = metrics.get("prediction") or {}
    base = metrics.get("baseline") or {}
    return {
        "j_star": metrics.get("j_star"),
        "criterion_used": metrics.get("criterion_used"),
        "recall": region.get("recall", np.nan),
        "precision": region.get("precision", np.nan),
        "f1": region.get("f1", np.nan),
        "rmse": pred.get("rmse", np.nan),
        "mae": pred.get("mae", np.nan),
        "ridge_rmse": base.get("rmse", np.nan),
        "ridge_mae": base.get("mae", np.nan),
    }


def summarize(replicates: pd.DataFrame) -> pd.DataFrame:
    """Mean, median, quartiles and IQR per scenario and metric."""
    metrics = [m for m in SUMMARY_METRICS if m in replicates.columns]
    long = replicates.melt(
        id_vars=[k for k in SCENARIO_KEYS if k in replicates.columns],
        value_vars=metrics,
        var_name="metric",
    )
    long["value"] = pd.to_numeric(long["value"], errors="coerce")
    keys = [k for k in SCENARIO_KEYS if k in long.columns] + ["metric"]
    grouped = long.groupby(keys, sort=False)["value"]
    summary = pd.DataFrame(
        {
            "n": grouped.count(),
            "mean": grouped.mean(),
            "median": grouped.median(),
            "q25": grouped.quantile(0.25),
            "q75": grouped.quantile(0.75),
        }
    ).reset_index()
    summary["iqr"] = summary["q75"] - summary["q25"]
    return summary


def replicate_frame(rows: Sequence[Mapping]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows))
    order = [*SCENARIO_KEYS, "replicate", "seed"]
    return frame[[c for c in order if c in frame.columns] + [c for c in frame.columns if c not in order]]
