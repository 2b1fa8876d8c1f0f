"""Functional datasets: shared-grid curves, scalar responses and split labels.

CSV layout (one curve per row)::

    # funcsel {"version": ..., ...}        optional provenance line(s)
    t_1,...,t_L,response,split
    x_11,...,x_1L,y_1,train

The header cells of the curve columns *are* the grid.  ``split`` is optional;
without it rows are assigned in order to train / val / test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
import pandas as pd

from funcsel.errors import DataError, ParseError
from funcsel.splines import CurveGrid

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

SPLIT_LABELS: Final = ("train", "val", "test")
TRAIN_FRACTION: Final = 0.7
VAL_FRACTION: Final = 0.15
RESPONSE_COLUMN: Final = "response"
SPLIT_COLUMN: Final = "split"
PROVENANCE_PREFIX: Final = "# funcsel "
FLOAT_FORMAT: Final = "%.17g"


@dataclass(frozen=True)
class ResponseStats:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sd) and self.sd > 0):
            raise DataError(f"response standard deviation must be positive, got {self.sd}")

    @classmethod
    def of(cls, responses: np.ndarray) -> ResponseStats:
        y = np.asarray(responses, dtype=np.float64)
        if y.size == 0:
            raise DataError("cannot standardize an empty response vector")
        return cls(float(np.mean(y)), float(np.std(y)))

    def to_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "sd": self.sd}


def standardize(responses: np.ndarray, stats: ResponseStats) -> np.ndarray:
    return (np.asarray(responses, dtype=np.float64) - stats.mean) / stats.sd


def destandardize(responses: np.ndarray, stats: ResponseStats) -> np.ndarray:
    return np.asarray(responses, dtype=np.float64) * stats.sd + stats.mean


def default_split(n: int) -> np.ndarray:
    """Chronological 70/15/15 labels; train and val get at least one row each."""
    n_train = max(1, int(np.floor(TRAIN_FRACTION * n)))
    n_val = max(1, int(np.floor(VAL_FRACTION * n)))
    labels = ["train"] * n_train + ["val"] * n_val
    labels += ["test"] * max(0, n - len(labels))
    return np.array(labels[:n], dtype=object)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """Curves on one grid with responses, split labels and training statistics."""

    grid: np.ndarray
    curves: np.ndarray
    responses: np.ndarray
    split: np.ndarray
    stats: ResponseStats

    @classmethod
    def build(
        cls,
        grid: np.ndarray,
        curves: np.ndarray,
        responses: np.ndarray,
        split: np.ndarray | None = None,
    ) -> FunctionalDataset:
        """Validate the pieces and compute standardization from the train rows."""
        checked = CurveGrid(grid, curves)
        y = np.asarray(responses, dtype=np.float64).ravel()
        if y.size != checked.n_curves:
            raise DataError(f"{checked.n_curves} curves but {y.size} responses")
        if not np.all(np.isfinite(y)):
            raise DataError(f"response {int(np.flatnonzero(~np.isfinite(y))[0]) + 1} is not finite")
        labels = default_split(y.size) if split is None else np.asarray(split, dtype=object)
        if labels.shape != y.shape:
            raise DataError(f"{y.size} rows but {labels.size} split labels")
        unknown = sorted(set(labels) - set(SPLIT_LABELS))
        if unknown:
            raise DataError(f"unknown split label(s): {', '.join(map(str, unknown))}")
        train = labels == "train"
        if not train.any():
            raise DataError("dataset has no training rows")
        try:
            stats = ResponseStats.of(y[train])
        except DataError as exc:
            raise DataError(f"training responses are constant: {exc}") from None
        return cls(checked.points, checked.values, y, labels, stats)

    @property
    def n(self) -> int:
        return self.responses.size

    def rows(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.split == label)

    def curve_grid(self, label: str | None = None) -> CurveGrid:
        if label is None:
            return CurveGrid(self.grid, self.curves)
        return CurveGrid(self.grid, self.curves[self.rows(label)])

    def responses_of(self, label: str, *, standardized: bool = False) -> np.ndarray:
        y = self.responses[self.rows(label)]
        return standardize(y, self.stats) if standardized else y

    def require_fit_splits(self) -> None:
        for label in ("train", "val"):
            if not self.rows(label).size:
                raise DataError(f"dataset has no '{label}' rows; fitting needs both train and val")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _leading_comments(path: Path) -> int:
    count = 0
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            count += 1
    return count


def read_provenance(path: Path) -> dict | None:
    """The provenance object of a CSV written by :func:`save_csv`, if any."""
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith(PROVENANCE_PREFIX):
        return None
    return json.loads(first[len(PROVENANCE_PREFIX) :])


def _to_float(column: pd.Series, name: str, first_line: int) -> np.ndarray:
    raw = column.to_numpy(dtype=str)
    try:
        values = raw.astype(np.float64)
    except ValueError:
        for i, cell in enumerate(raw):
            try:
                float(cell)
            except ValueError:
                raise ParseError(
                    f"row {i + 1} (line {first_line + i}), column '{name}': "
                    f"not a number: {cell!r}"
                ) from None
        raise
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise ParseError(
            f"row {i + 1} (line {first_line + i}), column '{name}': "
            f"not a finite number: {raw[i]!r}"
        )
    return values


def load_csv(path: Path | str) -> FunctionalDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    skip = _leading_comments(path)
    try:
        frame = pd.read_csv(
            path, skiprows=skip, dtype=str, keep_default_na=False, na_filter=False
        )
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: ragged or malformed CSV: {exc}") from None
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path}: no header row") from None

    columns = list(frame.columns)
    if RESPONSE_COLUMN not in columns:
        raise ParseError(f"{path}: header has no '{RESPONSE_COLUMN}' column")
    has_split = SPLIT_COLUMN in columns
    grid_cols = columns[: columns.index(RESPONSE_COLUMN)]
    expected_tail = [RESPONSE_COLUMN, SPLIT_COLUMN] if has_split else [RESPONSE_COLUMN]
    if columns[len(grid_cols) :] != expected_tail:
        raise ParseError(
            f"{path}: header must end with '{','.join(expected_tail)}'"
        )
    try:
        grid = np.array(grid_cols, dtype=str).astype(np.float64)
    except ValueError:
        raise ParseError(f"{path}: grid header cells must be numeric") from None
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ParseError(f"{path}: grid header must be strictly increasing")

    if frame.empty:
        raise ParseError(f"{path}: no data rows")
    first_line = skip + 2
    numeric = frame[grid_cols + [RESPONSE_COLUMN]]
    blank = (numeric.isna() | (numeric == "")).to_numpy()
    if blank.any():
        i, k = np.argwhere(blank)[0]
        raise ParseError(
            f"{path}: row {i + 1} (line {first_line + i}) is ragged: "
            f"column '{numeric.columns[k]}' is empty"
        )
    curves = np.column_stack([_to_float(frame[c], c, first_line) for c in grid_cols])
    responses = _to_float(frame[RESPONSE_COLUMN], RESPONSE_COLUMN, first_line)
    split = None
    if has_split:
        split = frame[SPLIT_COLUMN].str.strip().to_numpy(dtype=object)
        bad = [i for i, s in enumerate(split) if s not in SPLIT_LABELS]
        if bad:
            raise ParseError(
                f"{path}: row {bad[0] + 1} (line {first_line + bad[0]}): split "
                f"must be one of {', '.join(SPLIT_LABELS)}, got {split[bad[0]]!r}"
            )
    return FunctionalDataset.build(grid, curves, responses, split)


def save_csv(
    dataset: FunctionalDataset, path: Path | str, provenance: dict | None = None
) -> Path:
    """Write ``dataset`` in the wide layout; floats keep 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        dataset.curves, columns=[FLOAT_FORMAT % t for t in dataset.grid]
    )
    frame[RESPONSE_COLUMN] = dataset.responses
    frame[SPLIT_COLUMN] = dataset.split
    with path.open("w", encoding="utf-8", newline="") as fh:
        if provenance is not None:
            fh.write(PROVENANCE_PREFIX + json.dumps(provenance, sort_keys=True) + "\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path
