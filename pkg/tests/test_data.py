"""Tests for datasets, standardization and the CSV reader/writer."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from funcsel.data import (
    FunctionalDataset,
    ResponseStats,
    default_split,
    destandardize,
    load_csv,
    read_provenance,
    save_csv,
    standardize,
)
from funcsel.errors import DataError, ParseError


def _write_csv(tmp_path: Path, content: str, name: str = "data.csv") -> Path:
    path = tmp_path / name
    path.write_text(content, encoding="utf-8")
    return path


def _tiny() -> FunctionalDataset:
    grid = np.array([0.0, 0.1, 0.35, 1.0])
    curves = np.array(
        [
            [0.1, 1 / 3, -2.5e-8, 7.0],
            [np.pi, -1.0, 0.0, 1e10],
            [2.0, 2.0, 2.0, 2.0],
        ]
    )
    return FunctionalDataset.build(grid, curves, np.array([1.5, -0.1, 0.3]), np.array(["train", "train", "val"]))


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def test_stats_use_population_sd():
    stats = ResponseStats.of(np.array([1.0, 3.0]))
    assert (stats.mean, stats.sd) == (2.0, 1.0)


def test_standardize_roundtrip_and_moments():
    y = np.random.default_rng(0).normal(5, 3, size=50)
    stats = ResponseStats.of(y)
    z = standardize(y, stats)
    assert z.mean() == pytest.approx(0.0, abs=1e-12)
    assert z.std() == pytest.approx(1.0)
    np.testing.assert_allclose(destandardize(z, stats), y)


def test_constant_training_responses():
    with pytest.raises(DataError):
        FunctionalDataset.build(
            np.array([0.0, 1.0]), np.ones((3, 2)), np.array([2.0, 2.0, 5.0]), np.array(["train", "train", "val"])
        )


def test_validation_rows_use_training_stats():
    dataset = _tiny()
    expected = (0.3 - dataset.stats.mean) / dataset.stats.sd
    assert dataset.responses_of("val", standardized=True)[0] == pytest.approx(expected)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def test_default_split_proportions():
    labels = default_split(20)
    assert list(labels).count("train") == 14
    assert list(labels).count("val") == 3
    assert list(labels).count("test") == 3


def test_default_split_tiny():
    assert list(default_split(2)) == ["train", "val"]


def test_unknown_split_label():
    with pytest.raises(DataError):
        FunctionalDataset.build(np.array([0.0, 1.0]), np.ones((2, 2)), np.array([1.0, 2.0]), np.array(["train", "dev"]))


def test_missing_validation_rows():
    dataset = FunctionalDataset.build(
        np.array([0.0, 1.0]), np.ones((2, 2)), np.array([1.0, 2.0]), np.array(["train", "train"])
    )
    with pytest.raises(DataError, match="val"):
        dataset.require_fit_splits()


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def test_save_load_bit_identical(tmp_path):
    dataset = _tiny()
    first = save_csv(dataset, tmp_path / "a.csv")
    loaded = load_csv(first)
    np.testing.assert_array_equal(loaded.grid, dataset.grid)
    np.testing.assert_array_equal(loaded.curves, dataset.curves)
    np.testing.assert_array_equal(loaded.responses, dataset.responses)
    assert list(loaded.split) == list(dataset.split)
    second = save_csv(loaded, tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()


def test_provenance_line_skipped_and_readable(tmp_path):
    path = save_csv(_tiny(), tmp_path / "p.csv", provenance={"seed": 3, "command": "simulate"})
    assert path.read_text().startswith("# funcsel ")
    assert read_provenance(path) == {"command": "simulate", "seed": 3}
    assert load_csv(path).n == 3


def test_no_provenance(tmp_path):
    assert read_provenance(save_csv(_tiny(), tmp_path / "q.csv")) is None


def test_missing_split_column_uses_default(tmp_path):
    rows = "\n".join(f"{i},{i + 1},{i * 0.5}" for i in range(20))
    path = _write_csv(tmp_path, "0,1,response\n" + rows + "\n")
    dataset = load_csv(path)
    assert list(dataset.split).count("train") == 14
    assert dataset.grid.tolist() == [0.0, 1.0]


def test_non_numeric_cell(tmp_path):
    path = _write_csv(tmp_path, "0,0.5,1,response,split\n1,2,3,4,train\n1,abc,3,4,val\n")
    with pytest.raises(ParseError, match=r"row 2.*column '0.5'"):
        load_csv(path)


def _twelve_rows(bad_cell: str, *, in_response: bool) -> str:
    rows = []
    for i in range(12):
        curve, response = f"{i},{i + 1},{i * 2}", f"{i * 0.5}"
        if i == 4:
            if in_response:
                response = bad_cell
            else:
                curve = f"{i},{bad_cell},{i * 2}"
        rows.append(f"{curve},{response}")
    return "0,0.5,1,response\n" + "\n".join(rows) + "\n"


@pytest.mark.parametrize("cell", ["nan", "inf", "-Infinity"])
def test_non_finite_curve_cell(tmp_path, cell):
    path = _write_csv(tmp_path, _twelve_rows(cell, in_response=False))
    with pytest.raises(ParseError, match=r"row 5 \(line 6\), column '0.5': not a finite number"):
        load_csv(path)


@pytest.mark.parametrize("cell", ["nan", "inf", "-Infinity"])
def test_non_finite_response(tmp_path, cell):
    path = _write_csv(tmp_path, _twelve_rows(cell, in_response=True))
    with pytest.raises(ParseError, match=r"row 5 .*column 'response'"):
        load_csv(path)


def test_build_rejects_non_finite_values():
    grid = np.array([0.0, 1.0])
    split = np.array(["train", "train", "val"])
    with pytest.raises(DataError, match="finite"):
        FunctionalDataset.build(grid, np.array([[1.0, np.nan], [2.0, 3.0], [4.0, 5.0]]), np.array([1.0, 2.0, 3.0]), split)
    with pytest.raises(DataError, match="finite"):
        FunctionalDataset.build(grid, np.ones((3, 2)), np.array([1.0, np.inf, 3.0]), split)


def test_ragged_row(tmp_path):
    path = _write_csv(tmp_path, "0,0.5,1,response,split\n1,2,3,4,train\n1,2,3\n")
    with pytest.raises(ParseError):
        load_csv(path)


def test_non_monotone_grid_header(tmp_path):
    path = _write_csv(tmp_path, "0,0.7,0.5,response\n1,2,3,4\n2,3,4,5\n")
    with pytest.raises(ParseError, match="increasing"):
        load_csv(path)


def test_missing_response_column(tmp_path):
    path = _write_csv(tmp_path, "0,0.5,1\n1,2,3\n")
    with pytest.raises(ParseError, match="response"):
        load_csv(path)


def test_bad_split_value(tmp_path):
    path = _write_csv(tmp_path, "0,1,response,split\n1,2,3,train\n1,2,4,holdout\n")
    with pytest.raises(ParseError, match="split"):
        load_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv")
