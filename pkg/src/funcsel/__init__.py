"""funcsel -- sparse Bayesian functional regression with region selection."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

from funcsel.data import FunctionalDataset, load_csv, save_csv
from funcsel.errors import FuncselError, FuncselWarning
from funcsel.prior import SparsityHyper
from funcsel.selector import (
    SelectionResult,
    SelectorConfig,
    predict_ensemble,
    run_selection,
)
from funcsel.simulate import SimScenario, gen_dataset
from funcsel.trainer import TrainConfig

try:
    __version__ = version("funcsel")
except PackageNotFoundError:
    __version__ = "0.1.0"

__all__ = [
    "FunctionalDataset",
    "FuncselError",
    "FuncselWarning",
    "SelectionResult",
    "SelectorConfig",
    "SimScenario",
    "SparsityHyper",
    "TrainConfig",
    "gen_dataset",
    "load_csv",
    "predict_ensemble",
    "run_selection",
    "save_csv",
    "__version__",
]
