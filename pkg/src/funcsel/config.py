"""Experiment configuration: built-in defaults, ``[tool.funcsel]`` in
pyproject.toml, a JSON file with ``extends``, then command-line overrides.

Every layer has the same shape as :data:`DEFAULTS`.  Nested objects merge key
by key, lists and scalars replace, and an explicit ``null`` removes the key.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import os
import warnings
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final

from funcsel.errors import ConfigError, FuncselWarning
from funcsel.prior import SparsityHyper
from funcsel.selector import SelectorConfig
from funcsel.simulate import BetaKind, LinkKind, SimScenario
from funcsel.trainer import TrainConfig

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:
    try:
        import tomli as tomllib  # type: ignore[no-redef]
    except ModuleNotFoundError:
        tomllib = None  # type: ignore[assignment]

# ---------------------------------------------------------------------------
# Defaults and allowed keys
# ---------------------------------------------------------------------------

DEFAULT_OUTPUT_DIR: Final = "funcsel-out"
DEFAULT_REPLICATES: Final = 100
THREADS_ENV: Final = "FUNCSEL_THREADS"
_MAX_EXTENDS_CHAIN_DEPTH: Final = 5
_HASH_LEN: Final = 16

DEFAULTS: Final[dict[str, Any]] = {
    "seed": 0,
    "replicates": DEFAULT_REPLICATES,
    "output_dir": DEFAULT_OUTPUT_DIR,
    "selector": {
        "j_candidates": [55, 60, 70, 80],
        "criterion": "evidence",
        "spline_degree": 4,
        "hidden_widths": [64, 64, 64],
        "hessian_cap": 5000,
        "fd_step": 1e-5,
        "jitter": 1e-6,
        "eig_floor": 1e-10,
        "pip_tau": 0.5,
        "denoise": False,
        "train": {
            "learning_rate": 1e-3,
            "batch_size": 64,
            "max_iters": 80_001,
            "patience_iters": 3_000,
            "eval_every": 50,
            "restarts": 5,
            "momentum": 0.0,
        },
        "hyper": {
            "lambda_n": 1e-5,
            "sigma0_sq": 1e-5,
            "sigma1_sq": 2e-3,
            "sigma_sq": 1.0,
            "noise_var": 1.0,
        },
    },
}

#: Keys accepted at each level; a nested mapping lists the keys of a sub-table.
_SCHEMA: Final[dict[str, Any]] = {
    "seed": None,
    "replicates": None,
    "output_dir": None,
    "dataset_path": None,
    "extends": None,
    "scenario": {
        k: None
        for k in ("beta_kind", "link_kind", "response_snr", "curve_snr",
                  "grid_len", "n_train", "n_val", "n_test")
    },
    "grid": {"beta_kind": None, "link_kind": None, "response_snr": None},
    "selector": {
        **{k: None for k in DEFAULTS["selector"] if k not in ("train", "hyper")},
        "train": {k: None for k in DEFAULTS["selector"]["train"]},
        "hyper": {k: None for k in DEFAULTS["selector"]["hyper"]},
    },
}

#: Keys left out of the provenance copy and the config hash.
_NON_SEMANTIC_KEYS: Final = frozenset({"output_dir"})


# ---------------------------------------------------------------------------
# Reading layers
# ---------------------------------------------------------------------------


def _find_pyproject(start: Path) -> Path | None:
    """Walk up from *start* to find the nearest pyproject.toml."""
    current = start.resolve()
    if current.is_file():
        current = current.parent
    for parent in [current, *current.parents]:
        candidate = parent / "pyproject.toml"
        if candidate.is_file():
            return candidate
    return None


def _read_layer(path: Path) -> dict:
    """A config mapping from a JSON file or the ``[tool.funcsel]`` table of a TOML file."""
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        if tomllib is None:
            raise ConfigError(f"cannot read '{path.name}': no TOML parser (install tomli)")
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"'{path.name}' is not valid TOML: {exc}") from None
        return dict(data.get("tool", {}).get("funcsel", {}))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"'{path.name}' is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"'{path.name}' must hold a JSON object")
    return data


def load_pyproject_config(start: Path) -> dict:
    """``[tool.funcsel]`` from the nearest pyproject.toml, extends resolved.

    Returns an empty dict when there is no pyproject, no table, or no TOML
    parser.
    """
    pyproject = _find_pyproject(start)
    if pyproject is None or tomllib is None:
        return {}
    try:
        config = _read_layer(pyproject)
    except ConfigError as exc:
        warnings.warn(f"ignoring {pyproject}: {exc}", FuncselWarning, stacklevel=2)
        return {}
    if "extends" in config:
        config = _resolve_extends(config, pyproject.resolve())
    return config


def load_config_file(path: Path) -> dict:
    """A ``--config`` file with its ``extends`` chain resolved."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    config = _read_layer(path)
    return _resolve_extends(config, path.resolve())


# ---------------------------------------------------------------------------
# Merging and extends
# ---------------------------------------------------------------------------


def merge_configs(base: Mapping, override: Mapping) -> dict:
    """Deep-merge *override* onto *base*; ``None`` deletes, ``extends`` is dropped."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if key == "extends":
            continue
        if value is None:
            merged.pop(key, None)
        elif isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_configs(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    merged.pop("extends", None)
    return merged


def _resolve_extends(
    config: dict,
    config_path: Path,
    _visited: set[str] | None = None,
    _depth: int = 0,
) -> dict:
    """Recursively resolve ``extends`` relative to the directory of *config_path*.

    Each sibling branch gets its own copy of ``_visited`` so a shared base
    reached along two paths is loaded from both.
    """
    if _visited is None:
        _visited = set()

    extends = config.pop("extends", None)
    if extends is None:
        return config
    if isinstance(extends, str):
        extends_list = [extends] if extends.strip() else []
    elif isinstance(extends, list):
        extends_list = [e for e in extends if isinstance(e, str) and e.strip()]
        if len(extends_list) != len(extends):
            warnings.warn(
                "'extends' entries must be non-empty strings; skipping invalid entries",
                FuncselWarning,
                stacklevel=2,
            )
    else:
        raise ConfigError(
            f"'extends' must be a string or list, got {type(extends).__name__}"
        )
    if not extends_list:
        return config

    if _depth >= _MAX_EXTENDS_CHAIN_DEPTH:
        warnings.warn(
            f"extends chain depth limit ({_MAX_EXTENDS_CHAIN_DEPTH}) reached; "
            f"ignoring further extends",
            FuncselWarning,
            stacklevel=2,
        )
        return config

    canon = str(config_path)
    if canon in _visited:
        warnings.warn(
            f"circular extends detected ('{config_path.name}'); ignoring",
            FuncselWarning,
            stacklevel=2,
        )
        return config
    _visited.add(canon)

    merged_base: dict = {}
    for ext in extends_list:
        ext_path = (config_path.parent / ext).resolve()
        if not ext_path.is_file():
            warnings.warn(f"extends file not found: '{ext}'", FuncselWarning, stacklevel=2)
            continue
        ext_config = _read_layer(ext_path)
        if "extends" in ext_config:
            ext_config = _resolve_extends(ext_config, ext_path, set(_visited), _depth + 1)
        merged_base = merge_configs(merged_base, ext_config)
    return merge_configs(merged_base, config)


def _check_keys(config: Mapping, schema: Mapping, prefix: str = "") -> None:
    for key, value in config.items():
        name = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown configuration key '{name}'")
        sub = schema[key]
        if isinstance(sub, dict) and value is not None:
            if not isinstance(value, Mapping):
                raise ConfigError(f"'{name}' must be an object")
            _check_keys(value, sub, f"{name}.")


def resolve_config(
    config_path: Path | None = None,
    overrides: Mapping | None = None,
    *,
    start: Path | None = None,
) -> dict:
    """Merge every layer, lowest first, and validate the key set."""
    resolved = copy.deepcopy(DEFAULTS)
    layers = [load_pyproject_config(start or Path.cwd())]
    if config_path is not None:
        layers.append(load_config_file(config_path))
    layers.append(dict(overrides or {}))
    for layer in layers:
        _check_keys(layer, _SCHEMA)
        resolved = merge_configs(resolved, layer)
    _check_keys(resolved, _SCHEMA)
    return resolved


# ---------------------------------------------------------------------------
# Typed view
# ---------------------------------------------------------------------------


def semantic_config(config: Mapping) -> dict:
    """The resolved config minus keys that cannot change any result."""
    return {k: v for k, v in config.items() if k not in _NON_SEMANTIC_KEYS}


def config_hash(config: Mapping) -> str:
    """Short sha256 of the canonical JSON of :func:`semantic_config`."""
    canonical = json.dumps(semantic_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:_HASH_LEN]


@dataclass(frozen=True)
class ScenarioGrid:
    """Axes of a scenario sweep; a missing axis keeps the base scenario's value."""

    beta_kind: tuple[str, ...] = ()
    link_kind: tuple[str, ...] = ()
    response_snr: tuple[float, ...] = ()

    def expand(self, base: SimScenario) -> list[SimScenario]:
        betas = self.beta_kind or (base.beta_kind.value,)
        links = self.link_kind or (base.link_kind.value,)
        snrs = self.response_snr or (base.response_snr,)
        out = []
        for beta, link_kind, snr in itertools.product(betas, links, snrs):
            fields = {**base.to_dict(), "beta_kind": beta, "link_kind": link_kind, "response_snr": snr}
            out.append(SimScenario(**fields))
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    selector: SelectorConfig
    scenario: SimScenario | None
    dataset_path: Path | None
    replicates: int
    output_dir: Path
    seed: int
    grid: ScenarioGrid | None
    raw: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def scenarios(self) -> list[SimScenario]:
        if self.scenario is None:
            return []
        return self.grid.expand(self.scenario) if self.grid else [self.scenario]


def _build(factory, fields: Mapping, where: str):
    try:
        return factory(**fields)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _as_tuple(value: Any, name: str) -> tuple:
    if not isinstance(value, list):
        raise ConfigError(f"'{name}' must be a list")
    return tuple(value)


def build_experiment(config: Mapping, *, base_dir: Path | None = None) -> ExperimentConfig:
    """Typed config from a resolved mapping (see :func:`resolve_config`)."""
    _check_keys(config, _SCHEMA)
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    replicates = config.get("replicates", DEFAULT_REPLICATES)
    if not isinstance(replicates, int) or isinstance(replicates, bool) or replicates < 1:
        raise ConfigError(f"replicates must be a positive integer, got {replicates!r}")

    sel = dict(config.get("selector", {}))
    train = _build(TrainConfig, {**sel.pop("train", {}), "seed": seed}, "selector.train")
    hyper = _build(SparsityHyper, sel.pop("hyper", {}), "selector.hyper")
    for key in ("j_candidates", "hidden_widths"):
        if key in sel:
            sel[key] = _as_tuple(sel[key], f"selector.{key}")
    selector = _build(SelectorConfig, {**sel, "train": train, "hyper": hyper}, "selector")

    has_scenario = config.get("scenario") is not None
    has_path = config.get("dataset_path") is not None
    if has_scenario and has_path:
        raise ConfigError("set exactly one of 'scenario' and 'dataset_path', not both")
    scenario = None
    dataset_path = None
    if has_path:
        dataset_path = Path(config["dataset_path"])
        if base_dir is not None and not dataset_path.is_absolute():
            dataset_path = base_dir / dataset_path
    else:
        scenario = _build(SimScenario, {**config.get("scenario", {}), "seed": seed}, "scenario")

    grid = None
    if config.get("grid"):
        axes = {k: _as_tuple(v, f"grid.{k}") for k, v in config["grid"].items()}
        try:
            for b in axes.get("beta_kind", ()):
                BetaKind(b)
            for k in axes.get("link_kind", ()):
                LinkKind(k)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None
        grid = ScenarioGrid(**axes)

    return ExperimentConfig(
        selector=selector,
        scenario=scenario,
        dataset_path=dataset_path,
        replicates=replicates,
        output_dir=Path(config.get("output_dir", DEFAULT_OUTPUT_DIR)),
        seed=seed,
        grid=grid,
        raw=copy.deepcopy(dict(config)),
    )


def workers_from_env() -> int:
    """Worker processes from ``FUNCSEL_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value
