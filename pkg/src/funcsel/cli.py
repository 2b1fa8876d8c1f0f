"""Command-line entry point: ``funcsel simulate|fit|evaluate|reproduce``."""

from __future__ import annotations

import json
import sys
import textwrap
import traceback
import warnings
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Final

from funcsel.config import (
    ExperimentConfig,
    build_experiment,
    resolve_config,
    workers_from_env,
)
from funcsel.data import FunctionalDataset, load_csv, save_csv
from funcsel.errors import ConfigError, FuncselError, FuncselWarning
from funcsel.reporting import (
    evaluate,
    load_model,
    metrics_row,
    model_payload,
    pip_table,
    provenance,
    replicate_frame,
    result_payload,
    summarize,
    write_json,
    write_table,
)
from funcsel.selector import CRITERIA, run_selection
from funcsel.simulate import SimScenario, SimTruth, gen_dataset

COMMANDS: Final = ("simulate", "fit", "evaluate", "reproduce")
EXIT_OK: Final = 0
EXIT_FAILURE: Final = 1
EXIT_USAGE: Final = 2

_HELP_TEXT: Final = textwrap.dedent("""\
    Usage: funcsel <command> [options]

    Sparse Bayesian functional regression: spline projection, a deep ReLU
    network under a column-wise spike-and-slab prior, region selection and
    projection-size selection by Laplace evidence or validation loss.

    Commands:
      simulate            Draw a synthetic dataset (dataset.csv, truth.json)
      fit                 Select J and fit the network (result.json, model.json)
      evaluate            Score a fitted model (metrics.json, pip.csv)
      reproduce           Replicated simulate + fit + evaluate over a scenario grid
                          (rep_XXX/, metrics_replicates.csv, metrics_summary.csv)

    Options:
      --config PATH       JSON experiment config (may use "extends")
      --seed N            Master seed (data, restarts, replicates)
      --criterion C       Projection-size criterion: evidence | val
      --j LIST            Candidate projection sizes, e.g. 55,60,70,80
      --out DIR           Output directory (default: funcsel-out)
      --replicates N      Replicates per scenario for reproduce
      --model PATH        Model file for evaluate (default: <out>/model.json)
      --verbose           Progress lines on stderr
      --version           Show version and exit
      -h, --help          Show this help

    Configuration:
      Layers, later wins: built-in defaults, [tool.funcsel] in the nearest
      pyproject.toml, the --config file, then the flags above.  Objects merge
      key by key; lists and scalars replace; null removes a key.
      Use "extends": "base.json" (or a list, later wins) to inherit; paths
      are relative to the file containing the key.

    Environment:
      FUNCSEL_THREADS     Worker processes for restarts and replicates (default 1)

    Exit status:
      0 success, 1 run failure, 2 usage or configuration error.  On failure a
      JSON error object is printed to stderr and written to <out>/error.json.

    Examples:
      funcsel simulate --seed 3 --out run1
      funcsel fit --config experiment.json --criterion val --j 20,30
      funcsel evaluate --config experiment.json --out run1
      funcsel reproduce --config grid.json --replicates 10
""")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def _show_warning(message, category, filename, lineno, file=None, line=None) -> None:
    print(f"funcsel: warning: {message}", file=sys.stderr)


def _install_warning_format() -> None:
    warnings.simplefilter("always", FuncselWarning)
    warnings.showwarning = _show_warning


def _progress_printer(verbose: bool) -> Callable[[str], None] | None:
    if not verbose:
        return None

    def emit(message: str) -> None:
        print(f"funcsel: {message}", file=sys.stderr)

    return emit


def _emit_error(payload: dict, out_dir: Path | None) -> None:
    text = json.dumps({"error": payload}, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            write_json(out_dir / "error.json", {"error": payload})
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _pop_option(args: list[str], flag: str) -> str | None:
    """Remove *flag* and its value from *args*, returning the value or None."""
    if flag not in args:
        return None
    idx = args.index(flag)
    if idx + 1 >= len(args):
        raise ConfigError(f"{flag} requires a value")
    value = args[idx + 1]
    del args[idx : idx + 2]
    return value


def _pop_flag(args: list[str], flag: str) -> bool:
    if flag in args:
        args.remove(flag)
        return True
    return False


def _int_option(value: str, flag: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{flag} expects an integer, got {value!r}") from None


def _parse_args(argv: list[str]) -> tuple[str, dict[str, Any]]:
    """Parse CLI arguments.

    Returns ``(command, options)`` where ``options`` holds ``config``,
    ``model``, ``verbose`` and the ``overrides`` mapping for the config layer.
    """
    args = list(argv)
    overrides: dict[str, Any] = {}
    config_path = _pop_option(args, "--config")
    model_path = _pop_option(args, "--model")
    verbose = _pop_flag(args, "--verbose")

    seed = _pop_option(args, "--seed")
    if seed is not None:
        overrides["seed"] = _int_option(seed, "--seed")
    replicates = _pop_option(args, "--replicates")
    if replicates is not None:
        overrides["replicates"] = _int_option(replicates, "--replicates")
    out = _pop_option(args, "--out")
    if out is not None:
        overrides["output_dir"] = out

    selector: dict[str, Any] = {}
    criterion = _pop_option(args, "--criterion")
    if criterion is not None:
        if criterion not in CRITERIA:
            raise ConfigError(
                f"invalid --criterion '{criterion}' -- must be one of: {', '.join(CRITERIA)}"
            )
        selector["criterion"] = criterion
    j_list = _pop_option(args, "--j")
    if j_list is not None:
        selector["j_candidates"] = [
            _int_option(part.strip(), "--j") for part in j_list.split(",") if part.strip()
        ]
    if selector:
        overrides["selector"] = selector

    unknown = [a for a in args if a.startswith("-")]
    if unknown:
        raise ConfigError(f"unknown option '{unknown[0]}'")
    if len(args) != 1 or args[0] not in COMMANDS:
        raise ConfigError(
            f"expected exactly one command ({', '.join(COMMANDS)}), got {args or 'none'}"
        )
    return args[0], {
        "config": Path(config_path) if config_path else None,
        "model": Path(model_path) if model_path else None,
        "verbose": verbose,
        "overrides": overrides,
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _load_data(config: ExperimentConfig) -> tuple[FunctionalDataset, SimTruth | None]:
    if config.dataset_path is not None:
        return load_csv(config.dataset_path), None
    return gen_dataset(config.scenario)


def cmd_simulate(config: ExperimentConfig, **_: Any) -> list[Path]:
    if config.scenario is None:
        raise ConfigError("simulate needs a 'scenario', not a 'dataset_path'")
    dataset, truth = gen_dataset(config.scenario)
    prov = provenance("simulate", config)
    out = config.output_dir
    return [
        save_csv(dataset, out / "dataset.csv", prov),
        write_json(
            out / "truth.json",
            {"provenance": prov, "scenario": config.scenario.to_dict(), **truth.to_dict()},
        ),
    ]


def cmd_fit(
    config: ExperimentConfig,
    *,
    progress: Callable[[str], None] | None = None,
    workers: int = 1,
    **_: Any,
) -> list[Path]:
    dataset, _truth = _load_data(config)
    result = run_selection(dataset, config.selector, progress=progress, workers=workers)
    prov = provenance("fit", config)
    out = config.output_dir
    return [
        write_json(out / "result.json", result_payload(result, prov)),
        write_json(out / "model.json", model_payload(result, prov)),
    ]


def cmd_evaluate(
    config: ExperimentConfig, *, model: Path | None = None, **_: Any
) -> list[Path]:
    dataset, truth = _load_data(config)
    out = config.output_dir
    result = load_model(model or out / "model.json")
    prov = provenance("evaluate", config)
    metrics = evaluate(result, dataset, truth)
    return [
        write_json(out / "metrics.json", {"provenance": prov, **metrics}),
        write_table(out / "pip.csv", pip_table(result), prov),
    ]


def _run_replicate(job: tuple) -> dict[str, Any]:
    """Simulate, fit and evaluate one replicate; writes its own directory."""
    config, scenario, replicate, rep_dir, progress_on = job
    _install_warning_format()
    seed = config.seed + replicate
    scenario = replace(scenario, seed=seed)
    selector = replace(config.selector, train=replace(config.selector.train, seed=seed))
    dataset, truth = gen_dataset(scenario)
    result = run_selection(dataset, selector, progress=_progress_printer(progress_on))
    prov = provenance("reproduce", config, seed=seed)
    prov["scenario"] = scenario.to_dict()
    metrics = evaluate(result, dataset, truth)
    write_json(rep_dir / "result.json", result_payload(result, prov))
    write_json(rep_dir / "metrics.json", {"provenance": prov, **metrics})
    return {
        "scenario": scenario.name,
        "beta_kind": scenario.beta_kind.value,
        "link_kind": scenario.link_kind.value,
        "response_snr": scenario.response_snr,
        "replicate": replicate,
        "seed": seed,
        **metrics_row(metrics),
    }


def cmd_reproduce(
    config: ExperimentConfig,
    *,
    progress: Callable[[str], None] | None = None,
    workers: int = 1,
    **_: Any,
) -> list[Path]:
    scenarios: list[SimScenario] = config.scenarios()
    if not scenarios:
        raise ConfigError("reproduce needs a 'scenario' (optionally with a 'grid')")
    out = config.output_dir
    jobs = [
        (config, scenario, k, out / scenario.name / f"rep_{k:03d}", progress is not None)
        for scenario in scenarios
        for k in range(config.replicates)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_run_replicate, jobs))
    else:
        rows = []
        for job in jobs:
            if progress is not None:
                progress(f"{job[1].name}: replicate {job[2] + 1}/{config.replicates}")
            rows.append(_run_replicate(job))
    table = replicate_frame(rows)
    prov = provenance("reproduce", config)
    return [
        write_table(out / "metrics_replicates.csv", table, prov),
        write_table(out / "metrics_summary.csv", summarize(table), prov),
    ]


_DISPATCH: Final = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run(argv: list[str]) -> int:
    """Run one command and return its exit status."""
    if "--version" in argv:
        from funcsel import __version__

        print(f"funcsel {__version__}")
        return EXIT_OK
    if not argv or "--help" in argv or "-h" in argv:
        print(_HELP_TEXT)
        return EXIT_OK

    out_dir: Path | None = None
    try:
        command, options = _parse_args(argv)
        out_flag = options["overrides"].get("output_dir")
        out_dir = Path(out_flag) if out_flag else None
        raw = resolve_config(options["config"], options["overrides"])
        config_file = options["config"]
        config = build_experiment(raw, base_dir=config_file.parent if config_file else None)
        out_dir = config.output_dir
        workers = workers_from_env()
        paths = _DISPATCH[command](
            config,
            progress=_progress_printer(options["verbose"]),
            workers=workers,
            model=options["model"],
        )
    except FuncselError as exc:
        _emit_error(exc.to_dict(), out_dir)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc(file=sys.stderr)
        _emit_error(
            {
                "kind": "internal",
                "type": type(exc).__name__,
                "message": str(exc),
                "exit_code": EXIT_FAILURE,
            },
            out_dir,
        )
        return EXIT_FAILURE
    for path in paths:
        print(path.as_posix())
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    _install_warning_format()
    sys.exit(run(list(sys.argv[1:] if argv is None else argv)))


if __name__ == "__main__":
    main()
