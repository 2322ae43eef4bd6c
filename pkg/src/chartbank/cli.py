"""Experiment runner.

Subcommands:

* ``run <config>``: execute a flat key=value config file.
* ``preset <fig4|fig5|example1> --out DIR [--seed N] [--runs N]``: run a
  built-in configuration, materializing the equivalent config file next to
  the results.
* ``selftest``: fast differential and identity checks, no files written.

Outputs per run: ``results.csv`` (fixed column order), ``manifest.json``
(resolved config, derived quantities, content hash) and ``config.txt``.
The CSV's first line carries the manifest hash so tables and configs cannot
be mismatched.  All outputs are byte-identical across repeated runs with the
same config and seed.

Exit codes: 0 success, 2 config parse or validation error, 3 capacity or
censoring validity failure (partial outputs are written and flagged).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .design import DesignSpec, default_lipschitz_constant, design_grid, verify_grid
from .detectors import (
    ChartBank,
    ChartVariant,
    posterior_complement_from_stat,
    posterior_from_stat,
    stat_from_posterior,
)
from .errors import CapacityError
from .families import GaussianMeanShift, GaussianVarianceShift, GeometricPrior, Interval
from .simulate import (
    BankTemplate,
    SweepRow,
    WindowTemplate,
    add_vs_alpha_sweep,
    direct_stat_oracle,
    direct_window_stat_oracle,
)
from .windowed import WindowEngine, window_length_for

CSV_COLUMNS = [
    "alpha",
    "log_alpha_abs",
    "detector",
    "lambda_true",
    "add_hat",
    "add_se",
    "pfa_hat",
    "pfa_se",
    "lower_bound",
    "efficiency",
    "censored",
    "n_runs",
    "seed",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDITY = 3


class ConfigError(ValueError):
    """Aggregated config problems; one line per issue."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


# ---------------------------------------------------------------------------
# config schema


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _parse_int(text: str) -> int:
    return int(text)


def _parse_int_or_auto(text: str) -> int | None:
    if text.strip().lower() == "auto":
        return None
    return int(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("list must be nonempty")
    return tuple(_parse_float(s) for s in items)


def _parse_float_list_or_auto(text: str) -> tuple[float, ...] | None:
    if text.strip().lower() == "auto":
        return None
    return _parse_float_list(text)


def _parse_grids(text: str) -> tuple[tuple[float, ...], ...]:
    groups = [g.strip() for g in text.split("|")]
    if not groups or any(not g for g in groups):
        raise ValueError("expected pipe-separated comma lists")
    return tuple(_parse_float_list(g) for g in groups)


def _parse_variants(text: str) -> tuple[str, ...]:
    names = tuple(s.strip().lower() for s in text.split(",") if s.strip())
    allowed = {v.value for v in ChartVariant}
    bad = [n for n in names if n not in allowed]
    if bad or not names:
        raise ValueError(f"variants must be drawn from {sorted(allowed)}")
    return names


def _parse_family(text: str) -> str:
    name = text.strip().lower()
    if name not in ("gaussian-mean-shift", "gaussian-variance-shift"):
        raise ValueError("family must be gaussian-mean-shift or gaussian-variance-shift")
    return name


def _parse_construction(text: str) -> str:
    name = text.strip().lower()
    if name not in ("greedy", "uniform"):
        raise ValueError("construction must be greedy or uniform")
    return name


@dataclass(frozen=True)
class SingleSweepConfig:
    family: str
    pre_param: float
    noise_sigma: float
    lambda_low: float
    lambda_high: float
    lambda_true: float
    rho: float
    alphas: tuple[float, ...]
    variants: tuple[str, ...]
    grids: tuple[tuple[float, ...], ...]
    n_runs: int
    horizon: int | None
    censor_cap: float
    seed: int

    experiment = "single-sweep"


@dataclass(frozen=True)
class MultiSweepConfig:
    pre_params: tuple[float, ...]
    lambda_true: tuple[float, ...]
    source_grids: tuple[tuple[float, ...], ...]
    window: int | None
    rho: float
    alphas: tuple[float, ...]
    n_runs: int
    horizon: int | None
    censor_cap: float
    seed: int

    experiment = "multisource-sweep"


@dataclass(frozen=True)
class DesignRunConfig:
    pre_param: float
    noise_sigma: float
    lambda_low: float
    lambda_high: float
    epsilon: float
    mesh_points: int
    grid_cap: int
    construction: str
    eval_lambdas: tuple[float, ...] | None
    rho: float
    alphas: tuple[float, ...]
    n_runs: int
    horizon: int | None
    censor_cap: float
    seed: int

    experiment = "epsilon-design"


@dataclass(frozen=True)
class DiffTestConfig:
    n_paths: int
    path_length: int
    seed: int

    experiment = "differential-test"


AnyConfig = SingleSweepConfig | MultiSweepConfig | DesignRunConfig | DiffTestConfig

# key -> (parser, required, default, unit/help); the help text lands in config.txt
_COMMON_SWEEP = {
    "rho": (_parse_float, True, None, "change probability per slot, in (0, 1)"),
    "alphas": (_parse_float_list, True, None, "false-alarm targets, strictly decreasing"),
    "n_runs": (_parse_int, False, 10_000, "Monte Carlo runs per cell"),
    "horizon": (_parse_int_or_auto, False, None, "slots per run, or auto"),
    "censor_cap": (_parse_float, False, 1e-3, "max tolerated censored fraction"),
    "seed": (_parse_int, False, 0, "base seed; per-run seeds derive from it"),
}

SCHEMAS: dict[str, dict] = {
    "single-sweep": {
        "family": (_parse_family, True, None, "observation family kind"),
        "pre_param": (_parse_float, True, None, "pre-change mean (mean shift) or scale (variance shift)"),
        "noise_sigma": (_parse_float, False, 1.0, "observation scale, mean-shift family only"),
        "lambda_low": (_parse_float, True, None, "admissible post-change parameter, lower end"),
        "lambda_high": (_parse_float, True, None, "admissible post-change parameter, upper end"),
        "lambda_true": (_parse_float, True, None, "true post-change parameter for simulation"),
        "variants": (_parse_variants, False, ("sr",), "chart recursions to run: sr, max, sum"),
        "grids": (_parse_grids, True, None, "candidate grids, pipe-separated comma lists"),
        **_COMMON_SWEEP,
    },
    "multisource-sweep": {
        "pre_params": (_parse_float_list, True, None, "pre-change scale per source"),
        "lambda_true": (_parse_float_list, True, None, "true post-change scale per source"),
        "source_grids": (_parse_grids, True, None, "candidate scales per source, pipe-separated"),
        "window": (_parse_int_or_auto, False, None, "window length in slots, or auto"),
        **_COMMON_SWEEP,
    },
    "epsilon-design": {
        "pre_param": (_parse_float, True, None, "pre-change mean"),
        "noise_sigma": (_parse_float, False, 1.0, "observation scale"),
        "lambda_low": (_parse_float, True, None, "design interval, lower end"),
        "lambda_high": (_parse_float, True, None, "design interval, upper end"),
        "epsilon": (_parse_float, True, None, "relative delay penalty budget, in (0, 1)"),
        "mesh_points": (_parse_int, False, 1000, "verification mesh resolution"),
        "grid_cap": (_parse_int, False, 4096, "max candidates before a capacity error"),
        "construction": (_parse_construction, False, "greedy", "greedy or uniform"),
        "eval_lambdas": (_parse_float_list_or_auto, False, None, "parameters to simulate, or auto"),
        **_COMMON_SWEEP,
    },
    "differential-test": {
        "n_paths": (_parse_int, False, 50, "random paths per identity check"),
        "path_length": (_parse_int, False, 80, "slots per path"),
        "seed": (_parse_int, False, 0, "rng seed for the checks"),
    },
}

_CONFIG_CLASSES = {
    "single-sweep": SingleSweepConfig,
    "multisource-sweep": MultiSweepConfig,
    "epsilon-design": DesignRunConfig,
    "differential-test": DiffTestConfig,
}


def parse_config_text(text: str) -> AnyConfig:
    """Parse and validate a flat key=value config; collect every problem."""
    problems: list[str] = []
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, value = stripped.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            problems.append(f"line {lineno}: empty key or value")
            continue
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value

    experiment = raw.pop("experiment", None)
    if experiment is None:
        problems.append("missing required key 'experiment'")
        raise ConfigError(problems)
    if experiment not in SCHEMAS:
        problems.append(f"unknown experiment {experiment!r}; expected one of {sorted(SCHEMAS)}")
        raise ConfigError(problems)

    schema = SCHEMAS[experiment]
    values: dict = {}
    fields_ok = True
    for key, (parser, required, default, _help) in schema.items():
        if key in raw:
            try:
                values[key] = parser(raw.pop(key))
            except ValueError as exc:
                problems.append(f"key {key!r}: {exc}")
                fields_ok = False
        elif required:
            problems.append(f"missing required key {key!r}")
            fields_ok = False
        else:
            values[key] = default
    for key in sorted(raw):
        problems.append(f"unknown key {key!r} for experiment {experiment!r}")

    if fields_ok:
        problems.extend(_semantic_problems(experiment, values))
    if problems:
        raise ConfigError(problems)
    return _CONFIG_CLASSES[experiment](**values)


def _semantic_problems(experiment: str, v: dict) -> list[str]:
    out: list[str] = []
    if experiment == "differential-test":
        if v["n_paths"] < 1:
            out.append("n_paths must be at least 1")
        if v["path_length"] < 2:
            out.append("path_length must be at least 2")
        return out

    if not (0.0 < v["rho"] < 1.0):
        out.append(f"rho must lie in (0, 1), got {v['rho']}")
    alphas = v["alphas"]
    if any(not (0.0 < a < 1.0) for a in alphas):
        out.append("every alpha must lie in (0, 1)")
    elif list(alphas) != sorted(alphas, reverse=True) or len(set(alphas)) != len(alphas):
        out.append("alphas must be strictly decreasing")
    if v["n_runs"] < 2:
        out.append("n_runs must be at least 2")
    if v["horizon"] is not None and v["horizon"] < 1:
        out.append("horizon must be a positive slot count or auto")
    if not (0.0 <= v["censor_cap"] < 1.0):
        out.append("censor_cap must lie in [0, 1)")

    if experiment == "single-sweep":
        if v["noise_sigma"] <= 0:
            out.append("noise_sigma must be positive")
        interval_ok = v["lambda_low"] < v["lambda_high"]
        if not interval_ok:
            out.append("need lambda_low < lambda_high")
        lo, hi = v["lambda_low"], v["lambda_high"]
        if interval_ok and not (lo <= v["lambda_true"] <= hi):
            out.append("lambda_true must lie in [lambda_low, lambda_high]")
        for gi, grid in enumerate(v["grids"], start=1):
            if list(grid) != sorted(set(grid)):
                out.append(f"grid {gi} must be strictly increasing")
            elif interval_ok and any(not (lo <= g <= hi) for g in grid):
                out.append(f"grid {gi} has candidates outside [lambda_low, lambda_high]")
        if v["family"] == "gaussian-variance-shift":
            if v["pre_param"] <= 0:
                out.append("pre_param must be a positive scale for the variance-shift family")
            if v["lambda_low"] <= 0:
                out.append("lambda_low must be positive for the variance-shift family")
    elif experiment == "multisource-sweep":
        n = len(v["pre_params"])
        if len(v["lambda_true"]) != n or len(v["source_grids"]) != n:
            out.append("pre_params, lambda_true and source_grids must agree on the source count")
        if any(p <= 0 for p in v["pre_params"]):
            out.append("pre_params must be positive scales")
        for gi, grid in enumerate(v["source_grids"], start=1):
            if list(grid) != sorted(set(grid)) or any(g <= 0 for g in grid):
                out.append(f"source grid {gi} must be strictly increasing and positive")
        if v["window"] is not None and v["window"] < 1:
            out.append("window must be a positive slot count or auto")
    elif experiment == "epsilon-design":
        if v["noise_sigma"] <= 0:
            out.append("noise_sigma must be positive")
        if v["lambda_low"] >= v["lambda_high"]:
            out.append("need lambda_low < lambda_high")
        if not (0.0 < v["epsilon"] < 1.0):
            out.append("epsilon must lie in (0, 1)")
        if v["mesh_points"] < 2:
            out.append("mesh_points must be at least 2")
        if v["grid_cap"] < 1:
            out.append("grid_cap must be at least 1")
        if v["eval_lambdas"] is not None:
            lo, hi = v["lambda_low"], v["lambda_high"]
            if any(not (lo <= e <= hi) for e in v["eval_lambdas"]):
                out.append("eval_lambdas must lie inside the design interval")
    return out


def config_to_text(cfg: AnyConfig) -> str:
    """Render a config back to the flat key=value format, with unit comments."""
    schema = SCHEMAS[cfg.experiment]
    lines = [f"experiment = {cfg.experiment}"]
    for key, (_parser, _req, _default, help_text) in schema.items():
        value = getattr(cfg, key)
        lines.append(f"{key} = {_render_value(value)}  # {help_text}")
    return "\n".join(lines) + "\n"


def _render_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return " | ".join(",".join(repr(float(x)) for x in g) for g in value)
    if isinstance(value, tuple):
        if all(isinstance(x, str) for x in value):
            return ",".join(value)
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# experiment execution


def _single_templates(cfg: SingleSweepConfig) -> list[BankTemplate]:
    interval = Interval(cfg.lambda_low, cfg.lambda_high)
    if cfg.family == "gaussian-mean-shift":
        family = GaussianMeanShift(pre_mean=cfg.pre_param, sigma=cfg.noise_sigma, post_params=interval)
    else:
        family = GaussianVarianceShift(pre_sigma=cfg.pre_param, post_params=interval)
    prior = GeometricPrior(cfg.rho)
    templates = []
    for variant_name in cfg.variants:
        for gi, grid in enumerate(cfg.grids, start=1):
            templates.append(
                BankTemplate(
                    label=f"{variant_name}-grid{gi}",
                    family=family,
                    prior=prior,
                    grid=grid,
                    variant=ChartVariant(variant_name),
                )
            )
    return templates


def _run_single_sweep(cfg: SingleSweepConfig) -> tuple[list[SweepRow], dict]:
    rows = add_vs_alpha_sweep(
        _single_templates(cfg),
        cfg.lambda_true,
        cfg.alphas,
        cfg.n_runs,
        cfg.seed,
        horizon=cfg.horizon,
        censor_cap=cfg.censor_cap,
    )
    return rows, {}


def _run_multi_sweep(cfg: MultiSweepConfig) -> tuple[list[SweepRow], dict]:
    prior = GeometricPrior(cfg.rho)
    families = tuple(
        GaussianVarianceShift(
            pre_sigma=p,
            post_params=Interval(min(*g, t) * 0.5, max(*g, t) * 2.0),
        )
        for p, g, t in zip(cfg.pre_params, cfg.source_grids, cfg.lambda_true)
    )
    window = cfg.window
    if window is None:
        slowest = prior.slot_cost + sum(
            min(float(f.kl_post_vs_pre(g)) for g in grid) for f, grid in zip(families, cfg.source_grids)
        )
        window = window_length_for(min(cfg.alphas), cfg.rho, slowest)
    template = WindowTemplate(
        label="windowed-max",
        families=families,
        prior=prior,
        grids=cfg.source_grids,
        window_len=window,
    )
    rows = add_vs_alpha_sweep(
        [template],
        cfg.lambda_true,
        cfg.alphas,
        cfg.n_runs,
        cfg.seed,
        horizon=cfg.horizon,
        censor_cap=cfg.censor_cap,
    )
    return rows, {"window": window}


def _run_design(cfg: DesignRunConfig) -> tuple[list[SweepRow], dict]:
    interval = Interval(cfg.lambda_low, cfg.lambda_high)
    family = GaussianMeanShift(pre_mean=cfg.pre_param, sigma=cfg.noise_sigma, post_params=interval)
    prior = GeometricPrior(cfg.rho)
    k = default_lipschitz_constant(family, interval) if cfg.construction == "uniform" else None
    spec = DesignSpec(family=family, interval=interval, epsilon=cfg.epsilon, prior=prior, lipschitz_k=k)
    grid = design_grid(spec, mesh_points=cfg.mesh_points, max_candidates=cfg.grid_cap)
    max_ratio = verify_grid(spec, grid, mesh_points=cfg.mesh_points)

    evals = cfg.eval_lambdas
    if evals is None:
        mids = [(a + b) / 2.0 for a, b in zip(grid[:-1], grid[1:])]
        evals = tuple(sorted(set(float(g) for g in grid) | set(mids)))
    template = BankTemplate(
        label="sr-designed",
        family=family,
        prior=prior,
        grid=tuple(float(g) for g in grid),
        variant=ChartVariant.SR,
    )
    rows: list[SweepRow] = []
    for lam in evals:
        rows.extend(
            add_vs_alpha_sweep(
                [template],
                lam,
                cfg.alphas,
                cfg.n_runs,
                cfg.seed,
                horizon=cfg.horizon,
                censor_cap=cfg.censor_cap,
            )
        )
    derived = {
        "designed_grid": [float(g) for g in grid],
        "criterion_max_ratio": max_ratio,
        "eval_lambdas": [float(e) for e in evals],
        "construction": cfg.construction,
    }
    return rows, derived


# ---------------------------------------------------------------------------
# output files


def _row_cells(row: SweepRow) -> list[str]:
    return [
        repr(float(row.alpha)),
        repr(abs(math.log(row.alpha))),
        row.detector,
        "|".join(repr(float(v)) for v in row.lam_true),
        repr(float(row.add_hat)),
        repr(float(row.add_se)),
        repr(float(row.pfa_hat)),
        repr(float(row.pfa_se)),
        repr(float(row.lower_bound)),
        repr(float(row.efficiency)),
        str(row.censored),
        str(row.n_runs),
        str(row.seed),
    ]


def write_outputs(out_dir: Path, cfg: AnyConfig, rows: list[SweepRow], derived: dict) -> tuple[Path, bool]:
    """Write results.csv, manifest.json and config.txt; returns (csv path, all valid)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "chartbank",
        "version": __version__,
        "experiment": cfg.experiment,
        "config": _jsonable(asdict(cfg)),
        "derived": _jsonable(derived),
        "cells": [
            {
                "detector": r.detector,
                "alpha": r.alpha,
                "lambda_true": list(r.lam_true),
                "horizon": r.horizon,
                "censored": r.censored,
                "valid": r.valid,
            }
            for r in rows
        ],
        "csv_columns": CSV_COLUMNS,
    }
    digest = hashlib.sha256(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    manifest["manifest_sha256"] = digest

    lines = [f"# manifest_sha256={digest}", ",".join(CSV_COLUMNS)]
    lines.extend(",".join(_row_cells(r)) for r in rows)
    csv_path = out_dir / "results.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    (out_dir / "config.txt").write_text(
        config_to_text(cfg) + f"\n# manifest_sha256={digest}\n"
    )
    return csv_path, all(r.valid for r in rows)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def execute_config(cfg: AnyConfig, out_dir: Path) -> int:
    if isinstance(cfg, DiffTestConfig):
        ok = run_selftest(n_paths=cfg.n_paths, path_length=cfg.path_length, seed=cfg.seed)
        return EXIT_OK if ok else 1
    runners = {
        "single-sweep": _run_single_sweep,
        "multisource-sweep": _run_multi_sweep,
        "epsilon-design": _run_design,
    }
    try:
        rows, derived = runners[cfg.experiment](cfg)
    except CapacityError as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(
            json.dumps(
                {
                    "tool": "chartbank",
                    "version": __version__,
                    "experiment": cfg.experiment,
                    "config": _jsonable(asdict(cfg)),
                    "error": f"capacity: {exc}",
                },
                sort_keys=True,
                indent=2,
            )
            + "\n"
        )
        print(f"capacity failure: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    csv_path, all_valid = write_outputs(out_dir, cfg, rows, derived)
    print(f"wrote {csv_path}")
    if not all_valid:
        print("some cells exceeded the censoring cap; results are flagged in the manifest", file=sys.stderr)
        return EXIT_VALIDITY
    return EXIT_OK


# ---------------------------------------------------------------------------
# presets


def preset_config(name: str, seed: int | None = None, runs: int | None = None) -> AnyConfig:
    if name == "fig4":
        cfg: AnyConfig = SingleSweepConfig(
            family="gaussian-mean-shift",
            pre_param=0.0,
            noise_sigma=1.0,
            lambda_low=0.4,
            lambda_high=2.8,
            lambda_true=1.0,
            rho=0.01,
            alphas=(1e-1, 1e-2, 1e-3, 1e-4),
            variants=("sr", "max"),
            grids=((0.4, 1.6, 2.8), (0.4, 1.0, 1.6, 2.2, 2.8)),
            n_runs=10_000,
            horizon=None,
            censor_cap=1e-3,
            seed=0,
        )
    elif name == "fig5":
        grid = (1.5, 1.6, 1.7, 2.0, 2.1, 2.2, 2.3)
        cfg = MultiSweepConfig(
            pre_params=(1.0, 1.0, 1.0),
            lambda_true=(1.7, 2.0, 2.2),
            source_grids=(grid, grid, grid),
            window=200,
            rho=0.01,
            alphas=(1e-1, 1e-2, 1e-3),
            n_runs=10_000,
            horizon=None,
            censor_cap=1e-3,
            seed=0,
        )
    elif name == "example1":
        cfg = DesignRunConfig(
            pre_param=0.0,
            noise_sigma=1.0,
            lambda_low=0.37,
            lambda_high=2.63,
            epsilon=0.2,
            mesh_points=1000,
            grid_cap=4096,
            construction="greedy",
            eval_lambdas=None,
            rho=0.01,
            alphas=(1e-3,),
            n_runs=10_000,
            horizon=None,
            censor_cap=1e-3,
            seed=0,
        )
    else:
        raise ValueError(f"unknown preset {name!r}")
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if runs is not None:
        updates["n_runs"] = runs
    if updates:
        cfg = type(cfg)(**{**asdict(cfg), **updates})
    return cfg


# ---------------------------------------------------------------------------
# selftest


def run_selftest(n_paths: int = 50, path_length: int = 80, seed: int = 0) -> bool:
    """Differential and identity checks; prints one line per check."""
    checks = [
        _check_recursion_vs_direct,
        _check_geometric_series,
        _check_ordering,
        _check_posterior_roundtrip,
        _check_window_decomposition,
    ]
    all_ok = True
    for check in checks:
        try:
            detail = check(n_paths, path_length, seed)
        except Exception as exc:  # a selftest must never crash the process
            print(f"FAIL {check.__name__}: {type(exc).__name__}: {exc}")
            all_ok = False
            continue
        print(f"ok {check.__name__}{': ' + detail if detail else ''}")
    return all_ok


def _selftest_family() -> GaussianMeanShift:
    return GaussianMeanShift(pre_mean=0.0, sigma=1.0, post_params=Interval(0.2, 3.0))


def _check_recursion_vs_direct(n_paths: int, path_length: int, seed: int) -> str:
    family = _selftest_family()
    prior = GeometricPrior(0.05)
    grid = (0.5, 1.0, 2.0)
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(min(n_paths, 50)):
        path = rng.normal(rng.uniform(0.0, 1.5), 1.0, size=min(path_length, 200))
        for variant in ChartVariant:
            bank = ChartBank(family, prior, grid, np.inf, variant)
            trace = np.empty((path.size, len(grid)))
            for i, x in enumerate(path):
                bank.step(float(x))
                trace[i] = bank.log_stats
            direct = direct_stat_oracle(family, prior, variant, path, grid)
            worst = max(worst, float(np.abs(trace - direct).max()))
    if worst > 1e-9:
        raise AssertionError(f"recursion and direct evaluation diverge by {worst:.3e}")
    return f"max abs gap {worst:.2e}"


def _check_geometric_series(n_paths: int, path_length: int, seed: int) -> str:
    # constant x = 0.5 makes the lone chart's llr vanish, so the statistic is
    # a pure geometric sum with a closed form
    family = _selftest_family()
    prior = GeometricPrior(0.01)
    bank = ChartBank(family, prior, (1.0,), math.log(5.0), ChartVariant.SR)
    growth = 1.0 / (1.0 - prior.rho)
    report = None
    expected_stop = None
    for n in range(1, 200):
        report = bank.step(0.5)
        direct = math.log(growth * (growth**n - 1.0) / (growth - 1.0))
        if abs(float(bank.log_stats[0]) - direct) > 1e-9:
            raise AssertionError(f"slot {n}: recursion {bank.log_stats[0]!r} vs closed form {direct!r}")
        if expected_stop is None and direct >= math.log(5.0):
            expected_stop = n
        if report is not None:
            break
    if report is None or report.stopped_at != expected_stop:
        raise AssertionError(f"stopped at {report and report.stopped_at}, closed form says {expected_stop}")
    return f"stopped on slot {report.stopped_at} as the closed form predicts"


def _check_ordering(n_paths: int, path_length: int, seed: int) -> str:
    family = _selftest_family()
    prior = GeometricPrior(0.02)
    grid = (0.5, 1.0, 2.0)
    rng = np.random.default_rng([seed, 2])
    for _ in range(min(n_paths, 30)):
        path = rng.normal(0.5, 1.2, size=min(path_length, 120))
        banks = {v: ChartBank(family, prior, grid, np.inf, v) for v in ChartVariant}
        for x in path:
            for bank in banks.values():
                bank.step(float(x))
            s_sum = banks[ChartVariant.SUM].log_stats
            s_max = banks[ChartVariant.MAX].log_stats
            s_sr = banks[ChartVariant.SR].log_stats
            if not (np.all(s_sum <= s_max) and np.all(s_max <= s_sr)):
                raise AssertionError("statistic ordering violated")
    return "sum <= max <= sr on every slot"


def _check_posterior_roundtrip(n_paths: int, path_length: int, seed: int) -> str:
    rho = 0.01
    worst = 0.0
    for z in np.linspace(-27.0, 27.0, 61):
        log_r = z - math.log(rho)
        p = posterior_from_stat(log_r, rho)
        pc = posterior_complement_from_stat(log_r, rho)
        back = stat_from_posterior(p, rho, complement=pc)
        worst = max(worst, abs(back - log_r))
    if worst > 1e-9:
        raise AssertionError(f"posterior round trip off by {worst:.3e}")
    return f"max abs gap {worst:.2e}"


def _check_window_decomposition(n_paths: int, path_length: int, seed: int) -> str:
    prior = GeometricPrior(0.01)
    families = [GaussianVarianceShift(pre_sigma=1.0, post_params=Interval(1.1, 3.0)) for _ in range(3)]
    grids = [(1.3, 1.7, 2.1, 2.5)] * 3
    window = 10
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(min(n_paths, 8)):
        length = min(path_length, 50)
        scale = np.where(np.arange(length) < length // 2, 1.0, 2.0)
        block = rng.standard_normal((3, length)) * scale[None, :]
        engine = WindowEngine(families, prior, grids, window, math.inf)
        trace = np.empty(length)
        for s in range(length):
            engine.step(block[:, s])
            trace[s] = engine.statistic()
        direct = direct_window_stat_oracle(families, prior, grids, window, block)
        worst = max(worst, float(np.abs(trace - direct).max()))
    if worst > 1e-9:
        raise AssertionError(f"windowed engine and product-set oracle diverge by {worst:.3e}")
    return f"max abs gap {worst:.2e}"


# ---------------------------------------------------------------------------
# entry point


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="chartbank", description="chart-bank change detection experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("chartbank-out"))

    p_preset = sub.add_parser("preset", help="run a built-in experiment")
    p_preset.add_argument("name", choices=["fig4", "fig5", "example1"])
    p_preset.add_argument("--out", type=Path, required=True)
    p_preset.add_argument("--seed", type=int, default=None)
    p_preset.add_argument("--runs", type=int, default=None)

    sub.add_parser("selftest", help="fast differential and identity checks")

    args = parser.parse_args(argv)

    if args.command == "selftest":
        return EXIT_OK if run_selftest() else 1

    if args.command == "preset":
        cfg = preset_config(args.name, seed=args.seed, runs=args.runs)
        return execute_config(cfg, args.out)

    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config_text(text)
    except ConfigError as exc:
        print("config problems:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    return execute_config(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
