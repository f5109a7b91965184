"""Hyperparameter sweep: grid enumeration, stratified subsampling, execution.

The default space is lags {1, 2, 5, 10} x five architectures x three
activations x two optimizers, 120 cells.  Each (configuration, dataset)
cell trains independently with a seed that is a pure function of
(master seed, config index, dataset index), so results do not depend on
worker count or scheduling order, and cell failures land in the status
column instead of aborting the sweep.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import math

import numpy as np

from .data_io import chronological_split
from .evaluation import evaluate_records
from .hybrid import (
    KINDS,
    PipelineConfig,
    evaluate_on_holdout,
    fit_fnn_only,
    fit_hybrid,
    fit_var_only,
)
from .neural_net import TrainConfig
from .ofi_signal import OfiParams

DEFAULT_LAGS = (1, 2, 5, 10)
DEFAULT_ARCHITECTURES = ((128, 64), (32, 16), (32, 32), (128, 64, 32), (64, 32, 16))
DEFAULT_ACTIVATIONS = ("relu", "tanh", "sigmoid")
DEFAULT_OPTIMIZERS = ("adam", "sgd")

_MASK64 = (1 << 64) - 1

SWEEP_CSV_HEADER = (
    "lag",
    "architecture",
    "activation",
    "optimizer",
    "dataset",
    "mse",
    "mae",
    "r2",
    "accuracy",
    "precision",
    "runtime_s",
    "status",
    "seed",
)

HEATMAP_CSV_HEADER = ("dataset", "metric", "lag", "architecture", "value")

_METRIC_DIRECTION = {
    "mse": min,
    "mae": min,
    "r2": max,
    "accuracy": max,
    "precision": max,
}


@dataclass(frozen=True)
class SweepSpace:
    lags: tuple[int, ...] = DEFAULT_LAGS
    architectures: tuple[tuple[int, ...], ...] = DEFAULT_ARCHITECTURES
    activations: tuple[str, ...] = DEFAULT_ACTIVATIONS
    optimizers: tuple[str, ...] = DEFAULT_OPTIMIZERS

    def __post_init__(self) -> None:
        for name in ("lags", "architectures", "activations", "optimizers"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")

    @property
    def size(self) -> int:
        return (
            len(self.lags)
            * len(self.architectures)
            * len(self.activations)
            * len(self.optimizers)
        )


@dataclass(frozen=True)
class SweepConfig:
    lag: int
    architecture: tuple[int, ...]
    activation: str
    optimizer: str


@dataclass(frozen=True)
class SweepResult:
    lag: int
    architecture: tuple[int, ...]
    activation: str
    optimizer: str
    dataset: str
    mse: float
    mae: float
    r2: float
    accuracy: float
    precision: float
    runtime_s: float
    status: str
    seed: int


def enumerate_grid(space: SweepSpace) -> list[SweepConfig]:
    """Deterministic lexicographic order over (lag, architecture,
    activation, optimizer) as listed in the space."""
    out = []
    for lag in space.lags:
        for arch in space.architectures:
            for act in space.activations:
                for opt in space.optimizers:
                    out.append(SweepConfig(lag, tuple(arch), act, opt))
    return out


def _replace_axis(row: tuple, axis: int, value) -> tuple:
    items = list(row)
    items[axis] = value
    return tuple(items)


def lhs_sample(space: SweepSpace, k: int, seed: int) -> list[SweepConfig]:
    """k distinct configurations with each axis spread across its values as
    evenly as k permits (Latin-hypercube style over the categorical grid).

    Deterministic for a given (space, k, seed).  k equal to the grid size
    returns a seeded permutation of the full grid, the only distinct
    outcome consistent with both requirements.
    """
    grid = enumerate_grid(space)
    if not 1 <= k <= len(grid):
        raise ValueError(f"k must lie in [1, {len(grid)}], got {k}")
    rng = np.random.default_rng(
        np.random.SeedSequence([seed & _MASK64, len(grid), k])
    )
    if k == len(grid):
        return [grid[i] for i in rng.permutation(len(grid))]

    axes = [
        list(space.lags),
        [tuple(a) for a in space.architectures],
        list(space.activations),
        list(space.optimizers),
    ]
    cols: list[list] = []
    for values in axes:
        m = len(values)
        counts = [k // m] * m
        # which values receive the remainder is itself seeded
        for extra in rng.permutation(m)[: k % m]:
            counts[extra] += 1
        col = []
        for value, count in zip(values, counts):
            col.extend([value] * count)
        cols.append([col[i] for i in rng.permutation(k)])
    rows = [tuple(cols[a][i] for a in range(4)) for i in range(k)]

    # Repair duplicates by swapping one axis value between two rows, which
    # preserves every per-axis multiset; each applied swap strictly lowers
    # the duplicate count, and the bound is never reached in practice.
    for _ in range(10 * k + 100):
        seen: dict[tuple, int] = {}
        dup_index = -1
        for i, row in enumerate(rows):
            if row in seen:
                dup_index = i
                break
            seen[row] = i
        if dup_index < 0:
            return [SweepConfig(*row) for row in rows]
        repaired = False
        for axis in rng.permutation(4):
            for j in rng.permutation(k):
                j = int(j)
                if j == dup_index or rows[j][axis] == rows[dup_index][axis]:
                    continue
                new_i = _replace_axis(rows[dup_index], axis, rows[j][axis])
                new_j = _replace_axis(rows[j], axis, rows[dup_index][axis])
                if new_i == new_j:
                    continue
                occupancy = {}
                for idx, row in enumerate(rows):
                    if idx in (dup_index, j):
                        continue
                    occupancy[row] = occupancy.get(row, 0) + 1
                if occupancy.get(new_i, 0) == 0 and occupancy.get(new_j, 0) == 0:
                    rows[dup_index] = new_i
                    rows[j] = new_j
                    repaired = True
                    break
            if repaired:
                break
        if not repaired:
            raise RuntimeError("lhs_sample could not repair a duplicate row")
    raise RuntimeError("lhs_sample repair loop exceeded its bound")


def cell_seed(master_seed: int, config_index: int, dataset_index: int) -> int:
    """Pure function of the triple; feeds the cell's TrainConfig."""
    ss = np.random.SeedSequence(
        [master_seed & _MASK64, config_index, dataset_index]
    )
    return int(ss.generate_state(1, np.uint64)[0])


_FITTERS = {
    "var_only": fit_var_only,
    "fnn_only": fit_fnn_only,
    "hybrid": fit_hybrid,
}


def _run_cell(cell) -> SweepResult:
    (
        config,
        dataset_name,
        series,
        kind,
        seed,
        train_fraction,
        train_template,
        ofi_params,
    ) = cell
    start = time.perf_counter()
    try:
        pipeline_config = PipelineConfig(
            var_lag=config.lag,
            fnn_input_lags=None,
            hidden_layers=config.architecture,
            activation=config.activation,
            train=TrainConfig(
                epochs=train_template.epochs,
                batch_size=train_template.batch_size,
                optimizer=config.optimizer,
                learning_rate=train_template.learning_rate,
                early_stopping=train_template.early_stopping,
                patience=train_template.patience,
                validation_fraction=train_template.validation_fraction,
                seed=seed,
            ),
            ofi=ofi_params,
        )
        train_rows, holdout_rows = chronological_split(series, train_fraction)
        bundle = _FITTERS[kind](train_rows, pipeline_config)
        records = evaluate_on_holdout(bundle, train_rows, holdout_rows)
        report = evaluate_records(records, dataset_name, kind)
        runtime = time.perf_counter() - start
        return SweepResult(
            lag=config.lag,
            architecture=config.architecture,
            activation=config.activation,
            optimizer=config.optimizer,
            dataset=dataset_name,
            mse=report.mse,
            mae=report.mae,
            r2=report.r2,
            accuracy=report.accuracy,
            precision=report.precision,
            runtime_s=runtime,
            status="ok",
            seed=seed,
        )
    except Exception as exc:  # cell failures must not abort the sweep
        runtime = time.perf_counter() - start
        return SweepResult(
            lag=config.lag,
            architecture=config.architecture,
            activation=config.activation,
            optimizer=config.optimizer,
            dataset=dataset_name,
            mse=math.nan,
            mae=math.nan,
            r2=math.nan,
            accuracy=math.nan,
            precision=math.nan,
            runtime_s=runtime,
            status=f"error: {type(exc).__name__}: {exc}",
            seed=seed,
        )


def run_sweep(
    configs: list[SweepConfig],
    datasets: list[tuple[str, list]],
    kind: str = "hybrid",
    master_seed: int = 0,
    *,
    train_fraction: float = 0.8,
    train_template: TrainConfig | None = None,
    ofi_params: OfiParams | None = None,
    workers: int = 1,
) -> list[SweepResult]:
    """Train and evaluate every (configuration, dataset) cell.

    ``train_template`` supplies the non-swept optimization settings (its
    optimizer and seed fields are overridden per cell).  ``workers`` > 1
    fans cells out to a process pool; the result order and content are
    identical either way.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if not datasets:
        raise ValueError("no datasets supplied")
    if train_template is None:
        train_template = TrainConfig()
    if ofi_params is None:
        ofi_params = OfiParams()
    cells = []
    for ci, config in enumerate(configs):
        for di, (name, series) in enumerate(datasets):
            cells.append(
                (
                    config,
                    name,
                    series,
                    kind,
                    cell_seed(master_seed, ci, di),
                    train_fraction,
                    train_template,
                    ofi_params,
                )
            )
    if workers <= 1:
        return [_run_cell(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_cell, cells))


def format_architecture(architecture: tuple[int, ...]) -> str:
    return "-".join(str(w) for w in architecture)


def parse_architecture(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split("-"))


def write_sweep_csv(results: list[SweepResult], path: str | Path) -> None:
    """Results CSV in enumeration order.  All model fields are
    deterministic for a fixed master seed; runtime_s is wall clock."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for r in results:
            writer.writerow(
                [
                    r.lag,
                    format_architecture(r.architecture),
                    r.activation,
                    r.optimizer,
                    r.dataset,
                    repr(r.mse),
                    repr(r.mae),
                    repr(r.r2),
                    repr(r.accuracy),
                    repr(r.precision),
                    f"{r.runtime_s:.6f}",
                    r.status,
                    r.seed,
                ]
            )


def best_configurations(results: list[SweepResult]) -> dict[str, dict]:
    """Best configuration per metric, averaging each configuration's ok
    cells across datasets first."""
    grouped: dict[tuple, list[SweepResult]] = {}
    for r in results:
        if r.status != "ok":
            continue
        key = (r.lag, r.architecture, r.activation, r.optimizer)
        grouped.setdefault(key, []).append(r)
    if not grouped:
        raise ValueError("no successful sweep cells")
    best: dict[str, dict] = {}
    for metric, pick in _METRIC_DIRECTION.items():
        scored = {
            key: float(np.mean([getattr(r, metric) for r in rows]))
            for key, rows in grouped.items()
        }
        target = pick(scored.values())
        # ties resolve to the earliest key in axis order, independent of dict order
        key = min(k for k, v in scored.items() if v == target)
        best[metric] = {
            "lag": key[0],
            "architecture": format_architecture(key[1]),
            "activation": key[2],
            "optimizer": key[3],
            "value": scored[key],
        }
    return best


def write_heatmap_csv(results: list[SweepResult], path: str | Path) -> None:
    """Long-format (dataset, metric, lag, architecture, mean value) rows,
    averaged over activations and optimizers; failed cells are skipped."""
    ok = [r for r in results if r.status == "ok"]
    grouped: dict[tuple, list[SweepResult]] = {}
    for r in ok:
        grouped.setdefault((r.dataset, r.lag, r.architecture), []).append(r)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEATMAP_CSV_HEADER)
        for metric in _METRIC_DIRECTION:
            for (dataset, lag, arch), rows in sorted(
                grouped.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
            ):
                value = float(np.mean([getattr(r, metric) for r in rows]))
                writer.writerow(
                    [dataset, metric, lag, format_architecture(arch), repr(value)]
                )
