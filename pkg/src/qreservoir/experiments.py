"""Reproducible experiment orchestration: configs, runs, sweeps, reports.

A run is fully described by a flat key=value config plus one seed; the seed
only redraws the reservoir couplings (and trajectory/shot randomness when
those backends are enabled), never the data.  Density-backend runs are
bit-reproducible for a fixed (config, seed) regardless of thread count.
"""
from __future__ import annotations

import hashlib
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics
from .circuits import (
    VARIANTS,
    build_hamiltonian,
    build_layout,
    build_window_circuit,
    depth_and_counts,
)
from .dynamics import (
    TimeSeriesDataset,
    benchmark_series,
    load_series,
    split_series,
)
from .pipeline import (
    BACKENDS,
    FeatureMatrix,
    QuantumReservoir,
    align_supervised,
    extract_features,
    load_features_csv,
    save_features_csv,
    thread_count,
)
from .readout import (
    ForecastMetrics,
    baseline_copy,
    fit_ridge,
    mse_metrics,
    ridge_predict,
)

# Density runs beyond this many qubits take hours and must be opted into.
LARGE_RUN_QUBITS = 12


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 1 at the CLI)."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "lorenz"
    n_points: int = 1000
    dt: float | None = None
    stride: int | None = None
    transient: int = 100
    split: float = 0.8
    m_per: int = 1
    variant: str = "opt-nn-tfi"
    tau: float = 1.0
    h: float = 0.5
    j_low: float = -0.5
    j_high: float = 0.5
    kappa: int = 1
    t_w: int = 10
    beta: float = 1e-6
    include_bias: bool = True
    standardize: bool = False
    backend: str = "density"
    n_traj: int = 1000
    shots: int = 4096
    p1: float = 0.0
    p2: float = 0.0
    p_reset: float = 0.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    allow_large: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.m_per < 1:
            raise ConfigError(f"m_per must be >= 1, got {self.m_per}")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.kappa < 1:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")
        if self.t_w <= 1:
            raise ConfigError(f"t_w must be > 1, got {self.t_w}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.j_low < self.j_high:
            raise ConfigError(f"need j_low < j_high, got [{self.j_low}, {self.j_high}]")
        if self.n_points < self.t_w + 2:
            raise ConfigError(f"n_points={self.n_points} too short for window {self.t_w}")
        for name in ("p1", "p2", "p_reset"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {p}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(text: str, field_type: str):
    text = text.strip()
    if field_type in ("float | None", "int | None") and text.lower() in ("none", ""):
        return None
    if field_type == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if field_type == "int":
        return int(text)
    if field_type in ("float", "float | None"):
        return float(text)
    if field_type == "int | None":
        return int(text)
    if field_type == "tuple[int, ...]":
        return tuple(int(v) for v in text.split(",") if v.strip())
    return text


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def config_to_text(config: ExperimentConfig) -> str:
    """Canonical key-sorted key=value form (the hashing base)."""
    lines = [f"{f.name}={_format_value(getattr(config, f.name))}"
             for f in sorted(fields(ExperimentConfig), key=lambda f: f.name)]
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()[:16]


def apply_overrides(config: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply key=value override strings to a config."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _parse_value(value, _FIELD_TYPES[key])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return replace(config, **updates)


def config_from_file(path) -> ExperimentConfig:
    pairs = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    pairs.append(line)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return apply_overrides(ExperimentConfig(), pairs)


def build_dataset(config: ExperimentConfig) -> TimeSeriesDataset:
    """Generate (or load) the configured series and split/normalize it."""
    if config.dataset.endswith(".csv"):
        raw = load_series(config.dataset)
    else:
        try:
            raw = benchmark_series(config.dataset, n=config.n_points, dt=config.dt,
                                   stride=config.stride, transient=config.transient)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return split_series(raw, config.split)


def make_reservoir(config: ExperimentConfig, seed: int) -> QuantumReservoir:
    return QuantumReservoir(
        m_per=config.m_per, variant=config.variant, tau=config.tau, h=config.h,
        kappa=config.kappa, j_low=config.j_low, j_high=config.j_high,
        t_w=config.t_w, backend=config.backend, n_traj=config.n_traj,
        shots=config.shots, p1=config.p1, p2=config.p2, p_reset=config.p_reset,
        seed=seed,
    )


def _check_size(config: ExperimentConfig, n_qubits: int):
    if config.backend == "density" and n_qubits >= LARGE_RUN_QUBITS and not config.allow_large:
        raise ConfigError(
            f"{n_qubits}-qubit density runs take hours; set allow_large=true to opt in")


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    n_qubits: int
    train_metrics: ForecastMetrics
    test_metrics: ForecastMetrics
    baseline_metrics: ForecastMetrics
    wall_time: float
    feature_paths: tuple[str, ...] = ()


def run_single(config: ExperimentConfig, seed: int, cache_dir=None) -> RunRecord:
    """Full pipeline for one seed: data, features, readout, test metrics."""
    start = time.perf_counter()
    dataset = build_dataset(config)
    reservoir = make_reservoir(config, seed).fit(dataset.train)
    _check_size(config, reservoir.n_qubits_)
    res_config = reservoir.config()
    train_features = extract_features(dataset.train, res_config)
    test_features = extract_features(dataset.test, res_config)

    paths = ()
    if cache_dir is not None:
        cache = Path(cache_dir)
        cache.mkdir(parents=True, exist_ok=True)
        train_path = cache / f"features_train_seed{seed}.csv"
        test_path = cache / f"features_test_seed{seed}.csv"
        _atomic(train_path, lambda p: save_features_csv(p, train_features))
        _atomic(test_path, lambda p: save_features_csv(p, test_features))
        manifest = cache / f"manifest_seed{seed}"
        _atomic_text(manifest, format_manifest(config, seed, reservoir.n_qubits_))
        paths = (str(train_path), str(test_path))

    r_train, y_train = align_supervised(train_features, dataset.train)
    model = fit_ridge(r_train, y_train, beta=config.beta,
                      include_bias=config.include_bias, standardize=config.standardize)
    r_test, y_test = align_supervised(test_features, dataset.test)
    return RunRecord(
        config_hash=config_hash(config),
        seed=seed,
        n_qubits=reservoir.n_qubits_,
        train_metrics=mse_metrics(y_train, ridge_predict(model, r_train)),
        test_metrics=mse_metrics(y_test, ridge_predict(model, r_test)),
        baseline_metrics=baseline_copy(dataset.test),
        wall_time=time.perf_counter() - start,
        feature_paths=paths,
    )


def format_manifest(config: ExperimentConfig, seed: int, n_qubits: int) -> str:
    return "\n".join([
        f"config_hash={config_hash(config)}",
        f"seed={seed}",
        f"backend={config.backend}",
        f"dataset={config.dataset}",
        f"n_qubits={n_qubits}",
        f"t_w={config.t_w}",
    ]) + "\n"


@dataclass
class SweepCell:
    overrides: dict
    records: list[RunRecord]
    error: str | None = None

    @property
    def test_mses(self) -> np.ndarray:
        return np.array([r.test_metrics.mse for r in self.records])


def run_sweep(config: ExperimentConfig, grid: dict[str, list], seeds=None) -> list[SweepCell]:
    """Run every grid cell for every seed; failures are flagged, not fatal."""
    if not grid:
        raise ConfigError("sweep grid is empty")
    for key in grid:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown sweep axis {key!r}")
        if not grid[key]:
            raise ConfigError(f"sweep axis {key!r} has no values")
    seeds = tuple(seeds) if seeds is not None else config.seeds
    axes = sorted(grid)
    cells = [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]

    def run_cell(overrides: dict) -> SweepCell:
        try:
            cell_config = replace(config, **overrides)
            records = [run_single(cell_config, seed) for seed in seeds]
            return SweepCell(overrides=overrides, records=records)
        except Exception as exc:  # partial failure tolerated
            return SweepCell(overrides=overrides, records=[], error=f"{type(exc).__name__}: {exc}")

    workers = thread_count()
    if workers == 1 or len(cells) == 1:
        return [run_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells))


def summarize_sweep(cells: list[SweepCell]) -> list[dict]:
    """Mean and std of the test MSE across seeds, one row per cell."""
    rows = []
    for cell in cells:
        row = dict(cell.overrides)
        if cell.error is not None:
            row.update(status="failed", error=cell.error)
        else:
            mses = cell.test_mses
            row.update(status="ok", mean_test_mse=float(mses.mean()),
                       std_test_mse=float(mses.std(ddof=1)) if mses.size > 1 else 0.0,
                       n_seeds=int(mses.size))
        rows.append(row)
    return rows


def depth_report(variants=VARIANTS, n_qubits=(6, 9, 12, 15), t_w: int = 10,
                 d: int = 3) -> list[dict]:
    """Logical depth and gate counts of a full window circuit per (variant, N)."""
    rows = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        for n in n_qubits:
            if n % d != 0 or n // d < 2:
                raise ConfigError(f"{n} qubits does not fit {d} injection qubits with m_per >= 1")
            layout = build_layout(d, n // d - 1)
            spec = build_hamiltonian(layout, variant, seed=0)
            circuit = build_window_circuit(np.zeros((t_w, d)), spec)
            logical = depth_and_counts(circuit)
            expanded = depth_and_counts(circuit, decompose=True)
            rows.append({
                "variant": variant, "n_qubits": n,
                "depth": logical.depth, "gates": logical.gates,
                "depth_decomposed": expanded.depth, "gates_decomposed": expanded.gates,
            })
    return rows


@dataclass
class DiagnoseResult:
    report_a: diagnostics.SvdReport
    report_b: diagnostics.SvdReport
    delta: diagnostics.SvdDelta


def diagnose(features_a, features_b) -> DiagnoseResult:
    """SVD comparison of two cached feature matrices (CSV paths or matrices)."""
    def load(source) -> np.ndarray:
        if isinstance(source, (str, Path)):
            return load_features_csv(source).values
        if isinstance(source, FeatureMatrix):
            return source.values
        return np.asarray(source, dtype=float)

    report_a = diagnostics.svd_report(load(features_a))
    report_b = diagnostics.svd_report(load(features_b))
    return DiagnoseResult(report_a=report_a, report_b=report_b,
                          delta=diagnostics.compare_reports(report_a, report_b))


# -- atomic file helpers (write-temp-then-rename) --

def _atomic(path, writer) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _atomic_text(path, text: str) -> None:
    _atomic(path, lambda p: Path(p).write_text(text))
