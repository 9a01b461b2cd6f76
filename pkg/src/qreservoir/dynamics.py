"""Chaotic benchmark series: RK4 integration, unit scaling, train/test split.

Two three-variable systems are provided: the Lorenz convection model and a
coupled ocean-atmosphere (ENSO) recharge model.  Both are integrated with a
fixed-step classical Runge-Kutta scheme; the resulting series are min-max
normalized to [0, 1] so they can be fed to the qubit encoding downstream.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError


class IntegrationError(RuntimeError):
    """Raised when the integrator produces NaN/Inf or diverges."""


# Beyond this magnitude a trajectory is treated as numerically divergent.
DIVERGENCE_LIMIT = 1e12

LORENZ_INIT = (1.0, 1.0, 1.0)
ENSO_INIT = (10.0, 14.0, 24.0)
LORENZ_DT = 0.1
ENSO_DT = 0.01
DEFAULT_TRANSIENT = 100


@dataclass(frozen=True)
class LorenzParams:
    """Rates of the Lorenz convection model (chaotic at the defaults)."""

    a: float = 10.0
    b: float = 28.0
    c: float = 8.0 / 3.0


@dataclass(frozen=True)
class EnsoParams:
    """Coefficients of the ENSO ocean-atmosphere model.

    B: current-strength coefficient, dx: half ocean width, C: friction,
    u_star: reference zonal current, T_bar: deep ocean temperature,
    A: heat-loss rate, T_star: equilibrium surface temperature.
    """

    B: float = 940.0
    dx: float = 7.5
    C: float = 3.0
    u_star: float = -14.2
    T_bar: float = 16.0
    A: float = 1.0
    T_star: float = 28.0

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError(f"dx must be positive, got {self.dx}")


def lorenz_deriv(state, params: LorenzParams = LorenzParams()) -> np.ndarray:
    """Time derivative (dx, dy, dz) of the Lorenz system at `state`."""
    x, y, z = state
    return np.array([
        params.a * (y - x),
        x * (params.b - z) - y,
        x * y - params.c * z,
    ])


def enso_deriv(state, params: EnsoParams = EnsoParams()) -> np.ndarray:
    """Time derivative (du, dTw, dTe) of the ENSO system at `state`."""
    u, t_w, t_e = state
    half_width = 2.0 * params.dx
    return np.array([
        params.B / half_width * (t_e - t_w) - params.C * (u - params.u_star),
        u / half_width * (params.T_bar - t_e) - params.A * (t_w - params.T_star),
        u / half_width * (t_w - params.T_bar) - params.A * (t_e - params.T_star),
    ])


def rk4_step(f, state, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta update of `state` under `f`."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    state = np.asarray(state, dtype=float)
    k1 = np.asarray(f(state))
    k2 = np.asarray(f(state + 0.5 * dt * k1))
    k3 = np.asarray(f(state + 0.5 * dt * k2))
    k4 = np.asarray(f(state + dt * k3))
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after RK4 step: {out}")
    return out


_SYSTEMS = {
    "lorenz": (lorenz_deriv, LorenzParams, LORENZ_INIT, LORENZ_DT, ("x", "y", "z")),
    "enso": (enso_deriv, EnsoParams, ENSO_INIT, ENSO_DT, ("u", "Tw", "Te")),
}


@dataclass
class RawSeries:
    """A multivariate series sampled at a fixed step, one row per time point."""

    values: np.ndarray
    dt: float
    names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2:
            raise ValueError(f"series must be a T x d matrix with T >= 2, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains NaN/Inf entries")
        self.names = tuple(self.names)
        if len(self.names) != self.values.shape[1]:
            raise ValueError("one name per feature is required")


def generate_series(system, params=None, init=None, dt: float | None = None,
                    n: int = 1000, transient: int = 0, names=None) -> RawSeries:
    """Integrate a dynamical system with RK4 and record `n` states.

    `system` is either "lorenz"/"enso" or a callable state -> derivative.
    Row 0 is the state after `transient` discarded warm-up steps (with the
    default transient=0 it is `init` itself); row k applies k further steps.
    Raises IntegrationError if any coordinate exceeds the divergence limit.
    """
    if n < 2:
        raise ValueError(f"need at least 2 points, got n={n}")
    if isinstance(system, str):
        try:
            deriv, params_cls, default_init, default_dt, default_names = _SYSTEMS[system]
        except KeyError:
            raise ValueError(f"unknown system {system!r}; expected one of {sorted(_SYSTEMS)}") from None
        params = params_cls() if params is None else params
        init = default_init if init is None else init
        dt = default_dt if dt is None else dt
        names = default_names if names is None else names
        f = lambda s: deriv(s, params)
    else:
        f = system
        if init is None or dt is None:
            raise ValueError("init and dt are required for a callable system")
        if names is None:
            names = tuple(f"v{i}" for i in range(len(init)))
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if transient < 0:
        raise ValueError(f"transient must be >= 0, got {transient}")

    state = np.asarray(init, dtype=float)
    for _ in range(transient):
        state = rk4_step(f, state, dt)
    values = np.empty((n, state.size))
    values[0] = state
    for k in range(1, n):
        state = rk4_step(f, state, dt)
        if np.any(np.abs(state) > DIVERGENCE_LIMIT):
            raise IntegrationError(f"trajectory diverged at step {k} (|value| > {DIVERGENCE_LIMIT:g})")
        values[k] = state
    return RawSeries(values=values, dt=dt, names=tuple(names))


BENCHMARK_DEFAULTS = {
    # name: (integration dt, recording stride)
    # ENSO is stiffer (its current-strength term is ~63), so it is integrated
    # at a finer step and recorded every 10th state for a 0.1 sampling interval.
    "lorenz": (LORENZ_DT, 1),
    "enso": (ENSO_DT, 10),
}


def benchmark_series(name: str, n: int = 1000, dt: float | None = None,
                     stride: int | None = None, transient: int = DEFAULT_TRANSIENT,
                     params=None, init=None) -> RawSeries:
    """Generate one of the benchmark series at its standard sampling rate.

    Integrates at `dt` and records every `stride`-th state, yielding `n` rows
    sampled `dt * stride` apart.
    """
    if name not in BENCHMARK_DEFAULTS:
        raise ValueError(f"unknown benchmark {name!r}; expected one of {sorted(BENCHMARK_DEFAULTS)}")
    default_dt, default_stride = BENCHMARK_DEFAULTS[name]
    dt = default_dt if dt is None else dt
    stride = default_stride if stride is None else int(stride)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    raw = generate_series(name, params=params, init=init, dt=dt,
                          n=(n - 1) * stride + 1, transient=transient)
    return RawSeries(values=raw.values[::stride], dt=dt * stride, names=raw.names)


class UnitScaler(BaseEstimator, TransformerMixin):
    """Per-feature min-max scaler onto [0, 1], fitted on training data only.

    Values outside the fitted range (e.g. on test data) are clamped so that
    every transformed entry stays inside [0, 1].
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        mins = X.min(axis=0)
        maxs = X.max(axis=0)
        constant = np.isclose(mins, maxs)
        if np.any(constant):
            cols = np.flatnonzero(constant)
            raise ValueError(f"constant feature column(s) {cols.tolist()}: min == max, cannot scale")
        self.min_ = mins
        self.max_ = maxs
        return self

    def transform(self, X):
        self._check_fitted()
        scaled = (np.asarray(X, dtype=float) - self.min_) / (self.max_ - self.min_)
        return np.clip(scaled, 0.0, 1.0)

    def inverse_transform(self, X):
        self._check_fitted()
        return np.asarray(X, dtype=float) * (self.max_ - self.min_) + self.min_

    def _check_fitted(self):
        if not hasattr(self, "min_"):
            raise NotFittedError("UnitScaler is not fitted yet")


@dataclass
class TimeSeriesDataset:
    """Normalized train/test partitions plus the scaler fitted on train."""

    train: np.ndarray
    test: np.ndarray
    scaler: UnitScaler
    split_ratio: float
    names: tuple[str, ...] = field(default_factory=tuple)


def split_series(raw: RawSeries, ratio: float) -> TimeSeriesDataset:
    """Split into a contiguous train prefix and test suffix, then normalize.

    The scaler is fitted on the train partition only; test values falling
    outside the train range are clamped to [0, 1].
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    n = raw.values.shape[0]
    n_train = int(round(ratio * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split ratio {ratio} leaves an empty partition for {n} rows")
    scaler = UnitScaler().fit(raw.values[:n_train])
    return TimeSeriesDataset(
        train=scaler.transform(raw.values[:n_train]),
        test=scaler.transform(raw.values[n_train:]),
        scaler=scaler,
        split_ratio=ratio,
        names=raw.names,
    )


# -- CSV persistence (17 significant digits round-trips float64 exactly) --

def save_matrix_csv(path, values, names) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in values:
            writer.writerow([f"{v:.17g}" for v in row])


def load_matrix_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = tuple(next(reader))
        values = np.array([[float(v) for v in row] for row in reader])
    if values.ndim != 2 or values.shape[1] != len(names):
        raise ValueError(f"malformed series CSV {path}")
    return values, names


def save_series(path, series: RawSeries) -> None:
    save_matrix_csv(path, series.values, series.names)


def load_series(path, dt: float = 1.0) -> RawSeries:
    values, names = load_matrix_csv(path)
    return RawSeries(values=values, dt=dt, names=names)


def save_dataset(prefix, ds: TimeSeriesDataset) -> None:
    """Persist a dataset as <prefix>.train.csv, <prefix>.test.csv, <prefix>.meta."""
    prefix = str(prefix)
    save_matrix_csv(prefix + ".train.csv", ds.train, ds.names)
    save_matrix_csv(prefix + ".test.csv", ds.test, ds.names)
    lines = [f"split_ratio={ds.split_ratio:.17g}"]
    lines.append("min=" + ",".join(f"{v:.17g}" for v in ds.scaler.min_))
    lines.append("max=" + ",".join(f"{v:.17g}" for v in ds.scaler.max_))
    with open(prefix + ".meta", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(prefix) -> TimeSeriesDataset:
    prefix = str(prefix)
    train, names = load_matrix_csv(prefix + ".train.csv")
    test, _ = load_matrix_csv(prefix + ".test.csv")
    meta = {}
    with open(prefix + ".meta") as fh:
        for line in fh:
            if "=" in line:
                key, value = line.strip().split("=", 1)
                meta[key] = value
    scaler = UnitScaler()
    scaler.min_ = np.array([float(v) for v in meta["min"].split(",")])
    scaler.max_ = np.array([float(v) for v in meta["max"].split(",")])
    return TimeSeriesDataset(
        train=train, test=test, scaler=scaler,
        split_ratio=float(meta["split_ratio"]), names=names,
    )
