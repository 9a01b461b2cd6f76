"""Sliding-window reservoir feature extraction and the forecasting estimators.

Every window of `t_w` consecutive inputs is processed by its own circuit
started from the uniform superposition, so features depend on at most the
last `t_w` inputs (the fading-memory window is enforced by construction).
Windows are independent and can be simulated in parallel; the feature matrix
is identical for any degree of parallelism.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .circuits import (
    OPT_NN_TFI,
    HamiltonianSpec,
    build_hamiltonian,
    build_layout,
    build_window_circuit,
)
from .readout import ForecastMetrics, RidgeModel, fit_ridge, mse_metrics, ridge_predict
from .simulator import (
    DEFAULT_SHOTS,
    N_MAX_DENSITY,
    NoiseModel,
    all_z,
    run_circuit_dm,
    run_circuit_trajectory,
    sample_shots,
    window_all_z_factored,
)

BACKENDS = ("density", "trajectory", "shots")

THREADS_ENV = "QRESERVOIR_THREADS"


def thread_count() -> int:
    """Worker threads for window-parallel extraction (>= 1, from the environment)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, threads)


def check_unit_series(X, n_features: int | None = None) -> np.ndarray:
    """Validate a T x d series with all entries finite and inside [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected a T x d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("series contains NaN/Inf entries")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError("series entries must lie in [0, 1]; normalize first")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


@dataclass
class ReservoirConfig:
    """Everything needed to turn a unit-interval series into features."""

    spec: HamiltonianSpec
    t_w: int = 10
    backend: str = "density"
    n_traj: int = 1000
    shots: int = DEFAULT_SHOTS
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        if self.t_w <= 1:
            raise ValueError(f"window size must be > 1, got {self.t_w}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")


@dataclass
class FeatureMatrix:
    """One row of Z expectations per window end t (1-based, t_w..T)."""

    values: np.ndarray
    t_index: np.ndarray


def _window_features(series: np.ndarray, end: int, config: ReservoirConfig) -> np.ndarray:
    """Features for the window ending at 0-based row `end` (inclusive)."""
    window = series[end - config.t_w + 1 : end + 1]
    circuit = build_window_circuit(window, config.spec)
    if config.backend == "density":
        if config.noise.is_noiseless and circuit.n_qubits <= N_MAX_DENSITY:
            # exact factored evolution; hugely faster at 12 qubits
            return window_all_z_factored(circuit)
        return all_z(run_circuit_dm(circuit, config.noise))
    if config.backend == "trajectory":
        means, _ = run_circuit_trajectory(circuit, [config.seed, end], config.n_traj)
        return means
    rho = run_circuit_dm(circuit, config.noise)
    return sample_shots(rho, config.shots, np.random.SeedSequence([config.seed, end])).z_means


def extract_features(series, config: ReservoirConfig) -> FeatureMatrix:
    """Simulate one circuit per sliding window and collect all <Z_j> rows.

    Windows advance by one step; with T input rows the result has
    T - t_w + 1 rows of N features each, every entry in [-1, 1].
    """
    series = check_unit_series(series, config.spec.layout.d)
    n_rows = series.shape[0] - config.t_w + 1
    if n_rows < 1:
        raise ValueError(f"series of length {series.shape[0]} shorter than window {config.t_w}")
    ends = range(config.t_w - 1, series.shape[0])
    values = np.empty((n_rows, config.spec.n_qubits))
    workers = thread_count()
    if workers == 1:
        for k, end in enumerate(ends):
            values[k] = _window_features(series, end, config)
    else:
        # Window order never matters: each result lands in its own row.
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for k, row in enumerate(pool.map(lambda e: _window_features(series, e, config), ends)):
                values[k] = row
    return FeatureMatrix(values=values, t_index=np.arange(config.t_w, series.shape[0] + 1))


def align_supervised(features: FeatureMatrix, series) -> tuple[np.ndarray, np.ndarray]:
    """Pair each feature row r_t with the next input u_{t+1}.

    The final feature row has no successor inside the series and is dropped,
    leaving T - t_w training pairs.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    if features.values.shape[0] != series.shape[0] - features.t_index[0] + 1:
        raise ValueError("feature matrix does not match the series length")
    if features.values.shape[0] < 2:
        raise ValueError("no supervised pairs: series no longer than the window")
    t_w = int(features.t_index[0])
    return features.values[:-1], series[t_w:]


def save_features_csv(path, features: FeatureMatrix) -> None:
    n = features.values.shape[1]
    header = "t," + ",".join(f"z{j}" for j in range(n))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(features.t_index, features.values):
            fh.write(f"{int(t)}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def load_features_csv(path) -> FeatureMatrix:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t":
            raise ValueError(f"{path} is not a feature CSV")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    t_index = np.array([int(r[0]) for r in rows])
    values = np.array([[float(v) for v in r[1:]] for r in rows])
    return FeatureMatrix(values=values, t_index=t_index)


class QuantumReservoir(BaseEstimator, TransformerMixin):
    """Fixed quantum reservoir as a transformer: series in, feature matrix out.

    `fit` only derives the qubit layout from the input dimension and samples
    the couplings from `seed`; nothing is trained.  `transform` returns one
    row of Z expectations per sliding window, computed by the configured
    backend.

    Parameters follow the interaction-model conventions: `m_per` memory
    qubits per injection qubit, connectivity `variant`, evolution time `tau`
    split into `kappa` first-order steps, uniform field `h`, and couplings
    drawn uniformly from [j_low, j_high].
    """

    def __init__(self, m_per=1, variant=OPT_NN_TFI, tau=1.0, h=0.5, kappa=1,
                 j_low=-0.5, j_high=0.5, t_w=10, backend="density",
                 n_traj=1000, shots=DEFAULT_SHOTS, p1=0.0, p2=0.0, p_reset=0.0,
                 seed=0):
        self.m_per = m_per
        self.variant = variant
        self.tau = tau
        self.h = h
        self.kappa = kappa
        self.j_low = j_low
        self.j_high = j_high
        self.t_w = t_w
        self.backend = backend
        self.n_traj = n_traj
        self.shots = shots
        self.p1 = p1
        self.p2 = p2
        self.p_reset = p_reset
        self.seed = seed

    def fit(self, X, y=None):
        X = check_unit_series(X)
        layout = build_layout(X.shape[1], self.m_per)
        self.spec_ = build_hamiltonian(layout, self.variant, self.seed, h=self.h,
                                       tau=self.tau, kappa=self.kappa,
                                       j_range=(self.j_low, self.j_high))
        self.n_features_in_ = X.shape[1]
        return self

    def config(self) -> ReservoirConfig:
        if not hasattr(self, "spec_"):
            raise NotFittedError("QuantumReservoir is not fitted yet")
        return ReservoirConfig(
            spec=self.spec_, t_w=self.t_w, backend=self.backend,
            n_traj=self.n_traj, shots=self.shots,
            noise=NoiseModel(p1=self.p1, p2=self.p2, p_reset=self.p_reset),
            seed=self.seed,
        )

    def transform(self, X) -> np.ndarray:
        X = check_unit_series(X, getattr(self, "n_features_in_", None))
        return extract_features(X, self.config()).values

    @property
    def n_qubits_(self) -> int:
        if not hasattr(self, "spec_"):
            raise NotFittedError("QuantumReservoir is not fitted yet")
        return self.spec_.n_qubits


class ReservoirForecaster(BaseEstimator):
    """Next-step forecaster: quantum reservoir features + ridge readout.

    `fit` extracts features from a training series and solves the readout on
    (r_t -> u_{t+1}) pairs.  `predict` returns one forecast per window of the
    given series; row k forecasts the series value one step after window k
    ends, so `predictions[:-1]` aligns with `series[t_w:]`.
    """

    def __init__(self, m_per=1, variant=OPT_NN_TFI, tau=1.0, h=0.5, kappa=1,
                 j_low=-0.5, j_high=0.5, t_w=10, backend="density",
                 n_traj=1000, shots=DEFAULT_SHOTS, p1=0.0, p2=0.0, p_reset=0.0,
                 seed=0, beta=1e-6, include_bias=True, standardize_features=False):
        self.m_per = m_per
        self.variant = variant
        self.tau = tau
        self.h = h
        self.kappa = kappa
        self.j_low = j_low
        self.j_high = j_high
        self.t_w = t_w
        self.backend = backend
        self.n_traj = n_traj
        self.shots = shots
        self.p1 = p1
        self.p2 = p2
        self.p_reset = p_reset
        self.seed = seed
        self.beta = beta
        self.include_bias = include_bias
        self.standardize_features = standardize_features

    def _reservoir_params(self):
        keys = ("m_per", "variant", "tau", "h", "kappa", "j_low", "j_high", "t_w",
                "backend", "n_traj", "shots", "p1", "p2", "p_reset", "seed")
        return {k: getattr(self, k) for k in keys}

    def fit(self, series, y=None):
        series = check_unit_series(series)
        self.reservoir_ = QuantumReservoir(**self._reservoir_params()).fit(series)
        features = extract_features(series, self.reservoir_.config())
        R, Y = align_supervised(features, series)
        self.readout_ = fit_ridge(R, Y, beta=self.beta, include_bias=self.include_bias,
                                  standardize=self.standardize_features)
        self.train_metrics_ = mse_metrics(Y, ridge_predict(self.readout_, R))
        return self

    def _check_fitted(self):
        if not hasattr(self, "readout_"):
            raise NotFittedError("ReservoirForecaster is not fitted yet")

    def readout(self) -> RidgeModel:
        self._check_fitted()
        return self.readout_

    def predict(self, series) -> np.ndarray:
        self._check_fitted()
        series = check_unit_series(series, self.reservoir_.n_features_in_)
        features = extract_features(series, self.reservoir_.config())
        return ridge_predict(self.readout_, features.values)

    def evaluate(self, series) -> ForecastMetrics:
        """Next-step forecast error over all windows with a known successor."""
        self._check_fitted()
        series = check_unit_series(series, self.reservoir_.n_features_in_)
        predictions = self.predict(series)
        return mse_metrics(series[self.t_w:], predictions[:-1])
