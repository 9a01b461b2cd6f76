"""Trained readout and references: ridge regression, forecast metrics, ESN.

Only the readout layer of the reservoir stack is ever trained.  The solver
uses the closed-form Tikhonov solution with an optional constant-1 bias
feature, computed as a linear solve rather than an explicit inverse.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError


class SingularSystemError(np.linalg.LinAlgError):
    """Unregularized solve on a rank-deficient feature Gram matrix."""


@dataclass
class RidgeModel:
    """Linear readout weights, d x (p+1) when a bias column is appended."""

    weights: np.ndarray
    beta: float
    include_bias: bool = True
    feature_means: np.ndarray | None = None
    feature_scales: np.ndarray | None = None


def _design(R: np.ndarray, model_or_bias) -> np.ndarray:
    include_bias = model_or_bias if isinstance(model_or_bias, bool) else model_or_bias.include_bias
    if include_bias:
        return np.hstack([R, np.ones((R.shape[0], 1))])
    return R


def fit_ridge(R, Y, beta: float = 1e-6, include_bias: bool = True,
              standardize: bool = False) -> RidgeModel:
    """Solve min_W ||W X^T - Y^T||^2 + beta ||W||^2 in closed form.

    R is rows x p (one feature vector per row), Y is rows x d.  A beta of
    zero is allowed only when the Gram matrix has full rank.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if R.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: features {R.shape[0]}, targets {Y.shape[0]}")
    if beta < 0:
        raise ValueError(f"regularization must be >= 0, got {beta}")
    means = scales = None
    if standardize:
        means = R.mean(axis=0)
        scales = R.std(axis=0)
        if np.any(scales == 0.0):
            raise ValueError("cannot standardize constant feature columns")
        R = (R - means) / scales
    X = _design(R, include_bias)
    gram = X.T @ X + beta * np.eye(X.shape[1])
    if beta == 0.0 and np.linalg.matrix_rank(gram, hermitian=True) < gram.shape[0]:
        raise SingularSystemError("feature Gram matrix is rank-deficient and beta is 0")
    try:
        weights = np.linalg.solve(gram, X.T @ Y).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return RidgeModel(weights=weights, beta=beta, include_bias=include_bias,
                      feature_means=means, feature_scales=scales)


def ridge_predict(model: RidgeModel, R) -> np.ndarray:
    """Apply the readout to one feature vector (p,) or a batch (rows x p)."""
    R = np.asarray(R, dtype=float)
    single = R.ndim == 1
    R = np.atleast_2d(R)
    expected = model.weights.shape[1] - (1 if model.include_bias else 0)
    if R.shape[1] != expected:
        raise ValueError(f"expected {expected} features, got {R.shape[1]}")
    if model.feature_means is not None:
        R = (R - model.feature_means) / model.feature_scales
    out = _design(R, model) @ model.weights.T
    return out[0] if single else out


@dataclass
class ForecastMetrics:
    mse: float
    rmse: float
    per_variable_mse: np.ndarray


def mse_metrics(y_true, y_pred) -> ForecastMetrics:
    """Mean squared error over all entries, plus the per-variable breakdown."""
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    per_variable = np.mean((y_true - y_pred) ** 2, axis=0)
    mse = float(per_variable.mean())
    return ForecastMetrics(mse=mse, rmse=math.sqrt(mse), per_variable_mse=per_variable)


def baseline_copy(series) -> ForecastMetrics:
    """Persistence reference: forecast each step with the previous one."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    if series.shape[0] < 2:
        raise ValueError("need at least 2 rows for the copy baseline")
    return mse_metrics(series[1:], series[:-1])


def format_metrics(metrics: ForecastMetrics, prefix: str = "") -> str:
    """Flat key=value report."""
    lines = [f"{prefix}mse={metrics.mse:.17g}", f"{prefix}rmse={metrics.rmse:.17g}"]
    for i, v in enumerate(metrics.per_variable_mse):
        lines.append(f"{prefix}mse_var{i}={v:.17g}")
    return "\n".join(lines)


def save_ridge_model(path, model: RidgeModel) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# beta={model.beta:.17g}\n")
        fh.write(f"# include_bias={int(model.include_bias)}\n")
        if model.feature_means is not None:
            fh.write("# feature_means=" + ",".join(f"{v:.17g}" for v in model.feature_means) + "\n")
            fh.write("# feature_scales=" + ",".join(f"{v:.17g}" for v in model.feature_scales) + "\n")
        writer = csv.writer(fh)
        for row in model.weights:
            writer.writerow([f"{v:.17g}" for v in row])


def load_ridge_model(path) -> RidgeModel:
    meta: dict[str, str] = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, value = line[1:].strip().split("=", 1)
                meta[key] = value
            else:
                rows.append([float(v) for v in line.split(",")])
    means = scales = None
    if "feature_means" in meta:
        means = np.array([float(v) for v in meta["feature_means"].split(",")])
        scales = np.array([float(v) for v in meta["feature_scales"].split(",")])
    return RidgeModel(weights=np.array(rows), beta=float(meta["beta"]),
                      include_bias=bool(int(meta["include_bias"])),
                      feature_means=means, feature_scales=scales)


# -- classical echo-state reference --

def esn_update(state, u, w_res, w_in, epsilon: float) -> np.ndarray:
    """Leaky tanh state update: (1-eps) r + eps tanh(W_res r + W_in u)."""
    return (1.0 - epsilon) * np.asarray(state) + epsilon * np.tanh(w_res @ state + w_in @ u)


def spectral_radius(w, n_squarings: int = 60) -> float:
    """Largest eigenvalue modulus, estimated without an eigensolver.

    Iterated matrix squaring with Frobenius renormalization: the weighted
    norm products converge to the radius (the power method applied to the
    matrix itself), accurate to machine precision for these sizes.
    """
    a = np.asarray(w, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return 0.0
    a = a / scale
    log_radius = math.log(scale)
    weight = 1.0
    for _ in range(n_squarings):
        a = a @ a
        norm = float(np.linalg.norm(a))
        if norm == 0.0:
            return 0.0  # nilpotent
        a /= norm
        weight *= 0.5
        log_radius += weight * math.log(norm)
    return math.exp(log_radius)


def rescale_spectral(w, target_rho: float) -> np.ndarray:
    """Scale a matrix so its spectral radius equals `target_rho`."""
    if target_rho <= 0:
        raise ValueError(f"target spectral radius must be positive, got {target_rho}")
    radius = spectral_radius(w)
    if radius == 0.0:
        raise ValueError("matrix has zero spectral radius, cannot rescale")
    return np.asarray(w, dtype=float) * (target_rho / radius)


class EchoStateNetwork(BaseEstimator, RegressorMixin):
    """Minimal leaky ESN with a ridge readout, for next-step forecasting.

    Mirrors the reservoir forecaster interface: `fit` consumes a T x d
    series in [0, 1] and trains the readout on (state_t -> u_{t+1}) pairs
    after a washout; `predict` replays a series and returns the forecasts.
    """

    def __init__(self, size=100, spectral_radius=0.9, epsilon=1.0, input_scale=1.0,
                 density=0.1, washout=10, beta=1e-6, seed=0):
        self.size = size
        self.spectral_radius = spectral_radius
        self.epsilon = epsilon
        self.input_scale = input_scale
        self.density = density
        self.washout = washout
        self.beta = beta
        self.seed = seed

    def _init_weights(self, d: int):
        if not 0 < self.spectral_radius < 1:
            raise ValueError(f"spectral_radius must lie in (0, 1), got {self.spectral_radius}")
        rng = np.random.default_rng(self.seed)
        w = rng.uniform(-1.0, 1.0, size=(self.size, self.size))
        w *= rng.random(size=w.shape) < self.density
        self.w_res_ = rescale_spectral(w, self.spectral_radius)
        self.w_in_ = self.input_scale * rng.uniform(-1.0, 1.0, size=(self.size, d))

    def _states(self, series: np.ndarray) -> np.ndarray:
        states = np.zeros((series.shape[0], self.size))
        r = np.zeros(self.size)
        for t, u in enumerate(series):
            r = esn_update(r, u, self.w_res_, self.w_in_, self.epsilon)
            states[t] = r
        return states

    def fit(self, series, y=None):
        series = np.atleast_2d(np.asarray(series, dtype=float))
        if series.shape[0] <= self.washout + 1:
            raise ValueError(f"series of length {series.shape[0]} too short for washout {self.washout}")
        self._init_weights(series.shape[1])
        states = self._states(series)
        self.readout_ = fit_ridge(states[self.washout:-1], series[self.washout + 1:], beta=self.beta)
        return self

    def predict(self, series) -> np.ndarray:
        if not hasattr(self, "readout_"):
            raise NotFittedError("EchoStateNetwork is not fitted yet")
        series = np.atleast_2d(np.asarray(series, dtype=float))
        states = self._states(series)
        return ridge_predict(self.readout_, states[self.washout:-1])

    def evaluate(self, series) -> ForecastMetrics:
        series = np.atleast_2d(np.asarray(series, dtype=float))
        return mse_metrics(series[self.washout + 1:], self.predict(series))
