"""Singular-spectrum diagnostics of reservoir feature matrices.

Used to compare the geometry of feature sets produced under different
conditions (e.g. noiseless vs. depolarizing backends): how variance spreads
across directions and how many directions carry it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class ZeroVarianceError(ValueError):
    """A feature column is constant — a dead reservoir qubit should surface."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"zero-variance feature column(s) {self.columns}")


def standardize(R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale each column to mean 0, standard deviation 1."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] < 2:
        raise ValueError(f"need a matrix with at least 2 rows, got shape {R.shape}")
    means = R.mean(axis=0)
    stds = R.std(axis=0)
    # a column is dead when its spread is at rounding level relative to its magnitude
    dead = np.flatnonzero(stds <= 1e-12 * np.maximum(1.0, np.abs(means)))
    if dead.size:
        raise ZeroVarianceError(dead.tolist())
    return (R - means) / stds, means, stds


def svd_spectrum(R_std) -> np.ndarray:
    """Descending singular values, via bidiagonalization of the matrix itself.

    (Tests cross-check against an eigendecomposition of the Gram matrix.)
    """
    R_std = np.asarray(R_std, dtype=float)
    rows, cols = R_std.shape
    if rows < cols:
        raise ValueError(f"need at least as many rows as columns, got {rows} x {cols}")
    return np.linalg.svd(R_std, compute_uv=False)


def explained_variance_ratio(sigma) -> np.ndarray:
    """sigma_i^2 / sum_j sigma_j^2 for each singular value."""
    sigma = np.asarray(sigma, dtype=float)
    total = np.sum(sigma**2)
    if total == 0.0:
        raise ValueError("all singular values are zero")
    return sigma**2 / total


def effective_rank(sigma) -> float:
    """Inverse Herfindahl-Hirschman index of the normalized spectrum.

    Equals the number of nonzero singular values when they are all equal,
    and degrades toward 1 as the spectrum concentrates.
    """
    sigma = np.asarray(sigma, dtype=float)
    total = sigma.sum()
    if total == 0.0:
        raise ValueError("all singular values are zero")
    p = sigma / total
    return float(1.0 / np.sum(p**2))


@dataclass
class SvdReport:
    singular_values: np.ndarray
    explained_variance: np.ndarray
    effective_rank: float

    @property
    def flatness(self) -> float:
        """Spread of the spectrum: sigma_1 / sigma_N (1 means perfectly flat)."""
        smallest = self.singular_values[-1]
        return float(self.singular_values[0] / smallest) if smallest > 0 else float("inf")


def svd_report(R) -> SvdReport:
    """Standardize a feature matrix and summarize its singular spectrum."""
    R_std, _, _ = standardize(R)
    sigma = svd_spectrum(R_std)
    return SvdReport(
        singular_values=sigma,
        explained_variance=explained_variance_ratio(sigma),
        effective_rank=effective_rank(sigma),
    )


@dataclass
class SvdDelta:
    sigma_delta: np.ndarray
    variance_delta: np.ndarray
    effective_rank_delta: float
    flatness_a: float
    flatness_b: float


def compare_reports(a: SvdReport, b: SvdReport) -> SvdDelta:
    """Per-index differences (b - a) plus rank and flatness statistics."""
    if a.singular_values.shape != b.singular_values.shape:
        raise ValueError("reports have different sizes")
    return SvdDelta(
        sigma_delta=b.singular_values - a.singular_values,
        variance_delta=b.explained_variance - a.explained_variance,
        effective_rank_delta=b.effective_rank - a.effective_rank,
        flatness_a=a.flatness,
        flatness_b=b.flatness,
    )


def save_report_csv(path, report: SvdReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "sigma", "variance_ratio"])
        for i, (s, v) in enumerate(zip(report.singular_values, report.explained_variance)):
            writer.writerow([i, f"{s:.17g}", f"{v:.17g}"])


def format_report_summary(report: SvdReport, prefix: str = "") -> str:
    return "\n".join([
        f"{prefix}effective_rank={report.effective_rank:.17g}",
        f"{prefix}flatness={report.flatness:.17g}",
    ])
