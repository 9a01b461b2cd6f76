"""Acceptance gate: every criterion at its stated tolerance and time budget.

One PASS/FAIL line is printed per criterion (run with `pytest -s` to see them
live).  The two 12-qubit reproduction runs take hours and are skipped unless
QRESERVOIR_RUN_LONG=1 is set.
"""
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

import oracles
from qreservoir.circuits import (
    build_hamiltonian,
    build_layout,
    build_trotter_step,
    build_window_circuit,
)
from qreservoir.diagnostics import effective_rank, explained_variance_ratio, svd_spectrum
from qreservoir.experiments import (
    ExperimentConfig,
    apply_overrides,
    build_dataset,
    depth_report,
    diagnose,
    make_reservoir,
    run_single,
)
from qreservoir.pipeline import THREADS_ENV, extract_features
from qreservoir.readout import fit_ridge
from qreservoir.simulator import (
    all_z,
    apply_gate,
    reset_qubits,
    run_circuit_dm,
    run_circuit_trajectory,
)
from test_simulator import random_gates, random_mixed_state


@contextmanager
def criterion(num, description, budget_s=None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"FAIL criterion {num}: {description}")
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None:
        assert elapsed < budget_s, f"criterion {num} took {elapsed:.1f}s, budget {budget_s}s"
    print(f"PASS criterion {num}: {description} ({elapsed:.1f}s)")


def test_criterion_1_simulator_oracle_equivalence():
    with criterion(1, "gate/reset kernels match dense Kronecker and partial-trace oracles", 30):
        rng = np.random.default_rng(1001)
        for case in range(200):
            n = int(rng.integers(1, 4))
            gates = random_gates(n, int(rng.integers(3, 9)), rng)
            rho = random_mixed_state(n, int(rng.integers(0, 2**31)))
            evolved = rho.copy()
            for g in gates:
                evolved = apply_gate(evolved, g)
            u = oracles.circuit_unitary(gates, n)
            assert np.abs(evolved - u @ rho @ u.conj().T).max() < 1e-10
            q = int(rng.integers(n))
            assert np.abs(reset_qubits(rho.copy(), [q]) - oracles.reset_dense(rho, q, n)).max() < 1e-10


def test_criterion_2_trotter_convergence():
    with criterion(2, "Trotter error decreases monotonically in kappa; err(16)/err(64) >= 3", 60):
        layout = build_layout(2, 1)  # N = 4 chain
        errors = {}
        for kappa in (1, 2, 4, 8, 16, 32, 64):
            spec = build_hamiltonian(layout, "nn-tfi", seed=1002, h=0.5, tau=1.0, kappa=kappa)
            unitary = oracles.circuit_unitary(build_trotter_step(spec), 4)
            exact = oracles.exact_evolution(spec.edges, spec.h, spec.tau, 4)
            errors[kappa] = np.linalg.norm(unitary - exact, 2)
        ladder = [errors[k] for k in (1, 2, 4, 8, 16, 32)]
        assert all(a > b for a, b in zip(ladder, ladder[1:])), ladder
        assert errors[16] / errors[64] >= 3.0


def test_criterion_3_backend_cross_validation():
    with criterion(3, "trajectory means within 3 standard errors of density values", 120):
        layout = build_layout(3, 1)  # N = 6
        spec = build_hamiltonian(layout, "opt-nn-tfi", seed=1003, tau=1.0)
        rng = np.random.default_rng(1004)
        excursions = 0
        for w in range(10):
            circuit = build_window_circuit(rng.random((10, 3)), spec)
            exact = all_z(run_circuit_dm(circuit))
            means, sems = run_circuit_trajectory(circuit, seed=2000 + w, n_traj=2000)
            # a 1e-9 floor keeps deterministic components (spread at float
            # rounding level) from turning the check into 0/0
            excursions += int(np.sum(np.abs(means - exact) > 3.0 * np.maximum(sems, 1e-9)))
        assert excursions <= 1, f"{excursions} excursions beyond 3 standard errors"


def test_criterion_4_ridge_oracle():
    with criterion(4, "ridge solver matches the closed-form normal-equation solve", 10):
        rng = np.random.default_rng(1005)
        for case in range(100):
            p = int(rng.integers(1, 17))
            # overdetermined keeps the explicit inverse well-conditioned, so the
            # two routes can meaningfully agree to 1e-8
            rows = int(rng.integers(p + 2, 51))
            d = int(rng.integers(1, 4))
            R = rng.normal(size=(rows, p))
            Y = rng.normal(size=(rows, d))
            beta = float(rng.choice([1e-6, 1e-3, 1e-1]))
            model = fit_ridge(R, Y, beta=beta)
            # independent oracle: explicit inverse of the regularized Gram matrix
            X = np.hstack([R, np.ones((rows, 1))])
            expected = Y.T @ X @ np.linalg.inv(X.T @ X + beta * np.eye(p + 1))
            rel = np.abs(model.weights - expected).max() / max(np.abs(expected).max(), 1e-12)
            assert rel < 1e-8


def test_criterion_5_svd_module():
    with criterion(5, "exact spectrum statistics and Gram-eigen oracle agreement"):
        sigma = np.array([2.0, 1.0, 1.0])
        ratios = explained_variance_ratio(sigma)
        assert np.abs(ratios - np.array([2 / 3, 1 / 6, 1 / 6])).max() <= 1e-12
        assert abs(effective_rank(sigma) - 8.0 / 3.0) <= 1e-12
        rng = np.random.default_rng(1006)
        for _ in range(10):
            R = rng.normal(size=(50, 12))
            np.testing.assert_allclose(svd_spectrum(R), oracles.gram_singular_values(R),
                                       rtol=1e-8, atol=1e-8)


LORENZ_BASELINE = 0.017  # published persistence error on normalized data
ENSO_BASELINE = 0.0067


def _forecast_runs(dataset, seeds=(0, 1, 2, 3, 4), **overrides):
    pairs = [f"{k}={v}" for k, v in overrides.items()]
    config = apply_overrides(ExperimentConfig(), [f"dataset={dataset}", *pairs])
    records = [run_single(config, seed) for seed in seeds]
    mean_mse = float(np.mean([r.test_metrics.mse for r in records]))
    return mean_mse, records[0].baseline_metrics.mse


def test_criterion_6_lorenz_forecasting():
    with criterion(6, "Lorenz: mean MSE beats copy baseline; baseline within 50% of 0.017", 600):
        mean_mse, baseline = _forecast_runs("lorenz", m_per=1, tau=1.0, h=0.5)
        assert 0.5 * LORENZ_BASELINE <= baseline <= 1.5 * LORENZ_BASELINE, baseline
        assert mean_mse < baseline, (mean_mse, baseline)


def test_criterion_7_enso_forecasting():
    with criterion(7, "ENSO: mean MSE beats copy baseline; baseline within 50% of 0.0067", 600):
        mean_mse, baseline = _forecast_runs("enso", m_per=1, tau=1.0, h=0.5)
        assert 0.5 * ENSO_BASELINE <= baseline <= 1.5 * ENSO_BASELINE, baseline
        assert mean_mse < baseline, (mean_mse, baseline)


def test_criterion_8_depth_scaling():
    with criterion(8, "full-window depth: flat for opt-nn, growing for fc, nn >= opt", 60):
        rows = depth_report(n_qubits=(6, 9, 12, 15), t_w=10)
        table = {(r["variant"], r["n_qubits"]): r["depth"] for r in rows}
        opt = [table[("opt-nn-tfi", n)] for n in (6, 9, 12, 15)]
        assert len(set(opt)) == 1, opt
        fc = [table[("fc-tfi", n)] for n in (6, 9, 12, 15)]
        assert all(a < b for a, b in zip(fc, fc[1:])), fc
        assert fc[-1] / fc[0] >= 2.0
        for n in (6, 9, 12, 15):
            assert table[("nn-tfi", n)] >= table[("opt-nn-tfi", n)]


def test_criterion_9_noise_study():
    with criterion(9, "depolarizing pipeline still beats ENSO baseline; rank delta nonzero", 600):
        for p in (0.001, 0.01):
            mean_mse, baseline = _forecast_runs("enso", seeds=(0,), m_per=1, tau=1.0,
                                                p1=p, p2=p)
            assert mean_mse < baseline, (p, mean_mse, baseline)
        config = apply_overrides(ExperimentConfig(), ["dataset=enso", "n_points=200"])
        dataset = build_dataset(config)
        clean = extract_features(dataset.train, make_reservoir(config, 0).fit(dataset.train).config())
        noisy_config = apply_overrides(config, ["p1=0.01", "p2=0.01"])
        noisy = extract_features(dataset.train, make_reservoir(noisy_config, 0).fit(dataset.train).config())
        result = diagnose(clean, noisy)
        assert result.delta.effective_rank_delta != 0.0
        # direction of the shift is reported, never asserted
        print(f"  effective-rank delta (noisy - noiseless): {result.delta.effective_rank_delta:+.3f}")


def test_criterion_10_reproducibility(monkeypatch):
    with criterion(10, "identical metrics for repeated runs across thread counts", 600):
        config = apply_overrides(ExperimentConfig(), ["n_points=150", "t_w=10"])
        monkeypatch.setenv(THREADS_ENV, "1")
        first = run_single(config, seed=3)
        second = run_single(config, seed=3)
        monkeypatch.setenv(THREADS_ENV, "4")
        third = run_single(config, seed=3)
        for other in (second, third):
            assert abs(first.test_metrics.mse - other.test_metrics.mse) <= 1e-10
            assert abs(first.train_metrics.mse - other.train_metrics.mse) <= 1e-10
            assert np.abs(first.test_metrics.per_variable_mse
                          - other.test_metrics.per_variable_mse).max() <= 1e-10


LONG_RUN = os.environ.get("QRESERVOIR_RUN_LONG") == "1"
LORENZ_BEST = 0.0087  # published 12-qubit mean
ENSO_BEST = 0.0036


@pytest.mark.skipif(not LONG_RUN, reason="12-qubit density runs take hours; set QRESERVOIR_RUN_LONG=1")
def test_criterion_6_lorenz_twelve_qubit_long_run():
    with criterion("6-long", "Lorenz 12-qubit mean MSE within 2x of 0.0087"):
        mean_mse, _ = _forecast_runs("lorenz", m_per=3, tau=1.0, h=0.5, allow_large="true")
        assert mean_mse <= 2.0 * LORENZ_BEST, mean_mse


@pytest.mark.skipif(not LONG_RUN, reason="12-qubit density runs take hours; set QRESERVOIR_RUN_LONG=1")
def test_criterion_7_enso_twelve_qubit_long_run():
    with criterion("7-long", "ENSO 12-qubit mean MSE within 2x of 0.0036"):
        mean_mse, _ = _forecast_runs("enso", m_per=3, tau=0.1, h=0.5, allow_large="true")
        assert mean_mse <= 2.0 * ENSO_BEST, mean_mse
