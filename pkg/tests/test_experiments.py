import numpy as np
import pytest

from qreservoir.experiments import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    build_dataset,
    config_from_file,
    config_hash,
    config_to_text,
    depth_report,
    diagnose,
    run_single,
    run_sweep,
    summarize_sweep,
)
from qreservoir.pipeline import THREADS_ENV, load_features_csv, align_supervised
from qreservoir.readout import fit_ridge, mse_metrics, ridge_predict

FAST = ["n_points=80", "t_w=4", "m_per=1", "seeds=0,1"]


@pytest.fixture
def fast_config():
    return apply_overrides(ExperimentConfig(), FAST)


class TestConfig:
    def test_hash_stable_under_reordering(self, tmp_path):
        a = tmp_path / "a.cfg"
        b = tmp_path / "b.cfg"
        a.write_text("tau=0.1\nm_per=2\n")
        b.write_text("m_per=2\ntau=0.1\n")
        assert config_hash(config_from_file(a)) == config_hash(config_from_file(b))

    def test_hash_changes_with_values(self):
        base = ExperimentConfig()
        assert config_hash(base) != config_hash(apply_overrides(base, ["tau=0.5"]))

    def test_text_round_trip(self, tmp_path):
        config = apply_overrides(ExperimentConfig(), ["tau=0.1", "seeds=3,4", "include_bias=false"])
        path = tmp_path / "cfg"
        path.write_text(config_to_text(config))
        assert config_from_file(path) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            apply_overrides(ExperimentConfig(), ["nope=3"])

    def test_malformed_pair_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), ["tau"])

    @pytest.mark.parametrize("override", [
        "variant=ring-tfi", "backend=gpu", "split=1.5", "tau=0", "kappa=0",
        "m_per=0", "t_w=1", "p1=1.0", "seeds=",
    ])
    def test_domain_validation(self, override):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), [override])

    def test_comments_ignored_in_files(self, tmp_path):
        path = tmp_path / "cfg"
        path.write_text("# a comment\ntau=0.1\n\n")
        assert config_from_file(path).tau == 0.1

    def test_missing_file_is_config_error(self):
        with pytest.raises(ConfigError):
            config_from_file("/does/not/exist.cfg")


class TestBuildDataset:
    def test_lorenz_defaults(self):
        ds = build_dataset(ExperimentConfig())
        assert ds.train.shape == (800, 3)
        assert ds.test.shape == (200, 3)

    def test_enso_uses_stride(self):
        ds = build_dataset(apply_overrides(ExperimentConfig(), ["dataset=enso", "n_points=100"]))
        assert ds.train.shape[0] == 80

    def test_csv_dataset(self, tmp_path):
        from qreservoir.dynamics import generate_series, save_series
        path = tmp_path / "series.csv"
        save_series(path, generate_series("lorenz", n=60, transient=100))
        config = apply_overrides(ExperimentConfig(), [f"dataset={path}"])
        ds = build_dataset(config)
        assert ds.train.shape[0] == 48

    def test_unknown_dataset_rejected(self):
        with pytest.raises(ConfigError):
            build_dataset(apply_overrides(ExperimentConfig(), ["dataset=mars"]))


class TestRunSingle:
    def test_record_contents(self, fast_config):
        record = run_single(fast_config, seed=0)
        assert record.n_qubits == 6
        assert record.config_hash == config_hash(fast_config)
        assert record.seed == 0
        assert record.test_metrics.mse > 0
        assert record.baseline_metrics.mse > 0
        assert record.wall_time > 0

    def test_bit_identical_repeat(self, fast_config):
        a = run_single(fast_config, seed=1)
        b = run_single(fast_config, seed=1)
        assert a.test_metrics.mse == b.test_metrics.mse
        assert a.train_metrics.mse == b.train_metrics.mse
        np.testing.assert_array_equal(a.test_metrics.per_variable_mse,
                                      b.test_metrics.per_variable_mse)

    def test_thread_count_invariance(self, fast_config, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "1")
        a = run_single(fast_config, seed=0)
        monkeypatch.setenv(THREADS_ENV, "3")
        b = run_single(fast_config, seed=0)
        assert abs(a.test_metrics.mse - b.test_metrics.mse) <= 1e-10

    def test_cache_reproduces_metrics(self, fast_config, tmp_path):
        record = run_single(fast_config, seed=0, cache_dir=tmp_path)
        train_path, test_path = record.feature_paths
        dataset = build_dataset(fast_config)
        # windows never cross the split: 64 train rows -> 61, 16 test rows -> 13
        assert load_features_csv(train_path).values.shape[0] == 64 - 4 + 1
        assert load_features_csv(test_path).values.shape[0] == 16 - 4 + 1
        r_train, y_train = align_supervised(load_features_csv(train_path), dataset.train)
        model = fit_ridge(r_train, y_train, beta=fast_config.beta)
        r_test, y_test = align_supervised(load_features_csv(test_path), dataset.test)
        cached_mse = mse_metrics(y_test, ridge_predict(model, r_test)).mse
        assert cached_mse == pytest.approx(record.test_metrics.mse, abs=1e-12)
        assert (tmp_path / "manifest_seed0").exists()

    def test_large_density_run_gated(self):
        config = apply_overrides(ExperimentConfig(), ["m_per=3", "n_points=40", "t_w=4"])
        with pytest.raises(ConfigError, match="allow_large"):
            run_single(config, seed=0)

    def test_seed_changes_couplings_only(self, fast_config):
        a = run_single(fast_config, seed=0)
        b = run_single(fast_config, seed=1)
        # same data, same baseline; different reservoir, different fit
        assert a.baseline_metrics.mse == b.baseline_metrics.mse
        assert a.test_metrics.mse != b.test_metrics.mse


class TestSweep:
    def test_axis_cells_times_seeds(self, fast_config):
        cells = run_sweep(fast_config, {"tau": [0.1, 1.0]}, seeds=(0, 1))
        assert len(cells) == 2
        assert all(len(c.records) == 2 for c in cells)
        summary = summarize_sweep(cells)
        assert len(summary) == 2
        assert all(row["status"] == "ok" for row in summary)
        assert all("mean_test_mse" in row for row in summary)

    def test_empty_grid_rejected(self, fast_config):
        with pytest.raises(ConfigError, match="empty"):
            run_sweep(fast_config, {})

    def test_empty_axis_rejected(self, fast_config):
        with pytest.raises(ConfigError):
            run_sweep(fast_config, {"tau": []})

    def test_single_cell_matches_run_single(self, fast_config):
        cells = run_sweep(fast_config, {"tau": [1.0]}, seeds=(0,))
        direct = run_single(apply_overrides(fast_config, ["tau=1.0"]), seed=0)
        assert cells[0].records[0].test_metrics.mse == direct.test_metrics.mse

    def test_failed_cell_flagged_not_fatal(self, fast_config):
        cells = run_sweep(fast_config, {"m_per": [1, 40]}, seeds=(0,))
        by_m = {c.overrides["m_per"]: c for c in cells}
        assert by_m[1].error is None
        assert by_m[40].error is not None
        summary = {row["m_per"]: row for row in summarize_sweep(cells)}
        assert summary[40]["status"] == "failed"

    def test_unknown_axis_rejected(self, fast_config):
        with pytest.raises(ConfigError):
            run_sweep(fast_config, {"warp": [1]})


class TestDepthReport:
    def test_opt_depth_constant_fc_growing(self):
        rows = depth_report(n_qubits=(6, 9, 12, 15))
        table = {(r["variant"], r["n_qubits"]): r for r in rows}
        opt_depths = {table[("opt-nn-tfi", n)]["depth"] for n in (6, 9, 12, 15)}
        assert len(opt_depths) == 1
        fc_depths = [table[("fc-tfi", n)]["depth"] for n in (6, 9, 12, 15)]
        assert all(a < b for a, b in zip(fc_depths, fc_depths[1:]))
        for n in (6, 9, 12, 15):
            assert table[("nn-tfi", n)]["depth"] >= table[("opt-nn-tfi", n)]["depth"]

    def test_decomposed_counts_larger(self):
        rows = depth_report(variants=("opt-nn-tfi",), n_qubits=(6,))
        assert rows[0]["gates_decomposed"] > rows[0]["gates"]
        assert rows[0]["depth_decomposed"] >= rows[0]["depth"]

    def test_incompatible_qubit_count(self):
        with pytest.raises(ConfigError):
            depth_report(n_qubits=(7,))


class TestDiagnose:
    def test_same_features_zero_delta(self, fast_config, tmp_path):
        record = run_single(fast_config, seed=0, cache_dir=tmp_path)
        result = diagnose(record.feature_paths[0], record.feature_paths[0])
        assert result.delta.effective_rank_delta == 0.0

    def test_scaled_copy_same_rank(self, fast_config, tmp_path):
        record = run_single(fast_config, seed=0, cache_dir=tmp_path)
        values = load_features_csv(record.feature_paths[0]).values
        result = diagnose(values, 2.0 * values)
        assert result.delta.effective_rank_delta == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(result.delta.variance_delta, 0.0, atol=1e-9)

    def test_noise_shifts_rank(self, fast_config):
        noisy = apply_overrides(fast_config, ["p1=0.01", "p2=0.01"])
        from qreservoir.experiments import make_reservoir
        from qreservoir.pipeline import extract_features
        ds = build_dataset(fast_config)
        clean = extract_features(ds.train, make_reservoir(fast_config, 0).fit(ds.train).config())
        noisy_f = extract_features(ds.train, make_reservoir(noisy, 0).fit(ds.train).config())
        result = diagnose(clean, noisy_f)
        assert result.delta.effective_rank_delta != 0.0
