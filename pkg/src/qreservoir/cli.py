"""Command-line entry points.

Every subcommand reads and writes only CSV files and flat key=value reports.
Exit codes: 0 success, 1 configuration/usage error, 2 runtime or numerical
error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import diagnostics
from .dynamics import benchmark_series, load_dataset, save_dataset, save_series
from .experiments import (
    ConfigError,
    ExperimentConfig,
    _atomic,
    _atomic_text,
    _check_size,
    apply_overrides,
    build_dataset,
    config_from_file,
    config_hash,
    depth_report,
    diagnose,
    format_manifest,
    make_reservoir,
    run_sweep,
    summarize_sweep,
)
from .pipeline import align_supervised, extract_features, load_features_csv, save_features_csv
from .readout import (
    baseline_copy,
    fit_ridge,
    format_metrics,
    load_ridge_model,
    mse_metrics,
    ridge_predict,
    save_ridge_model,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse defaults to exit code 2; usage problems are config errors (1)
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_config(args) -> ExperimentConfig:
    config = config_from_file(args.config) if args.config else ExperimentConfig()
    return apply_overrides(config, args.overrides)


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("overrides", nargs="*", metavar="key=value",
                        help="config overrides")


def cmd_generate(args) -> int:
    config = _load_config(args)
    dataset = build_dataset(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not config.dataset.endswith(".csv"):
        raw = benchmark_series(config.dataset, n=config.n_points, dt=config.dt,
                               stride=config.stride, transient=config.transient)
        _atomic(str(out) + ".raw.csv", lambda p: save_series(p, raw))
    save_dataset(out, dataset)
    print(f"dataset={config.dataset}")
    print(f"train_rows={dataset.train.shape[0]}")
    print(f"test_rows={dataset.test.shape[0]}")
    return 0


def cmd_features(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.data) if args.data else build_dataset(config)
    reservoir = make_reservoir(config, args.seed).fit(dataset.train)
    _check_size(config, reservoir.n_qubits_)
    res_config = reservoir.config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", dataset.train), ("test", dataset.test)):
        features = extract_features(part, res_config)
        _atomic(out / f"features_{name}.csv", lambda p, f=features: save_features_csv(p, f))
    _atomic_text(out / "manifest", format_manifest(config, args.seed, reservoir.n_qubits_))
    print(f"config_hash={config_hash(config)}")
    print(f"n_qubits={reservoir.n_qubits_}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.data) if args.data else build_dataset(config)
    features = load_features_csv(Path(args.features) / "features_train.csv")
    r_train, y_train = align_supervised(features, dataset.train)
    model = fit_ridge(r_train, y_train, beta=config.beta,
                      include_bias=config.include_bias, standardize=config.standardize)
    _atomic(args.out, lambda p: save_ridge_model(p, model))
    report = format_metrics(mse_metrics(y_train, ridge_predict(model, r_train)), prefix="train_")
    print(report)
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    dataset = load_dataset(args.data) if args.data else build_dataset(config)
    features = load_features_csv(Path(args.features) / "features_test.csv")
    model = load_ridge_model(args.model)
    r_test, y_test = align_supervised(features, dataset.test)
    lines = [
        format_metrics(mse_metrics(y_test, ridge_predict(model, r_test)), prefix="test_"),
        format_metrics(baseline_copy(dataset.test), prefix="baseline_"),
    ]
    report = "\n".join(lines)
    if args.report:
        _atomic_text(args.report, report + "\n")
    print(report)
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    grid = {}
    for axis in args.axis or []:
        if "=" not in axis:
            raise ConfigError(f"--axis needs key=v1,v2,..., got {axis!r}")
        key, values = axis.split("=", 1)
        from .experiments import _FIELD_TYPES, _parse_value
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown sweep axis {key!r}")
        grid[key] = [_parse_value(v, _FIELD_TYPES[key]) for v in values.split(",") if v.strip()]
    cells = run_sweep(config, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write_records(path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(grid) + ["seed", "n_qubits", "train_mse", "test_mse",
                                          "baseline_mse", "wall_time", "config_hash"])
            for cell in cells:
                for rec in cell.records:
                    writer.writerow([cell.overrides[k] for k in grid]
                                    + [rec.seed, rec.n_qubits, f"{rec.train_metrics.mse:.17g}",
                                       f"{rec.test_metrics.mse:.17g}",
                                       f"{rec.baseline_metrics.mse:.17g}",
                                       f"{rec.wall_time:.3f}", rec.config_hash])

    def write_summary(path):
        rows = summarize_sweep(cells)
        keys = list(grid) + ["status", "mean_test_mse", "std_test_mse", "n_seeds", "error"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys)
            for row in rows:
                writer.writerow([row.get(k, "") for k in keys])

    _atomic(out / "records.csv", write_records)
    _atomic(out / "summary.csv", write_summary)
    failed = sum(1 for c in cells if c.error is not None)
    print(f"cells={len(cells)}")
    print(f"failed={failed}")
    return 0


def cmd_depth_report(args) -> int:
    variants = args.variants.split(",") if args.variants != "all" else None
    n_qubits = [int(v) for v in args.qubits.split(",")]
    rows = depth_report(variants=variants or ("fc-tfi", "nn-tfi", "opt-nn-tfi"),
                        n_qubits=n_qubits, t_w=args.t_w)

    def write(path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    if args.out:
        _atomic(args.out, write)
    for row in rows:
        print(",".join(str(v) for v in row.values()))
    return 0


def cmd_diagnose(args) -> int:
    result = diagnose(args.features_a, args.features_b)
    lines = [
        diagnostics.format_report_summary(result.report_a, prefix="a_"),
        diagnostics.format_report_summary(result.report_b, prefix="b_"),
        f"effective_rank_delta={result.delta.effective_rank_delta:.17g}",
    ]
    report = "\n".join(lines)
    if args.out:
        _atomic_text(args.out, report + "\n")
        for suffix, rep in ((".a.csv", result.report_a), (".b.csv", result.report_b)):
            _atomic(str(args.out) + suffix, lambda p, r=rep: diagnostics.save_report_csv(p, r))
    print(report)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="qreservoir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate and split a benchmark dataset")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("features", help="extract reservoir features for one seed")
    p.add_argument("--data", help="dataset prefix from `generate` (default: regenerate)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit the ridge readout on cached features")
    p.add_argument("--features", required=True, help="directory from `features`")
    p.add_argument("--data", help="dataset prefix (default: regenerate)")
    p.add_argument("--out", required=True, help="model CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on the test partition")
    p.add_argument("--features", required=True)
    p.add_argument("--data", help="dataset prefix (default: regenerate)")
    p.add_argument("--model", required=True)
    p.add_argument("--report", help="write the key=value report here too")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep over config axes, all seeds")
    p.add_argument("--axis", action="append", metavar="key=v1,v2,...")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("depth-report", help="logical depth/gate table per variant and size")
    p.add_argument("--variants", default="all", help="comma list or 'all'")
    p.add_argument("--qubits", default="6,9,12,15")
    p.add_argument("--t-w", type=int, default=10)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_depth_report)

    p = sub.add_parser("diagnose", help="SVD comparison of two feature CSVs")
    p.add_argument("features_a")
    p.add_argument("features_b")
    p.add_argument("--out", help="write the key=value report here too")
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/numerical failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
