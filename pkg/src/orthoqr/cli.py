"""Experiment harness: generate data, run seeded trials, emit plot data.

Subcommands:
  generate     write a synthetic dataset (CSV) with its oracle intervals
  run          train (vanilla | orthogonal) across seeds and report metrics
  figures      build plot-data CSVs from a finished run directory
  audit        compute the metric suite on an externally produced intervals CSV

Exit codes: 0 success, 1 at least one trial failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import os
import sys
import traceback
from pathlib import Path

import numpy as np
import pandas as pd

from . import conformal, metrics
from .datagen import (CsvSchema, Dataset, SyntheticSpec, generate_synthetic,
                      load_csv, oracle_interval, preprocess, save_csv, split)
from .losses import IntervalBatch
from .training import TrainConfig, gamma_for, predict_intervals, train

SYNTHETIC_NOISE = {"synthetic_low": 3.0, "synthetic_high": 10.0}
SYNTHETIC_N = 7000
DATA_SEED = 1


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# -- generate ----------------------------------------------------------


def cmd_generate(args) -> int:
    spec = SyntheticSpec(n=args.n, noise=args.noise, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(spec)
    save_csv(dataset, out / "data.csv")
    lo, hi = oracle_interval(dataset.X, args.alpha, spec)
    _write_csv(out / "oracle.csv", ["lo", "hi"], zip(lo, hi))
    spec_blob = {"n": spec.n, "noise": spec.noise, "seed": spec.seed,
                 "alpha": args.alpha}
    (out / "spec.json").write_text(json.dumps(spec_blob, indent=2))
    print(json.dumps(spec_blob))
    return 0


# -- run ---------------------------------------------------------------


def _build_dataset(cfg: dict) -> tuple[Dataset, bool]:
    """Returns the raw dataset and whether y is log transformed."""
    source = cfg["dataset"]
    if source in SYNTHETIC_NOISE:
        spec = SyntheticSpec(n=cfg.get("n", SYNTHETIC_N),
                             noise=SYNTHETIC_NOISE[source], seed=DATA_SEED)
        dataset = generate_synthetic(spec)
        dataset.name = source
        return dataset, False
    schema = CsvSchema(target=cfg.get("target", "y"), group=cfg.get("group_col"),
                       log_y=cfg.get("log_y", False))
    return load_csv(source, schema), schema.log_y


def _method_matrix(cfg: dict) -> list[dict]:
    penalty = cfg.get("penalty", "corr")
    methods = [{"name": "vanilla", "penalty": "none", "gamma": 0.0}]
    if penalty != "none":
        gamma = cfg.get("gamma")
        if gamma is None:
            gamma = gamma_for(cfg["dataset"], cfg.get("loss", "pinball"), penalty)
        methods.append({"name": "orthogonal", "penalty": penalty, "gamma": gamma})
    return methods


def run_trial(payload: dict) -> dict:
    """One seed: split, preprocess, train every method, evaluate."""
    cfg, seed, outdir = payload["cfg"], payload["seed"], Path(payload["out"])
    raw, log_y = _build_dataset(cfg)
    conformalize = cfg.get("conformalize", False)
    if cfg["dataset"] in SYNTHETIC_NOISE:
        fractions = ({"train": 0.54, "val": 0.06, "cal": 0.20, "test": 0.20}
                     if conformalize else {"train": 0.72, "val": 0.08, "test": 0.20})
    else:
        fractions = ({"train": 0.54, "val": 0.06, "cal": 0.20, "test": 0.20}
                     if conformalize else {"train": 0.54, "val": 0.06, "test": 0.40})
    raw = split(raw, fractions, seed)
    processed = preprocess(raw, log_transform_y=log_y)
    alpha = cfg.get("alpha", 0.1)
    test_idx = processed.splits["test"]
    X_test = processed.X[test_idx]
    y_test_raw = raw.y[test_idx]

    batches, rows, group_rows = {}, [], []
    for method in _method_matrix(cfg):
        config = TrainConfig(
            loss=cfg.get("loss", "pinball"), penalty=method["penalty"],
            gamma=method["gamma"], alpha=alpha,
            batch_size=cfg.get("batch_size", 1024), lr=cfg.get("lr", 1e-3),
            max_epochs=cfg.get("max_epochs", 10_000),
            patience=cfg.get("patience", 200), seed=seed,
            architecture=("synthetic" if cfg["dataset"] in SYNTHETIC_NOISE else "real"))
        model, trace = train(processed, config)
        trace.to_csv(outdir / "traces" / f"trace_{method['name']}_seed{seed}.csv")
        batch = predict_intervals(model, X_test, y_test_raw, alpha,
                                  scaler=processed.scaler)
        if conformalize:
            cal_idx = processed.splits["cal"]
            cal_batch = predict_intervals(model, processed.X[cal_idx],
                                          raw.y[cal_idx], alpha,
                                          scaler=processed.scaler)
            batch = conformal.conformalize(batch, conformal.calibrate(cal_batch, alpha))
        batches[method["name"]] = batch
        _write_csv(outdir / "intervals" / f"intervals_{method['name']}_seed{seed}.csv",
                   ["y", "lo", "hi", "group"],
                   zip(batch.y, batch.lo, batch.hi,
                       raw.group[test_idx] if raw.group is not None else [""] * len(batch)))

    ils = None
    if "orthogonal" in batches:
        ils = metrics.ils_set(batches["orthogonal"].L, batches["vanilla"].L)
    for method_name, batch in batches.items():
        rows.append(metrics.report_row(
            cfg["dataset"], method_name, seed, X_test, batch, ils=ils,
            wsc_directions=cfg.get("wsc_directions", 1000), wsc_seed=seed))
        if raw.group is not None:
            for g in (0.0, 1.0):
                mask = raw.group[test_idx] == g
                if mask.any():
                    sub = batch.subset(np.flatnonzero(mask))
                    group_rows.append([cfg["dataset"], method_name, seed, int(g),
                                       metrics.coverage(sub), metrics.mean_length(sub)])
    return {"seed": seed, "rows": rows, "group_rows": group_rows}


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            seeds += list(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be nonempty and distinct")
    return seeds


def cmd_run(args) -> int:
    cfg = {}
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    for key in ("dataset", "loss", "penalty", "gamma", "conformalize",
                "max_epochs", "target", "group_col", "log_y"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if "dataset" not in cfg:
        raise ConfigError("a dataset is required (--dataset or config file)")
    seeds = _parse_seeds(args.seeds if args.seeds else cfg.get("seeds", "0-29"))
    out = Path(args.out)
    for sub in ("traces", "intervals", "errors"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps({"cfg": cfg, "seeds": seeds},
                                                    indent=2, sort_keys=True))

    payloads = [{"cfg": cfg, "seed": s, "out": str(out)} for s in seeds]
    jobs = args.jobs or os.cpu_count() or 1
    results, failures = [], []
    if jobs > 1 and len(payloads) > 1:
        with multiprocessing.Pool(min(jobs, len(payloads))) as pool:
            outcomes = pool.map(_safe_trial, payloads)
    else:
        outcomes = [_safe_trial(p) for p in payloads]
    for payload, outcome in zip(payloads, outcomes):
        if isinstance(outcome, dict):
            results.append(outcome)
        else:
            failures.append(payload["seed"])
            (out / "errors" / f"seed{payload['seed']}.txt").write_text(outcome)

    results.sort(key=lambda r: r["seed"])
    all_rows = [row for r in results for row in r["rows"]]
    _write_csv(out / "metrics.csv", metrics.REPORT_COLUMNS,
               [[row[c] for c in metrics.REPORT_COLUMNS] for row in all_rows])
    _write_csv(out / "groups.csv",
               ["dataset", "method", "seed", "group", "coverage", "length"],
               [row for r in results for row in r["group_rows"]])

    if len(results) >= 2:
        agg_rows = []
        for method in sorted({row["method"] for row in all_rows}):
            method_rows = [row for row in all_rows if row["method"] == method]
            stats = metrics.aggregate(method_rows)
            record = [cfg["dataset"], method]
            for col in metrics.REPORT_COLUMNS[3:]:
                mean, se = stats.get(col, (float("nan"), float("nan")))
                record += [mean, se]
            agg_rows.append(record)
        header = ["dataset", "method"]
        for col in metrics.REPORT_COLUMNS[3:]:
            header += [f"{col}_mean", f"{col}_se"]
        _write_csv(out / "aggregate.csv", header, agg_rows)

    if failures:
        print(f"{len(failures)} trial(s) failed: seeds {failures}", file=sys.stderr)
        return 1
    return 0


def _safe_trial(payload):
    try:
        return run_trial(payload)
    except Exception:
        return traceback.format_exc()


# -- figures -----------------------------------------------------------


def cmd_figures(args) -> int:
    run_dir = Path(args.run_dir)
    out = Path(args.out or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = sorted((run_dir / "traces").glob("trace_*.csv"))
    if not traces:
        raise ConfigError(f"no trace files under {run_dir / 'traces'}")

    fig1_rows = []
    for path in traces:
        method, seed = path.stem.split("_")[1], path.stem.split("seed")[-1]
        frame = pd.read_csv(path)
        val = frame[frame["split"] == "val"]
        best_epoch = int(val.loc[val["loss"].idxmin(), "epoch"]) if len(val) else -1
        cov = frame[frame["split"].isin(["train", "test"])]
        for _, row in cov.iterrows():
            fig1_rows.append([int(row["epoch"]), row["split"], row["group"], method,
                              float(row["coverage"]), int(row["epoch"]) == best_epoch])
    _write_csv(out / "figure1.csv",
               ["epoch", "split", "group", "method", "coverage", "is_best_epoch"],
               fig1_rows)

    fig2_rows = []
    interval_files = sorted((run_dir / "intervals").glob("intervals_*.csv"))
    methods = sorted({p.stem.split("_")[1] for p in interval_files})
    for method in methods:
        frames = [pd.read_csv(p) for p in interval_files
                  if p.stem.split("_")[1] == method]
        merged = pd.concat(frames, ignore_index=True)
        lengths = (merged["hi"] - merged["lo"]).to_numpy()
        covered = ((merged["lo"] <= merged["y"]) & (merged["y"] <= merged["hi"])).to_numpy()
        order = np.argsort(lengths, kind="stable")
        bins = np.array_split(order, 100)
        for b, idx in enumerate(bins):
            if idx.size == 0:
                continue
            fig2_rows.append([method, b, float(lengths[idx].mean()),
                              float(covered[idx].mean())])
    _write_csv(out / "figure2.csv", ["method", "bin", "mean_length", "coverage"],
               fig2_rows)
    return 0


# -- audit -------------------------------------------------------------


def cmd_audit(args) -> int:
    frame = pd.read_csv(args.intervals)
    for col in ("y", "lo", "hi"):
        if col not in frame.columns:
            raise ConfigError(f"intervals CSV must contain a {col!r} column")
    batch = IntervalBatch(frame["lo"].to_numpy(), frame["hi"].to_numpy(),
                          frame["y"].to_numpy())
    feature_cols = [c for c in frame.columns if c.startswith("x")]
    X = (frame[feature_cols].to_numpy(dtype=np.float64) if feature_cols
         else frame[["lo", "hi"]].to_numpy(dtype=np.float64))
    row = metrics.report_row(Path(args.intervals).stem, "audit", 0, X, batch,
                             wsc_directions=args.wsc_directions)
    report = {k: v for k, v in row.items() if k not in ("dataset", "method", "seed")}
    print(json.dumps(report, indent=2, default=float))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, default=float))
    return 0


# -- entry point -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthoqr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--n", type=int, default=SYNTHETIC_N)
    gen.add_argument("--noise", type=float, default=3.0)
    gen.add_argument("--seed", type=int, default=DATA_SEED)
    gen.add_argument("--alpha", type=float, default=0.1)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    run = sub.add_parser("run", help="train and evaluate across seeds")
    run.add_argument("--config", help="JSON config; flags override it")
    run.add_argument("--dataset", help="synthetic_low | synthetic_high | CSV path")
    run.add_argument("--target", help="target column for CSV datasets")
    run.add_argument("--group-col", dest="group_col")
    run.add_argument("--log-y", dest="log_y", action="store_const", const=True)
    run.add_argument("--loss", choices=["pinball", "interval_score"])
    run.add_argument("--penalty", choices=["none", "corr", "hsic"])
    run.add_argument("--gamma", type=float)
    run.add_argument("--conformalize", action="store_const", const=True)
    run.add_argument("--max-epochs", dest="max_epochs", type=int)
    run.add_argument("--seeds", help="e.g. 0-29 or 0,3,7")
    run.add_argument("--jobs", type=int)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    figs = sub.add_parser("figures", help="emit plot-data CSVs")
    figs.add_argument("--run-dir", required=True)
    figs.add_argument("--out")
    figs.set_defaults(func=cmd_figures)

    audit = sub.add_parser("audit", help="metrics on an intervals CSV")
    audit.add_argument("--intervals", required=True)
    audit.add_argument("--wsc-directions", type=int, default=1000)
    audit.add_argument("--out")
    audit.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
