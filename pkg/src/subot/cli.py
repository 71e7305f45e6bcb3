"""Command-line frontend: synth, features, adapt, benchmark, sweep."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .datamodel import (
    FEATURE_NAMES,
    LabeledDataset,
    ToyConfig,
    default_toy_config,
    generate_toy,
    load_dataset_csv,
    save_dataset_csv,
    sliding_window_features,
)
from .errors import MissingFile, SubotError
from .ot import OtParams
from .pipeline import (
    AdaptationConfig,
    AdaptationResult,
    nn_baseline,
    otda_baseline,
    sot_adapt,
)

SWEEP_AXES = ("lambda1", "lambda", "eta", "k_t")
METHODS = ("sot_c", "sot_g", "otda", "nn")

OT_DEFAULTS = {
    "lambda1": 1.0,
    "lambda": 1.0,
    "eta": 0.5,
    "max_outer": 20,
    "max_sinkhorn": 1000,
    "tol": 1e-9,
}
RUN_DEFAULTS = {
    "variant": "sot_c",
    "k_t": None,  # resolved to 4*C at run time
    "k_range": [1, 8],
    "restarts": 5,
    "rng_seed": 0,
    "normalize": True,
}


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("SUBOT_THREADS")
    if cap is not None:
        return max(1, min(n_tasks, int(cap)))
    return max(1, min(n_tasks, os.cpu_count() or 1))


def _merge_settings(args: argparse.Namespace) -> dict:
    """Resolve settings with precedence: flags > config file > defaults."""
    run = dict(RUN_DEFAULTS)
    ot = dict(OT_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        if not os.path.isfile(config_path):
            raise MissingFile(config_path)
        with open(config_path) as fh:
            doc = json.load(fh)
        ot.update(doc.pop("ot", {}))
        for key, value in doc.items():
            if key not in run:
                raise ValueError(f"unknown config key: {key}")
            run[key] = value
    flag_map = {
        "variant": ("run", "variant"),
        "kt": ("run", "k_t"),
        "restarts": ("run", "restarts"),
        "seed": ("run", "rng_seed"),
        "lambda1": ("ot", "lambda1"),
        "lambda_": ("ot", "lambda"),
        "eta": ("ot", "eta"),
        "max_outer": ("ot", "max_outer"),
    }
    for flag, (scope, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            (run if scope == "run" else ot)[key] = value
    if getattr(args, "no_normalize", False):
        run["normalize"] = False
    return {"run": run, "ot": ot}


def _build_config(settings: dict, variant: str | None = None) -> AdaptationConfig:
    run, ot = settings["run"], settings["ot"]
    params = OtParams(
        lambda1=float(ot["lambda1"]),
        lambda_=float(ot["lambda"]),
        eta=float(ot["eta"]),
        max_outer=int(ot["max_outer"]),
        max_sinkhorn=int(ot["max_sinkhorn"]),
        tol=float(ot["tol"]),
    )
    return AdaptationConfig(
        variant=variant or run["variant"],
        k_t=None if run["k_t"] is None else int(run["k_t"]),
        k_range=tuple(int(v) for v in run["k_range"]),
        ot=params,
        restarts=int(run["restarts"]),
        rng_seed=int(run["rng_seed"]),
        normalize=bool(run["normalize"]),
    )


def _run_variant(
    variant: str,
    source: LabeledDataset,
    target: LabeledDataset,
    settings: dict,
):
    """Dispatch one method; returns (result_or_none, predicted, accuracy, timings)."""
    if variant in ("sot_c", "sot_g"):
        cfg = _build_config(settings, variant)
        result = sot_adapt(source, target, cfg)
        return result, result.predicted_labels, result.accuracy, result.timings
    if variant == "otda":
        cfg = _build_config(settings, "sot_c")
        result = otda_baseline(source, target, cfg.ot, normalize=cfg.normalize)
        return result, result.predicted_labels, result.accuracy, result.timings
    if variant == "nn":
        cfg = _build_config(settings, "sot_c")
        predicted, accuracy, timings = nn_baseline(source, target, normalize=cfg.normalize)
        return None, predicted, accuracy, timings
    raise ValueError(f"unknown variant: {variant!r}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_matrix_csv(path: Path, matrix: np.ndarray, col_prefix: str) -> None:
    header = [f"{col_prefix}{j}" for j in range(matrix.shape[1])]
    rows = [[repr(float(v)) for v in row] for row in matrix]
    _write_csv(path, header, rows)


def _write_result_files(
    out: Path, result: AdaptationResult | None, meta: dict, predicted, accuracy
) -> None:
    doc = dict(meta)
    doc["accuracy"] = accuracy
    doc["predicted_labels"] = [int(v) for v in predicted]
    if result is not None:
        doc.update(result.to_dict())
        _write_matrix_csv(out / "coupling.csv", result.coupling.plan, "t")
        if result.confusion is not None:
            _write_csv(
                out / "confusion.csv",
                [f"pred{j}" for j in range(result.confusion.shape[1])],
                [[int(v) for v in row] for row in result.confusion],
            )
    with open(out / "result.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config:
        if not os.path.isfile(args.config):
            raise MissingFile(args.config)
        with open(args.config) as fh:
            toy = ToyConfig.from_dict(json.load(fh))
        if args.seed is not None:
            toy = ToyConfig.from_dict({**toy.to_dict(), "rng_seed": args.seed})
    else:
        toy = default_toy_config(rng_seed=args.seed if args.seed is not None else 0)
    source, target = generate_toy(toy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(source, out / "source.csv")
    save_dataset_csv(target, out / "target.csv")
    with open(out / "toy_config.json", "w") as fh:
        json.dump(toy.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {source.n} source rows and {target.n} target rows to {out}")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    raw = load_dataset_csv(args.input, has_labels=args.has_labels)
    signal = raw.features
    if signal.shape[1] != 3:
        raise ValueError(f"raw signal must have 3 axis columns, got {signal.shape[1]}")
    features, labels = sliding_window_features(
        signal,
        sampling_rate=args.rate,
        window=args.window,
        overlap=args.overlap,
        labels=raw.labels,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = list(FEATURE_NAMES) + (["label"] if labels is not None else [])
    rows = []
    for i in range(features.shape[0]):
        row = [repr(float(v)) for v in features[i]]
        if labels is not None:
            row.append(str(int(labels[i])))
        rows.append(row)
    _write_csv(out / "features.csv", header, rows)
    print(f"wrote {features.shape[0]} windows x {features.shape[1]} features to {out}")
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    source = load_dataset_csv(args.source, has_labels=True)
    target = load_dataset_csv(args.target, has_labels=not args.target_unlabeled)
    variant = settings["run"]["variant"]
    result, predicted, accuracy, timings = _run_variant(variant, source, target, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "variant": variant,
        "settings": {"run": {**settings["run"], "variant": variant}, "ot": settings["ot"]},
        "source": os.fspath(args.source),
        "target": os.fspath(args.target),
    }
    _write_result_files(out, result, meta, predicted, accuracy)
    if accuracy is not None:
        print(f"accuracy: {accuracy:.4f}")
    for stage, seconds in timings.items():
        print(f"  {stage}: {seconds * 1000:.1f} ms")
    return 0


def _task_name(path: str, seen: dict) -> str:
    stem = Path(path).stem
    if stem in seen and seen[stem] != path:
        stem = f"{stem}_{len(seen)}"
    seen[stem] = path
    return stem


def cmd_benchmark(args: argparse.Namespace) -> int:
    if len(args.datasets) < 2:
        raise ValueError("benchmark needs at least 2 dataset files")
    settings = _merge_settings(args)
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    seen: dict = {}
    names = [_task_name(p, seen) for p in args.datasets]
    datasets = {n: load_dataset_csv(p, has_labels=True) for n, p in zip(names, args.datasets)}
    tasks = [(a, b) for a in names for b in names if a != b]

    def run(task):
        method, src_name, tgt_name = task
        t0 = time.perf_counter()
        try:
            _, _, accuracy, _ = _run_variant(
                method, datasets[src_name], datasets[tgt_name], settings
            )
            return accuracy, time.perf_counter() - t0, None
        except Exception as exc:  # recorded, benchmark continues
            return None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"

    jobs = [(m, a, b) for m in methods for (a, b) in tasks]
    with ThreadPoolExecutor(max_workers=_worker_count(len(jobs))) as pool:
        outcomes = list(pool.map(run, jobs))

    task_cols = [f"{a}->{b}" for (a, b) in tasks]
    acc_rows, time_rows = [], []
    by_job = dict(zip(jobs, outcomes))
    failures = []
    for m in methods:
        accs, times = [], []
        for a, b in tasks:
            accuracy, seconds, error = by_job[(m, a, b)]
            if error is None:
                accs.append(repr(float(accuracy)))
                times.append(repr(float(seconds)))
            else:
                accs.append("ERR")
                times.append("ERR")
                failures.append((m, f"{a}->{b}", error))
        ok = [float(v) for v in accs if v != "ERR"]
        avg = repr(float(np.mean(ok))) if ok else "ERR"
        acc_rows.append([m] + accs + [avg])
        time_rows.append([m] + times)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "accuracy.csv", ["method"] + task_cols + ["AVG"], acc_rows)
    _write_csv(out / "timings.csv", ["method"] + task_cols, time_rows)
    for row in acc_rows:
        print(",".join(str(v) for v in row))
    for m, task, error in failures:
        print(f"task failed: {m} {task}: {error}", file=sys.stderr)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs a nonempty value list")
    settings = _merge_settings(args)
    source = load_dataset_csv(args.source, has_labels=True)
    target = load_dataset_csv(args.target, has_labels=True)

    def run(text):
        local = {"run": dict(settings["run"]), "ot": dict(settings["ot"])}
        if args.axis == "k_t":
            local["run"]["k_t"] = int(float(text))
        else:
            local["ot"][args.axis] = float(text)
        t0 = time.perf_counter()
        try:
            _, _, accuracy, _ = _run_variant(
                local["run"]["variant"], source, target, local
            )
            return text, repr(float(accuracy)), repr(time.perf_counter() - t0)
        except Exception as exc:
            print(f"sweep point {text} failed: {exc}", file=sys.stderr)
            return text, "ERR", ""

    with ThreadPoolExecutor(max_workers=_worker_count(len(values))) as pool:
        rows = list(pool.map(run, values))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", ["value", "accuracy", "runtime_seconds"], [list(r) for r in rows])
    for row in rows:
        print(",".join(row))
    return 0


def _add_shared_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--variant", choices=METHODS, default=None)
    parser.add_argument("--kt", type=int, default=None, help="target substructure count")
    parser.add_argument("--lambda1", type=float, default=None, help="weighting entropy")
    parser.add_argument("--lambda", dest="lambda_", type=float, default=None,
                        help="mapping entropy")
    parser.add_argument("--eta", type=float, default=None, help="group-sparse weight")
    parser.add_argument("--max-outer", dest="max_outer", type=int, default=None)
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--no-normalize", action="store_true")
    parser.add_argument("--config", default=None, help="JSON settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subot",
        description="Substructure-level optimal transport for cross-domain adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic source/target pair")
    p.add_argument("--config", default=None, help="toy config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="sliding-window features from a raw 3-axis CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--rate", type=float, required=True, help="sampling rate in Hz")
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--has-labels", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("adapt", help="run one adaptation")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--target-unlabeled", action="store_true")
    _add_shared_run_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("benchmark", help="all ordered dataset pairs x methods")
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    _add_shared_run_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="one adaptation per value of one parameter")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated list")
    _add_shared_run_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SubotError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage: {stage}]" if stage else ""
        print(f"error: {type(exc).__name__}: {exc}{where}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
