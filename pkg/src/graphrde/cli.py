"""Command line front end.

Subcommands: ``synth`` (generate a synthetic dataset), ``logsig`` (dump
windowed log-signature coordinates), ``train`` (full pipeline to
checkpoint + history + metrics), ``eval`` (metrics for a checkpoint on
a dataset), ``predict`` (per-window forecast CSV), ``verify`` (built-in
correctness suites).

Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data as D
from . import tensor as T
from . import training as TR
from .config import RunConfig, load_config, save_config
from .data import FMT, _atomic_write
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DomainError,
    GraphRDEError,
    NumericError,
    UsageError,
)
from .logsig import LyndonBasis, window_logsig
from .model import ModelConfig, ParamStore, load_checkpoint, save_checkpoint
from .paths import RawSeries, fit_spline
from .solver import SolveSpec
from .verification import format_results, run_suites

_VARIANT_FLAG = {"full": "full", "temporal": "temporal_only", "spatial": "spatial_only"}
_CV_FLAG = {"rolling": "rolling_cv", "blocked": "blocked_cv"}


class _Parser(argparse.ArgumentParser):
    """Argparse that raises instead of exiting, so errors map to exit 1."""

    def error(self, message):  # noqa: A003 - argparse API
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Pipeline plumbing shared by train / eval / predict
# ---------------------------------------------------------------------------


def _select_split(windows: D.WindowSet, extra: dict, which: str) -> D.WindowSet:
    """Reconstruct a training-time split subset from checkpoint metadata."""
    if which == "all":
        return windows
    stored = extra.get("split_offsets")
    if not stored or which not in stored:
        raise DataError(f"checkpoint does not record a {which!r} split")
    lo, hi = stored[which]
    keep = (windows.offsets >= lo) & (windows.offsets < hi)
    if not keep.any():
        raise DataError(f"no windows fall in the stored {which!r} range [{lo}, {hi})")
    return windows.take(keep)


def _apply_stored_drop(windows: D.WindowSet, extra: dict, which: str) -> D.WindowSet:
    drop = extra.get("drop")
    if not drop or drop.get("rate", 0.0) <= 0.0 or which == "all":
        return windows
    return D.drop_observations(windows, drop["rate"], drop["seeds"][which])


def _load_eval_inputs(args, which: str):
    """Checkpoint + windows + normalizer for ``eval`` and ``predict``."""
    config, params, extra = load_checkpoint(args.checkpoint)
    values = D.load_values(args.data, config.in_channels)
    if values.shape[0] != config.num_nodes:
        raise DataError(
            f"checkpoint was trained on {config.num_nodes} nodes, data has {values.shape[0]}"
        )
    windows = D.make_windows(values, config.input_len, config.horizon, config.out_channels)
    windows = _apply_stored_drop(_select_split(windows, extra, which), extra, which)
    if "normalizer" not in extra:
        raise DataError("checkpoint does not store normalization statistics")
    normalizer = D.Normalizer(
        mean=np.asarray(extra["normalizer"]["mean"]),
        std=np.asarray(extra["normalizer"]["std"]),
    )
    solve = SolveSpec(**extra.get("solve", {}))
    prepared = TR.prepare_split(windows, normalizer, config)
    return config, params, prepared, normalizer, solve


def _fold_seeds(base_seed: int, fold: int) -> dict[str, int]:
    root = base_seed + 1000 * fold
    return {"train": root + 101, "val": root + 202, "test": root + 303}


def run_fold(
    run: RunConfig,
    config: ModelConfig,
    adjacency,
    values: np.ndarray,
    parts: tuple[D.WindowSet, D.WindowSet, D.WindowSet],
    out_dir: str,
    fold: int,
    suffix: str,
) -> dict:
    """Train one fold end to end and write its artifacts."""
    train_w, val_w, test_w = parts
    normalizer = D.fit_normalizer(values, D.train_range_end(train_w))
    seeds = _fold_seeds(run.seed, fold)
    if run.drop_rate > 0.0:
        train_w = D.drop_observations(train_w, run.drop_rate, seeds["train"])
        val_w = D.drop_observations(val_w, run.drop_rate, seeds["val"])
        test_w = D.drop_observations(test_w, run.drop_rate, seeds["test"])

    basis = LyndonBasis(config.path_channels, config.sig_depth)
    prep_train = TR.prepare_split(train_w, normalizer, config, basis=basis)
    prep_val = TR.prepare_split(val_w, normalizer, config, basis=basis)
    prep_test = TR.prepare_split(test_w, normalizer, config, basis=basis)

    params = ParamStore(config, seed=run.seed, adjacency=adjacency)
    solve = run.solve_spec()
    history_path = os.path.join(out_dir, f"history{suffix}.csv")
    try:
        result = TR.fit(
            params, config, prep_train, prep_val, run.train_config(), solve, normalizer
        )
    except GraphRDEError as exc:
        partial = getattr(exc, "history", None)
        if partial:
            TR.write_history(history_path, partial)
        raise
    TR.write_history(history_path, result.history)

    reports = {
        name: TR.evaluate_prepared(params, config, solve, prep, normalizer, run.batch_size)
        for name, prep in (("train", prep_train), ("val", prep_val), ("test", prep_test))
    }
    ha = TR.compute_metrics(TR.historical_average(test_w), test_w.targets)

    def span(w: D.WindowSet) -> list[int]:
        return [int(w.offsets[0]), int(w.offsets[-1]) + 1]

    extra = {
        "normalizer": {"mean": normalizer.mean.tolist(), "std": normalizer.std.tolist()},
        "solve": {"method": solve.method, "steps_per_window": solve.steps_per_window},
        "split_offsets": {"train": span(train_w), "val": span(val_w), "test": span(test_w)},
        "drop": {"rate": run.drop_rate, "seeds": seeds},
        "fold": fold,
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(os.path.join(out_dir, f"model{suffix}.ckpt"), params, extra=extra)
    return {
        "train": reports["train"].to_dict(),
        "val": reports["val"].to_dict(),
        "test": reports["test"].to_dict(),
        "ha_test": ha.to_dict(),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
    }


def run_training(run: RunConfig, out_dir: str) -> dict:
    """Execute a resolved run config; returns the metrics document."""
    spec = run.dataset_spec()
    values = D.load_values(spec.values_path, spec.channels)
    config = run.model_config(values.shape[0])
    adjacency = None
    if spec.adjacency_path:
        adjacency = D.load_adjacency(spec.adjacency_path, values.shape[0])
    windows = D.make_windows(values, run.input_len, run.horizon, run.out_channels)
    folds = D.split(windows, run.split_plan())

    os.makedirs(out_dir, exist_ok=True)
    run.num_nodes = config.num_nodes  # resolved for exact reproduction
    save_config(os.path.join(out_dir, "config.resolved.cfg"), run)

    fold_docs = []
    for k, parts in enumerate(folds):
        suffix = f"_fold{k}" if len(folds) > 1 else ""
        fold_docs.append(run_fold(run, config, adjacency, values, parts, out_dir, k, suffix))

    if len(fold_docs) == 1:
        metrics = fold_docs[0]
    else:
        table = {
            key: [doc["test"][key] for doc in fold_docs] for key in ("mae", "rmse", "mape")
        }
        metrics = {
            "folds": fold_docs,
            "mean": {k: float(np.mean(v)) for k, v in table.items()},
            "std": {k: float(np.std(v)) for k, v in table.items()},
        }
    _atomic_write(os.path.join(out_dir, "metrics.json"), json.dumps(metrics, indent=2) + "\n")
    return metrics


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec, info = D.synth(args.nodes, args.timesteps, args.seed, args.out)
    print(f"wrote {spec.values_path} and {spec.adjacency_path}")
    print(f"nodes={info.nodes} timesteps={info.timesteps} amplitude={FMT % info.amplitude}")
    return 0


def cmd_logsig(args) -> int:
    if args.depth < 1:
        raise UsageError(f"--depth must be >= 1, got {args.depth}")
    if args.subpath < 1:
        raise UsageError(f"--subpath must be >= 1, got {args.subpath}")
    values = D.load_values(args.data, args.channels)
    if values.shape[1] < args.input_len:
        raise DataError(
            f"dataset has {values.shape[1]} timesteps; the first window needs {args.input_len}"
        )
    first = values[:, : args.input_len, :]
    series = RawSeries(
        values=first,
        mask=np.ones(first.shape[:2], dtype=bool),
        times=np.arange(args.input_len, dtype=np.float64),
    )
    seq = window_logsig(fit_spline(series), args.subpath, args.depth)
    w, nodes, dim = seq.coords.shape
    header = ["window", "node"] + [f"coord_{i}" for i in range(dim)]
    lines = [",".join(header)]
    for wi in range(w):
        for v in range(nodes):
            cells = [str(wi), str(v)] + [FMT % x for x in seq.coords[wi, v]]
            lines.append(",".join(cells))
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}: {w} windows x {nodes} nodes x {dim} coordinates")
    return 0


def cmd_train(args) -> int:
    overrides: dict = {}
    if args.data:
        overrides["values_path"] = args.data
    if args.adjacency:
        overrides["adjacency_path"] = args.adjacency
    if args.variant:
        overrides["variant"] = _VARIANT_FLAG[args.variant]
    if args.drop_rate is not None:
        overrides["drop_rate"] = args.drop_rate
    if args.cv:
        overrides["split"] = _CV_FLAG[args.cv]
    run = load_config(args.config, overrides)
    metrics = run_training(run, args.out)
    if "folds" in metrics:
        mae = metrics["mean"]["mae"]
    else:
        mae = metrics["test"]["mae"]
    print(json.dumps({"out_dir": args.out, "test_mae": mae}, indent=2))
    return 0


def cmd_eval(args) -> int:
    config, params, prepared, normalizer, solve = _load_eval_inputs(args, args.split)
    report = TR.evaluate_prepared(params, config, solve, prepared, normalizer)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_predict(args) -> int:
    config, params, prepared, normalizer, solve = _load_eval_inputs(args, args.split)
    preds = TR.predict_denormalized(params, config, solve, prepared, normalizer)
    lines = ["window,node,horizon,value"]
    for i in range(preds.shape[0]):
        offset = int(prepared.offsets[i])
        for v in range(preds.shape[1]):
            for s in range(preds.shape[2]):
                lines.append(f"{offset},{v},{s},{FMT % preds[i, v, s, 0]}")
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}: {len(lines) - 1} forecasts")
    return 0


def cmd_verify(args) -> int:
    results = run_suites(args.suite)
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="graphrde", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ring-diffusion dataset")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--timesteps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("logsig", help="dump log-signature coordinates of the first window")
    p.add_argument("--data", required=True, help="values CSV")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--depth", type=int, default=2, help="signature truncation depth")
    p.add_argument("--subpath", type=int, default=2, help="knot intervals per window")
    p.add_argument("--input-len", type=int, default=12, dest="input_len")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_logsig)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="key=value run config file")
    p.add_argument("--data", help="override values_path")
    p.add_argument("--adjacency", help="override adjacency_path")
    p.add_argument("--variant", choices=sorted(_VARIANT_FLAG))
    p.add_argument("--drop-rate", type=float, default=None, dest="drop_rate")
    p.add_argument("--cv", choices=sorted(_CV_FLAG))
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write per-window forecasts as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="run built-in correctness suites")
    p.add_argument("--suite", choices=("logsig", "grad", "solver", "all"), default="all")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DomainError, DimensionError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
