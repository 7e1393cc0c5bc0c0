"""Command-line entry point: ``mmwsched generate|train|evaluate|sweep|inspect``.

Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 file or
IO error, 5 unusable input (empty or mismatched dataset, missing model for
the forest policy, and similar).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import subprocess
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, config_hash, load_config, save_config
from .forest import load_forest, save_forest, train_forest
from .pipeline import (
    Dataset,
    evaluate_policy,
    generate_dataset,
    read_dataset_csv,
    report_row,
    sweep_beta,
    sweep_training,
    write_dataset_csv,
    write_rows_csv,
    write_rows_json,
)
from .scene import ConfigError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_INPUT = 5

log = logging.getLogger("mmwsched")


class InputError(ValueError):
    """Input files exist but cannot be used."""


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _git_version() -> Optional[str]:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def _run_dir(args, cfg: RunConfig) -> Path:
    if args.run_dir:
        path = Path(args.run_dir)
    else:
        stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
        path = Path(cfg.output_dir) / f"{stamp}-{config_hash(cfg)[:8]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(run_dir: Path, command: str, cfg: RunConfig, inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "git": _git_version(),
        "config_hash": config_hash(cfg),
        "seeds": {"train": cfg.train_seed, "test": cfg.test_seed, "forest": cfg.forest.seed},
        "inputs": {k: _sha256(Path(v)) for k, v in sorted(inputs.items())},
        "outputs": {k: _sha256(run_dir / k) for k in sorted(outputs)},
    }
    with open(run_dir / f"manifest-{command}.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_dataset(path: Path) -> Dataset:
    if not path.exists():
        raise FileNotFoundError(f"dataset {path} not found (run `generate` first or pass a path)")
    try:
        return read_dataset_csv(path)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _check_dims(ds: Dataset, cfg: RunConfig, what: str) -> None:
    n_aps = len(cfg.scene.aps)
    n_beams = cfg.scene.codebooks[cfg.scene.aps[0].codebook].n_beams
    if (ds.n_aps, ds.n_beams) != (n_aps, n_beams):
        raise InputError(f"{what} has {ds.n_aps} mmAPs x {ds.n_beams} beams but the config describes "
                         f"{n_aps} x {n_beams}")
    if (ds.D, ds.K) != (cfg.D, cfg.K):
        raise InputError(f"{what} was generated for D={ds.D}, K={ds.K} but the config has D={cfg.D}, K={cfg.K}")


def _load_model(path: Path, ds: Dataset):
    if not path.exists():
        raise FileNotFoundError(f"model {path} not found (run `train` first or pass --model)")
    try:
        forest = load_forest(path)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if forest.n_features != ds.X.shape[1] or forest.n_classes != ds.n_classes:
        raise InputError(f"model expects {forest.n_features} features / {forest.n_classes} classes, "
                         f"dataset has {ds.X.shape[1]} / {ds.n_classes}")
    return forest


def _simulate(cfg: RunConfig, n: int, seed: int) -> Dataset:
    return generate_dataset(cfg.scene, n, cfg.qos, cfg.cost_vector, seed=seed, duration=cfg.duration,
                            slot_duration=cfg.slot_duration, radio=cfg.radio, gamma=cfg.gamma_db,
                            workers=cfg.n_workers)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    splits = ("train", "test") if args.split == "both" else (args.split,)
    data = {}
    for split in splits:
        n = cfg.train_realizations if split == "train" else cfg.test_realizations
        seed = cfg.train_seed if split == "train" else cfg.test_seed
        log.info("simulating %d %s realizations", n, split)
        data[split] = _simulate(cfg, n, seed)
    outputs = ["config.yaml"]
    save_config(cfg, run_dir / "config.yaml")
    for split, ds in data.items():
        write_dataset_csv(run_dir / f"{split}.csv", ds)
        outputs.append(f"{split}.csv")
        print(f"{split}: {len(ds)} samples from {len(np.unique(ds.realization))} realizations")
    _write_manifest(run_dir, "generate", cfg, {}, outputs)
    print(f"run directory: {run_dir}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    path = Path(args.dataset) if args.dataset else run_dir / "train.csv"
    ds = _load_dataset(path)
    _check_dims(ds, cfg, str(path))
    t0 = time.perf_counter()
    forest = train_forest(ds.X, ds.y, cfg.forest, n_classes=ds.n_classes, n_jobs=cfg.n_workers)
    wall = time.perf_counter() - t0
    save_forest(forest, run_dir / "model.bin")
    accuracy = float((forest.predict(ds.X) == ds.y).mean())
    report = {
        "samples": len(ds),
        "n_trees": len(forest.trees),
        "training_accuracy": accuracy,
        "class_counts": {str(c): int(n) for c, n in enumerate(np.bincount(ds.y, minlength=ds.n_classes))},
        "mean_leaves": float(np.mean([t.n_leaves for t in forest.trees])),
        "wall_time_s": wall,
    }
    with open(run_dir / "train_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(run_dir, "train", cfg, {"dataset": path}, ["model.bin"])
    print(f"trained {len(forest.trees)} trees on {len(ds)} samples; training accuracy {accuracy:.4f}")
    print(f"model: {run_dir / 'model.bin'}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    path = Path(args.test) if args.test else run_dir / "test.csv"
    ds = _load_dataset(path)
    _check_dims(ds, cfg, str(path))
    costs = cfg.cost_vector
    inputs = {"test": path}
    rows = []
    forest = None
    proba = None
    for policy in cfg.policies:
        if policy != "forest":
            rows.append(report_row(evaluate_policy(policy, ds, costs), policy=policy, beta=None))
            continue
        if forest is None:
            model = Path(args.model) if args.model else run_dir / "model.bin"
            forest = _load_model(model, ds)
            inputs["model"] = model
            proba = forest.predict_proba(ds.X)
        for beta in cfg.betas:
            rows.append(report_row(evaluate_policy("forest", ds, costs, forest, beta, proba),
                                   policy="forest", beta=beta))
    write_rows_json(run_dir / "kpis.json", rows)
    write_rows_csv(run_dir / "kpis.csv", rows, ("policy", "beta"))
    _write_manifest(run_dir, "evaluate", cfg, inputs, ["kpis.json", "kpis.csv"])
    for r in rows:
        beta = "" if r["beta"] is None else f" beta={r['beta']}"
        ff = "n/a" if r["failed_fraction"] is None else f"{r['failed_fraction']:.4f}"
        lb = "n/a" if r["lb_fraction"] is None else f"{r['lb_fraction']:.4f}"
        print(f"{r['policy']}{beta}: completed={r['completed']:.4f} failed={ff} low-band={lb} "
              f"cost={r['mean_cost']:.1f}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    test_path = Path(args.test) if args.test else run_dir / "test.csv"
    test = _load_dataset(test_path)
    _check_dims(test, cfg, str(test_path))
    costs = cfg.cost_vector
    if args.kind == "beta":
        model = Path(args.model) if args.model else run_dir / "model.bin"
        forest = _load_model(model, test)
        betas = sorted(cfg.sweep.betas)
        reports = sweep_beta(forest, test, betas, costs)
        rows = [report_row(r, policy="forest", beta=b) for b, r in zip(betas, reports)]
        write_rows_csv(run_dir / "sweep_beta.csv", rows, ("policy", "beta"))
        _write_manifest(run_dir, "sweep-beta", cfg, {"test": test_path, "model": model}, ["sweep_beta.csv"])
        out = "sweep_beta.csv"
    else:
        train_path = Path(args.dataset) if args.dataset else run_dir / "train.csv"
        train = _load_dataset(train_path)
        _check_dims(train, cfg, str(train_path))
        sizes = [s for s in cfg.sweep.train_sizes]
        if max(sizes) > len(train):
            raise InputError(f"largest training size {max(sizes)} exceeds the {len(train)} available samples")
        cells = sweep_training(cfg.forest, sizes, cfg.sweep.tree_counts, train, test, costs,
                               beta=cfg.sweep.beta, seed=cfg.forest.seed, workers=cfg.n_workers)
        rows = [report_row(c.report, policy="forest", beta=cfg.sweep.beta, train_size=c.train_size,
                           n_trees=c.n_trees) for c in cells]
        write_rows_csv(run_dir / "sweep_training.csv", rows, ("policy", "beta", "train_size", "n_trees"))
        _write_manifest(run_dir, "sweep-training", cfg, {"train": train_path, "test": test_path},
                        ["sweep_training.csv"])
        out = "sweep_training.csv"
    print(f"{len(rows)} rows written to {run_dir / out}")
    return EXIT_OK


def cmd_inspect(args, cfg: RunConfig) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"MMWRF"):
        try:
            forest = load_forest(path)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{path}: {exc}") from exc
        print(f"forest model: {len(forest.trees)} trees, {forest.n_features} features, {forest.n_classes} classes")
        print(f"parameters: {forest.params}")
        print(f"nodes per tree: mean {np.mean([t.n_nodes for t in forest.trees]):.1f}, "
              f"max depth {max(t.depth for t in forest.trees)}")
        return EXIT_OK
    ds = _load_dataset(path)
    counts = np.bincount(ds.y, minlength=ds.n_classes)
    print(f"dataset: {len(ds)} samples, {len(np.unique(ds.realization))} realizations, "
          f"{ds.X.shape[1]} features ({ds.n_aps} mmAPs x {ds.n_beams} beams), D={ds.D}, K={ds.K}")
    print("label counts: " + ", ".join(f"{c}:{n}" for c, n in enumerate(counts) if n))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration (defaults apply when omitted)")
    common.add_argument("--run-dir", help="output directory (default: <output_dir>/<timestamp>-<config hash>)")
    common.add_argument("--preset", choices=["desk", "paper"], help="realization-count preset")
    common.add_argument("--workers", type=int, help="worker processes (default: all logical cores)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. --set forest.n_trees=50 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mmwsched", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="simulate realizations and write labelled datasets")
    p.add_argument("--split", choices=["train", "test", "both"], default="both")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train the forest on a dataset")
    p.add_argument("--dataset", help="training CSV (default: <run-dir>/train.csv)")
    p.add_argument("--trees", type=int, help="number of trees (shortcut for --set forest.n_trees=...)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="KPIs of each policy on the test set")
    p.add_argument("--test", help="test CSV (default: <run-dir>/test.csv)")
    p.add_argument("--model", help="forest model (default: <run-dir>/model.bin)")
    p.add_argument("--policies", nargs="+", choices=["genie", "greedy", "min-multi-x", "forest"])
    p.add_argument("--betas", nargs="+", type=float, help="forest thresholds")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="beta or training-size/tree-count sweeps")
    p.add_argument("kind", choices=["beta", "training"])
    p.add_argument("--test", help="test CSV (default: <run-dir>/test.csv)")
    p.add_argument("--dataset", help="training CSV for the training sweep (default: <run-dir>/train.csv)")
    p.add_argument("--model", help="forest model for the beta sweep (default: <run-dir>/model.bin)")
    p.add_argument("--betas", nargs="+", type=float, help="beta grid")
    p.add_argument("--sizes", nargs="+", type=int, help="training-set sizes")
    p.add_argument("--trees", nargs="+", type=int, help="tree counts")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", parents=[common], help="summarise a dataset CSV or model file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def _flag_overrides(args) -> list[str]:
    out = list(args.overrides)
    if args.preset:
        out.append(f"preset={args.preset}")
    if args.workers is not None:
        out.append(f"workers={args.workers}")
    trees = getattr(args, "trees", None)
    if trees is not None:
        if args.command == "train":
            out.append(f"forest.n_trees={trees}")
        else:
            out.append(f"sweep.tree_counts={json.dumps(trees)}")
    if getattr(args, "policies", None):
        out.append(f"policies={json.dumps(args.policies)}")
    if getattr(args, "betas", None):
        key = "sweep.betas" if args.command == "sweep" else "betas"
        out.append(f"{key}={json.dumps(args.betas)}")
    if getattr(args, "sizes", None):
        out.append(f"sweep.train_sizes={json.dumps(args.sizes)}")
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = _flag_overrides(args)
        if overrides:
            cfg = apply_overrides(cfg, overrides)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
