"""Command-line entry point: ``cctree {train-forest,train-policy,evaluate,explain}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (keys spelled like the flags, ``-`` or ``_``), then the
flags themselves.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .bandit import ContextualTree, TrainConfig, metric_name
from .benchmarks import BENCHMARKS, BenchmarkUnavailable, benchmark_csv
from .data import DataError, Task, load_dataset
from .metrics import format_table

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DEFAULTS = {
    "seed": "0",
    "out_dir": "run",
    "trees": str(pipeline.DEFAULT_TREES),
    "depth_grid": "2,3,4",
    "entropy_coeff": "1e-4",
    "batch_size": "32",
    "max_epochs": "2000",
    "patience": "100",
    "runs": "1",
    "hidden": "64,64",
    "dropout": "0.2",
    "learning_rate": "1e-3",
    "n_jobs": "1",
}

log = logging.getLogger("cctree")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, _, value = line.partition(" ")
        key = key.strip().lstrip("-").replace("-", "_")
        if not key:
            raise UsageError(f"{path}:{n}: expected key = value")
        out[key] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for k, v in vars(args).items():
        if k not in ("config", "command", "func") and v is not None:
            settings[k] = v
    return settings


def _ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    return [int(v) for v in str(s).split(",") if v.strip()]


def _floats(s) -> list[float]:
    return [float(v) for v in str(s).split(",") if v.strip()]


def _load_data(settings: dict):
    if not settings.get("data"):
        raise UsageError("--data is required")
    path = Path(settings["data"])
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    return load_dataset(path, Task(settings["task"]), settings["target_column"])


def cmd_train_forest(settings: dict) -> int:
    settings = {"task": "classification", "target_column": "-1", **settings}
    ds = _load_data(settings)
    config = {"data": str(settings["data"]), "task": ds.task.value,
              "target_column": str(settings["target_column"]), "seed": int(settings["seed"]),
              "trees": int(settings["trees"]), "depth_grid": _ints(settings["depth_grid"]),
              "name": settings.get("name") or Path(settings["data"]).stem}
    bad = [d for d in config["depth_grid"] if not 1 <= d <= 4]
    if bad or not config["depth_grid"]:
        raise UsageError(f"depth grid must hold depths in 1..4, got {settings['depth_grid']}")
    if config["trees"] < 1:
        raise UsageError("--trees must be >= 1")
    stage = pipeline.run_train_forest(ds, config, n_jobs=int(settings["n_jobs"]))
    out = Path(settings["out_dir"])
    pipeline.save_forest_stage(stage, out)
    scores = ", ".join(f"depth {d}: {s:.4f}" for d, s in stage.manifest.depth_scores.items())
    print(f"validation {metric_name(ds.task)} by CART depth: {scores}")
    print(f"selected depth {stage.manifest.depth}; wrote {stage.forest.n_trees}-tree forest to {out}")
    return EXIT_OK


def _stage_and_data(settings: dict):
    out = Path(settings["out_dir"])
    stage = pipeline.load_forest_stage(out)
    cfg = stage.manifest.config
    merged = {key: cfg[key] for key in ("data", "task", "target_column")}
    merged.update({k: v for k, v in settings.items() if k in merged})
    ds = _load_data(merged)
    pipeline.check_compatible(stage, ds)
    return out, stage, ds


def _train_config(settings: dict, seed: int, beta: float) -> TrainConfig:
    return TrainConfig(batch_size=int(settings["batch_size"]), max_epochs=int(settings["max_epochs"]),
                       entropy_coeff=beta, patience=int(settings["patience"]), seed=seed,
                       learning_rate=float(settings["learning_rate"]),
                       hidden=tuple(_ints(settings["hidden"])), dropout=float(settings["dropout"]))


def cmd_train_policy(settings: dict) -> int:
    out, stage, ds = _stage_and_data(settings)
    supervised = bool(settings.get("supervised"))
    base_seed, runs = int(settings["seed"]), int(settings["runs"])
    betas = _floats(settings["entropy_coeff"])
    if runs < 1 or not betas:
        raise UsageError("need --runs >= 1 and at least one entropy coefficient")
    metric = metric_name(ds.task)

    first = None
    if len(betas) > 1 and not supervised:
        grid_rows, candidates = [], []
        for beta in betas:
            run = pipeline.train_run(stage, ds, _train_config(settings, base_seed, beta))
            grid_rows.append({"entropy_coeff": beta, "val_metric": run.report.best_metric,
                              "best_epoch": run.report.best_epoch})
            candidates.append(run)
            print(f"entropy_coeff {beta:g}: validation {metric} {run.report.best_metric:.4f}")
        pipeline.write_rows(out / "contextual" / "entropy_grid.csv",
                            ("entropy_coeff", "val_metric", "best_epoch"), grid_rows)
        pick = max if ds.task is Task.CLASSIFICATION else min
        first = pick(candidates, key=lambda r: r.report.best_metric)
        betas = [first.cfg.entropy_coeff]
        print(f"selected entropy_coeff {betas[0]:g}")

    for k in range(runs):
        seed = base_seed + k
        if k == 0 and first is not None:
            run = first
        else:
            run = pipeline.train_run(stage, ds, _train_config(settings, seed, betas[0]), supervised)
        d = pipeline.save_run(run, stage, out)
        print(f"{run.mode} seed {seed}: {run.report.n_epochs} epochs, best epoch "
              f"{run.report.best_epoch}, validation {metric} {run.report.best_metric:.4f} -> {d}")
    return EXIT_OK


def cmd_evaluate(settings: dict) -> int:
    out, stage, ds = _stage_and_data(settings)
    contextual = pipeline.load_policies(out, "contextual", stage)
    if not contextual:
        raise pipeline.ArtifactError("no contextual policy found: run `train-policy` first")
    supervised = pipeline.load_policies(out, "supervised", stage)
    if not supervised:
        print("note: no supervised baseline found (run `train-policy --supervised`)")
    name = stage.manifest.config.get("name", "dataset")
    results = pipeline.run_evaluate(stage, ds, contextual, supervised, name)
    path = pipeline.write_comparison(results, out)
    print(format_table(results, f"test {metric_name(ds.task)}"))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_explain(settings: dict) -> int:
    out, stage, ds = _stage_and_data(settings)
    nets = pipeline.load_policies(out, "contextual", stage)
    if not nets:
        raise pipeline.ArtifactError("no contextual policy found: run `train-policy` first")
    seed = settings.get("policy_seed")
    net = nets[int(seed)] if seed is not None else next(iter(nets.values()))
    if settings.get("sample") is not None:
        try:
            x = np.array(_floats(settings["sample"]))
        except ValueError:
            raise DataError(f"malformed sample {settings['sample']!r}") from None
        if x.shape != (ds.feature_count,):
            raise DataError(f"sample has {x.size} values, expected {ds.feature_count}")
    elif settings.get("row") is not None:
        row = int(settings["row"])
        if not 0 <= row < len(ds):
            raise DataError(f"row {row} out of range [0, {len(ds)})")
        x = ds.X[row]
    else:
        raise UsageError("give --row or --sample")
    model = ContextualTree(net, stage.forest, stage.manifest.stats)
    prediction, tree, path = model.explain(x)
    print(f"recommended tree: {tree}")
    for rule in path.rules:
        print(f"  {rule.render()}")
    print(f"prediction: {prediction:g}")
    return EXIT_OK


def cmd_export_data(settings: dict) -> int:
    name = settings["benchmark"]
    dest = Path(settings["dest"])
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(benchmark_csv(name))
    print(f"wrote {name} ({BENCHMARKS[name].value}) to {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cctree", description="Contextual tree recommendation over a random forest.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config")
        sp.add_argument("--out-dir")
        sp.add_argument("--seed", type=int)
        if data:
            sp.add_argument("--data")
            sp.add_argument("--task", choices=[t.value for t in Task])
            sp.add_argument("--target-column")

    sp = sub.add_parser("train-forest", help="split data, pick CART depth, fit CART and forest")
    common(sp)
    sp.add_argument("--trees", type=int)
    sp.add_argument("--depth-grid")
    sp.add_argument("--name", help="dataset label used in reports")
    sp.add_argument("--n-jobs", type=int)
    sp.set_defaults(func=cmd_train_forest)

    sp = sub.add_parser("train-policy", help="train the tree-recommendation policy")
    common(sp)
    sp.add_argument("--supervised", action="store_true", default=None,
                    help="train the supervised labeling baseline instead")
    sp.add_argument("--entropy-coeff", help="one value, or a comma list to grid-search")
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--max-epochs", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--runs", type=int, help="number of policy seeds (seed, seed+1, ...)")
    sp.add_argument("--hidden")
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--learning-rate", type=float)
    sp.set_defaults(func=cmd_train_policy)

    sp = sub.add_parser("evaluate", help="compare models on the test split")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("explain", help="print the recommended tree's rules for one sample")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--row", type=int, help="row index into the dataset")
    g.add_argument("--sample", help="comma-separated raw feature values")
    sp.add_argument("--policy-seed", type=int)
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("export-data", help="write a bundled benchmark table as CSV")
    sp.add_argument("benchmark", choices=sorted(BENCHMARKS))
    sp.add_argument("dest")
    sp.set_defaults(func=cmd_export_data, config=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = args.func
    del args.verbose
    try:
        return func(resolve(args))
    except (DataError, BenchmarkUnavailable) as e:
        print(f"cctree: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, pipeline.ArtifactError, pipeline.SplitAccessError, ValueError, KeyError) as e:
        print(f"cctree: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
