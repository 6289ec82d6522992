"""Pipeline stages and artifact persistence behind the command-line tool.

Layout of an output directory::

    manifest.json                 splits, standardization, depth search, config hash
    forest.json, cart.json        trained trees
    contextual/seed_<s>/          policy.json, reward_curve.csv, selection_histogram.csv
    supervised/seed_<s>/          same, plus labels.csv
    comparison.csv                written by the evaluate stage
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bandit import ContextualTree, TrainConfig, TrainReport, train_policy
from .baseline import train_supervised
from .data import Dataset, SplitIndices, Standardization, Task, fit_standardization, split_dataset
from .forest import RandomForest, fit_forest
from .metrics import compare_models, comparison_csv, task_metric, ModelResult
from .policy import PolicyNet
from .tree import DecisionTree, fit_tree

FORMAT_VERSION = 1
DEFAULT_DEPTH_GRID = (2, 3, 4)
DEFAULT_TREES = 50
TRAINING_SPLITS = ("train", "validation")


class ArtifactError(RuntimeError):
    """Missing or mismatched pipeline artifact."""


class SplitAccessError(RuntimeError):
    """A training stage asked for held-out test rows."""


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj))


def read_json(path: Path, stage: str) -> dict:
    if not path.exists():
        raise ArtifactError(f"missing {path.name}: run `{stage}` first")
    return json.loads(path.read_text())


def write_rows(path: Path, columns, rows) -> None:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(out.getvalue())


@dataclass
class Manifest:
    config: dict
    splits: SplitIndices
    stats: Standardization
    depth: int
    depth_scores: dict

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def subset(self, ds: Dataset, split: str, stage: str) -> Dataset:
        """Rows of one split; only ``evaluate`` may read the test rows."""
        if split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {split!r}")
        if split == "test" and stage != "evaluate":
            raise SplitAccessError(f"stage {stage!r} may not read the test split")
        if len(ds) != self.config["n_samples"]:
            raise ArtifactError("dataset size differs from the one the manifest was built on")
        return ds.subset(getattr(self.splits, split))

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": "manifest", "config": self.config,
                "config_hash": self.hash, "splits": self.splits.to_dict(),
                "standardization": self.stats.to_dict(), "depth": self.depth,
                "depth_scores": self.depth_scores}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        if d.get("kind") != "manifest" or d.get("format_version") != FORMAT_VERSION:
            raise ArtifactError("unsupported manifest")
        return cls(d["config"], SplitIndices.from_dict(d["splits"]),
                   Standardization.from_dict(d["standardization"]), int(d["depth"]),
                   d["depth_scores"])


def select_depth(train: Dataset, validation: Dataset, grid=DEFAULT_DEPTH_GRID):
    """Grid-search the CART depth on validation; ties keep the shallower depth.

    Returns ``(best_depth, {depth: score}, cart_at_best_depth)``.
    """
    scores, trees = {}, {}
    for d in grid:
        t = fit_tree(train.X, train.y, d, train.task)
        scores[d] = task_metric(train.task, t.predict(validation.X), validation.y)
        trees[d] = t
    higher_better = train.task is Task.CLASSIFICATION
    best = None
    for d in grid:
        if best is None or (scores[d] > scores[best] if higher_better else scores[d] < scores[best]):
            best = d
    return best, scores, trees[best]


@dataclass
class ForestStage:
    manifest: Manifest
    forest: RandomForest
    cart: DecisionTree


def run_train_forest(ds: Dataset, config: dict, n_jobs: int = 1) -> ForestStage:
    """Split, pick the CART depth, and fit CART plus the forest at that depth."""
    seed = int(config["seed"])
    grid = tuple(int(d) for d in config.get("depth_grid", DEFAULT_DEPTH_GRID))
    n_trees = int(config.get("trees", DEFAULT_TREES))
    splits = split_dataset(ds, seed)
    train, val = ds.subset(splits.train), ds.subset(splits.validation)
    depth, scores, cart = select_depth(train, val, grid)
    forest = fit_forest(train.X, train.y, n_trees, depth, seed, ds.task, n_jobs=n_jobs)
    cfg = dict(config, n_samples=len(ds), feature_count=ds.feature_count, task=ds.task.value,
               depth_grid=list(grid), trees=n_trees)
    manifest = Manifest(cfg, splits, fit_standardization(train.X), depth,
                        {str(d): s for d, s in scores.items()})
    forest.config = {"config_hash": manifest.hash, "n_trees": n_trees, "max_depth": depth,
                     "seed": seed}
    return ForestStage(manifest, forest, cart)


def save_forest_stage(stage: ForestStage, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    write_json(out_dir / "manifest.json", stage.manifest.to_dict())
    write_json(out_dir / "forest.json", stage.forest.to_dict())
    write_json(out_dir / "cart.json", {"format_version": FORMAT_VERSION, "kind": "cart",
                                       "config_hash": stage.manifest.hash,
                                       "tree": stage.cart.to_dict()})


def load_forest_stage(out_dir: Path) -> ForestStage:
    out_dir = Path(out_dir)
    manifest = Manifest.from_dict(read_json(out_dir / "manifest.json", "train-forest"))
    forest = RandomForest.from_dict(read_json(out_dir / "forest.json", "train-forest"))
    cart_doc = read_json(out_dir / "cart.json", "train-forest")
    for name, h in (("forest.json", forest.config.get("config_hash")),
                    ("cart.json", cart_doc.get("config_hash"))):
        if h != manifest.hash:
            raise ArtifactError(f"{name} was produced by a different train-forest config")
    return ForestStage(manifest, forest, DecisionTree.from_dict(cart_doc["tree"]))


def check_compatible(stage: ForestStage, ds: Dataset) -> None:
    if ds.task is not stage.forest.task:
        raise ArtifactError(f"data task {ds.task.value} != forest task {stage.forest.task.value}")
    if ds.feature_count != stage.forest.feature_count:
        raise ArtifactError(
            f"data has {ds.feature_count} features, forest expects {stage.forest.feature_count}")


@dataclass
class PolicyRun:
    mode: str              # "contextual" or "supervised"
    cfg: TrainConfig
    net: PolicyNet
    report: TrainReport
    labels: np.ndarray | None = None


def train_run(stage: ForestStage, ds: Dataset, cfg: TrainConfig, supervised: bool = False) -> PolicyRun:
    train = stage.manifest.subset(ds, "train", "train-policy")
    val = stage.manifest.subset(ds, "validation", "train-policy")
    stats = stage.manifest.stats
    if supervised:
        net, report, labels = train_supervised(stage.forest, train, val, stats, cfg)
        return PolicyRun("supervised", cfg, net, report, labels)
    net, report = train_policy(stage.forest, train, val, stats, cfg)
    return PolicyRun("contextual", cfg, net, report)


def run_dir(out_dir: Path, mode: str, seed: int) -> Path:
    return Path(out_dir) / mode / f"seed_{seed}"


def save_run(run: PolicyRun, stage: ForestStage, out_dir: Path) -> Path:
    d = run_dir(out_dir, run.mode, run.cfg.seed)
    write_json(d / "policy.json", {
        "format_version": FORMAT_VERSION, "kind": f"{run.mode}_policy",
        "forest_config_hash": stage.manifest.hash, "config_hash": config_hash(run.cfg.to_dict()),
        "train_config": run.cfg.to_dict(), "best_epoch": run.report.best_epoch,
        "best_val_metric": run.report.best_metric, "n_epochs": run.report.n_epochs,
        "standardization": stage.manifest.stats.to_dict(), "net": run.net.to_dict()})
    write_rows(d / "reward_curve.csv", ("epoch", "mean_reward", "val_metric", "lr"),
               run.report.reward_curve_rows())
    write_rows(d / "selection_histogram.csv", ("epoch", "tree_index", "count"),
               run.report.selection_rows())
    if run.labels is not None:
        train_idx = stage.manifest.splits.train
        write_rows(d / "labels.csv", ("sample_index", "tree_label"),
                   ({"sample_index": int(i), "tree_label": int(l)}
                    for i, l in zip(train_idx, run.labels)))
    return d


def load_policies(out_dir: Path, mode: str, stage: ForestStage) -> dict[int, PolicyNet]:
    """All trained policies of one mode, keyed by seed."""
    base = Path(out_dir) / mode
    nets = {}
    for d in sorted(base.glob("seed_*")) if base.exists() else []:
        doc = read_json(d / "policy.json", "train-policy")
        if doc.get("forest_config_hash") != stage.manifest.hash:
            raise ArtifactError(f"{d / 'policy.json'} was trained against a different forest")
        nets[int(doc["train_config"]["seed"])] = PolicyNet.from_dict(doc["net"])
    return dict(sorted(nets.items()))


def run_evaluate(stage: ForestStage, ds: Dataset, contextual: dict[int, PolicyNet],
                 supervised: dict[int, PolicyNet], name: str) -> list[ModelResult]:
    test = stage.manifest.subset(ds, "test", "evaluate")
    stats, rf = stage.manifest.stats, stage.forest
    preds: dict = {}
    if contextual:
        preds["contextual"] = {s: ContextualTree(n, rf, stats).predict(test.X)[0]
                               for s, n in contextual.items()}
    preds["decision_tree"] = stage.cart.predict(test.X)
    if supervised:
        preds["supervised"] = {s: ContextualTree(n, rf, stats).predict(test.X)[0]
                               for s, n in supervised.items()}
    preds["random_forest"] = rf.predict(test.X)
    return compare_models(name, ds.task, test.y, preds)


def write_comparison(results, out_dir: Path) -> Path:
    path = Path(out_dir) / "comparison.csv"
    path.write_text(comparison_csv(results))
    return path
