"""Benchmark tables that ship inside installed Python packages.

No network access is needed: SPAM and HEART come from the ``keel-ds`` wheel,
ABALONE from ``scikit-lego``. FRIEDMAN is generated (Friedman #1 with 15
irrelevant features, 5000 rows).
"""
from __future__ import annotations

import csv
import io
import zipfile
from importlib import resources

import numpy as np

from .data import Dataset, Task, parse_csv

# name -> (task, loader attribute)
BENCHMARKS = {
    "spam": Task.CLASSIFICATION,
    "heart": Task.CLASSIFICATION,
    "abalone": Task.REGRESSION,
    "friedman": Task.REGRESSION,
}

ABALONE_SEX_CODES = {"M": 1.0, "F": 2.0, "I": 3.0}


class BenchmarkUnavailable(RuntimeError):
    pass


def _package_bytes(package: str, *parts: str) -> bytes:
    try:
        root = resources.files(package)
    except ModuleNotFoundError:
        raise BenchmarkUnavailable(
            f"benchmark data needs the {package!r} package (pip install {package.replace('_', '-')})"
        ) from None
    return root.joinpath(*parts).read_bytes()


def _keel_csv(name: str) -> str:
    # KEEL raw files: comma separated, no header, class label last.
    raw = _package_bytes("keel_ds", "data", "balanced", "raw", f"{name}.dat").decode()
    lines = [ln for ln in raw.splitlines() if ln.strip() and not ln.startswith("@")]
    return "\n".join(lines) + "\n"


def spam_csv() -> str:
    return _keel_csv("spambase")


def heart_csv() -> str:
    return _keel_csv("heart")


def abalone_csv() -> str:
    blob = _package_bytes("sklego", "data", "abalone.zip")
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        text = zf.read(zf.namelist()[0]).decode()
    rows = list(csv.reader(io.StringIO(text)))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(rows[0])
    for r in rows[1:]:
        w.writerow([ABALONE_SEX_CODES[r[0]], *r[1:]])
    return out.getvalue()


def friedman_csv(n: int = 5000, n_features: int = 20, noise: float = 1.0, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    X = rng.random((n, n_features))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4] + noise * rng.standard_normal(n))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(n_features)] + ["y"])
    for row, t in zip(X, y):
        w.writerow([repr(float(v)) for v in row] + [repr(float(t))])
    return out.getvalue()


_SOURCES = {"spam": spam_csv, "heart": heart_csv, "abalone": abalone_csv,
            "friedman": friedman_csv}


def benchmark_csv(name: str) -> str:
    """CSV text (target in the last column) for a named benchmark."""
    try:
        return _SOURCES[name]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(_SOURCES)}") from None


def load_benchmark(name: str) -> Dataset:
    return parse_csv(benchmark_csv(name), -1, BENCHMARKS[name])
