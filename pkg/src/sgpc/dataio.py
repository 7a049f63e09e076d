"""Dataset and partition files.

Two dataset formats are read, both with the label first on each line:

``dense``
    delimiter-separated values (comma, semicolon, tab or whitespace),
    e.g. ``1,0.5,0.5``.
``sparse``
    ``label index:value ...`` with 1-based feature indices; missing
    coordinates are zero.

Partitions are index files: one line per partition with space-separated
0-based row indices, train and test in two companion files.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

_SPLIT = re.compile(r"[,;\t ]+")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = "data"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataFormatError("X must be n x d with one label per row")
        if not np.all(np.isfinite(self.X)):
            raise DataFormatError("inputs contain NaN or Inf")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise DataFormatError("labels must be +1 or -1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.name)


@dataclass
class PartitionSet:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train)

    def __iter__(self):
        return iter(zip(self.train, self.test))

    def validate(self, n: int) -> None:
        if len(self.train) != len(self.test):
            raise DataFormatError("train and test partition counts differ")
        for k, (tr, te) in enumerate(self):
            for name, idx in (("train", tr), ("test", te)):
                if idx.size and (idx.min() < 0 or idx.max() >= n):
                    raise DataFormatError(f"partition {k}: {name} index out of range for n={n}")
            if np.intersect1d(tr, te).size:
                raise DataFormatError(f"partition {k}: train and test overlap")


def _label(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataFormatError(f"line {lineno}: bad label {tok!r}") from None
    if v not in (1.0, -1.0):
        raise DataFormatError(f"line {lineno}: label {tok!r} is not +1 or -1")
    return v


def _parse_dense(lines):
    rows, labels = [], []
    width = None
    for lineno, line in lines:
        toks = _SPLIT.split(line.strip())
        labels.append(_label(toks[0], lineno))
        try:
            vals = [float(t) for t in toks[1:]]
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric value") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataFormatError(f"line {lineno}: expected {width} features, got {len(vals)}")
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(len(rows), width or 0), np.array(labels)


def _parse_sparse(lines):
    entries, labels = [], []
    d = 0
    for lineno, line in lines:
        toks = line.split()
        labels.append(_label(toks[0], lineno))
        row = {}
        for tok in toks[1:]:
            try:
                k, v = tok.split(":")
                k, v = int(k), float(v)
            except ValueError:
                raise DataFormatError(f"line {lineno}: bad entry {tok!r}") from None
            if k < 1:
                raise DataFormatError(f"line {lineno}: feature index must be >= 1")
            row[k - 1] = v
            d = max(d, k)
        entries.append(row)
    X = np.zeros((len(entries), d))
    for r, row in enumerate(entries):
        for k, v in row.items():
            X[r, k] = v
    return X, np.array(labels)


def load_dataset(path, fmt: str = "dense", name: str | None = None) -> Dataset:
    """Read a dataset file; ``fmt`` is ``dense`` or ``sparse``."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [(k, ln) for k, ln in enumerate(fh, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if fmt == "dense":
        X, y = _parse_dense(lines)
    elif fmt == "sparse":
        X, y = _parse_sparse(lines)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return Dataset(X, y, name or path.stem)


def write_dataset(data: Dataset, path, delimiter: str = ",") -> None:
    """Dense format with shortest round-trip float repr."""
    with open(path, "w", encoding="utf-8") as fh:
        for xi, yi in zip(data.X, data.y):
            fh.write(delimiter.join([str(int(yi))] + [repr(float(v)) for v in xi]) + "\n")


def _read_index_file(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(np.array([int(t) for t in line.split()], dtype=np.intp))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer index") from None
    return out


def load_partitions(train_path, test_path, n: int | None = None) -> PartitionSet:
    parts = PartitionSet(_read_index_file(train_path), _read_index_file(test_path))
    if n is not None:
        parts.validate(n)
    return parts


def write_partitions(parts: PartitionSet, train_path, test_path) -> None:
    for path, lists in ((train_path, parts.train), (test_path, parts.test)):
        with open(path, "w", encoding="utf-8") as fh:
            for idx in lists:
                fh.write(" ".join(str(int(i)) for i in idx) + "\n")


def synth_partitions(y, pt: int, train_frac: float, rng: np.random.Generator) -> PartitionSet:
    """``pt`` random train/test splits, stratified by class."""
    y = np.asarray(y)
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    parts = PartitionSet()
    for _ in range(pt):
        train, test = [], []
        for label in (1.0, -1.0):
            idx = rng.permutation(np.flatnonzero(y == label))
            k = int(round(train_frac * idx.size))
            train.append(idx[:k])
            test.append(idx[k:])
        parts.train.append(np.sort(np.concatenate(train)))
        parts.test.append(np.sort(np.concatenate(test)))
    return parts


def move_test_to_train(parts: PartitionSet, count: int) -> PartitionSet:
    """Move the first ``count`` test indices of every partition into training."""
    out = PartitionSet()
    for tr, te in parts:
        out.train.append(np.concatenate([tr, te[:count]]))
        out.test.append(te[count:])
    return out


def standardize(train: Dataset, *others: Dataset):
    """z-score every feature with statistics from ``train`` only."""
    mu = train.X.mean(0)
    sd = train.X.std(0)
    sd[sd == 0] = 1.0
    scale = lambda ds: Dataset((ds.X - mu) / sd, ds.y, ds.name)  # noqa: E731
    return (scale(train),) + tuple(scale(o) for o in others)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def make_gaussian_mixture(n: int, rng: np.random.Generator, d: int = 2,
                          components: int = 3, spread: float = 1.6, name: str = "gmm") -> Dataset:
    """Two classes, each a mixture of isotropic unit Gaussians with random centres.

    The component centres are drawn once from a fixed generator so that every
    call describes the same distribution; ``rng`` only drives the samples.
    """
    centres = np.random.default_rng(12345).normal(scale=spread, size=(2, components, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    comp = rng.integers(components, size=n)
    cls = (y < 0).astype(int)
    X = centres[cls, comp] + rng.normal(size=(n, d))
    return Dataset(X, y, name)


def make_banana(n: int, rng: np.random.Generator, noise: float = 0.45, name: str = "banana") -> Dataset:
    """Two interleaved crescents in 2-D with Gaussian noise."""
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    t = rng.uniform(0.0, math.pi, size=n)
    pos = np.c_[np.cos(t), np.sin(t)]
    neg = np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]
    X = np.where((y > 0)[:, None], pos, neg) + noise * rng.normal(size=(n, 2))
    return Dataset(X, y, name)
