"""Citation-graph datasets in a neutral on-disk directory format.

A dataset directory holds features.csv, labels.csv, edges.csv, splits.json
and meta.json (UTF-8, LF). The loader symmetrizes edges, adds self-loops and
deduplicates, so every node has degree >= 1 afterwards.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

FILES = ("features.csv", "labels.csv", "edges.csv", "splits.json", "meta.json")


@dataclass(frozen=True)
class MissingSpec:
    """Feature-erasure protocol: zero the features of a deterministic sample
    of non-train nodes."""

    rate: int
    seed: int

    def __post_init__(self):
        if not 0 <= self.rate <= 100:
            raise ConfigError(f"missing rate must be in [0, 100], got {self.rate}")


@dataclass(frozen=True)
class GraphDataset:
    name: str
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, C)
    edge_src: np.ndarray  # directed edges incl. both directions + self-loops
    edge_dst: np.ndarray  # sorted by (dst, src)
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int
    missing: MissingSpec | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edge_src.shape[0]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edge_dst, minlength=self.n)


def _symmetrize(raw_pairs, n: int):
    """Both directions for every raw pair, plus (i, i) for every node,
    deduplicated and sorted by (dst, src)."""
    pairs = {(i, i) for i in range(n)}
    for s, d in raw_pairs:
        pairs.add((s, d))
        pairs.add((d, s))
    ordered = sorted(pairs, key=lambda p: (p[1], p[0]))
    src = np.array([s for s, _ in ordered], dtype=np.int64)
    dst = np.array([d for _, d in ordered], dtype=np.int64)
    return src, dst


def _load_error(path, line, message):
    where = f"{path}" if line is None else f"{path}, line {line}"
    return DataError(f"{where}: {message}")


def _read_features(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            arr = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError:
        raise _load_error(path, None, "missing file") from None
    except ValueError:
        # slow re-parse to name the offending line
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                for cell in line.rstrip("\n").split(","):
                    try:
                        float(cell)
                    except ValueError:
                        raise _load_error(
                            path, lineno, f"non-numeric cell {cell!r}"
                        ) from None
        raise _load_error(path, None, "malformed CSV") from None
    if not np.all(np.isfinite(arr)):
        raise _load_error(path, None, "non-finite feature value")
    return arr


def _read_labels(path, n: int) -> np.ndarray:
    labels = np.empty(n, dtype=np.int64)
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError:
        raise _load_error(path, None, "missing file") from None
    with fh:
        count = 0
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if count >= n:
                raise _load_error(path, lineno, f"more labels than {n} feature rows")
            try:
                labels[count] = int(text)
            except ValueError:
                raise _load_error(path, lineno, f"non-integer label {text!r}") from None
            count += 1
    if count != n:
        raise _load_error(
            path, None, f"row-count mismatch: {count} labels for {n} feature rows"
        )
    return labels


def _read_edges(path, n: int):
    pairs = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError:
        raise _load_error(path, None, "missing file") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise _load_error(path, lineno, f"expected 'src,dst', got {text!r}")
            try:
                s, d = int(parts[0]), int(parts[1])
            except ValueError:
                raise _load_error(path, lineno, f"non-integer endpoint in {text!r}") from None
            if not (0 <= s < n and 0 <= d < n):
                raise _load_error(path, lineno, f"edge ({s},{d}) out of range [0,{n})")
            pairs.append((s, d))
    return pairs


def _read_splits(path, n: int):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError:
        raise _load_error(path, None, "missing file") from None
    except json.JSONDecodeError as exc:
        raise _load_error(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    splits = {}
    for key in ("train", "val", "test"):
        if key not in obj:
            raise _load_error(path, None, f"missing split {key!r}")
        idx = np.asarray(obj[key], dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise _load_error(path, None, f"split {key!r} index out of range [0,{n})")
        if len(np.unique(idx)) != len(idx):
            raise _load_error(path, None, f"split {key!r} contains duplicates")
        splits[key] = idx
    all_idx = np.concatenate([splits["train"], splits["val"], splits["test"]])
    if len(np.unique(all_idx)) != len(all_idx):
        raise _load_error(path, None, "splits are not pairwise disjoint")
    return splits


def load_dataset(directory) -> GraphDataset:
    """Load a neutral dataset directory; see the module docstring for the
    layout. Raises DataError naming the file (and line where known)."""
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise DataError(f"{directory}: not a directory")
    paths = {name: os.path.join(directory, name) for name in FILES}
    features = _read_features(paths["features.csv"])
    n = features.shape[0]
    labels = _read_labels(paths["labels.csv"], n)
    pairs = _read_edges(paths["edges.csv"], n)
    splits = _read_splits(paths["splits.json"], n)
    try:
        with open(paths["meta.json"], "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError:
        raise _load_error(paths["meta.json"], None, "missing file") from None
    except json.JSONDecodeError as exc:
        raise _load_error(paths["meta.json"], exc.lineno, f"invalid JSON: {exc.msg}") from None

    num_classes = int(meta.get("num_classes", labels.max() + 1))
    if labels.min() < 0 or labels.max() >= num_classes:
        raise _load_error(
            paths["labels.csv"], None,
            f"label out of range [0,{num_classes})",
        )
    for key, expected in (
        ("num_nodes", n),
        ("num_features", features.shape[1]),
    ):
        if key in meta and int(meta[key]) != expected:
            raise _load_error(
                paths["meta.json"], None,
                f"{key}={meta[key]} does not match data ({expected})",
            )
    train_classes = set(labels[splits["train"]].tolist())
    if train_classes != set(range(num_classes)):
        missing = sorted(set(range(num_classes)) - train_classes)
        raise _load_error(
            paths["splits.json"], None,
            f"classes {missing} absent from the train split",
        )
    src, dst = _symmetrize(pairs, n)
    return GraphDataset(
        name=str(meta.get("name", os.path.basename(directory.rstrip("/")))),
        features=features,
        labels=labels,
        edge_src=src,
        edge_dst=dst,
        train_idx=np.sort(splits["train"]),
        val_idx=np.sort(splits["val"]),
        test_idx=np.sort(splits["test"]),
        num_classes=num_classes,
    )


def save_dataset(ds: GraphDataset, directory) -> None:
    """Write the neutral format. Floats use repr (shortest round-trip), so
    load(save(ds)) is bit-exact. Self-loops are dropped on save and one
    direction of each symmetric pair is kept; the loader restores both."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "features.csv"), "w", encoding="utf-8") as fh:
        for row in ds.features:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
    with open(os.path.join(directory, "labels.csv"), "w", encoding="utf-8") as fh:
        for label in ds.labels:
            fh.write(f"{int(label)}\n")
    with open(os.path.join(directory, "edges.csv"), "w", encoding="utf-8") as fh:
        for s, d in zip(ds.edge_src, ds.edge_dst):
            if s < d:  # one direction, no self-loops
                fh.write(f"{int(s)},{int(d)}\n")
    with open(os.path.join(directory, "splits.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "train": ds.train_idx.tolist(),
                "val": ds.val_idx.tolist(),
                "test": ds.test_idx.tolist(),
            },
            fh,
        )
        fh.write("\n")
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "name": ds.name,
                "num_nodes": ds.n,
                "num_features": ds.d,
                "num_classes": ds.num_classes,
            },
            fh,
        )
        fh.write("\n")


def apply_missing(ds: GraphDataset, spec: MissingSpec) -> GraphDataset:
    """Zero the feature rows of floor(rate/100 * |eligible|) nodes, where
    eligible = all nodes outside the train split. Deterministic in
    (seed, rate); train-node features are never modified."""
    if spec.rate == 0:
        return replace(ds, missing=spec)
    eligible = np.setdiff1d(np.arange(ds.n), ds.train_idx)
    count = int(np.floor(spec.rate / 100.0 * eligible.size))
    rng = np.random.default_rng([spec.seed, spec.rate])
    chosen = rng.choice(eligible, size=count, replace=False)
    features = ds.features.copy()
    features[chosen] = 0.0
    return replace(ds, features=features, missing=spec)


def row_normalize(ds: GraphDataset) -> GraphDataset:
    """Scale each non-zero feature row to unit L1 norm; zero rows unchanged."""
    norms = np.abs(ds.features).sum(axis=1, keepdims=True)
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms != 0)
    return replace(ds, features=ds.features * scale)


def prepare(ds: GraphDataset, missing: MissingSpec | None, normalize: bool) -> GraphDataset:
    """Standard preprocessing pipeline: missing-feature erasure, then row
    normalisation (zeroed rows stay zero either way)."""
    if missing is not None:
        ds = apply_missing(ds, missing)
    if normalize:
        ds = row_normalize(ds)
    return ds
