#!/usr/bin/env python3
"""One-shot converter from the community-standard binary citation-dataset
distribution (the eight ind.<name>.* files with canonical public splits) to
the neutral directory format:

    features.csv  n rows of comma-separated decimal floats
    labels.csv    n integer lines
    edges.csv     one "src,dst" pair per line (loader symmetrizes)
    splits.json   {"train": [...], "val": [...], "test": [...]}
    meta.json     {"name", "num_nodes", "num_features", "num_classes"}

The raw test rows arrive permuted (ind.<name>.test.index lists their node
ids in row order); conversion rewrites them into sorted node order. The
isolated nodes absent from the citeseer test index are kept as all-zero
feature rows so node ids and split indices stay valid.

Usage:
    ingest.py --name {cora|citeseer|pubmed} --raw-dir DIR --out-dir DIR [--verify]
"""

import argparse
import hashlib
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp

DATASETS = ("cora", "citeseer", "pubmed")
RAW_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
EXPECTED_META = {
    "cora": {"num_nodes": 2708, "num_features": 1433, "num_classes": 7},
    "citeseer": {"num_nodes": 3327, "num_features": 3703, "num_classes": 6},
    "pubmed": {"num_nodes": 19717, "num_features": 500, "num_classes": 3},
}


class ConversionError(Exception):
    pass


class VerifyError(Exception):
    pass


def _load_pickle(path):
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except OSError:
        raise ConversionError(f"missing raw file: {path}")
    except (pickle.UnpicklingError, EOFError, ValueError) as exc:
        raise ConversionError(f"corrupt raw file: {path} ({exc})")


def _load_test_index(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    except OSError:
        raise ConversionError(f"missing raw file: {path}")
    except ValueError as exc:
        raise ConversionError(f"corrupt raw file: {path} ({exc})")


def load_raw(name, raw_dir):
    """Read the eight raw files for one dataset."""
    if name not in DATASETS:
        raise ConversionError(f"unknown dataset {name!r}; expected one of {DATASETS}")
    parts = {}
    for part in RAW_PARTS:
        path = os.path.join(raw_dir, f"ind.{name}.{part}")
        parts[part] = (
            _load_test_index(path) if part == "test.index" else _load_pickle(path)
        )
    return parts


def assemble(name, parts):
    """Merge allx/tx into full feature and label matrices in sorted node
    order, undoing the test-row permutation recorded in test.index."""
    x, y = parts["x"], parts["y"]
    tx, ty = parts["tx"], parts["ty"]
    allx, ally = parts["allx"], parts["ally"]
    graph = parts["graph"]
    test_reorder = parts["test.index"]
    test_sorted = np.sort(test_reorder)

    if name == "citeseer":
        # gaps in the test index are isolated nodes: keep them, zero-filled
        full = np.arange(test_reorder.min(), test_reorder.max() + 1)
        tx_ext = sp.lil_matrix((len(full), x.shape[1]))
        tx_ext[test_sorted - full.min(), :] = tx
        ty_ext = np.zeros((len(full), y.shape[1]))
        ty_ext[test_sorted - full.min(), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_reorder, :] = features[test_sorted, :]
    labels_onehot = np.vstack((ally, ty))
    labels_onehot[test_reorder, :] = labels_onehot[test_sorted, :]

    n = features.shape[0]
    dense = np.asarray(features.todense(), dtype=np.float64)
    labels = np.argmax(labels_onehot, axis=1).astype(np.int64)
    num_classes = labels_onehot.shape[1]

    if name in ("cora", "citeseer"):
        values = np.unique(dense)
        if not np.all(np.isin(values, (0.0, 1.0))):
            raise ConversionError(
                f"{name} features must be binary bag-of-words, found other values"
            )
    else:
        if dense.min() < 0:
            raise ConversionError(f"{name} features must be non-negative")

    edges = set()
    for node, neighbours in graph.items():
        if not 0 <= node < n:
            raise ConversionError(f"graph node id {node} out of range [0,{n})")
        for other in neighbours:
            if not 0 <= other < n:
                raise ConversionError(
                    f"graph neighbour id {other} out of range [0,{n})"
                )
            if node != other:
                edges.add((int(node), int(other)))

    # canonical protocol: val = the 500 nodes after the labeled seed set
    # (capped by the unlabeled pool so undersized inputs stay valid)
    val_count = min(500, allx.shape[0] - x.shape[0])
    splits = {
        "train": list(range(x.shape[0])),
        "val": list(range(x.shape[0], x.shape[0] + val_count)),
        "test": [int(i) for i in test_sorted],
    }
    return dense, labels, sorted(edges), splits, num_classes


def write_neutral(out_dir, name, dense, labels, edges, splits, num_classes):
    """Write the five files; floats use repr (shortest round-trip), so
    re-conversion is byte-identical and reload is bit-exact."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "features.csv"), "w", encoding="utf-8") as fh:
        for row in dense:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
    with open(os.path.join(out_dir, "labels.csv"), "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(f"{int(label)}\n")
    with open(os.path.join(out_dir, "edges.csv"), "w", encoding="utf-8") as fh:
        for s, d in edges:
            fh.write(f"{s},{d}\n")
    with open(os.path.join(out_dir, "splits.json"), "w", encoding="utf-8") as fh:
        json.dump(splits, fh)
        fh.write("\n")
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "name": name,
                "num_nodes": int(dense.shape[0]),
                "num_features": int(dense.shape[1]),
                "num_classes": int(num_classes),
            },
            fh,
        )
        fh.write("\n")


def convert(name, raw_dir, out_dir):
    parts = load_raw(name, raw_dir)
    dense, labels, edges, splits, num_classes = assemble(name, parts)
    write_neutral(out_dir, name, dense, labels, edges, splits, num_classes)
    return {
        "name": name,
        "num_nodes": int(dense.shape[0]),
        "num_features": int(dense.shape[1]),
        "num_classes": int(num_classes),
        "num_raw_edges": len(edges),
        "splits": {k: len(v) for k, v in splits.items()},
    }


def verify(out_dir):
    """Independently recheck a converted directory: counts, ranges, split
    disjointness, label coverage. Prints a sha256 checksum per file and
    raises VerifyError naming the first violated check."""

    def fail(check, detail):
        raise VerifyError(f"check failed [{check}]: {detail}")

    paths = {
        name: os.path.join(out_dir, name)
        for name in ("features.csv", "labels.csv", "edges.csv", "splits.json", "meta.json")
    }
    for name, path in paths.items():
        if not os.path.isfile(path):
            fail("files-present", f"{path} is missing")

    with open(paths["meta.json"], "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    n, d, c = meta["num_nodes"], meta["num_features"], meta["num_classes"]

    with open(paths["features.csv"], "r", encoding="utf-8") as fh:
        widths = set()
        rows = 0
        for line in fh:
            widths.add(line.count(",") + 1)
            rows += 1
    if rows != n:
        fail("node-count", f"features.csv has {rows} rows, meta says {n}")
    if widths != {d}:
        fail("feature-width", f"features.csv widths {sorted(widths)}, meta says {d}")

    with open(paths["labels.csv"], "r", encoding="utf-8") as fh:
        labels = [int(line) for line in fh if line.strip()]
    if len(labels) != n:
        fail("label-count", f"{len(labels)} labels for {n} nodes")
    if labels and (min(labels) < 0 or max(labels) >= c):
        fail("label-range", f"labels outside [0,{c})")
    if len(set(labels)) != c:
        fail("class-count", f"{len(set(labels))} classes present, meta says {c}")

    edge_count = 0
    with open(paths["edges.csv"], "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s, dd = (int(p) for p in line.strip().split(","))
            if not (0 <= s < n and 0 <= dd < n):
                fail("edge-range", f"edges.csv line {lineno}: ({s},{dd})")
            edge_count += 1

    with open(paths["splits.json"], "r", encoding="utf-8") as fh:
        splits = json.load(fh)
    seen = set()
    for key in ("train", "val", "test"):
        idx = splits.get(key)
        if idx is None:
            fail("split-present", f"missing split {key!r}")
        if any(not 0 <= i < n for i in idx):
            fail("split-range", f"split {key!r} index out of range")
        overlap = seen.intersection(idx)
        if overlap:
            fail("split-disjoint", f"index {sorted(overlap)[:3]} in multiple splits")
        seen.update(idx)
    train_classes = {labels[i] for i in splits["train"]}
    if train_classes != set(range(c)):
        fail(
            "train-class-coverage",
            f"classes {sorted(set(range(c)) - train_classes)} missing from train",
        )

    checksums = {}
    for name, path in sorted(paths.items()):
        digest = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
        checksums[name] = digest.hexdigest()
        print(f"{checksums[name]}  {name}")
    return {
        "num_nodes": n,
        "num_features": d,
        "num_classes": c,
        "num_raw_edges": edge_count,
        "checksums": checksums,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Convert raw citation datasets to the neutral directory format."
    )
    parser.add_argument("--name", required=True, choices=DATASETS)
    parser.add_argument("--raw-dir", required=True)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument(
        "--verify", action="store_true", help="recheck the converted directory"
    )
    args = parser.parse_args(argv)
    try:
        info = convert(args.name, args.raw_dir, args.out_dir)
    except ConversionError as exc:
        print(f"conversion error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(info))
    expected = EXPECTED_META[args.name]
    for key, value in expected.items():
        if info[key] != value:
            print(
                f"warning: {args.name} {key}={info[key]}, canonical value is {value}",
                file=sys.stderr,
            )
    if args.verify:
        try:
            verify(args.out_dir)
        except VerifyError as exc:
            print(str(exc), file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
