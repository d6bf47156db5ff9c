"""Accuracy and the four over-smoothing measures.

row_diff and group_distance_ratio sum their pair-distance multisets with
math.fsum, so they are exactly invariant under node relabelling. The info
gain is a k-nearest-neighbour mutual-information estimate (k=3, Euclidean
within each space, max-combined across spaces) with distance ties broken by
node index; its absolute value is only comparable within this codebase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import digamma

from .errors import ConfigError, UndefinedMetricError

_EPS = 1e-12


def accuracy(logits, labels, mask) -> float:
    """Fraction of mask nodes with argmax(logits) == label; argmax ties
    resolve to the lowest class index."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ConfigError("accuracy: empty mask")
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == labels[mask]))


def row_diff(h, norm: str = "l2") -> float:
    """Mean pairwise distance between representation rows (i < j)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise UndefinedMetricError("row_diff needs at least two rows")
    if norm not in ("l2", "l1"):
        raise ConfigError(f"row_diff: unknown norm {norm!r}")
    dists = pdist(h, metric="euclidean" if norm == "l2" else "cityblock")
    return math.fsum(dists) / dists.size


def col_diff(h) -> float:
    """Columns scaled to unit L1 norm (zero columns kept), then the mean
    pairwise L1 distance between columns (i < j)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] < 2:
        raise UndefinedMetricError("col_diff needs at least two columns")
    cols = h.T.copy()
    norms = np.abs(cols).sum(axis=1, keepdims=True)
    np.divide(cols, norms, out=cols, where=norms != 0)
    dists = pdist(cols, metric="cityblock")
    return math.fsum(dists) / dists.size


def group_distance_ratio(h, labels) -> float:
    """(mean cross-class pair distance + eps) / (mean within-class pair
    distance + eps); intra averages over classes with >= 2 members, inter
    over unordered class pairs."""
    h = np.asarray(h, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise UndefinedMetricError("group_distance_ratio needs >= 2 classes")
    groups = {c: h[labels == c] for c in classes}
    intra_means = []
    for c in classes:
        g = groups[c]
        if g.shape[0] >= 2:
            d = pdist(g, metric="euclidean")
            intra_means.append(math.fsum(d) / d.size)
    inter_means = []
    for i, a in enumerate(classes):
        for b in classes[i + 1 :]:
            d = cdist(groups[a], groups[b], metric="euclidean")
            inter_means.append(math.fsum(d.ravel()) / d.size)
    intra = math.fsum(intra_means) / len(intra_means) if intra_means else 0.0
    inter = math.fsum(inter_means) / len(inter_means)
    return (inter + _EPS) / (intra + _EPS)


def sample_nodes(n: int, cap: int = 1000, seed: int = 0) -> np.ndarray:
    """All nodes when n <= cap, otherwise a deterministic sorted sample of
    cap nodes without replacement."""
    if cap < 2:
        raise ConfigError(f"sample_nodes: cap must be >= 2, got {cap}")
    if n <= cap:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=cap, replace=False)).astype(np.int64)


def instance_info_gain(x, h, sample: int = 1000, seed: int = 0, k: int = 3):
    """Mutual information I(X; H) over a deterministic node sample, via the
    Kraskov k-NN estimator. Returns (value_nats, degenerate): degenerate is
    True (value 0) when all sampled points coincide in either space."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[0] != h.shape[0]:
        raise ConfigError(
            f"instance_info_gain: row mismatch {x.shape[0]} vs {h.shape[0]}"
        )
    n = x.shape[0]
    if min(sample, n) < 20:
        raise UndefinedMetricError("instance_info_gain needs >= 20 sampled nodes")
    idx = sample_nodes(n, cap=sample, seed=seed)
    xs, hs = x[idx], h[idx]
    m = xs.shape[0]
    dx = cdist(xs, xs, metric="euclidean")
    dh = cdist(hs, hs, metric="euclidean")
    if dx.max() == 0.0 or dh.max() == 0.0:
        return 0.0, True
    joint = np.maximum(dx, dh)
    order_key = np.arange(m)
    psi_nx = np.empty(m)
    psi_ny = np.empty(m)
    for i in range(m):
        row = joint[i]
        # stable ordering: distance, then node index; drop the point itself
        order = np.lexsort((order_key, row))
        order = order[order != i]
        eps_i = row[order[k - 1]]
        nx = int(np.count_nonzero(dx[i] < eps_i)) - (1 if eps_i > 0 else 0)
        ny = int(np.count_nonzero(dh[i] < eps_i)) - (1 if eps_i > 0 else 0)
        psi_nx[i] = digamma(max(nx, 0) + 1)
        psi_ny[i] = digamma(max(ny, 0) + 1)
    value = float(digamma(k) + digamma(m) - np.mean(psi_nx + psi_ny))
    return value, False


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    row_diff: float | None
    col_diff: float | None
    group_distance_ratio: float | None
    instance_info_gain: float | None
    sample_size: int
    sample_seed: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "row_diff": self.row_diff,
            "col_diff": self.col_diff,
            "r_group": self.group_distance_ratio,
            "g_ins": self.instance_info_gain,
            "sample_size": self.sample_size,
            "sample_seed": self.sample_seed,
        }


def compute_report(
    features,
    representations,
    labels,
    test_accuracy: float,
    cap: int = 1000,
    seed: int = 0,
) -> MetricsReport:
    """MetricsReport over a deterministic node sample. Metrics undefined for
    the input at hand (tiny or single-class samples) are recorded as None
    rather than aborting — small fixture graphs still produce records."""
    representations = np.asarray(representations, dtype=np.float64)
    n = representations.shape[0]
    idx = sample_nodes(n, cap=cap, seed=seed)
    sub_h = representations[idx]
    sub_x = np.asarray(features, dtype=np.float64)[idx]
    sub_labels = np.asarray(labels)[idx]

    def attempt(fn):
        try:
            return fn()
        except UndefinedMetricError:
            return None

    gain = attempt(lambda: instance_info_gain(sub_x, sub_h, sample=cap, seed=seed))
    return MetricsReport(
        accuracy=test_accuracy,
        row_diff=attempt(lambda: row_diff(sub_h)),
        col_diff=attempt(lambda: col_diff(sub_h)),
        group_distance_ratio=attempt(lambda: group_distance_ratio(sub_h, sub_labels)),
        instance_info_gain=None if gain is None else gain[0],
        sample_size=int(idx.size),
        sample_seed=seed,
    )
