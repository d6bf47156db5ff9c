"""Pure-numpy kernel implementations.

Fallback backend used when the compiled extension is unavailable (or forced
via RELGAT_KERNELS=numpy). Accumulation order matches the compiled loops:
np.add.at / np.maximum.at process entries in index order, so scatter results
are bitwise-identical across backends. The relation-score kernels chunk over
edges to bound the materialised (chunk, d) temporaries.
"""

import numpy as np

# Relation kind codes shared with the compiled backend.
KIND_DIFF = 1
KIND_ABSDIFF = 2
KIND_PROD = 3
KIND_ABSDIFF_PROD = 4

_CHUNK = 16384


def scatter_add_rows(src, idx, n):
    """Sum rows of `src` into an (n, d) array at positions `idx`."""
    out = np.zeros((n,) + src.shape[1:], dtype=np.float64)
    np.add.at(out, idx, src)
    return out


def scatter_add_vec(src, idx, n):
    """1-D scatter-add; bincount accumulates in index order like a C loop."""
    return np.bincount(idx, weights=src, minlength=n)


def segment_max(values, segments, n):
    """Per-segment maximum; segments without entries stay at -inf."""
    out = np.full(n, -np.inf, dtype=np.float64)
    np.maximum.at(out, segments, values)
    return out


def relation_scores_forward(h, src, dst, w, kind):
    """Per-edge dot product of relation(h[dst], h[src]) with weights w.

    For kind ABSDIFF_PROD, w holds the abs-difference weights in its first
    half and the element-wise-product weights in its second half.
    """
    num_edges = src.shape[0]
    d = h.shape[1]
    scores = np.empty(num_edges, dtype=np.float64)
    if kind == KIND_ABSDIFF_PROD:
        w_abs, w_prod = w[:d], w[d:]
    for lo in range(0, num_edges, _CHUNK):
        hi = min(lo + _CHUNK, num_edges)
        hd = h[dst[lo:hi]]
        hs = h[src[lo:hi]]
        if kind == KIND_DIFF:
            scores[lo:hi] = (hd - hs) @ w
        elif kind == KIND_ABSDIFF:
            scores[lo:hi] = np.abs(hd - hs) @ w
        elif kind == KIND_PROD:
            scores[lo:hi] = (hd * hs) @ w
        elif kind == KIND_ABSDIFF_PROD:
            scores[lo:hi] = np.abs(hd - hs) @ w_abs + (hd * hs) @ w_prod
        else:
            raise ValueError(f"unknown relation kind code {kind}")
    return scores


def relation_scores_backward(h, src, dst, w, kind, grad_scores):
    """Gradients of relation_scores_forward w.r.t. h and w.

    abs uses subgradient 0 at 0 (np.sign(0) == 0).
    """
    num_edges = src.shape[0]
    d = h.shape[1]
    grad_h = np.zeros_like(h)
    grad_w = np.zeros_like(w)
    if kind == KIND_ABSDIFF_PROD:
        w_abs, w_prod = w[:d], w[d:]
    for lo in range(0, num_edges, _CHUNK):
        hi = min(lo + _CHUNK, num_edges)
        s, t = src[lo:hi], dst[lo:hi]
        g = grad_scores[lo:hi, None]
        hd = h[t]
        hs = h[s]
        if kind == KIND_DIFF:
            gw_chunk = g * (hd - hs)
            np.add.at(grad_h, t, g * w)
            np.add.at(grad_h, s, -g * w)
            grad_w += gw_chunk.sum(axis=0)
        elif kind == KIND_ABSDIFF:
            diff = hd - hs
            signed = g * np.sign(diff) * w
            np.add.at(grad_h, t, signed)
            np.add.at(grad_h, s, -signed)
            grad_w += (g * np.abs(diff)).sum(axis=0)
        elif kind == KIND_PROD:
            np.add.at(grad_h, t, g * w * hs)
            np.add.at(grad_h, s, g * w * hd)
            grad_w += (g * hd * hs).sum(axis=0)
        elif kind == KIND_ABSDIFF_PROD:
            diff = hd - hs
            signed = g * np.sign(diff) * w_abs
            np.add.at(grad_h, t, signed + g * w_prod * hs)
            np.add.at(grad_h, s, -signed + g * w_prod * hd)
            grad_w[:d] += (g * np.abs(diff)).sum(axis=0)
            grad_w[d:] += (g * hd * hs).sum(axis=0)
        else:
            raise ValueError(f"unknown relation kind code {kind}")
    return grad_h, grad_w
