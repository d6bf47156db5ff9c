"""Benchmark the compiled kernel extension against the numpy fallback.

Covers the per-edge hot kernels (scatter-add, segment max, fused relation
scores forward/backward) on Cora/Pubmed-sized edge arrays, plus one full
training epoch through each backend.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from relgat._kernels import KIND_ABSDIFF_PROD, get_backends


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(sizes, repeats):
    rng = np.random.default_rng(0)
    n, e, d, d_in = sizes
    h = rng.normal(size=(n, d_in))
    src = rng.integers(0, n, size=e).astype(np.int64)
    dst = rng.integers(0, n, size=e).astype(np.int64)
    vals2d = rng.normal(size=(e, d))
    vals1d = rng.normal(size=e)
    w = rng.normal(size=2 * d_in)
    g = rng.normal(size=e)

    cases = {
        "scatter_add_rows (E,d)->(n,d)": lambda b: b.scatter_add_rows(vals2d, dst, n),
        "scatter_add_vec (E,)->(n,)": lambda b: b.scatter_add_vec(vals1d, dst, n),
        "segment_max": lambda b: b.segment_max(vals1d, dst, n),
        "relation fwd (absdiff_prod)": lambda b: b.relation_scores_forward(
            h, src, dst, w, KIND_ABSDIFF_PROD
        ),
        "relation bwd (absdiff_prod)": lambda b: b.relation_scores_backward(
            h, src, dst, w, KIND_ABSDIFF_PROD, g
        ),
    }
    backends = get_backends()
    rows = []
    for label, call in cases.items():
        times = {
            name: timeit(lambda b=backend: call(b), repeats)
            for name, backend in backends.items()
        }
        rows.append((label, times))
    return rows


def bench_epoch():
    """One full training epoch per backend, measured in a subprocess so the
    backend choice (RELGAT_KERNELS) takes effect at import time."""
    code = r"""
import time
import numpy as np
import relgat
from relgat.data import GraphDataset
from relgat.model import ModelConfig, RelationKind
from relgat.training import TrainConfig, train_run

rng = np.random.default_rng(0)
n, d, C = 2708, 1433, 7
feats = (rng.random((n, d)) < 0.012).astype(float)
labels = rng.integers(0, C, size=n)
pairs = set((i, i) for i in range(n))
for _ in range(5278):
    a, b = rng.integers(0, n, size=2)
    if a != b:
        pairs.add((int(a), int(b))); pairs.add((int(b), int(a)))
ordered = sorted(pairs, key=lambda p: (p[1], p[0]))
src = np.array([s for s, _ in ordered], dtype=np.int64)
dst = np.array([t for _, t in ordered], dtype=np.int64)
train = np.arange(140)
labels[train] = np.arange(140) % C
ds = GraphDataset("bench", feats, labels, src, dst, train,
                  np.arange(140, 640), np.arange(640, 1640), C)
cfg = ModelConfig(num_layers=2, hidden_dim=64, relation=RelationKind.ABSDIFF_PROD)
epochs = 3
start = time.perf_counter()
train_run(ds, cfg, TrainConfig(epochs=epochs, seeds=(0,)), None, 0)
per_epoch = (time.perf_counter() - start) / epochs
print(f"{relgat.KERNEL_BACKEND} {per_epoch:.4f}")
"""
    results = {}
    for backend in ("compiled", "numpy"):
        env = dict(os.environ, RELGAT_KERNELS=backend, OPENBLAS_NUM_THREADS="1")
        try:
            out = subprocess.run(
                [sys.executable, "-c", code], capture_output=True, text=True,
                env=env, check=True,
            )
            name, seconds = out.stdout.split()
            results[name] = float(seconds)
        except subprocess.CalledProcessError as exc:
            print(f"  ({backend} epoch benchmark failed: {exc.stderr.strip()[-200:]})")
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes, fewer repeats")
    args = parser.parse_args()

    backends = get_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled extension not built; numpy-only timings follow")

    if args.quick:
        sizes, repeats = (2000, 20000, 64, 256), 3
    else:
        sizes, repeats = (19717, 200000, 64, 500), 5  # Pubmed-shaped
    n, e, d, d_in = sizes
    print(f"\nkernel benchmarks (n={n}, E={e}, d={d}, d_in={d_in}; best of {repeats})")
    print(f"{'kernel':34s} " + " ".join(f"{name:>12s}" for name in backends) + "   speedup")
    for label, times in bench_kernels(sizes, repeats):
        cells = " ".join(f"{times[name] * 1e3:>10.2f}ms" for name in backends)
        if "compiled" in times and times["compiled"] > 0:
            ratio = times["numpy"] / times["compiled"]
            cells += f"   {ratio:6.1f}x"
        print(f"{label:34s} {cells}")

    print("\nfull training epoch, Cora-shaped graph (2-layer absdiff_prod, 1 BLAS thread)")
    for name, seconds in bench_epoch().items():
        print(f"{name:>10s}: {seconds:.3f} s/epoch")


if __name__ == "__main__":
    main()
