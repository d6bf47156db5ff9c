"""Kernel backend selection.

The compiled Cython extension is used when importable; otherwise the numpy
reference implementation. Set RELGAT_KERNELS=numpy or =compiled to force a
backend (forcing `compiled` raises if the extension is missing).
"""

import os

from ._numpy_ref import (
    KIND_ABSDIFF,
    KIND_ABSDIFF_PROD,
    KIND_DIFF,
    KIND_PROD,
)
from . import _numpy_ref

_requested = os.environ.get("RELGAT_KERNELS", "auto").lower()

if _requested not in ("auto", "compiled", "numpy"):
    raise ValueError(
        f"RELGAT_KERNELS must be one of auto/compiled/numpy, got {_requested!r}"
    )

if _requested == "numpy":
    _impl = _numpy_ref
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _numpy_ref
        BACKEND = "numpy"

scatter_add_rows = _impl.scatter_add_rows
scatter_add_vec = _impl.scatter_add_vec
segment_max = _impl.segment_max
relation_scores_forward = _impl.relation_scores_forward
relation_scores_backward = _impl.relation_scores_backward


def get_backends():
    """Return {name: module} for every importable backend (for tests/benchmarks)."""
    backends = {"numpy": _numpy_ref}
    try:
        from . import _core

        backends["compiled"] = _core
    except ImportError:
        pass
    return backends
