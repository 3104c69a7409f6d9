"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly; otherwise the
numpy fallback is used. Setting ``M2SLT_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("M2SLT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

pairwise_sqdist = _impl.pairwise_sqdist
dbscan_labels = _impl.dbscan_labels
kth_neighbor_distance = _impl.kth_neighbor_distance
lcs_length = _impl.lcs_length
bin_events = _impl.bin_events
topk_rows = _impl.topk_rows

__all__ = [
    "BACKEND",
    "pairwise_sqdist",
    "dbscan_labels",
    "kth_neighbor_distance",
    "lcs_length",
    "bin_events",
    "topk_rows",
]
