"""Backend selection for the metric kernels.

The compiled extension is used when it was built; setting
``SEASON_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("SEASON_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"


def _as_ids(seq):
    return np.ascontiguousarray(seq, dtype=np.int64)


def _pick(backend):
    backend = backend or BACKEND
    if backend not in ("cython", "python"):
        raise ValueError(f"unknown kernel backend {backend!r}")
    return backend


def lcs_length(a, b, backend=None):
    """LCS length of two integer sequences."""
    if _pick(backend) == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        return int(_ckernels.lcs_length(_as_ids(a), _as_ids(b)))
    return _pykernels.lcs_length(list(a), list(b))


def greedy_fragments(article, summary, backend=None):
    if _pick(backend) == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        return list(_ckernels.greedy_fragments(_as_ids(article), _as_ids(summary)))
    return _pykernels.greedy_fragments(list(article), list(summary))


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])
