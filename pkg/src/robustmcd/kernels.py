"""Dispatch between the numba kernels and the numpy fallback.

Set ``ROBUSTMCD_BACKEND=numpy`` before import to force the fallback.
"""

import math

import numpy as np

from ._accel import HAS_NUMBA, backend

if HAS_NUMBA:
    from . import _kernels_numba as _impl
else:
    from . import _kernels_numpy as _impl

from ._kernels_numpy import fill_mass  # noqa: E402  (shared, not hot)

STATUS = {0: "repeated", 1: "stalled", 2: "singular", 3: "max_iter"}

__all__ = ["backend", "concentrate", "concentrate_weighted", "exhaustive_dets", "fill_mass"]


def concentrate(X, idx0, h, max_iter=500):
    """Concentration steps from the subset ``idx0`` until the h-subset repeats.

    Returns ``(idx, det, n_iter, det_trace, status)``; ``det_trace`` lists the
    determinants of the successive h-subsets.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    idx0 = np.sort(np.asarray(idx0, dtype=np.int64))
    idx, det, it, dets, status = _impl.concentrate(X, idx0, int(h), int(max_iter))
    return np.asarray(idx, dtype=np.int64), float(det), int(it), np.array(dets), int(status)


def concentrate_weighted(X, w, gamma, phi0, max_iter=500):
    """Fractional-mass concentration on a weighted measure."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    phi0 = np.ascontiguousarray(phi0, dtype=np.float64)
    phi, det, it, dets, status = _impl.concentrate_weighted(X, w, float(gamma), phi0, int(max_iter))
    return np.asarray(phi), float(det), int(it), np.array(dets), int(status)


def exhaustive_dets(X, h):
    """Determinants of every h-subset of rows, lexicographic subset order."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(math.comb(X.shape[0], h))
    filled = _impl.exhaustive_dets(X, int(h), out)
    assert filled == len(out)
    return out
