"""Vectorized numpy versions of the kernels in ``_kernels_numba``."""

from itertools import combinations, islice

import numpy as np

PD_GATE = 1e-12
STALL_TOL = 1e-12
TIE_TOL = 1e-12


def _moments(X, v):
    mass = v.sum()
    T = (v @ X) / mass
    D = X - T
    C = (D * v[:, None]).T @ D / mass
    return T, 0.5 * (C + C.T)


def _eig_det_inv(C):
    lam, V = np.linalg.eigh(C)
    if lam[-1] <= 0.0 or lam[0] <= PD_GATE * lam[-1]:
        return -1.0, None
    return float(np.prod(lam)), (V / lam) @ V.T


def _mahalanobis(X, T, Cinv):
    D = X - T
    return np.einsum("ij,jk,ik->i", D, Cinv, D)


def select_smallest(d2, h):
    """The h indices of smallest d2 in increasing index order.

    Values within TIE_TOL (relative) of the h-th smallest count as tied and
    go to the lowest indices.
    """
    thr = np.partition(d2, h - 1)[h - 1]
    tol = TIE_TOL * max(abs(thr), 1e-300)
    less = d2 < thr - tol
    need = h - int(less.sum())
    tied = np.flatnonzero(~less & (d2 <= thr + tol))[:need]
    less[tied] = True
    return np.flatnonzero(less)


def concentrate(X, idx0, h, max_iter):
    n = X.shape[0]

    def subset_stats(idx):
        v = np.zeros(n)
        v[idx] = 1.0
        return _moments(X, v)

    T, C = subset_stats(idx0)
    det, Cinv = _eig_det_inv(C)
    dets = np.empty(max_iter + 1)
    if det < 0:
        return idx0.copy(), 0.0, 0, dets[:0], 2
    idx = idx0.copy()
    full = len(idx) == h
    it = 0
    if full:
        dets[0] = det
        it = 1
    while True:
        d2 = _mahalanobis(X, T, Cinv)
        new = select_smallest(d2, h)
        if full and np.array_equal(new, idx):
            return idx, det, it, dets[:it], 0
        if it > max_iter:
            return idx, det, it, dets[:it], 3
        T_new, C_new = subset_stats(new)
        det_new, Cinv_new = _eig_det_inv(C_new)
        if det_new < 0:
            return new, 0.0, it, dets[:it], 2
        if full and det - det_new < STALL_TOL * det:
            if det_new < det:
                dets[it] = det_new
                return new, det_new, it + 1, dets[: it + 1], 1
            return idx, det, it, dets[:it], 1
        dets[it] = det_new
        it += 1
        full = True
        idx, det, T, Cinv = new, det_new, T_new, Cinv_new


def fill_mass(d2, w, gamma):
    """Trimming that takes atoms by increasing distance until mass gamma."""
    order = np.argsort(d2, kind="stable")
    phi = np.zeros(len(w))
    cum_before = np.r_[0.0, np.cumsum(w[order])[:-1]]
    rest = gamma - cum_before
    # same sequential rule as the numba kernel
    full = (rest > 1e-15) & (w[order] <= rest)
    stop = np.flatnonzero(~full)
    m = stop[0] if len(stop) else len(order)
    phi[order[:m]] = 1.0
    if m < len(order) and rest[m] > 1e-15:
        phi[order[m]] = rest[m] / w[order[m]]
    return phi


def concentrate_weighted(X, w, gamma, phi0, max_iter):
    T, C = _moments(X, phi0 * w)
    det, Cinv = _eig_det_inv(C)
    dets = np.empty(max_iter + 1)
    if det < 0:
        return phi0.copy(), 0.0, 0, dets[:0], 2
    phi = phi0.copy()
    full = False
    it = 0
    while True:
        new = fill_mass(_mahalanobis(X, T, Cinv), w, gamma)
        if full and np.array_equal(new, phi):
            return phi, det, it, dets[:it], 0
        if it > max_iter:
            return phi, det, it, dets[:it], 3
        T_new, C_new = _moments(X, new * w)
        det_new, Cinv_new = _eig_det_inv(C_new)
        if det_new < 0:
            return new, 0.0, it, dets[:it], 2
        if full and det - det_new < STALL_TOL * det:
            if det_new < det:
                dets[it] = det_new
                return new, det_new, it + 1, dets[: it + 1], 1
            return phi, det, it, dets[:it], 1
        dets[it] = det_new
        it += 1
        full = True
        phi, det, T, Cinv = new, det_new, T_new, Cinv_new


def exhaustive_dets(X, h, out, chunk=20000):
    n, k = X.shape
    combos = combinations(range(n), h)
    pos = 0
    while True:
        block = np.array(list(islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            return pos
        sub = X[block]
        D = sub - sub.mean(axis=1, keepdims=True)
        C = np.einsum("mhi,mhj->mij", D, D) / h
        out[pos : pos + len(block)] = np.linalg.det(C)
        pos += len(block)
