"""numba kernels for subset search and concentration.

Status codes shared with the numpy fallback:
0 subsample repeated, 1 determinant stalled, 2 singular covariance, 3 iteration cap.
"""

import numpy as np
from numba import njit

PD_GATE = 1e-12
STALL_TOL = 1e-12
TIE_TOL = 1e-12


@njit(cache=True, nogil=True)
def _subset_moments(X, idx, T, C):
    h = idx.shape[0]
    k = X.shape[1]
    for j in range(k):
        T[j] = 0.0
    for a in range(h):
        for j in range(k):
            T[j] += X[idx[a], j]
    for j in range(k):
        T[j] /= h
    for i in range(k):
        for j in range(k):
            C[i, j] = 0.0
    for a in range(h):
        for i in range(k):
            di = X[idx[a], i] - T[i]
            for j in range(i + 1):
                C[i, j] += di * (X[idx[a], j] - T[j])
    for i in range(k):
        for j in range(i + 1):
            C[i, j] /= h
            C[j, i] = C[i, j]


@njit(cache=True, nogil=True)
def _weighted_moments(X, v, T, C):
    n, k = X.shape
    mass = 0.0
    for j in range(k):
        T[j] = 0.0
    for a in range(n):
        if v[a] > 0.0:
            mass += v[a]
            for j in range(k):
                T[j] += v[a] * X[a, j]
    for j in range(k):
        T[j] /= mass
    for i in range(k):
        for j in range(k):
            C[i, j] = 0.0
    for a in range(n):
        if v[a] > 0.0:
            for i in range(k):
                di = X[a, i] - T[i]
                for j in range(i + 1):
                    C[i, j] += v[a] * di * (X[a, j] - T[j])
    for i in range(k):
        for j in range(i + 1):
            C[i, j] /= mass
            C[j, i] = C[i, j]
    return mass


@njit(cache=True, nogil=True)
def _eig_det_inv(C, Cinv):
    """Determinant by eigenvalue product; returns -1.0 when C fails the gate."""
    lam, V = np.linalg.eigh(C)
    k = C.shape[0]
    if lam[k - 1] <= 0.0 or lam[0] <= PD_GATE * lam[k - 1]:
        return -1.0
    det = 1.0
    for i in range(k):
        det *= lam[i]
    for i in range(k):
        for j in range(k):
            s = 0.0
            for l in range(k):
                s += V[i, l] * V[j, l] / lam[l]
            Cinv[i, j] = s
    return det


@njit(cache=True, nogil=True)
def _mahalanobis(X, T, Cinv, d2):
    n, k = X.shape
    diff = np.empty(k)
    for a in range(n):
        for j in range(k):
            diff[j] = X[a, j] - T[j]
        s = 0.0
        for i in range(k):
            row = 0.0
            for j in range(k):
                row += Cinv[i, j] * diff[j]
            s += diff[i] * row
        d2[a] = s


@njit(cache=True, nogil=True)
def _select_smallest(d2, h, out):
    """The h indices of smallest d2 in increasing index order.

    Values within TIE_TOL (relative) of the h-th smallest count as tied and
    go to the lowest indices, so rounding noise cannot reorder them.
    """
    thr = np.partition(d2, h - 1)[h - 1]
    tol = TIE_TOL * max(abs(thr), 1e-300)
    c = 0
    for i in range(d2.shape[0]):
        if d2[i] < thr - tol:
            c += 1
    need = h - c
    m = 0
    for i in range(d2.shape[0]):
        if d2[i] < thr - tol:
            out[m] = i
            m += 1
        elif need > 0 and d2[i] <= thr + tol:
            out[m] = i
            m += 1
            need -= 1


@njit(cache=True, nogil=True)
def concentrate(X, idx0, h, max_iter):
    n, k = X.shape
    T = np.empty(k)
    C = np.empty((k, k))
    Cinv = np.empty((k, k))
    d2 = np.empty(n)
    dets = np.empty(max_iter + 1)
    _subset_moments(X, idx0, T, C)
    det = _eig_det_inv(C, Cinv)
    if det < 0.0:
        return idx0.copy(), 0.0, 0, dets[:0], 2
    idx = idx0.copy()
    full = idx.shape[0] == h
    it = 0
    if full:
        dets[0] = det
        it = 1
    while True:
        _mahalanobis(X, T, Cinv, d2)
        new = np.empty(h, dtype=np.int64)
        _select_smallest(d2, h, new)
        if full:
            same = True
            for a in range(h):
                if new[a] != idx[a]:
                    same = False
                    break
            if same:
                return idx, det, it, dets[:it], 0
        if it > max_iter:
            return idx, det, it, dets[:it], 3
        T_new = np.empty(k)
        C_new = np.empty((k, k))
        Cinv_new = np.empty((k, k))
        _subset_moments(X, new, T_new, C_new)
        det_new = _eig_det_inv(C_new, Cinv_new)
        if det_new < 0.0:
            return new, 0.0, it, dets[:it], 2
        if full and det - det_new < STALL_TOL * det:
            if det_new < det:
                dets[it] = det_new
                return new, det_new, it + 1, dets[: it + 1], 1
            return idx, det, it, dets[:it], 1
        dets[it] = det_new
        it += 1
        full = True
        idx = new
        det = det_new
        T[:] = T_new
        Cinv[:, :] = Cinv_new


@njit(cache=True, nogil=True)
def _fill_mass(order, w, gamma, phi):
    for a in range(phi.shape[0]):
        phi[a] = 0.0
    acc = 0.0
    for a in range(order.shape[0]):
        i = order[a]
        rest = gamma - acc
        if rest <= 1e-15:
            break
        if w[i] <= rest:
            phi[i] = 1.0
            acc += w[i]
        else:
            phi[i] = rest / w[i]
            acc = gamma
            break


@njit(cache=True, nogil=True)
def concentrate_weighted(X, w, gamma, phi0, max_iter):
    n, k = X.shape
    T = np.empty(k)
    C = np.empty((k, k))
    Cinv = np.empty((k, k))
    d2 = np.empty(n)
    dets = np.empty(max_iter + 1)
    _weighted_moments(X, phi0 * w, T, C)
    det = _eig_det_inv(C, Cinv)
    if det < 0.0:
        return phi0.copy(), 0.0, 0, dets[:0], 2
    phi = phi0.copy()
    full = False
    it = 0
    while True:
        _mahalanobis(X, T, Cinv, d2)
        order = np.argsort(d2, kind="mergesort")
        new = np.empty(n)
        _fill_mass(order, w, gamma, new)
        if full:
            same = True
            for a in range(n):
                if new[a] != phi[a]:
                    same = False
                    break
            if same:
                return phi, det, it, dets[:it], 0
        if it > max_iter:
            return phi, det, it, dets[:it], 3
        T_new = np.empty(k)
        C_new = np.empty((k, k))
        Cinv_new = np.empty((k, k))
        _weighted_moments(X, new * w, T_new, C_new)
        det_new = _eig_det_inv(C_new, Cinv_new)
        if det_new < 0.0:
            return new, 0.0, it, dets[:it], 2
        if full and det - det_new < STALL_TOL * det:
            if det_new < det:
                dets[it] = det_new
                return new, det_new, it + 1, dets[: it + 1], 1
            return phi, det, it, dets[:it], 1
        dets[it] = det_new
        it += 1
        full = True
        phi = new
        det = det_new
        T[:] = T_new
        Cinv[:, :] = Cinv_new


@njit(cache=True, nogil=True)
def _small_det(C):
    k = C.shape[0]
    A = C.copy()
    det = 1.0
    for c in range(k):
        p = c
        for r in range(c + 1, k):
            if abs(A[r, c]) > abs(A[p, c]):
                p = r
        if A[p, c] == 0.0:
            return 0.0
        if p != c:
            for j in range(k):
                tmp = A[c, j]
                A[c, j] = A[p, j]
                A[p, j] = tmp
            det = -det
        det *= A[c, c]
        for r in range(c + 1, k):
            f = A[r, c] / A[c, c]
            for j in range(c, k):
                A[r, j] -= f * A[c, j]
    return det


@njit(cache=True, nogil=True)
def exhaustive_dets(X, h, out):
    """Determinants of all h-subsets of the rows of X, in lexicographic order."""
    n, k = X.shape
    idx = np.arange(h)
    T = np.empty(k)
    C = np.empty((k, k))
    pos = 0
    while True:
        _subset_moments(X, idx, T, C)
        out[pos] = _small_det(C)
        pos += 1
        i = h - 1
        while i >= 0 and idx[i] == n - h + i:
            i -= 1
        if i < 0:
            break
        idx[i] += 1
        for j in range(i + 1, h):
            idx[j] = idx[j - 1] + 1
    return pos
