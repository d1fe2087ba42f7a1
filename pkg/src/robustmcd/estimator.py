"""MCD estimator on raw samples.

Two solvers share one result type: :func:`exact_mcd` enumerates every
subsample of size ``ceil(n * gamma)`` and is the oracle for small n, while
:func:`cstep_mcd` runs multi-start concentration for larger samples.
"""

import math

import numpy as np

from . import kernels
from .linalg import det_eig, is_degenerate, mahalanobis_sq
from .model import (
    CertificateReport,
    Dataset,
    DegenerateDataError,
    McdFit,
    radius,
    subsample_size,
)

EXACT_GUARD = 20
BOUNDARY_TOL = 1e-9
TIE_TOL = 1e-12


def _as_dataset(D):
    return D if isinstance(D, Dataset) else Dataset(D)


def subsample_moments(D, S):
    """Mean and covariance (divisor ``|S|``) of the points indexed by ``S``."""
    D = _as_dataset(D)
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        raise ValueError("subsample is empty")
    if S.min() < 0 or S.max() >= D.n:
        raise IndexError("subsample index out of range")
    Y = D.points[S]
    T = Y.mean(axis=0)
    R = Y - T
    C = R.T @ R / len(S)
    return T, 0.5 * (C + C.T)


def _unrank_combination(rank, n, h):
    """The ``rank``-th h-subset of range(n) in lexicographic order."""
    out = []
    x = 0
    for i in range(h):
        while True:
            c = math.comb(n - x - 1, h - i - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return np.array(out, dtype=np.int64)


def _finish(D, S, gamma, method, seed=None, n_iter=0, info=None):
    T, C = subsample_moments(D, S)
    degenerate = is_degenerate(C)
    if degenerate:
        r = float("nan")
        det = 0.0
    else:
        r = radius(D, T, C, gamma)
        det = det_eig(C)
    fit = McdFit(
        trimming=np.asarray(S, dtype=np.int64),
        T=T,
        C=C,
        radius=r,
        det=det,
        method=method,
        gamma=gamma,
        seed=seed,
        degenerate=degenerate,
        n_iter=n_iter,
        info=info or {},
    )
    fit.certificate = certify_estimator(D, fit, gamma)
    return fit


def _check_size(D, gamma):
    h = subsample_size(D.n, gamma)
    if h < D.k + 1:
        raise ValueError(
            f"subsample size {h} is below k+1={D.k + 1}; the covariance is necessarily singular"
        )
    return h


def exact_mcd(D, gamma, guard=EXACT_GUARD):
    """Global MCD by enumerating all subsamples of size ``ceil(n * gamma)``.

    Among subsets whose determinants tie within 1e-12 relative, the
    lexicographically smallest index set wins.
    """
    D = _as_dataset(D)
    if D.n > guard:
        raise ValueError(f"n={D.n} exceeds the exhaustive guard {guard}; use cstep_mcd")
    h = _check_size(D, gamma)
    dets = np.maximum(kernels.exhaustive_dets(D.points, h), 0.0)
    best = dets.min()
    rank = int(np.flatnonzero(dets <= best + TIE_TOL * best)[0])
    S = _unrank_combination(rank, D.n, h)
    return _finish(D, S, gamma, "exact", info={"subsets": len(dets)})


def _random_start(rng, n, k):
    return np.sort(rng.choice(n, size=k + 1, replace=False))


def cstep_mcd(D, gamma, starts=50, seed=0, max_iter=500, restarts=20, return_traces=False):
    """Multi-start concentration search for the MCD subsample.

    Each start draws ``k + 1`` random points (redrawn up to ``restarts`` times
    if they are affinely dependent) and iterates concentration steps until
    the h-subset repeats. The lowest determinant over starts is returned; ties
    keep the earliest start.
    """
    D = _as_dataset(D)
    if starts < 1:
        raise ValueError("starts must be >= 1")
    h = _check_size(D, gamma)
    rng = np.random.default_rng(seed)
    best = None
    traces = []
    n_singular = 0
    for s in range(starts):
        for _ in range(restarts):
            idx, det, it, dets, status = kernels.concentrate(
                D.points, _random_start(rng, D.n, D.k), h, max_iter
            )
            if status != 2:
                break
            n_singular += 1
        else:
            continue
        traces.append(dets)
        if best is None or det < best[1]:
            best = (idx, det, it, s, status)
    if best is None:
        raise DegenerateDataError(
            "every concentration chain hit a singular covariance; "
            "the data may put mass >= gamma on a hyperplane"
        )
    idx, det, it, s, status = best
    info = {"best_start": s, "status": kernels.STATUS[status], "singular_draws": n_singular}
    fit = _finish(D, idx, gamma, "cstep", seed=seed, n_iter=it, info=info)
    if return_traces:
        return fit, traces
    return fit


def greedy_delete(D, S, target_h, return_dets=False):
    """Drop the point of largest Mahalanobis distance until ``target_h`` remain.

    Each removal cannot increase the covariance determinant; a violation
    beyond rounding raises ``AssertionError``.
    """
    D = _as_dataset(D)
    S = np.sort(np.asarray(S, dtype=np.int64))
    if target_h < D.k + 1 or target_h > len(S):
        raise ValueError("need len(S) >= target_h >= k+1")
    dets = []
    while True:
        T, C = subsample_moments(D, S)
        if is_degenerate(C):
            raise DegenerateDataError(f"singular covariance on subsample {S.tolist()}")
        det = det_eig(C)
        if dets:
            assert det <= dets[-1] * (1 + 1e-12), "determinant increased after deletion"
        dets.append(det)
        if len(S) == target_h:
            break
        d2 = mahalanobis_sq(D.points[S], T, C)
        S = np.delete(S, int(np.argmax(d2)))
    return (S, np.array(dets)) if return_dets else S


def certify_estimator(D, fit, gamma):
    """Check size and separating-ellipsoid properties of a sample fit.

    With ``r`` the gamma-radius around ``(T, C)``, every point strictly
    inside the ellipsoid must be selected and no selected point may lie
    outside it (band 1e-9 relative to ``r^2``).
    """
    D = _as_dataset(D)
    S = np.asarray(fit.subsample, dtype=np.int64)
    h = subsample_size(D.n, gamma)
    size_ok = len(S) == h
    mass_ok = len(S) >= D.n * gamma - 1e-9
    if fit.degenerate or is_degenerate(fit.C):
        return CertificateReport(size_ok, False, mass_ok, 0, float("inf"))
    r = radius(D, fit.T, fit.C, gamma)
    r2 = r * r
    tol = BOUNDARY_TOL * max(1.0, r2)
    d2 = mahalanobis_sq(D.points, fit.T, fit.C)
    inside = np.zeros(D.n, dtype=bool)
    inside[S] = True
    viol = [0.0]
    if (~inside).any():
        viol.append(float(np.max(r2 - d2[~inside])))
    viol.append(float(np.max(d2[inside] - r2)))
    max_violation = max(0.0, *viol)
    separating = max_violation <= tol
    boundary = int(np.sum(np.abs(d2 - r2) <= tol))
    return CertificateReport(size_ok, separating, mass_ok, boundary, max_violation)
