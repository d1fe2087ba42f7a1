"""Small positive definite matrix algebra.

Everything here targets the low-dimensional regime (k <= 10) where
eigendecompositions are cheap, so determinants, inverses and square roots
all go through ``numpy.linalg.eigh``.
"""

from typing import NamedTuple

import numpy as np

SYMMETRY_TOL = 1e-12
PD_GATE = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix fails the symmetric positive definite gate."""


def as_pds(S, name="matrix"):
    """Validate ``S`` as symmetric positive definite and return a float copy.

    The matrix must be square, symmetric to 1e-12 absolute, and its smallest
    eigenvalue must exceed 1e-12 times the largest.
    """
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotPositiveDefiniteError(f"{name} must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    S = 0.5 * (S + S.T)
    lam = np.linalg.eigvalsh(S)
    if lam[-1] <= 0 or lam[0] <= PD_GATE * lam[-1]:
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (eigenvalues {lam[0]:.3g}..{lam[-1]:.3g})"
        )
    return S


def is_degenerate(C):
    """True when ``C`` fails the positive definite gate (hyperplane mass)."""
    lam = np.linalg.eigvalsh(0.5 * (C + C.T))
    return bool(lam[-1] <= 0 or lam[0] <= PD_GATE * lam[-1])


def pds_sqrt(S):
    """Unique symmetric positive definite square root of ``S``."""
    S = as_pds(S)
    lam, V = np.linalg.eigh(S)
    G = (V * np.sqrt(lam)) @ V.T
    return 0.5 * (G + G.T)


def pds_inv(S):
    S = as_pds(S)
    lam, V = np.linalg.eigh(S)
    Sinv = (V / lam) @ V.T
    return 0.5 * (Sinv + Sinv.T)


def det_eig(S):
    """Determinant as the product of eigenvalues of the symmetric part."""
    S = np.asarray(S, dtype=float)
    return float(np.prod(np.linalg.eigvalsh(0.5 * (S + S.T))))


class TraceWitness(NamedTuple):
    trace: float
    det1: float
    det2: float


def det_trace_test(S1, S2):
    """Trace statistic and determinant pair for the trace/determinant lemma.

    Returns ``Tr(S2^{-1}(S1 - S2))`` together with ``det S1`` and ``det S2``.
    For symmetric non-negative ``S1`` and positive definite ``S2`` a negative
    trace forces ``det S1 < det S2``.
    """
    S1 = np.asarray(S1, dtype=float)
    S2 = as_pds(S2, "S2")
    if S1.shape != S2.shape:
        raise ValueError(f"dimension mismatch: {S1.shape} vs {S2.shape}")
    t = float(np.trace(pds_inv(S2) @ (S1 - S2)))
    return TraceWitness(t, det_eig(S1), det_eig(S2))


def mahalanobis_sq(x, mu, S):
    """Squared Mahalanobis distance ``(x - mu)' S^{-1} (x - mu)``.

    ``x`` may be a single point of shape (k,) or a batch of shape (n, k).
    """
    S = as_pds(S)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    k = S.shape[0]
    if mu.shape != (k,) or x.shape[-1] != k:
        raise ValueError(f"dimension mismatch: x {x.shape}, mu {mu.shape}, S {S.shape}")
    diff = x - mu
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, diff.reshape(-1, k).T)
    d2 = np.sum(z * z, axis=0)
    return float(d2[0]) if x.ndim == 1 else d2


def scatter_about(X, a, weights=None):
    """Second moment matrix of the rows of ``X`` about the point ``a``."""
    X = np.asarray(X, dtype=float)
    w = np.full(len(X), 1.0 / len(X)) if weights is None else np.asarray(weights, float)
    D = X - np.asarray(a, dtype=float)
    return (D * w[:, None]).T @ D / w.sum()


def vech(S):
    """Lower triangle of ``S`` stacked column by column."""
    S = np.asarray(S)
    k = S.shape[0]
    return np.concatenate([S[j:, j] for j in range(k)])


def unvech(v, k=None):
    """Inverse of :func:`vech`, returning a symmetric matrix."""
    v = np.asarray(v, dtype=float)
    if k is None:
        k = int(round((np.sqrt(8 * len(v) + 1) - 1) / 2))
    if len(v) != k * (k + 1) // 2:
        raise ValueError(f"vech length {len(v)} does not match k={k}")
    S = np.zeros((k, k))
    pos = 0
    for j in range(k):
        S[j:, j] = v[pos : pos + k - j]
        S[j, j:] = v[pos : pos + k - j]
        pos += k - j
    return S
