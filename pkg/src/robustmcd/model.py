"""Shared domain types: samples, weighted measures, trimmings and fit results."""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .linalg import as_pds, mahalanobis_sq, unvech, vech

MASS_TOL = 1e-12


class DegenerateDataError(ValueError):
    """The data put mass >= gamma on a hyperplane; no useful MCD exists."""


class CsvFormatError(ValueError):
    pass


def subsample_size(n, gamma):
    """``ceil(n * gamma)``, robust to floating point noise in the product."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return int(math.ceil(round(n * gamma, 9)))


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def k(self):
        return self.points.shape[1]

    def as_measure(self):
        """The empirical measure, one atom of mass 1/n per point."""
        return WeightedMeasure(self.points, np.full(self.n, 1.0 / self.n))


@dataclass(frozen=True)
class WeightedMeasure:
    """Finitely many atoms with positive probabilities summing to one.

    Repeated locations are allowed; they behave like a single heavier atom
    except for tie-breaking, which always goes by atom index.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float).ravel()
        if len(w) != len(pts) or len(w) == 0:
            raise ValueError("points and weights must be non-empty and aligned")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def k(self):
        return self.points.shape[1]

    @classmethod
    def normalized(cls, points, weights):
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())


@dataclass(frozen=True)
class TrimmingWeights:
    """Per-atom trimming values in [0, 1] and the resulting trimmed mass."""

    values: np.ndarray
    mass: float

    @classmethod
    def on(cls, P, values):
        phi = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
        if phi.shape != (P.n,):
            raise ValueError("trimming values must align with the atoms")
        return cls(phi, float(phi @ P.weights))

    def fractional(self, tol=1e-12):
        """Indices of atoms whose weight is strictly between 0 and 1."""
        v = self.values
        return np.flatnonzero((v > tol) & (v < 1 - tol))


@dataclass(frozen=True)
class Ellipsoid:
    mu: np.ndarray
    sigma: np.ndarray
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("ellipsoid radius must be positive")
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", as_pds(self.sigma, "sigma"))

    def contains(self, x):
        return mahalanobis_sq(x, self.mu, self.sigma) <= self.rho**2


@dataclass(frozen=True)
class Theta:
    """Location ``m``, symmetric square root ``G`` of the scatter, radius ``r``.

    The flat form is ``[m, vech(G), r]`` of length ``k + k(k+1)/2 + 1``.
    """

    m: np.ndarray
    G: np.ndarray
    r: float

    @property
    def k(self):
        return len(self.m)

    @property
    def sigma(self):
        return self.G @ self.G

    def to_vector(self):
        return np.concatenate([np.asarray(self.m, float), vech(self.G), [float(self.r)]])

    @classmethod
    def from_vector(cls, v, k):
        v = np.asarray(v, dtype=float)
        q = k * (k + 1) // 2
        if len(v) != k + q + 1:
            raise ValueError(f"theta vector of length {len(v)} does not match k={k}")
        return cls(v[:k].copy(), unvech(v[k : k + q], k), float(v[-1]))

    @staticmethod
    def size(k):
        return k + k * (k + 1) // 2 + 1


@dataclass
class CertificateReport:
    subsample_size_ok: bool
    separating_ellipsoid_ok: bool
    mass_ok: bool
    boundary_atoms: int
    max_violation: float
    fractional_atoms: int = 0
    boundary_case: str = ""

    @property
    def ok(self):
        return self.subsample_size_ok and self.separating_ellipsoid_ok and self.mass_ok

    def to_dict(self):
        return {
            "subsample_size_ok": self.subsample_size_ok,
            "separating_ellipsoid_ok": self.separating_ellipsoid_ok,
            "mass_ok": self.mass_ok,
            "boundary_atoms": int(self.boundary_atoms),
            "max_violation": float(self.max_violation),
            "fractional_atoms": int(self.fractional_atoms),
            "boundary_case": self.boundary_case,
        }


@dataclass
class McdFit:
    """Result of an estimator or functional solve.

    ``trimming`` is a sorted index array for sample fits and a
    :class:`TrimmingWeights` for fits on weighted measures.
    """

    trimming: Union[np.ndarray, TrimmingWeights]
    T: np.ndarray
    C: np.ndarray
    radius: float
    det: float
    method: str
    gamma: float
    seed: Optional[int] = None
    certificate: Optional[CertificateReport] = None
    degenerate: bool = False
    n_iter: int = 0
    info: dict = field(default_factory=dict)

    @property
    def subsample(self):
        return None if isinstance(self.trimming, TrimmingWeights) else self.trimming

    def theta(self):
        from .linalg import pds_sqrt

        return Theta(np.asarray(self.T, float), pds_sqrt(self.C), float(self.radius))

    def to_dict(self):
        out = {
            "method": self.method,
            "gamma": float(self.gamma),
            "seed": self.seed,
            "T": [float(v) for v in self.T],
            "C": [[float(v) for v in row] for row in self.C],
            "radius": float(self.radius),
            "det": float(self.det),
            "degenerate": bool(self.degenerate),
        }
        if isinstance(self.trimming, TrimmingWeights):
            out["weights"] = [float(v) for v in self.trimming.values]
        elif self.trimming is not None:
            out["subsample"] = [int(i) for i in self.trimming]
        out["certificate"] = None if self.certificate is None else self.certificate.to_dict()
        return out


def _as_weighted(P):
    if isinstance(P, Dataset):
        return P.as_measure()
    if isinstance(P, WeightedMeasure):
        return P
    raise TypeError(f"expected Dataset or WeightedMeasure, got {type(P).__name__}")


def weighted_moments(X, w):
    """Weighted mean and covariance, both normalized by ``sum(w)``."""
    mass = float(w.sum())
    if mass <= 0:
        raise ValueError("trimmed mass must be positive")
    T = (w @ X) / mass
    D = X - T
    C = (D * w[:, None]).T @ D / mass
    return mass, T, 0.5 * (C + C.T)


def trimmed_moments(P, phi):
    """Trimmed mass, mean and covariance of ``P`` under trimming ``phi``.

    ``phi`` is either a :class:`TrimmingWeights` or an array of per-atom values.
    The covariance may be singular; callers decide what that means.
    """
    P = _as_weighted(P)
    values = phi.values if isinstance(phi, TrimmingWeights) else np.asarray(phi, float)
    if values.shape != (P.n,):
        raise ValueError("trimming values must align with the atoms")
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("trimming values must lie in [0, 1]")
    return weighted_moments(P.points, values * P.weights)


def radius(P, center, shape, gamma):
    """Smallest atom distance whose closed ellipsoid carries mass >= gamma.

    Atoms tied in Mahalanobis distance enter together.
    """
    P = _as_weighted(P)
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    d = np.sqrt(np.maximum(mahalanobis_sq(P.points, center, shape), 0.0))
    return _weighted_upper_quantile(d, P.weights, gamma)


def _weighted_upper_quantile(d, w, gamma):
    order = np.argsort(d, kind="stable")
    ds, cum = d[order], np.cumsum(w[order])
    if cum[-1] < gamma - MASS_TOL:
        raise ValueError(f"total mass {cum[-1]} is below gamma={gamma}")
    # last index of each tie group carries the group's cumulative mass
    last = np.r_[ds[1:] != ds[:-1], True]
    hit = np.flatnonzero(last & (cum >= gamma - MASS_TOL))[0]
    return float(ds[hit])


def affine_map(D, A, b):
    """Image of a dataset or weighted measure under ``x -> A x + b``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    k = A.shape[0]
    if A.shape != (k, k) or b.shape != (k,) or D.k != k:
        raise ValueError("A must be k x k and b of length k, matching the data")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise ValueError("affine map matrix is singular")
    pts = D.points @ A.T + b
    if isinstance(D, WeightedMeasure):
        return WeightedMeasure(pts, D.weights)
    return Dataset(pts)


def read_csv(path, header=None):
    """Read points (and an optional ``weight`` column) from a CSV file.

    ``header=None`` sniffs: a first row that does not parse as numbers is a
    header. Returns a :class:`Dataset`, or a :class:`WeightedMeasure` when a
    column named ``weight`` is present.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")

    def numeric(row):
        try:
            [float(c) for c in row]
            return True
        except ValueError:
            return False

    if header is None:
        header = not numeric(rows[0])
    names = [c.strip() for c in rows[0]] if header else None
    body = rows[1:] if header else rows
    start_line = 2 if header else 1
    if not body:
        raise CsvFormatError(f"{path}: no data rows")

    width = len(names) if names else len(body[0])
    values = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise CsvFormatError(
                f"{path}: line {start_line + i}: expected {width} columns, got {len(row)}"
            )
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {start_line + i}, column {j + 1}: not a number: {cell!r}"
                ) from None
            if not math.isfinite(values[i, j]):
                raise CsvFormatError(f"{path}: line {start_line + i}, column {j + 1}: not finite")

    if names and "weight" in names:
        wcol = names.index("weight")
        keep = [j for j in range(width) if j != wcol]
        w = values[:, wcol]
        if np.any(w <= 0):
            raise CsvFormatError(f"{path}: weight column must be strictly positive")
        return WeightedMeasure.normalized(values[:, keep], w)
    return Dataset(values)

