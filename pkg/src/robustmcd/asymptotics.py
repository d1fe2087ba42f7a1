"""Score equations, the population root, CLT covariance and influence function.

Parameters are ``theta = (m, G, r)`` flattened as ``[m, vech(G), r]``; the
score ``psi`` is flattened the same way, ``[psi1, vech(psi2), psi3]``, so the
Jacobian of the population score map is square.
"""

from dataclasses import dataclass, field

import numpy as np

from .distributions import PopulationSpec, QuadratureGrid, discretize
from .functional import functional_mcd
from .linalg import vech
from .model import Theta, WeightedMeasure
from .quadrature import ellipsoid_nodes

ROOT_TOL = 1e-10
FD_STEP = 1e-5
COND_LIMIT = 1e12
BOUNDARY_TOL = 1e-9


class SingularJacobianError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class ScoreValue:
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: float

    @property
    def vector(self):
        return np.concatenate([self.psi1, vech(self.psi2), [self.psi3]])

    @classmethod
    def from_vector(cls, v, k):
        from .linalg import unvech

        q = k * (k + 1) // 2
        return cls(v[:k].copy(), unvech(v[k : k + q], k), float(v[-1]))


def _tril(k):
    # vech order: lower triangle column by column
    rows, cols = [], []
    for j in range(k):
        for i in range(j, k):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def _inside_scores(u, gamma):
    """Flattened scores for points with ellipsoid coordinates ``u`` inside."""
    n, k = u.shape
    rows, cols = _tril(k)
    uu = u[:, rows] * u[:, cols]
    uu[:, rows == cols] -= 1.0
    return np.hstack([u, uu, np.full((n, 1), 1.0 - gamma)])


def psi_matrix(Y, theta, gamma):
    """Scores of each row of ``Y``, shape ``(n, p)``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    u = np.linalg.solve(theta.G, (Y - theta.m).T).T
    inside = np.sum(u * u, axis=1) <= theta.r**2
    out = np.zeros((len(Y), Theta.size(theta.k)))
    out[:, -1] = -gamma
    out[inside] = _inside_scores(u[inside], gamma)
    return out


def psi(y, theta, gamma):
    """Score of a single point ``y``."""
    return ScoreValue.from_vector(psi_matrix(y, theta, gamma)[0], theta.k)


def _population(P0):
    if isinstance(P0, QuadratureGrid):
        return P0.spec
    return P0


def lambda_map(theta, P0, gamma, resolution=None):
    """Population score ``Lambda(theta)``, the P0-integral of the score.

    For a :class:`WeightedMeasure` this is the weighted atom sum. For a
    :class:`PopulationSpec` (or a grid, through the spec it discretizes) the
    continuous part is integrated over the ellipsoid in its own coordinates,
    which makes ``Lambda`` smooth in ``theta``; atoms are summed directly.
    """
    P0 = _population(P0)
    if isinstance(P0, WeightedMeasure):
        return P0.weights @ psi_matrix(P0.points, theta, gamma)
    if not isinstance(P0, PopulationSpec):
        raise TypeError(f"unsupported population {type(P0).__name__}")
    cont, (atoms, aw) = P0.parts()
    total = np.zeros(Theta.size(theta.k))
    total[-1] = -gamma * sum(w for w, _ in cont)
    if cont:
        u, w = ellipsoid_nodes(P0, theta.m, theta.G, theta.r, resolution)
        total += w @ _inside_scores(u, gamma) + np.r_[np.zeros(len(total) - 1), gamma * w.sum()]
    if len(aw):
        total += aw @ psi_matrix(atoms, theta, gamma)
    return total


def _shift(theta, j, h):
    v = theta.to_vector()
    v[j] += h
    return Theta.from_vector(v, theta.k)


def lambda_jacobian(theta, P0, gamma, step=FD_STEP, diagnostics=False, resolution=None):
    """Central-difference Jacobian of :func:`lambda_map`.

    Coordinate ``j`` uses step ``step * max(1, |theta_j|)``; off-diagonal G
    entries move together so G stays symmetric. With ``diagnostics=True`` a
    dict is also returned with the half-step Jacobian and the largest
    relative gap between forward and backward one-sided differences.
    """
    v = theta.to_vector()
    p = len(v)
    base = lambda_map(theta, P0, gamma, resolution)
    J = np.empty((p, p))
    J_half = np.empty((p, p)) if diagnostics else None
    one_sided_gap = 0.0
    for j in range(p):
        h = step * max(1.0, abs(v[j]))
        fp = lambda_map(_shift(theta, j, h), P0, gamma, resolution)
        fm = lambda_map(_shift(theta, j, -h), P0, gamma, resolution)
        J[:, j] = (fp - fm) / (2 * h)
        if diagnostics:
            fph = lambda_map(_shift(theta, j, h / 2), P0, gamma, resolution)
            fmh = lambda_map(_shift(theta, j, -h / 2), P0, gamma, resolution)
            J_half[:, j] = (fph - fmh) / h
            fwd, bwd = (fp - base) / h, (base - fm) / h
            scale = max(np.max(np.abs(J[:, j])), 1e-12)
            one_sided_gap = max(one_sided_gap, float(np.max(np.abs(fwd - bwd)) / scale))
    if not diagnostics:
        return J
    halving = float(np.max(np.abs(J - J_half)) / max(np.max(np.abs(J)), 1e-300))
    info = {
        "J_half": J_half,
        "step_halving_rel": halving,
        "one_sided_gap_rel": one_sided_gap,
        "boundary_unstable": one_sided_gap > 1e-3,
    }
    return J, info


def _project(v, k, floor=1e-10):
    th = Theta.from_vector(v, k)
    lam, V = np.linalg.eigh(0.5 * (th.G + th.G.T))
    G = (V * np.maximum(lam, floor)) @ V.T
    return Theta(th.m, 0.5 * (G + G.T), max(th.r, floor))


def default_init(P0, gamma, starts=5, seed=0):
    """Starting theta from the functional on the atom grid of ``P0``."""
    P0 = _population(P0)
    grid = P0 if isinstance(P0, WeightedMeasure) else discretize(P0)
    return functional_mcd(grid, gamma, starts=starts, seed=seed).theta()


def solve_theta0(P0, gamma, init=None, tol=ROOT_TOL, max_iter=100, resolution=None):
    """Root of the population score by damped Newton iteration.

    The step is halved until ``||Lambda||`` decreases; G is re-projected
    onto the positive definite cone after each step.
    """
    theta = default_init(P0, gamma) if init is None else init
    k = theta.k
    res = lambda_map(theta, P0, gamma, resolution)
    norm = np.max(np.abs(res))
    for it in range(max_iter):
        if norm < tol * 1e-2:
            break
        J = lambda_jacobian(theta, P0, gamma, resolution=resolution)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularJacobianError(
                f"score Jacobian is singular (condition {cond:.3g}); the root is not locally unique"
            )
        step = np.linalg.solve(J, -res)
        t = 1.0
        v = theta.to_vector()
        while True:
            cand = _project(v + t * step, k)
            cand_res = lambda_map(cand, P0, gamma, resolution)
            cand_norm = np.max(np.abs(cand_res))
            if cand_norm < norm or t < 1e-10:
                break
            t /= 2
        if cand_norm >= norm:
            break
        theta, res, norm = cand, cand_res, cand_norm
    if norm >= tol:
        raise ConvergenceError(f"Newton stopped with residual {norm:.3g} after {it + 1} iterations")
    return theta


@dataclass
class CltReport:
    theta0: Theta
    jac: np.ndarray
    M: np.ndarray
    asy_cov: np.ndarray
    cond: float
    gamma: float
    residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self):
        return len(self.jac)

    def to_dict(self):
        k = self.theta0.k
        return {
            "gamma": self.gamma,
            "k": k,
            "p": self.p,
            "vech": "lower triangle, column-major",
            "theta0": {
                "m": self.theta0.m.tolist(),
                "G": self.theta0.G.tolist(),
                "r": self.theta0.r,
                "vector": self.theta0.to_vector().tolist(),
            },
            "sigma0": self.theta0.sigma.tolist(),
            "cutoff_sq": float(self.theta0.r**2),
            "residual": self.residual,
            "jac": self.jac.tolist(),
            "M": self.M.tolist(),
            "asy_cov": self.asy_cov.tolist(),
            "cond": self.cond,
            "diagnostics": {
                k_: v for k_, v in self.diagnostics.items() if not isinstance(v, np.ndarray)
            },
        }


def score_second_moment(theta, P0, gamma, resolution=None):
    """``int psi psi' dP0`` for the flattened score."""
    P0 = _population(P0)
    if isinstance(P0, WeightedMeasure):
        S = psi_matrix(P0.points, theta, gamma)
        return (S * P0.weights[:, None]).T @ S
    cont, (atoms, aw) = P0.parts()
    p = Theta.size(theta.k)
    out = np.zeros((p, p))
    if cont:
        u, w = ellipsoid_nodes(P0, theta.m, theta.G, theta.r, resolution)
        S = _inside_scores(u, gamma)
        out += (S * w[:, None]).T @ S
        out[-1, -1] += gamma**2 * (sum(c for c, _ in cont) - w.sum())
    if len(aw):
        S = psi_matrix(atoms, theta, gamma)
        out += (S * aw[:, None]).T @ S
    return out


def clt_covariance(P0, gamma, theta0=None, init=None, resolution=None):
    """Asymptotic covariance ``J^{-1} M J^{-T}`` of ``sqrt(n)(theta_n - theta0)``."""
    if theta0 is None:
        theta0 = solve_theta0(P0, gamma, init=init, resolution=resolution)
    lam = lambda_map(theta0, P0, gamma, resolution)
    J, diag = lambda_jacobian(theta0, P0, gamma, diagnostics=True, resolution=resolution)
    cond = float(np.linalg.cond(J))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularJacobianError(f"score Jacobian is singular (condition {cond:.3g})")
    M = score_second_moment(theta0, P0, gamma, resolution) - np.outer(lam, lam)
    M = 0.5 * (M + M.T)
    Jinv = np.linalg.inv(J)
    V = Jinv @ M @ Jinv.T
    return CltReport(
        theta0=theta0,
        jac=J,
        M=M,
        asy_cov=0.5 * (V + V.T),
        cond=cond,
        gamma=gamma,
        residual=float(np.max(np.abs(lam))),
        diagnostics=diag,
    )


class BoundaryPointError(ValueError):
    """The point lies on the boundary of the population ellipsoid."""


def influence(x, P0, gamma, report=None):
    """Influence function ``-J^{-1} psi(x, theta0)`` at one or more points.

    Points within the 1e-9 band of the ellipsoid boundary are rejected: the
    limit need not exist there.
    """
    if report is None:
        report = clt_covariance(P0, gamma)
    th = report.theta0
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != th.k:
        X = X.reshape(-1, th.k)
    u = np.linalg.solve(th.G, (X - th.m).T).T
    d2 = np.sum(u * u, axis=1)
    r2 = th.r**2
    if np.any(np.abs(d2 - r2) <= BOUNDARY_TOL * max(1.0, r2)):
        raise BoundaryPointError("influence is not defined on the ellipsoid boundary")
    IF = -np.linalg.solve(report.jac, psi_matrix(X, th, gamma).T).T
    return IF[0] if np.ndim(x) == 1 and IF.shape[0] == 1 else IF
