"""MCD functional on weighted measures and on continuous populations.

A minimizing trimming is an ellipsoid indicator with at most one atom
carrying a fractional weight, and total trimmed mass exactly gamma. Both
solvers search only over trimmings of that form.
"""

import numpy as np
from scipy import optimize

from . import kernels
from .distributions import PopulationSpec, QuadratureGrid, sample
from .linalg import det_eig, is_degenerate, mahalanobis_sq, pds_sqrt
from .model import (
    MASS_TOL,
    CertificateReport,
    DegenerateDataError,
    McdFit,
    TrimmingWeights,
    WeightedMeasure,
    radius,
    trimmed_moments,
)
from .quadrature import ellipsoid_mass, ellipsoid_moments

EXACT_GUARD = 14
BOUNDARY_TOL = 1e-9
FRACTION_TOL = 1e-12


def _check_gamma(gamma):
    if not 0 < gamma <= 1:
        raise ValueError(f"mass gamma={gamma} is unreachable; need 0 < gamma <= 1")


def _fit_from_phi(P, phi, gamma, method, seed=None, n_iter=0, info=None):
    trim = TrimmingWeights.on(P, phi)
    _, T, C = trimmed_moments(P, trim)
    degenerate = is_degenerate(C)
    r = float("nan") if degenerate else radius(P, T, C, gamma)
    fit = McdFit(
        trimming=trim,
        T=T,
        C=C,
        radius=r,
        det=0.0 if degenerate else det_eig(C),
        method=method,
        gamma=gamma,
        seed=seed,
        degenerate=degenerate,
        n_iter=n_iter,
        info=info or {},
    )
    fit.certificate = certify_functional(P, fit, gamma)
    return fit


def functional_mcd(P, gamma, starts=50, seed=0, max_iter=500, restarts=20, return_traces=False):
    """MCD functional by multi-start fractional concentration.

    ``P`` may be a :class:`WeightedMeasure`, a :class:`QuadratureGrid` (its
    atoms are used) or a :class:`PopulationSpec` (dispatched to
    :func:`population_mcd`).
    """
    if isinstance(P, PopulationSpec):
        return population_mcd(P, gamma, starts=starts, seed=seed)
    if isinstance(P, QuadratureGrid):
        P = P.measure
    _check_gamma(gamma)
    rng = np.random.default_rng(seed)
    best, traces, n_singular = None, [], 0
    for s in range(starts):
        for _ in range(restarts):
            phi0 = np.zeros(P.n)
            phi0[rng.choice(P.n, size=min(P.k + 1, P.n), replace=False)] = 1.0
            phi, det, it, dets, status = kernels.concentrate_weighted(
                P.points, P.weights, gamma, phi0, max_iter
            )
            if status != 2:
                break
            n_singular += 1
        else:
            continue
        traces.append(dets)
        if best is None or det < best[1]:
            best = (phi, det, it, s, status)
    if best is None:
        raise DegenerateDataError("every concentration chain hit a singular covariance")
    phi, det, it, s, status = best
    info = {"best_start": s, "status": kernels.STATUS[status], "singular_draws": n_singular}
    fit = _fit_from_phi(P, phi, gamma, "functional", seed=seed, n_iter=it, info=info)
    return (fit, traces) if return_traces else fit


def exact_functional_mcd(P, gamma, guard=EXACT_GUARD):
    """Exhaustive search over trimmings that are 0/1 except for one atom.

    Every subset ``I`` with mass below gamma is completed by one outside atom
    taking the remaining mass; subsets with mass exactly gamma stand alone.
    """
    if isinstance(P, QuadratureGrid):
        P = P.measure
    _check_gamma(gamma)
    n = P.n
    if n > guard:
        raise ValueError(f"{n} atoms exceed the exhaustive guard {guard}")
    X, w = P.points, P.weights
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    mass = masks @ w
    keep = mass <= gamma + MASS_TOL
    masks, mass = masks[keep], mass[keep]
    wx = w[:, None] * X
    wxx = np.einsum("i,ij,il->ijl", w, X, X)
    S1 = masks @ wx
    S2 = np.einsum("mi,ijl->mjl", masks, wxx)

    cands = []  # (det, mask row, boundary atom or -1, fraction)
    exact = np.abs(mass - gamma) <= MASS_TOL
    if exact.any():
        T = S1[exact] / gamma
        C = S2[exact] / gamma - np.einsum("mj,ml->mjl", T, T)
        cands.append((np.linalg.det(C), np.flatnonzero(exact), np.full(exact.sum(), -1), np.zeros(exact.sum())))
    rows = np.flatnonzero(~exact)
    for j in range(n):
        ok = rows[(masks[rows, j] == 0) & (mass[rows] + w[j] >= gamma - MASS_TOL)]
        if ok.size == 0:
            continue
        frac = np.minimum((gamma - mass[ok]) / w[j], 1.0)
        T = (S1[ok] + (frac * w[j])[:, None] * X[j]) / gamma
        C = (S2[ok] + (frac * w[j])[:, None, None] * np.outer(X[j], X[j])) / gamma
        C = C - np.einsum("mj,ml->mjl", T, T)
        cands.append((np.linalg.det(C), ok, np.full(ok.size, j), frac))
    dets = np.concatenate([c[0] for c in cands])
    row = np.concatenate([c[1] for c in cands])
    bnd = np.concatenate([c[2] for c in cands])
    frac = np.concatenate([c[3] for c in cands])
    dets = np.maximum(dets, 0.0)
    best = int(np.argmin(dets))
    phi = masks[row[best]].copy()
    if bnd[best] >= 0:
        phi[bnd[best]] = frac[best]
    return _fit_from_phi(P, phi, gamma, "exact_functional", info={"candidates": len(dets)})


def certify_functional(P, fit, gamma):
    """Mass, sandwich and single-fractional-atom checks for a functional fit."""
    if isinstance(P, QuadratureGrid):
        P = P.measure
    phi = fit.trimming.values
    mass = float(phi @ P.weights)
    mass_ok = abs(mass - gamma) <= 1e-10
    frac = np.flatnonzero((phi > FRACTION_TOL) & (phi < 1 - FRACTION_TOL))
    if fit.degenerate or is_degenerate(fit.C):
        return CertificateReport(len(frac) <= 1, False, mass_ok, 0, float("inf"), len(frac), "degenerate")
    r = radius(P, fit.T, fit.C, gamma)
    r2 = r * r
    tol = BOUNDARY_TOL * max(1.0, r2)
    d2 = mahalanobis_sq(P.points, fit.T, fit.C)
    inner = d2 < r2 - tol
    outer = d2 > r2 + tol
    on = ~inner & ~outer
    viol = [0.0]
    if inner.any():
        viol.append(float(np.max(1.0 - phi[inner])))
    if outer.any():
        viol.append(float(np.max(phi[outer])))
    stray = frac[~on[frac]]
    if stray.size:
        # a fractional atom off the boundary band
        viol.append(float(np.max(np.abs(d2[stray] - r2))))
    max_violation = max(viol)
    sandwich = max_violation <= FRACTION_TOL
    if not on.any():
        case = "no_boundary_mass"
    elif np.all(phi[on] >= 1 - FRACTION_TOL):
        case = "phi_one_on_boundary"
    elif np.all(phi[on] <= FRACTION_TOL):
        case = "phi_zero_on_boundary"
    else:
        case = "single_boundary_atom" if on.sum() == 1 else "mixed_boundary"
    return CertificateReport(
        subsample_size_ok=len(frac) <= 1,
        separating_ellipsoid_ok=sandwich,
        mass_ok=mass_ok,
        boundary_atoms=int(on.sum()),
        max_violation=max_violation,
        fractional_atoms=int(len(frac)),
        boundary_case=case,
    )


# -- continuous populations -----------------------------------------------


class _Population:
    """Continuous part plus atoms of a spec, with the trimming step."""

    def __init__(self, spec, resolution=None):
        self.spec = spec
        self.k = spec.dim
        cont, (self.atoms, self.atom_w) = spec.parts()
        self.cont_weight = sum(w for w, _ in cont)
        self.resolution = resolution

    def mass(self, m, G, r):
        return ellipsoid_mass(self.spec, m, G, r, self.resolution) if self.cont_weight else 0.0

    def trim(self, m, G, gamma):
        """Radius reaching mass gamma around ``(m, G)`` and the atom trimming."""
        Ginv = np.linalg.inv(G)
        d = (
            np.linalg.norm((self.atoms - m) @ Ginv.T, axis=1)
            if len(self.atoms)
            else np.empty(0)
        )
        phi = np.zeros(len(d))
        order = np.argsort(d, kind="stable")
        lo, acc = 0.0, 0.0
        pos = 0
        while pos < len(order):
            dj = d[order[pos]]
            group = [order[pos]]
            pos += 1
            while pos < len(order) and d[order[pos]] == dj:
                group.append(order[pos])
                pos += 1
            cm = self.mass(m, G, dj)
            if cm + acc >= gamma - MASS_TOL:
                r = self._solve(m, G, gamma - acc, lo, dj)
                return r, phi
            rest = gamma - cm - acc
            for i in group:
                take = min(self.atom_w[i], rest)
                if take > 0:
                    phi[i] = 1.0 if take >= self.atom_w[i] else take / self.atom_w[i]
                    rest -= take
                    acc += take
            if rest <= MASS_TOL:
                return float(dj), phi
            lo = dj
        hi = max(lo, 1.0) * 2
        while self.mass(m, G, hi) + acc < gamma - MASS_TOL:
            hi *= 2
            if hi > 1e8:
                raise ValueError(f"mass gamma={gamma} is unreachable")
        return self._solve(m, G, gamma - acc, lo, hi), phi

    def _solve(self, m, G, target, lo, hi):
        f = lambda r: self.mass(m, G, r) - target  # noqa: E731
        if f(hi) <= 0:
            return float(hi)
        if f(lo) >= 0:
            return float(lo)
        return float(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))

    def moments(self, m, G, r, phi):
        """Trimmed mass, mean and covariance for the ellipsoid plus atom trimming."""
        s0, s1, s2 = ellipsoid_moments(self.spec, m, G, r, self.resolution) if self.cont_weight else (
            0.0,
            np.zeros(self.k),
            np.zeros((self.k, self.k)),
        )
        # continuous part: back to x coordinates, x = m + G u
        mass = s0
        sx = s0 * m + G @ s1
        sxx = G @ s2 @ G.T + np.outer(G @ s1, m) + np.outer(m, G @ s1) + s0 * np.outer(m, m)
        if len(self.atoms):
            v = phi * self.atom_w
            mass += v.sum()
            sx = sx + v @ self.atoms
            sxx = sxx + (self.atoms * v[:, None]).T @ self.atoms
        T = sx / mass
        C = sxx / mass - np.outer(T, T)
        return mass, T, 0.5 * (C + C.T)


def population_mcd(spec, gamma, starts=3, seed=0, tol=1e-13, max_iter=3000, init=None, resolution=None):
    """MCD functional of a continuous population (possibly with atoms).

    Runs the concentration map ``(T, C) -> moments of the gamma-mass
    ellipsoid trimming`` to a fixed point from several starts: the location
    and scatter of each continuous component, any ``init`` pairs given, and
    ``starts`` random (k+1)-point draws. The fit with smallest determinant
    wins; ties keep the earliest start.
    """
    _check_gamma(gamma)
    pop = _Population(spec, resolution)
    cont, _ = spec.parts()
    inits = [(c.location, c.scatter) for _, c in cont]
    if init is not None:
        inits = list(init) + inits
    rng = np.random.default_rng(seed)
    for _ in range(starts):
        pts = sample(spec, spec.dim + 1, rng).points
        C0 = np.cov(pts.T, bias=True).reshape(spec.dim, spec.dim)
        if not is_degenerate(C0):
            inits.append((pts.mean(axis=0), C0))
    if not inits:
        raise DegenerateDataError("no usable start for the population solver")

    best = None
    for s, (T, C) in enumerate(inits):
        res = _population_fixed_point(pop, np.asarray(T, float), np.asarray(C, float), gamma, tol, max_iter)
        if res is None:
            continue
        if best is None or res["det"] < best["det"] * (1 - 1e-12):
            best = dict(res, start=s)
    if best is None:
        raise DegenerateDataError("every population concentration chain degenerated")
    fit = McdFit(
        trimming=TrimmingWeights(best["phi"], float(best["phi"] @ pop.atom_w)) if len(pop.atom_w) else None,
        T=best["T"],
        C=best["C"],
        radius=best["r"],
        det=best["det"],
        method="population",
        gamma=gamma,
        seed=seed,
        n_iter=best["iter"],
        info={"best_start": best["start"], "converged": best["converged"], "step": best["step"]},
    )
    fit.certificate = certify_population(spec, fit, gamma, resolution)
    return fit


def _population_fixed_point(pop, T, C, gamma, tol, max_iter):
    dets = []
    step = np.inf
    for it in range(1, max_iter + 1):
        if is_degenerate(C):
            return None
        G = pds_sqrt(C)
        r, phi = pop.trim(T, G, gamma)
        _, T_new, C_new = pop.moments(T, G, r, phi)
        if is_degenerate(C_new):
            return None
        dets.append(det_eig(C_new))
        step = max(np.max(np.abs(T_new - T)), np.max(np.abs(C_new - C)))
        scale = 1.0 + max(np.max(np.abs(T_new)), np.max(np.abs(C_new)))
        T, C = T_new, C_new
        if step <= tol * scale:
            break
    G = pds_sqrt(C)
    r, phi = pop.trim(T, G, gamma)
    return {
        "T": T,
        "C": C,
        "r": r,
        "phi": phi,
        "det": det_eig(C),
        "iter": it,
        "converged": bool(step <= tol * scale),
        "step": float(step),
        "dets": np.array(dets),
    }


def certify_population(spec, fit, gamma, resolution=None):
    """Mass and atom-sandwich checks for a population fit."""
    pop = _Population(spec, resolution)
    G = pds_sqrt(fit.C)
    phi = fit.trimming.values if fit.trimming is not None else np.zeros(0)
    mass = pop.mass(fit.T, G, fit.radius) if pop.cont_weight else 0.0
    # atoms strictly inside count fully; boundary atoms carry their trimming
    d = np.linalg.norm((pop.atoms - fit.T) @ np.linalg.inv(G).T, axis=1) if len(phi) else np.empty(0)
    r2 = fit.radius**2
    tol = BOUNDARY_TOL * max(1.0, r2)
    inner, outer = d**2 < r2 - tol, d**2 > r2 + tol
    mass += float(phi @ pop.atom_w) if len(phi) else 0.0
    viol = [0.0]
    if inner.any():
        viol.append(float(np.max(1 - phi[inner])))
    if outer.any():
        viol.append(float(np.max(phi[outer])))
    frac = np.flatnonzero((phi > FRACTION_TOL) & (phi < 1 - FRACTION_TOL))
    return CertificateReport(
        subsample_size_ok=len(frac) <= 1,
        separating_ellipsoid_ok=max(viol) <= FRACTION_TOL,
        mass_ok=abs(mass - gamma) <= 1e-10,
        boundary_atoms=int((~inner & ~outer).sum()),
        max_violation=max(viol),
        fractional_atoms=len(frac),
        boundary_case="continuous",
    )


def as_measure(P):
    if isinstance(P, QuadratureGrid):
        return P.measure
    if isinstance(P, WeightedMeasure):
        return P
    raise TypeError(f"expected a weighted measure, got {type(P).__name__}")
