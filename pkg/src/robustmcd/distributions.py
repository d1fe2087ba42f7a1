"""Population inputs: elliptical families, mixtures, atoms, samplers and grids.

Every continuous family here is an affine image ``A Z + mu`` of a spherical
standard variable ``Z``, with ``A`` the symmetric square root of the
scatter. That makes densities, radial quantiles and grids uniform across
families.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from .linalg import as_pds, pds_sqrt
from .model import Dataset, WeightedMeasure

ELLIPTICAL = ("gaussian", "student_t", "uniform_ball")
FAMILIES = ELLIPTICAL + ("mixture", "gaussian_mixture", "custom_atoms")
TAIL_MASS = 1e-8
MAX_GRID_DIM = 3
DEFAULT_RESOLUTION = {1: (2001,), 2: (120, 128), 3: (60, 32, 64)}


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """A population distribution on R^k.

    ``components`` holds ``(weight, PopulationSpec)`` pairs for mixtures;
    ``atoms``/``atom_weights`` describe ``custom_atoms``.
    """

    family: str
    dim: int
    location: Optional[np.ndarray] = None
    scatter: Optional[np.ndarray] = None
    df: Optional[float] = None
    components: tuple = ()
    atoms: Optional[np.ndarray] = None
    atom_weights: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}; expected one of {FAMILIES}")
        k = int(self.dim)
        if k < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "dim", k)
        if fam in ELLIPTICAL:
            loc = np.zeros(k) if self.location is None else np.asarray(self.location, float)
            sc = np.eye(k) if self.scatter is None else np.atleast_2d(np.asarray(self.scatter, float))
            if loc.shape != (k,):
                raise ValueError(f"location must have length {k}")
            object.__setattr__(self, "location", loc)
            object.__setattr__(self, "scatter", as_pds(sc, "scatter"))
            if fam == "student_t" and not (self.df is not None and self.df > 0):
                raise ValueError("student_t needs df > 0")
        elif fam in ("mixture", "gaussian_mixture"):
            comps = tuple((float(w), c) for w, c in self.components)
            if not comps:
                raise ValueError("a mixture needs components")
            ws = np.array([w for w, _ in comps])
            if np.any(ws < 0) or abs(ws.sum() - 1) > 1e-12:
                raise ValueError("mixture weights must be non-negative and sum to 1")
            for _, c in comps:
                if c.dim != k:
                    raise ValueError("mixture components must share the dimension")
                if fam == "gaussian_mixture" and c.family != "gaussian":
                    raise ValueError("gaussian_mixture components must be gaussian")
            object.__setattr__(self, "components", comps)
        else:
            pts = np.asarray(self.atoms, dtype=float).reshape(-1, k)
            w = (
                np.full(len(pts), 1.0 / len(pts))
                if self.atom_weights is None
                else np.asarray(self.atom_weights, float)
            )
            WeightedMeasure(pts, w)  # validation
            object.__setattr__(self, "atoms", pts)
            object.__setattr__(self, "atom_weights", w)

    # -- structure -----------------------------------------------------

    def parts(self):
        """Flatten into ``(continuous, atoms)``.

        ``continuous`` is a list of ``(weight, elliptical spec)``; ``atoms`` is
        a ``(points, weights)`` pair with weights already multiplied through.
        """
        if "parts" in self._cache:
            return self._cache["parts"]
        cont, pts, ws = [], [], []

        def walk(spec, scale):
            if scale == 0:
                return
            if spec.family in ELLIPTICAL:
                cont.append((scale, spec))
            elif spec.family == "custom_atoms":
                pts.append(spec.atoms)
                ws.append(scale * spec.atom_weights)
            else:
                for w, c in spec.components:
                    walk(c, scale * w)

        walk(self, 1.0)
        atoms = (
            (np.vstack(pts), np.concatenate(ws))
            if pts
            else (np.empty((0, self.dim)), np.empty(0))
        )
        self._cache["parts"] = (cont, atoms)
        return cont, atoms

    @property
    def root_scatter(self):
        if "A" not in self._cache:
            self._cache["A"] = pds_sqrt(self.scatter)
        return self._cache["A"]

    def density(self, x):
        """Density of the continuous part at the rows of ``x`` (atoms excluded)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cont, _ = self.parts()
        out = np.zeros(len(x))
        for w, c in cont:
            out += w * np.exp(_log_density(c, x))
        return out

    # -- serialization -------------------------------------------------

    def to_dict(self):
        d = {"family": self.family, "dim": self.dim}
        if self.family in ELLIPTICAL:
            d["location"] = self.location.tolist()
            d["scatter"] = self.scatter.tolist()
            if self.df is not None:
                d["df"] = float(self.df)
        elif self.family == "custom_atoms":
            d["atoms"] = self.atoms.tolist()
            d["weights"] = self.atom_weights.tolist()
        else:
            d["components"] = [{"weight": w, "spec": c.to_dict()} for w, c in self.components]
        return d

    @classmethod
    def from_dict(cls, d):
        fam = d["family"]
        dim = int(d.get("dim") or len(d.get("location") or d["atoms"][0]))
        if fam in ("mixture", "gaussian_mixture"):
            comps = tuple((c["weight"], cls.from_dict(c["spec"])) for c in d["components"])
            return cls(fam, dim, components=comps)
        if fam == "custom_atoms":
            return cls(fam, dim, atoms=d["atoms"], atom_weights=d.get("weights"))
        return cls(fam, dim, location=d.get("location"), scatter=d.get("scatter"), df=d.get("df"))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def gaussian(dim, location=None, scatter=None):
    return PopulationSpec("gaussian", dim, location, scatter)


def student_t(dim, df, location=None, scatter=None):
    return PopulationSpec("student_t", dim, location, scatter, df=df)


def uniform_ball(dim, location=None, scatter=None):
    return PopulationSpec("uniform_ball", dim, location, scatter)


def mixture(parts):
    parts = [(float(w), c) for w, c in parts]
    fam = "gaussian_mixture" if all(c.family == "gaussian" for _, c in parts) else "mixture"
    return PopulationSpec(fam, parts[0][1].dim, components=tuple(parts))


def custom_atoms(points, weights=None):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return PopulationSpec("custom_atoms", pts.shape[1], atoms=pts, atom_weights=weights)


def point_mass(x):
    return custom_atoms(np.atleast_1d(np.asarray(x, float))[None, :])


def contaminate(spec, q_spec, eps, shift=None):
    """The mixture ``(1 - eps) P + eps Q(. - shift)``."""
    if not 0 <= eps < 0.5:
        raise ValueError(f"eps must lie in [0, 1/2), got {eps}")
    if q_spec.dim != spec.dim:
        raise ValueError("P and Q must share the dimension")
    if eps == 0:
        return spec
    shift = np.zeros(spec.dim) if shift is None else np.broadcast_to(np.asarray(shift, float), (spec.dim,))
    return mixture([(1 - eps, spec), (eps, translate(q_spec, shift))])


def translate(spec, shift):
    shift = np.asarray(shift, dtype=float)
    if spec.family in ELLIPTICAL:
        return PopulationSpec(spec.family, spec.dim, spec.location + shift, spec.scatter, spec.df)
    if spec.family == "custom_atoms":
        return custom_atoms(spec.atoms + shift, spec.atom_weights)
    return PopulationSpec(
        spec.family, spec.dim, components=tuple((w, translate(c, shift)) for w, c in spec.components)
    )


# -- spherical standard families ----------------------------------------


def _log_std_density(spec, r2):
    k = spec.dim
    if spec.family == "gaussian":
        return -0.5 * r2 - 0.5 * k * np.log(2 * np.pi)
    if spec.family == "student_t":
        nu = spec.df
        c = special.gammaln((nu + k) / 2) - special.gammaln(nu / 2) - 0.5 * k * np.log(nu * np.pi)
        return c - 0.5 * (nu + k) * np.log1p(r2 / nu)
    log_vol = 0.5 * k * np.log(np.pi) - special.gammaln(k / 2 + 1)
    return np.where(r2 <= 1.0, -log_vol, -np.inf)


def _log_density(spec, x):
    A = spec.root_scatter
    z = np.linalg.solve(A, (x - spec.location).T).T
    r2 = np.sum(z * z, axis=1)
    return _log_std_density(spec, r2) - np.linalg.slogdet(A)[1]


def radial_ppf(spec, u):
    """Quantile function of ``||Z||`` for the standard spherical variable."""
    k = spec.dim
    u = np.asarray(u, dtype=float)
    if spec.family == "gaussian":
        return np.sqrt(stats.chi2.ppf(u, k))
    if spec.family == "student_t":
        return np.sqrt(k * stats.f.ppf(u, k, spec.df))
    return u ** (1.0 / k)


def radial_cdf(spec, rho):
    k = spec.dim
    rho = np.asarray(rho, dtype=float)
    if spec.family == "gaussian":
        return stats.chi2.cdf(rho**2, k)
    if spec.family == "student_t":
        return stats.f.cdf(rho**2 / k, k, spec.df)
    return np.clip(rho, 0, 1) ** k


def _marginal_ppf(spec, u):
    if spec.family == "gaussian":
        return stats.norm.ppf(u)
    if spec.family == "student_t":
        return stats.t.ppf(u, spec.df)
    return 2.0 * u - 1.0


def _standard_draws(spec, n, rng):
    k = spec.dim
    if spec.family == "gaussian":
        return rng.standard_normal((n, k))
    if spec.family == "student_t":
        z = rng.standard_normal((n, k))
        return z / np.sqrt(rng.chisquare(spec.df, size=n) / spec.df)[:, None]
    z = rng.standard_normal((n, k))
    z /= np.linalg.norm(z, axis=1)[:, None]
    return z * rng.random(n)[:, None] ** (1.0 / k)


def _draw(spec, n, rng):
    if spec.family in ELLIPTICAL:
        return spec.location + _standard_draws(spec, n, rng) @ spec.root_scatter.T
    if spec.family == "custom_atoms":
        idx = rng.choice(len(spec.atoms), size=n, p=spec.atom_weights)
        return spec.atoms[idx]
    ws = np.array([w for w, _ in spec.components])
    labels = rng.choice(len(ws), size=n, p=ws / ws.sum())
    out = np.empty((n, spec.dim))
    for j, (_, comp) in enumerate(spec.components):
        sel = labels == j
        out[sel] = _draw(comp, int(sel.sum()), rng)
    return out


def sample(spec, n, seed):
    """``n`` i.i.d. draws from ``spec``; identical for identical seeds.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Dataset(_draw(spec, int(n), rng))


# -- quadrature grids -----------------------------------------------------


@dataclass(frozen=True)
class QuadratureGrid:
    """Atom discretization of a population, plus the spec it came from."""

    measure: WeightedMeasure
    spec: PopulationSpec
    resolution: tuple
    coverage_radius: float
    tail_mass: float

    @property
    def points(self):
        return self.measure.points

    @property
    def weights(self):
        return self.measure.weights


def _standard_grid(spec, resolution, tail):
    """Nodes and weights for the standard spherical variable of ``spec``."""
    k = spec.dim
    if k == 1:
        (n,) = resolution
        u = tail / 2 + (np.arange(n) + 0.5) * (1 - tail) / n
        z = _marginal_ppf(spec, u)
        return z[:, None], np.full(n, 1.0 / n), float(_marginal_ppf(spec, 1 - tail / 2))
    # radial rule in probability coordinates: Gauss-Legendre on [0, 1 - tail]
    n_r = resolution[0]
    g, gw = np.polynomial.legendre.leggauss(n_r)
    u = (g + 1) * (1 - tail) / 2
    rho = radial_ppf(spec, u)
    wr = gw * (1 - tail) / 2
    if k == 2:
        n_t = resolution[1]
        t = (np.arange(n_t) + 0.5) * 2 * np.pi / n_t
        dirs = np.column_stack([np.cos(t), np.sin(t)])
        dw = np.full(n_t, 1.0 / n_t)
    else:
        n_p, n_a = resolution[1], resolution[2]
        c, cw = np.polynomial.legendre.leggauss(n_p)
        a = (np.arange(n_a) + 0.5) * 2 * np.pi / n_a
        s = np.sqrt(1 - c**2)
        dirs = np.column_stack(
            [np.outer(s, np.cos(a)).ravel(), np.outer(s, np.sin(a)).ravel(), np.repeat(c, n_a)]
        )
        dw = np.outer(cw / 2, np.full(n_a, 1.0 / n_a)).ravel()
    nodes = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, k)
    weights = np.outer(wr, dw).ravel()
    return nodes, weights / weights.sum(), float(radial_ppf(spec, 1 - tail))


def discretize(spec, resolution=None, tail_mass=TAIL_MASS):
    """Weighted-atom discretization of ``spec`` (k <= 3).

    Continuous families use a product rule in the radial probability
    coordinate times uniform directions, mapped through ``A z + mu``;
    mixtures take the union of component grids and keep atoms as atoms.
    """
    k = spec.dim
    if k > MAX_GRID_DIM:
        raise ValueError(f"quadrature grids are limited to k <= {MAX_GRID_DIM}, got {k}")
    res = tuple(np.atleast_1d(resolution)) if resolution is not None else DEFAULT_RESOLUTION[k]
    if len(res) != k:
        raise ValueError(f"resolution for k={k} needs {k} entries, got {res}")
    cont, (apts, aw) = spec.parts()
    pts, ws = [apts], [aw]
    cover = 0.0
    for w, c in cont:
        z, zw, rad = _standard_grid(c, res, tail_mass)
        pts.append(c.location + z @ c.root_scatter.T)
        ws.append(w * zw)
        cover = max(cover, rad * np.linalg.eigvalsh(c.scatter)[-1] ** 0.5)
    P = WeightedMeasure.normalized(np.vstack(pts), np.concatenate(ws))
    return QuadratureGrid(P, spec, tuple(int(r) for r in res), float(cover), tail_mass)
