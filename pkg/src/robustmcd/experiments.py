"""Monte Carlo harness for the limit behaviour of the estimator.

Every replica draws from its own ``SeedSequence`` stream keyed by
``(seed, n-index, replica)``, so results do not depend on the number of
worker threads; replicas are collected in index order before any reduction.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._io import atomic_write, csv_text, dumps
from .asymptotics import clt_covariance, psi_matrix
from .distributions import PopulationSpec, contaminate, point_mass, sample
from .estimator import cstep_mcd
from .functional import population_mcd

DEFAULT_TOLERANCES = {
    "consistency_final": 0.2,
    "clt_diag_rel": 0.15,
    "normality_alpha": 0.01,
    "centering_se": 3.0,
    "influence_rel": 0.05,
    "influence_abs": 1e-3,
    "contamination": 1e-6,
}


@dataclass
class ExperimentConfig:
    population: PopulationSpec
    gamma: float = 0.5
    n_grid: tuple = (500,)
    replicas: int = 100
    seed: int = 0
    starts: int = 50
    threads: int = 1
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in np.atleast_1d(self.n_grid))
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError(f"n-grid must be strictly increasing, got {self.n_grid}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        self.tolerances = {**DEFAULT_TOLERANCES, **self.tolerances}

    def tol(self, name):
        return self.tolerances[name]

    def to_dict(self):
        # threads are left out: they never change results
        return {
            "population": self.population.to_dict(),
            "gamma": self.gamma,
            "n_grid": list(self.n_grid),
            "replicas": self.replicas,
            "seed": self.seed,
            "starts": self.starts,
            "tolerances": dict(sorted(self.tolerances.items())),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["population"] = PopulationSpec.from_dict(d["population"])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ExperimentReport:
    name: str
    config: dict
    summary: list
    checks: dict
    tables: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self):
        return {
            "experiment": self.name,
            "config": self.config,
            "summary": self.summary,
            "checks": self.checks,
            "passed": self.passed,
            **self.extra,
        }

    def to_json(self):
        return dumps(self.to_dict())

    def write(self, path):
        """Write the JSON report and one ``<stem>_<table>.csv`` per table."""
        atomic_write(path, self.to_json())
        stem = os.path.splitext(os.fspath(path))[0]
        written = [os.fspath(path)]
        for name, rows in sorted(self.tables.items()):
            target = f"{stem}_{name}.csv"
            atomic_write(target, csv_text(rows))
            written.append(target)
        return written


def _check(passed, **values):
    return {"passed": bool(passed), **values}


def _streams(seed, i_n, rep):
    data = np.random.SeedSequence(seed, spawn_key=(i_n, rep, 0))
    solver = np.random.SeedSequence(seed, spawn_key=(i_n, rep, 1))
    return np.random.default_rng(data), int(solver.generate_state(1)[0])


def _replica(cfg, i_n, n, rep):
    rng, solver_seed = _streams(cfg.seed, i_n, rep)
    D = sample(cfg.population, n, rng)
    fit = cstep_mcd(D, cfg.gamma, starts=cfg.starts, seed=solver_seed)
    if not fit.certificate.ok:
        raise RuntimeError(
            f"certificate failed for n={n}, replica={rep}: {fit.certificate.to_dict()}"
        )
    return D, fit


def _map(cfg, fn, items):
    if cfg.threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def _thetas(cfg, i_n, n, post=None):
    def one(rep):
        D, fit = _replica(cfg, i_n, n, rep)
        th = fit.theta().to_vector()
        return th if post is None else (th, post(D, fit))

    return _map(cfg, one, range(cfg.replicas))


def _quantiles(x):
    q = np.quantile(x, [0.1, 0.5, 0.9])
    return {"q10": float(q[0]), "median": float(q[1]), "q90": float(q[2])}


def run_consistency(cfg, report=None):
    """Median error of the sample fit around the population root, per n."""
    report = report or clt_covariance(cfg.population, cfg.gamma)
    theta0 = report.theta0.to_vector()
    summary, rows = [], []
    for i_n, n in enumerate(cfg.n_grid):
        errs = np.array([np.linalg.norm(t - theta0) for t in _thetas(cfg, i_n, n)])
        summary.append({"n": n, **_quantiles(errs)})
        rows += [{"n": n, "replica": i, "error": float(e)} for i, e in enumerate(errs)]
    med = [s["median"] for s in summary]
    checks = {
        "error_decreasing": _check(all(b < a for a, b in zip(med, med[1:])), medians=med),
        "final_error": _check(
            med[-1] < cfg.tol("consistency_final"), value=med[-1], threshold=cfg.tol("consistency_final")
        ),
    }
    return ExperimentReport("consistency", cfg.to_dict(), summary, checks, {"errors": rows})


def run_clt(cfg, report=None):
    """Compare the spread of ``sqrt(n)(theta_n - theta0)`` with the asymptotic covariance.

    Uses the last entry of the n-grid. Location coordinates are screened for
    normality with a Kolmogorov-Smirnov test against ``N(0, V_jj)``.
    """
    report = report or clt_covariance(cfg.population, cfg.gamma)
    n = cfg.n_grid[-1]
    theta0 = report.theta0.to_vector()
    k = report.theta0.k
    Z = np.sqrt(n) * (np.array(_thetas(cfg, len(cfg.n_grid) - 1, n)) - theta0)
    emp = np.atleast_2d(np.cov(Z.T))
    V = report.asy_cov
    diag_rel = np.abs(np.diag(emp) - np.diag(V)) / np.diag(V)
    mean = Z.mean(axis=0)
    se = Z.std(axis=0, ddof=1) / np.sqrt(len(Z))
    pvals = [float(stats.kstest(Z[:, j], "norm", args=(0.0, np.sqrt(V[j, j]))).pvalue) for j in range(k)]
    alpha = cfg.tol("normality_alpha")
    summary = [
        {
            "n": n,
            "coord": j,
            "asy_var": float(V[j, j]),
            "emp_var": float(emp[j, j]),
            "rel_err": float(diag_rel[j]),
            "mean": float(mean[j]),
            "se": float(se[j]),
            "ks_pvalue": pvals[j] if j < k else None,
        }
        for j in range(len(theta0))
    ]
    checks = {
        "diag_within_tol": _check(
            np.all(diag_rel <= cfg.tol("clt_diag_rel")),
            max_rel=float(diag_rel.max()),
            threshold=cfg.tol("clt_diag_rel"),
        ),
        "location_normality": _check(min(pvals) >= alpha, min_pvalue=min(pvals), alpha=alpha),
        "centering": _check(
            np.all(np.abs(mean) <= cfg.tol("centering_se") * se),
            max_z=float(np.max(np.abs(mean) / se)),
            threshold=cfg.tol("centering_se"),
        ),
    }
    rows = [{"replica": i, **{f"z{j}": float(v) for j, v in enumerate(z)}} for i, z in enumerate(Z)]
    extra = {"asy_cov": V.tolist(), "emp_cov": emp.tolist(), "theta0": theta0.tolist()}
    return ExperimentReport("clt", cfg.to_dict(), summary, checks, {"scaled_errors": rows}, extra)


def richardson(eps, quotients):
    """Two-point order-one extrapolation of ``q(eps) = q0 + a * eps`` to ``eps = 0``."""
    (e1, e2), (q1, q2) = eps[-2:], quotients[-2:]
    return (e1 * q2 - e2 * q1) / (e1 - e2)


def run_influence(cfg, xs, eps_list=(0.02, 0.01, 0.005), report=None):
    """Perturbation quotients of the population functional against the influence function."""
    report = report or clt_covariance(cfg.population, cfg.gamma)
    th0 = report.theta0
    k = th0.k
    eps_list = sorted(eps_list, reverse=True)
    if len(eps_list) < 2:
        raise ValueError("need at least two eps values for extrapolation")
    init = [(th0.m, th0.sigma)]
    summary, checks, rows = [], {}, []
    for x in xs:
        x = np.broadcast_to(np.asarray(x, float), (k,)).copy()
        IF = -np.linalg.solve(report.jac, psi_matrix(x, th0, cfg.gamma)[0])
        quots = []
        for eps in eps_list:
            spec = contaminate(cfg.population, point_mass(np.zeros(k)), eps, x)
            fit = population_mcd(spec, cfg.gamma, seed=cfg.seed, init=init)
            if not fit.certificate.ok:
                raise RuntimeError(f"population certificate failed at x={x}, eps={eps}")
            q = (fit.theta().to_vector() - th0.to_vector()) / eps
            quots.append(q)
            rows.append({"x": x.tolist(), "eps": eps, **{f"q{j}": float(v) for j, v in enumerate(q)}})
        R = richardson(eps_list, quots)
        err = np.abs(R - IF)
        allowed = np.maximum(cfg.tol("influence_rel") * np.abs(IF), cfg.tol("influence_abs"))
        label = ",".join(f"{v:g}" for v in x)
        summary.append(
            {
                "x": x.tolist(),
                "influence": IF.tolist(),
                "extrapolated": R.tolist(),
                "abs_err": err.tolist(),
                "rel_err": (err / np.maximum(np.abs(IF), 1e-300)).tolist(),
            }
        )
        checks[f"x=({label})"] = _check(np.all(err <= allowed), max_excess=float(np.max(err - allowed)))
    table = [
        {"x": r["x"][0] if k == 1 else " ".join(map(repr, r["x"])), **{a: b for a, b in r.items() if a != "x"}}
        for r in rows
    ]
    cfgd = {**cfg.to_dict(), "xs": [np.atleast_1d(x).tolist() for x in xs], "eps": list(eps_list)}
    return ExperimentReport("influence", cfgd, summary, checks, {"quotients": table})


def run_von_mises(cfg, report=None):
    """Remainder of the linearization ``theta_n - theta0 - mean(IF(X_i))``."""
    report = report or clt_covariance(cfg.population, cfg.gamma)
    th0 = report.theta0
    v0 = th0.to_vector()

    def mean_if(D, fit):
        S = psi_matrix(D.points, th0, cfg.gamma).mean(axis=0)
        return -np.linalg.solve(report.jac, S)

    summary, rows = [], []
    for i_n, n in enumerate(cfg.n_grid):
        res = _thetas(cfg, i_n, n, post=mean_if)
        stat = np.array([np.sqrt(n) * np.linalg.norm(t - v0 - m) for t, m in res])
        summary.append({"n": n, **_quantiles(stat)})
        rows += [{"n": n, "replica": i, "scaled_remainder": float(s)} for i, s in enumerate(stat)]
    med = [s["median"] for s in summary]
    checks = {"median_decreasing": _check(all(b < a for a, b in zip(med, med[1:])), medians=med)}
    return ExperimentReport("von_mises", cfg.to_dict(), summary, checks, {"remainders": rows})


def _fit_distance(a, b):
    return float(max(np.max(np.abs(a.T - b.T)), np.max(np.abs(a.C - b.C)), abs(a.radius - b.radius)))


def run_contamination(cfg, eps=0.1, shifts=(2.0, 5.0, 10.0, 20.0, 50.0), eps_grid=(0.1, 0.05, 0.01), fixed_shift=5.0):
    """Functional fits of ``(1 - eps) P + eps delta_s`` as the shift ``s`` grows.

    Shifts move the point mass along the first axis. The far-shift fit is
    compared with the fit of P at the raised level ``gamma / (1 - eps)``, and
    a separate run at ``fixed_shift`` tracks the fit as ``eps`` shrinks.
    """
    P, gamma, k = cfg.population, cfg.gamma, cfg.population.dim
    if not eps < gamma < 1 - eps:
        raise ValueError(f"need eps < gamma < 1 - eps, got eps={eps}, gamma={gamma}")
    tol = cfg.tol("contamination")
    base = population_mcd(P, gamma, seed=cfg.seed)
    Q = point_mass(np.zeros(k))
    e1 = np.eye(k)[0]
    init = [(base.T, base.C)]

    def fit_at(e, s):
        fit = population_mcd(contaminate(P, Q, e, s * e1), gamma, seed=cfg.seed, init=init)
        if not fit.certificate.ok:
            raise RuntimeError(f"population certificate failed at eps={e}, shift={s}")
        return fit

    raised = population_mcd(P, gamma / (1 - eps), seed=cfg.seed)
    summary = []
    for s in sorted(shifts):
        fit = fit_at(eps, s)
        summary.append(
            {
                "shift": s,
                "dist_gamma": _fit_distance(fit, base),
                "dist_raised": _fit_distance(fit, raised),
                "det": fit.det,
            }
        )
    exact = [row["dist_raised"] <= tol for row in summary]
    r0 = None
    for i in range(len(exact)):
        if all(exact[i:]):
            r0 = summary[i]["shift"]
            break
    trajectory = []
    for e in sorted(eps_grid, reverse=True):
        fit = fit_at(e, fixed_shift)
        trajectory.append({"eps": e, "shift": fixed_shift, "dist_gamma": _fit_distance(fit, base)})
    d = [t["dist_gamma"] for t in trajectory]
    checks = {
        "far_shift_equals_raised_level": _check(exact[-1], dist=summary[-1]["dist_raised"], threshold=tol),
        "eps_trajectory_monotone": _check(len(d) >= 3 and d[-1] < d[-2] < d[-3], distances=d),
    }
    cfgd = {
        **cfg.to_dict(),
        "eps": eps,
        "shifts": sorted(shifts),
        "eps_grid": sorted(eps_grid, reverse=True),
        "fixed_shift": fixed_shift,
    }
    extra = {"detected_r0": r0, "trajectory": trajectory}
    return ExperimentReport(
        "contamination", cfgd, summary, checks, {"shifts": summary, "eps_trajectory": trajectory}, extra
    )
