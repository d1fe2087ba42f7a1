"""Self-check suite run by ``robustmcd verify``.

Each check draws its own random instances from a fixed seed and returns a
:class:`CheckResult`; ``quick=True`` shrinks instance counts for a smoke run.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .estimator import certify_estimator, cstep_mcd, exact_mcd, greedy_delete
from .functional import certify_functional, exact_functional_mcd, functional_mcd
from .linalg import det_eig, det_trace_test, scatter_about
from .model import Dataset, WeightedMeasure, affine_map


@dataclass
class CheckResult:
    name: str
    passed: bool
    trials: int
    failures: int
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.failures = int(self.failures)

    def to_dict(self):
        return asdict(self)


def random_pds(rng, k, cond_max=50.0):
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    lam = np.exp(rng.uniform(0, np.log(cond_max), k))
    return (Q * lam) @ Q.T


def random_affine(rng, k, cond_max=100.0):
    """Random ``A`` with condition number below ``cond_max`` and random ``b``."""
    Q1, _ = np.linalg.qr(rng.standard_normal((k, k)))
    Q2, _ = np.linalg.qr(rng.standard_normal((k, k)))
    s = np.exp(rng.uniform(0, np.log(cond_max) * 0.99, k))
    return (Q1 * s) @ Q2, rng.normal(scale=5.0, size=k)


def check_oracle_agreement(trials=200, seed=0, n=12, k=2, gamma=0.5, starts=100):
    rng = np.random.default_rng(seed)
    agree = beaten = cert_fail = 0
    for t in range(trials):
        D = Dataset(rng.standard_normal((n, k)))
        ex = exact_mcd(D, gamma)
        cs = cstep_mcd(D, gamma, starts=starts, seed=t)
        rel = (cs.det - ex.det) / ex.det
        agree += abs(rel) <= 1e-9
        beaten += rel < -1e-9
        cert_fail += not ex.certificate.ok
    passed = agree >= 0.9 * trials and beaten == 0 and cert_fail == 0
    return CheckResult(
        "oracle_agreement",
        passed,
        trials,
        trials - agree + beaten,
        f"agree={agree}, cstep_below_exact={beaten}, exact_certificate_failures={cert_fail}",
    )


def check_affine_equivariance(trials=100, seed=1, n=10, k=2, gamma=0.5):
    rng = np.random.default_rng(seed)
    worst, fails = 0.0, 0
    for _ in range(trials):
        D = Dataset(rng.standard_normal((n, k)))
        A, b = random_affine(rng, k)
        f0 = exact_mcd(D, gamma)
        f1 = exact_mcd(affine_map(D, A, b), gamma)
        T, C = A @ f0.T + b, A @ f0.C @ A.T
        err = max(
            np.max(np.abs(f1.T - T)) / max(1.0, np.max(np.abs(T))),
            np.max(np.abs(f1.C - C)) / np.max(np.abs(C)),
        )
        worst = max(worst, err)
        fails += err > 1e-8
    return CheckResult("affine_equivariance", fails == 0, trials, fails, f"max_rel_err={worst:.3g}")


def check_trace_lemma(trials=1000, seed=2):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(trials):
        k = int(rng.integers(1, 5))
        S2 = random_pds(rng, k)
        R = np.linalg.cholesky(S2)
        d = rng.uniform(0.05, 2.0, k)
        d *= rng.uniform(0.2, 0.999) * k / d.sum()
        S1 = (R * d) @ R.T
        w = det_trace_test(S1, S2)
        fails += not (w.trace < 0 and w.det1 < w.det2)
    return CheckResult("trace_determinant_lemma", fails == 0, trials, fails)


def check_greedy_delete(trials=500, seed=3):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(trials):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 3, 30))
        D = Dataset(rng.standard_normal((n, k)))
        try:
            greedy_delete(D, np.arange(n), int(rng.integers(k + 1, n)))
        except AssertionError:
            fails += 1
    return CheckResult("greedy_delete_monotone", fails == 0, trials, fails)


def check_minmean(trials=500, seed=4):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(trials):
        k = int(rng.integers(1, 4))
        X = rng.standard_normal((int(rng.integers(k + 2, 40)), k))
        a = X.mean(axis=0) + rng.normal(scale=rng.uniform(0.01, 2.0), size=k)
        fails += not det_eig(scatter_about(X, a)) > det_eig(scatter_about(X, X.mean(axis=0)))
    return CheckResult("minimum_at_mean", fails == 0, trials, fails)


def check_functional(trials=200, seed=5, n=10, k=2, gamma=0.5, starts=50):
    rng = np.random.default_rng(seed)
    agree = cert_fail = 0
    for t in range(trials):
        P = WeightedMeasure.normalized(rng.standard_normal((n, k)), rng.uniform(0.2, 1.0, n))
        fit = functional_mcd(P, gamma, starts=starts, seed=t)
        ex = exact_functional_mcd(P, gamma)
        cert_fail += not certify_functional(P, fit, gamma).ok
        agree += abs(fit.det - ex.det) <= 1e-9 * ex.det
    passed = cert_fail == 0 and agree >= 0.9 * trials
    return CheckResult(
        "functional_characterization",
        passed,
        trials,
        cert_fail + trials - agree,
        f"agree={agree}, certificate_failures={cert_fail}",
    )


def check_population_oracles():
    from .asymptotics import solve_theta0
    from .distributions import discretize, gaussian

    c = stats.norm.ppf(0.75)
    s1 = (0.5 - 2 * c * stats.norm.pdf(c)) / 0.5
    th1 = solve_theta0(discretize(gaussian(1)), 0.5)
    e1 = max(abs(th1.sigma[0, 0] - s1), abs(th1.G[0, 0] * th1.r - c))
    q = 2 * np.log(2)
    s2 = stats.chi2.cdf(q, 4) / 0.5
    th2 = solve_theta0(discretize(gaussian(2)), 0.5)
    e2 = max(np.max(np.abs(th2.sigma - s2 * np.eye(2))), abs(th2.sigma[0, 0] * th2.r**2 - q))
    return CheckResult(
        "population_oracles",
        e1 <= 1e-6 and e2 <= 1e-5,
        2,
        int(e1 > 1e-6) + int(e2 > 1e-5),
        f"k1_err={e1:.3g}, k2_err={e2:.3g}",
    )


def check_certificates(trials=100, seed=6):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(trials):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(2 * k + 3, 14))
        D = Dataset(rng.standard_normal((n, k)))
        gamma = float(rng.uniform(0.5, 0.9))
        fails += not certify_estimator(D, exact_mcd(D, gamma), gamma).ok
    return CheckResult("exact_certificates", fails == 0, trials, fails)


def run_suite(quick=False):
    """Run every check; ``quick`` divides instance counts by ten."""
    f = 10 if quick else 1
    return [
        check_oracle_agreement(trials=200 // f),
        check_certificates(trials=100 // f),
        check_affine_equivariance(trials=100 // f),
        check_trace_lemma(trials=1000 // f),
        check_greedy_delete(trials=500 // f),
        check_minmean(trials=500 // f),
        check_functional(trials=200 // f),
        check_population_oracles(),
    ]
