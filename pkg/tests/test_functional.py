import itertools

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from robustmcd.distributions import contaminate, discretize, gaussian, mixture, point_mass, student_t
from robustmcd.estimator import cstep_mcd, exact_mcd
from robustmcd.functional import (
    certify_functional,
    exact_functional_mcd,
    functional_mcd,
    population_mcd,
)
from robustmcd.model import McdFit, TrimmingWeights, WeightedMeasure, affine_map, trimmed_moments

# truncated-normal oracle at gamma = 1/2
C1 = stats.norm.ppf(0.75)
SIGMA1 = (0.5 - 2 * C1 * stats.norm.pdf(C1)) / 0.5
# chi-square oracle in two dimensions at gamma = 1/2
Q2 = 2 * np.log(2)
SIGMA2 = stats.chi2.cdf(Q2, 4) / 0.5


def random_measure(seed, n=10, k=2):
    rng = np.random.default_rng(seed)
    return WeightedMeasure.normalized(rng.standard_normal((n, k)), rng.uniform(0.2, 1.0, n))


def test_frozen_oracles():
    assert C1 == pytest.approx(0.6744897501960817, abs=1e-15)
    assert SIGMA1 == pytest.approx(0.1426518355, abs=1e-10)
    assert SIGMA2 == pytest.approx(0.3068528194, abs=1e-10)


def test_four_uniform_atoms_pick_best_pair():
    X = np.array([[0.0], [1.0], [1.5], [4.0]])
    P = WeightedMeasure(X, np.full(4, 0.25))
    fit = exact_functional_mcd(P, 0.5)
    best = min(np.var(X[list(S)]) for S in itertools.combinations(range(4), 2))
    assert best == 0.0625
    assert fit.det == pytest.approx(best, rel=1e-12)
    assert fit.trimming.values.tolist() == [0.0, 1.0, 1.0, 0.0]
    assert fit.certificate.ok
    assert fit.certificate.fractional_atoms == 0


def test_gamma_one_is_full_moments(rng):
    X = rng.standard_normal((8, 2))
    P = WeightedMeasure(X, np.full(8, 1 / 8))
    for fit in (exact_functional_mcd(P, 1.0), functional_mcd(P, 1.0, starts=3)):
        np.testing.assert_allclose(fit.T, X.mean(0))
        np.testing.assert_allclose(fit.C, np.cov(X.T, bias=True), atol=1e-14)


def test_uniform_integer_case_matches_estimator(rng):
    X = rng.standard_normal((12, 2))
    fit = exact_functional_mcd(WeightedMeasure(X, np.full(12, 1 / 12)), 0.5)
    ex = exact_mcd(X, 0.5)
    assert fit.det == pytest.approx(ex.det, rel=1e-10)
    assert fit.certificate.fractional_atoms == 0
    np.testing.assert_array_equal(np.flatnonzero(fit.trimming.values > 0.5), ex.subsample)


def test_uniform_non_integer_has_one_fraction(rng):
    X = rng.standard_normal((11, 2))
    P = WeightedMeasure(X, np.full(11, 1 / 11))
    fit = functional_mcd(P, 0.5, starts=30)
    phi = fit.trimming.values
    frac = fit.trimming.fractional()
    assert len(frac) == 1
    assert phi[frac[0]] == pytest.approx(11 * 0.5 - 5)
    assert phi @ P.weights == pytest.approx(0.5, abs=1e-12)


@given(st.integers(0, 10**6), st.sampled_from([0.3, 0.5, 0.7]))
def test_functional_certificate_and_oracle(seed, gamma):
    P = random_measure(seed)
    # a line through two atoms must carry less than gamma
    assume(np.sort(P.weights)[-2:].sum() < gamma)
    fit = functional_mcd(P, gamma, starts=40, seed=seed)
    rep = certify_functional(P, fit, gamma)
    assert rep.ok, rep
    assert rep.fractional_atoms <= 1
    ex = exact_functional_mcd(P, gamma)
    assert certify_functional(P, ex, gamma).ok
    assert fit.det >= ex.det * (1 - 1e-9)


def test_handbuilt_interior_violation():
    P = WeightedMeasure(np.array([[0.0], [0.1], [-0.1], [5.0], [-5.0]]), np.full(5, 0.2))
    ok = exact_functional_mcd(P, 0.6)
    assert ok.certificate.ok
    phi = np.array([0.5, 1.0, 1.0, 0.5, 0.0])
    _, T, C = trimmed_moments(P, phi)
    bad = McdFit(TrimmingWeights.on(P, phi), T, C, np.nan, float(C[0, 0]), "manual", 0.6)
    assert not certify_functional(P, bad, 0.6).separating_ellipsoid_ok


def test_exact_guard():
    with pytest.raises(ValueError):
        exact_functional_mcd(random_measure(0, n=15), 0.5)


@given(st.integers(0, 10**6))
def test_functional_affine_equivariance(seed):
    rng = np.random.default_rng(seed)
    P = random_measure(seed, n=9)
    A = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    b = rng.normal(size=2)
    f0 = exact_functional_mcd(P, 0.5)
    f1 = exact_functional_mcd(affine_map(P, A, b), 0.5)
    np.testing.assert_allclose(f1.T, A @ f0.T + b, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(f1.C, A @ f0.C @ A.T, rtol=1e-8, atol=1e-10)


@given(st.integers(0, 10**6))
def test_weighted_traces_are_monotone(seed):
    P = random_measure(seed, n=60)
    _, traces = functional_mcd(P, 0.5, starts=5, seed=seed, return_traces=True)
    for dets in traces:
        assert np.all(np.diff(dets) <= 1e-12 * dets[:-1])


GAP_GAMMA = 0.5033  # n * gamma is never an integer on the grid below


def test_estimator_functional_gap_shrinks():
    gaps = []
    rng = np.random.default_rng(4)
    for n in (50, 100, 200, 400):
        g = []
        for _ in range(8):
            X = rng.standard_normal((n, 2))
            est = cstep_mcd(X, GAP_GAMMA, starts=30, seed=1)
            fun = functional_mcd(WeightedMeasure(X, np.full(n, 1 / n)), GAP_GAMMA, starts=30, seed=1)
            g.append(abs(est.det - fun.det))
        gaps.append(np.median(g))
    assert gaps[-1] < gaps[0]


def test_population_gaussian_oracles():
    f1 = population_mcd(gaussian(1), 0.5)
    assert f1.C[0, 0] == pytest.approx(SIGMA1, abs=1e-12)
    assert f1.radius * np.sqrt(f1.C[0, 0]) == pytest.approx(C1, abs=1e-12)
    f2 = population_mcd(gaussian(2), 0.5)
    np.testing.assert_allclose(f2.C, SIGMA2 * np.eye(2), atol=1e-12)
    assert f2.radius**2 * f2.C[0, 0] == pytest.approx(Q2, abs=1e-11)
    assert f1.certificate.ok and f2.certificate.ok


def test_population_is_affine_equivariant():
    S = np.array([[2.0, 0.6], [0.6, 1.0]])
    fit = population_mcd(gaussian(2, [1.0, -1.0], S), 0.5)
    np.testing.assert_allclose(fit.T, [1.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(fit.C, SIGMA2 * S, atol=1e-11)


def test_population_matches_fine_grid():
    spec = student_t(1, 4.0)
    pop = population_mcd(spec, 0.5)
    grid = functional_mcd(discretize(spec, resolution=(4001,)), 0.5, starts=5)
    assert grid.C[0, 0] == pytest.approx(pop.C[0, 0], rel=2e-3)


def test_far_contamination_equals_raised_level():
    eps = 0.1
    far = population_mcd(contaminate(gaussian(1), point_mass([0.0]), eps, [40.0]), 0.5)
    raised = population_mcd(gaussian(1), 0.5 / (1 - eps))
    assert far.trimming.values.tolist() == [0.0]
    np.testing.assert_allclose(far.C, raised.C, atol=1e-12)
    assert far.radius == pytest.approx(raised.radius, abs=1e-10)


def test_atom_at_center_gets_full_weight():
    spec = mixture([(0.9, gaussian(1)), (0.1, point_mass([0.0]))])
    fit = population_mcd(spec, 0.5)
    assert fit.trimming.values.tolist() == [1.0]
    assert fit.certificate.ok
