import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import point_clouds
from robustmcd.estimator import (
    certify_estimator,
    cstep_mcd,
    exact_mcd,
    greedy_delete,
    subsample_moments,
)
from robustmcd.model import Dataset, DegenerateDataError, McdFit, affine_map, subsample_size

OUTLIER = Dataset([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [10.0, 10.0]])


def brute_force_det(X, h):
    dets = (np.linalg.det(np.atleast_2d(np.cov(X[list(S)].T, bias=True))) for S in itertools.combinations(range(len(X)), h))
    return min(dets)


def test_subsample_moments_square():
    D = Dataset([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    T, C = subsample_moments(D, [0, 1, 2, 3])
    np.testing.assert_allclose(T, [0.5, 0.5])
    np.testing.assert_allclose(C, 0.25 * np.eye(2))


def test_subsample_moments_pair_is_rank_one():
    D = Dataset([[1.0, 2.0], [3.0, -1.0]])
    T, C = subsample_moments(D, [0, 1])
    d = D.points[0] - D.points[1]
    np.testing.assert_allclose(C, 0.25 * np.outer(d, d))
    with pytest.raises(ValueError):
        subsample_moments(D, [])


def test_exact_drops_the_outlier():
    fit = exact_mcd(OUTLIER, 0.75)
    assert fit.subsample.tolist() == [0, 1, 2]
    np.testing.assert_allclose(fit.T, [1 / 3, 1 / 3])
    np.testing.assert_allclose(fit.C, [[2 / 9, -1 / 9], [-1 / 9, 2 / 9]])
    assert fit.det == pytest.approx(1 / 27)
    assert fit.certificate.ok


def test_wrong_subsample_fails_certificate():
    # swapping the outlier in for an interior point leaves that point strictly inside
    D = Dataset([[0.0], [1.0], [2.0], [3.0], [100.0]])
    assert exact_mcd(D, 0.6).certificate.ok
    T, C = subsample_moments(D, [0, 1, 4])
    bad = McdFit(np.array([0, 1, 4]), T, C, np.nan, float(C[0, 0]), "manual", 0.6)
    report = certify_estimator(D, bad, 0.6)
    assert report.subsample_size_ok
    assert not report.separating_ellipsoid_ok


def test_gamma_one_gives_sample_moments(rng):
    X = rng.standard_normal((9, 2))
    for fit in (exact_mcd(X, 1.0), cstep_mcd(X, 1.0, starts=3)):
        np.testing.assert_allclose(fit.T, X.mean(0))
        np.testing.assert_allclose(fit.C, np.cov(X.T, bias=True), atol=1e-14)
        assert fit.certificate.ok


def test_exact_guards():
    with pytest.raises(ValueError, match="cstep_mcd"):
        exact_mcd(np.zeros((21, 1)) + np.arange(21)[:, None], 0.5)
    with pytest.raises(ValueError, match="k\\+1"):
        exact_mcd(np.random.default_rng(0).standard_normal((4, 3)), 0.5)


def test_exact_tie_break_is_lexicographic():
    # symmetric configuration: {0,1} and {2,3} give the same determinant in 1-d
    fit = exact_mcd(Dataset([[-2.0], [-1.0], [1.0], [2.0]]), 0.5)
    assert fit.subsample.tolist() == [0, 1]


def test_degenerate_data_is_flagged():
    X = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    fit = exact_mcd(X, 0.5)
    assert fit.degenerate and fit.det == 0.0
    with pytest.raises(DegenerateDataError):
        cstep_mcd(X, 0.5, starts=3)


@given(point_clouds(min_n=5, max_n=10, max_k=2), st.sampled_from([0.5, 0.6, 0.75]))
def test_exact_matches_brute_force(X, gamma):
    n, k = X.shape
    h = subsample_size(n, gamma)
    if h < k + 1:
        return
    fit = exact_mcd(X, gamma)
    assert fit.det == pytest.approx(brute_force_det(X, h), rel=1e-9)
    assert len(fit.subsample) == h
    assert fit.certificate.ok


@given(point_clouds(min_n=6, max_n=14, max_k=2), st.integers(0, 1000))
def test_cstep_never_beats_exact(X, seed):
    ex = exact_mcd(X, 0.5)
    cs = cstep_mcd(X, 0.5, starts=5, seed=seed)
    assert cs.det >= ex.det * (1 - 1e-12)


@given(st.integers(0, 10**6))
def test_concentration_traces_are_monotone(seed):
    X = np.random.default_rng(seed).standard_normal((60, 2))
    _, traces = cstep_mcd(X, 0.6, starts=5, seed=seed, return_traces=True)
    for dets in traces:
        assert np.all(np.diff(dets) <= 1e-14 * dets[:-1])


def test_cstep_is_deterministic(rng):
    X = rng.standard_normal((200, 3))
    a, b = cstep_mcd(X, 0.5, seed=7), cstep_mcd(X, 0.5, seed=7)
    assert a.to_dict() == b.to_dict()


def test_cstep_recovers_clean_core(rng):
    X = rng.standard_normal((300, 2))
    X[:60] += 25.0
    fit = cstep_mcd(X, 0.5, starts=20, seed=1)
    assert fit.subsample.min() >= 60
    assert fit.certificate.ok


@given(point_clouds(min_n=6, max_n=10, max_k=2), st.integers(0, 10**6))
def test_exact_affine_equivariance(X, seed):
    rng = np.random.default_rng(seed)
    k = X.shape[1]
    A = rng.standard_normal((k, k)) + 3 * np.eye(k)
    if np.linalg.cond(A) > 100:
        return
    b = rng.normal(size=k)
    f0 = exact_mcd(X, 0.5)
    f1 = exact_mcd(affine_map(Dataset(X), A, b), 0.5)
    assert f0.subsample.tolist() == f1.subsample.tolist()
    np.testing.assert_allclose(f1.T, A @ f0.T + b, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(f1.C, A @ f0.C @ A.T, rtol=1e-8, atol=1e-10)


def test_greedy_delete_drops_far_point_first():
    X = np.vstack([np.random.default_rng(0).standard_normal((10, 2)), [[30.0, 30.0]]])
    S = greedy_delete(Dataset(X), np.arange(11), 10)
    assert 10 not in S


@given(point_clouds(min_n=5, max_n=25), st.integers(0, 1000))
def test_greedy_delete_is_monotone(X, seed):
    n, k = X.shape
    target = int(np.random.default_rng(seed).integers(k + 1, n + 1))
    S, dets = greedy_delete(Dataset(X), np.arange(n), target, return_dets=True)
    assert len(S) == target
    assert np.all(np.diff(dets) <= 1e-12 * dets[:-1])


def test_greedy_delete_identity_and_errors():
    X = np.random.default_rng(1).standard_normal((6, 2))
    assert greedy_delete(Dataset(X), [0, 1, 2, 3], 4).tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        greedy_delete(Dataset(X), [0, 1, 2], 2)
