import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robustmcd.model import (
    CsvFormatError,
    Dataset,
    Ellipsoid,
    Theta,
    TrimmingWeights,
    WeightedMeasure,
    affine_map,
    radius,
    read_csv,
    subsample_size,
    trimmed_moments,
)


@pytest.mark.parametrize(
    "n, gamma, h", [(10, 0.5, 5), (11, 0.5, 6), (10, 0.75, 8), (10, 1.0, 10), (3, 0.1, 1), (100, 0.29, 29)]
)
def test_subsample_size(n, gamma, h):
    assert subsample_size(n, gamma) == h


@pytest.mark.parametrize("gamma", [0.0, -0.1, 1.01])
def test_subsample_size_rejects_gamma(gamma):
    with pytest.raises(ValueError):
        subsample_size(10, gamma)


def test_dataset_validation():
    assert Dataset([1.0, 2.0, 3.0]).k == 1
    with pytest.raises(ValueError):
        Dataset([[1.0, np.inf]])
    D = Dataset([[0.0, 1.0]])
    with pytest.raises(ValueError):
        D.points[0, 0] = 3.0


def test_weighted_measure_validation():
    with pytest.raises(ValueError):
        WeightedMeasure([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        WeightedMeasure([[0.0], [1.0]], [1.0, 0.0])
    P = WeightedMeasure.normalized([[0.0], [1.0]], [1.0, 3.0])
    assert P.weights.tolist() == [0.25, 0.75]


def test_trimmed_moments_full_weights_match_numpy(rng):
    X = rng.standard_normal((20, 3))
    mass, T, C = trimmed_moments(Dataset(X), np.ones(20))
    assert mass == pytest.approx(1.0)
    np.testing.assert_allclose(T, X.mean(0))
    np.testing.assert_allclose(C, np.cov(X.T, bias=True), atol=1e-14)


def test_trimmed_moments_rejects_out_of_range():
    with pytest.raises(ValueError):
        trimmed_moments(Dataset(np.zeros((3, 1))), [0.5, 1.5, 0.0])


def test_trimming_weights_fractional():
    P = WeightedMeasure(np.arange(4.0), np.full(4, 0.25))
    phi = TrimmingWeights.on(P, [1.0, 0.4, 0.0, 1.0])
    assert phi.mass == pytest.approx(0.6)
    assert phi.fractional().tolist() == [1]


def test_radius_counts_ties_together():
    # the two atoms at distance 1 enter together
    P = WeightedMeasure([[0.0], [1.0], [-1.0], [3.0]], [0.25] * 4)
    assert radius(P, [0.0], [[1.0]], 0.5) == 1.0
    assert radius(P, [0.0], [[1.0]], 0.75) == 1.0
    assert radius(P, [0.0], [[1.0]], 0.76) == 3.0


@given(st.integers(5, 40), st.floats(0.05, 1.0), st.integers(0, 1000))
def test_radius_covers_gamma_mass(n, gamma, seed):
    X = np.random.default_rng(seed).standard_normal((n, 2))
    r = radius(Dataset(X), np.zeros(2), np.eye(2), gamma)
    d = np.linalg.norm(X, axis=1)
    assert np.mean(d <= r) >= gamma - 1e-12
    assert np.mean(d < r) < gamma + 1e-12


def test_theta_vector_round_trip():
    th = Theta(np.array([1.0, -2.0]), np.array([[2.0, 0.3], [0.3, 1.0]]), 1.5)
    v = th.to_vector()
    assert len(v) == Theta.size(2) == 6
    back = Theta.from_vector(v, 2)
    np.testing.assert_array_equal(back.G, th.G)
    assert back.r == 1.5
    with pytest.raises(ValueError):
        Theta.from_vector(v[:-1], 2)


def test_ellipsoid_contains_and_validates():
    E = Ellipsoid([0.0, 0.0], np.diag([4.0, 1.0]), 1.0)
    assert E.contains(np.array([1.9, 0.0]))
    assert not E.contains(np.array([0.0, 1.1]))
    with pytest.raises(ValueError):
        Ellipsoid([0.0], [[1.0]], 0.0)


def test_affine_map_rejects_singular(rng):
    D = Dataset(rng.standard_normal((5, 2)))
    with pytest.raises(ValueError):
        affine_map(D, [[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0])
    P = affine_map(D.as_measure(), 2 * np.eye(2), [1.0, 1.0])
    assert isinstance(P, WeightedMeasure)


def test_read_csv_header_sniffing(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n1,2\n3,4\n")
    assert read_csv(f).points.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    f.write_text("1,2\n3,4\n")
    assert read_csv(f).n == 2


def test_read_csv_weight_column(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("x,weight\n0,1\n1,3\n")
    P = read_csv(f)
    assert isinstance(P, WeightedMeasure)
    assert P.weights.tolist() == [0.25, 0.75]


@pytest.mark.parametrize(
    "text, where",
    [("x,y\n1,2\n3,zz\n", "line 3, column 2"), ("x,y\n1,2\n3\n", "line 3"), ("1,2\nnan,1\n", "line 2, column 1")],
)
def test_read_csv_reports_location(tmp_path, text, where):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(CsvFormatError, match=where):
        read_csv(f)


def test_fit_json_fields(rng):
    from robustmcd.estimator import exact_mcd

    fit = exact_mcd(Dataset(rng.standard_normal((8, 2))), 0.5)
    d = json.loads(json.dumps(fit.to_dict()))
    assert set(d) >= {"method", "gamma", "T", "C", "radius", "det", "degenerate", "subsample", "certificate"}
    assert len(d["subsample"]) == 4
    assert d["C"][0][1] == d["C"][1][0]
