import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tetiwd.distance import (
    DataValidationError,
    DistanceSeries,
    distances_from_gram,
    gram_from_distances,
    load_distance_series,
    load_manifest,
    read_matrix,
    save_series,
    sq_distances,
    validate_negative_type,
    write_matrix,
)

EQUI = np.array([[0, 2, 2], [2, 0, 2], [2, 2, 0]], dtype=float)


def test_load_single_csv(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0,2,2\n2,0,2\n2,2,0\n")
    ds = load_distance_series([f])
    assert ds.T == 1 and ds.sizes == (3,)
    np.testing.assert_array_equal(ds[0], EQUI)


def test_load_five_epochs(tmp_path):
    rng = np.random.default_rng(0)
    paths = []
    for t in range(5):
        p = tmp_path / f"d{t}.csv"
        write_matrix(p, sq_distances(rng.standard_normal((20, 3))))
        paths.append(p)
    ds = load_distance_series(paths)
    assert ds.T == 5 and ds.sizes == (20,) * 5


def test_asymmetric_rejected(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0,1,2\n2,0,2\n2,2,0\n")
    with pytest.raises(DataValidationError, match="asymmetric"):
        load_distance_series([f])


def test_tiny_asymmetry_symmetrized(tmp_path):
    D = EQUI.copy()
    D[0, 1] += 1e-12
    D[1, 1] = 1e-13
    f = tmp_path / "d.csv"
    write_matrix(f, D)
    out = load_distance_series([f])[0]
    np.testing.assert_array_equal(out, out.T)
    assert np.all(np.diag(out) == 0)


def test_negative_entries_rejected(tmp_path):
    f = tmp_path / "d.csv"
    write_matrix(f, -EQUI)
    with pytest.raises(DataValidationError, match="negative"):
        load_distance_series([f])


def test_non_square_rejected(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0,1\n1,0\n2,2\n")
    with pytest.raises(DataValidationError, match="dimension"):
        read_matrix(f)


def test_binary_round_trip(tmp_path):
    D = sq_distances(np.random.default_rng(1).standard_normal((7, 2)))
    f = tmp_path / "d.bin"
    write_matrix(f, D, "binary")
    raw = f.read_bytes()
    assert raw[:4] == b"TDW1" and int.from_bytes(raw[4:12], "little") == 7
    np.testing.assert_array_equal(read_matrix(f), D)


def test_binary_truncated(tmp_path):
    f = tmp_path / "d.bin"
    write_matrix(f, EQUI, "binary")
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(DataValidationError):
        read_matrix(f)


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((9, 3))
    series = DistanceSeries((sq_distances(X[:4]), sq_distances(X[4:])), sq_distances(X))
    m = save_series(tmp_path, series, "binary", extra={"latent_dims": [3, 3]})
    back, meta = load_manifest(m)
    assert meta["latent_dims"] == [3, 3]
    for a, b in zip(back.matrices, series.matrices):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.cross, series.cross)
    assert json.loads(m.read_text())["format"] == "binary"


def test_manifest_missing_file(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"matrices": ["gone.csv"]}))
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "manifest.json")


def test_series_cross_size_checked():
    with pytest.raises(ValueError):
        DistanceSeries((EQUI,), np.zeros((4, 4)))


# -- negative type ------------------------------------------------------------


def test_line_points_negative_type():
    D = np.array([[0, 1, 9], [1, 0, 4], [9, 4, 0]], dtype=float)
    assert validate_negative_type(D).is_negative_type


def test_violation_detected():
    D = np.array([[0, 1, 16], [1, 0, 1], [16, 1, 0]], dtype=float)
    rep = validate_negative_type(D)
    # direct decomposition as the reference
    Q = np.eye(3) - 1 / 3
    lam = np.linalg.eigvalsh(-0.5 * Q @ D @ Q)
    assert not rep.is_negative_type
    assert rep.min_eigenvalue == pytest.approx(lam[0])
    assert rep.messages


def test_zero_matrix():
    rep = validate_negative_type(np.zeros((4, 4)))
    assert rep.is_negative_type and rep.min_eigenvalue == pytest.approx(0.0, abs=1e-15)


# -- Gram conversions -----------------------------------------------------------


def test_equilateral_round_trip():
    G = gram_from_distances(EQUI)
    np.testing.assert_allclose(G.K.sum(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(np.diag(G.K), [2 / 3] * 3)
    np.testing.assert_allclose(distances_from_gram(G), EQUI, atol=1e-12)


def test_two_points():
    G = gram_from_distances(np.array([[0, 4.0], [4.0, 0]]))
    np.testing.assert_allclose(G.K, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(gram_from_distances(np.zeros((3, 3))).K, 0)


def test_identity_gram():
    np.testing.assert_array_equal(distances_from_gram(np.eye(2)), [[0, 2], [2, 0]])


def test_clipping_reports_mass():
    D = np.array([[0, 1, 16], [1, 0, 1], [16, 1, 0]], dtype=float)
    G = gram_from_distances(D)
    assert G.clipped_mass > 0
    assert np.linalg.eigvalsh(G.K)[0] > -1e-10


points = arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=st.floats(-10, 10))


@settings(max_examples=80, deadline=None)
@given(X=points, v=arrays(np.float64, 8, elements=st.floats(-5, 5)))
def test_translation_kernel_leaves_distances(X, v):
    K = X @ X.T
    v = v[: K.shape[0]]
    one = np.ones(K.shape[0])
    D0 = distances_from_gram(K)
    D1 = distances_from_gram(K + np.outer(one, v) + np.outer(v, one))
    assert np.max(np.abs(D0 - D1)) <= 1e-10 * max(1.0, np.abs(K).max(), np.abs(v).max())


@settings(max_examples=80, deadline=None)
@given(X=points)
def test_gram_round_trip(X):
    D = sq_distances(X)
    back = distances_from_gram(gram_from_distances(D))
    assert np.max(np.abs(back - D)) <= 1e-8 * max(1.0, D.max())
    Xc = X - X.mean(axis=0)
    Kc = Xc @ Xc.T
    np.testing.assert_allclose(gram_from_distances(distances_from_gram(Kc)).K, Kc, atol=1e-8 * max(1.0, np.abs(Kc).max()))
