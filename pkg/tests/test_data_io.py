import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from qning.bench import select_lasso_lambda
from qning.data_io import (LibsvmParseError, binary_labels, load_libsvm, normalize_rows,
                           parse_libsvm, save_libsvm, serialize_libsvm, synth_instance)
from qning.objective import CompositeObjective, Dataset, l1, l2
from qning.outer import QningConfig, run_qning


def test_parse_single_record():
    ds = parse_libsvm("1 1:0.5 3:2.0\n")
    assert (ds.n, ds.d) == (1, 3)
    np.testing.assert_array_equal(ds.dense_features(), [[0.5, 0.0, 2.0]])
    np.testing.assert_array_equal(ds.labels, [1.0])


def test_parse_empty_is_error():
    with pytest.raises(ValueError, match="empty"):
        parse_libsvm("")
    with pytest.raises(ValueError, match="empty"):
        parse_libsvm("# only a comment\n\n")


def test_parse_comments_blank_lines_and_order():
    text = "# header\n-1 2:1\n\n+1 1:3 # trailing\n0.5\n"
    ds = parse_libsvm(io.StringIO(text))
    np.testing.assert_array_equal(ds.labels, [-1.0, 1.0, 0.5])
    np.testing.assert_array_equal(ds.dense_features(), [[0, 1], [3, 0], [0, 0]])


@pytest.mark.parametrize("text,line", [
    ("1 1:0.5\n1 x:2\n", 2),
    ("1 1:0.5 1:2\n", 1),
    ("1 2:1 1:2\n", 1),
    ("1 1:nan\n", 1),
    ("1 1:inf\n", 1),
    ("abc 1:1\n", 1),
    ("1 0:1\n", 1),
    ("1\n1 3\n", 2),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(LibsvmParseError) as err:
        parse_libsvm(text)
    assert err.value.lineno == line
    assert f"line {line}" in str(err.value)


def _random_dataset(rng):
    n, d = rng.integers(1, 15), rng.integers(1, 10)
    dense = rng.standard_normal((n, d)) * (rng.random((n, d)) < 0.4)
    labels = rng.choice([-1.0, 1.0, 0.25, 3.0], size=n)
    return Dataset(sparse.csr_matrix(dense), labels)


def test_round_trip_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        ds = _random_dataset(rng)
        back = parse_libsvm(serialize_libsvm(ds), n_features=ds.d)
        assert back == ds


def test_round_trip_file(tmp_path):
    ds = synth_instance("regression", 10, 4, seed=2)
    path = tmp_path / "x.svm"
    save_libsvm(ds, path)
    assert load_libsvm(path) == ds


def test_normalize_examples():
    ds = Dataset(np.array([[3.0, 4.0], [0.0, 0.0]]), np.array([1.0, -1.0]))
    out = normalize_rows(ds)
    np.testing.assert_allclose(out.dense_features(), [[0.6, 0.8], [0.0, 0.0]], atol=1e-16)
    np.testing.assert_array_equal(out.labels, ds.labels)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans())
def test_normalize_unit_norms_and_idempotent(seed, as_sparse):
    rng = np.random.default_rng(seed)
    ds = _random_dataset(rng)
    if not as_sparse:
        ds = Dataset(ds.dense_features(), ds.labels)
    once = normalize_rows(ds)
    norms = np.sqrt(once.row_sq_norms())
    nz = norms > 0
    assert np.all(np.abs(norms[nz] - 1.0) <= 1e-12)
    assert np.array_equal(nz, np.sqrt(ds.row_sq_norms()) > 0)
    twice = normalize_rows(once)
    np.testing.assert_allclose(twice.dense_features(), once.dense_features(), atol=1e-15)


def test_binary_labels():
    ds = Dataset(np.ones((3, 1)), np.array([2.0, -0.5, 1.0]))
    np.testing.assert_array_equal(binary_labels(ds).labels, [1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        binary_labels(Dataset(np.ones((1, 1)), np.zeros(1)))


@pytest.mark.parametrize("kind", ["classification", "regression"])
def test_synth_deterministic(kind):
    a = synth_instance(kind, 50, 8, seed=4, correlation=0.5)
    b = synth_instance(kind, 50, 8, seed=4, correlation=0.5)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    c = synth_instance(kind, 50, 8, seed=5, correlation=0.5)
    assert not np.array_equal(a.features, c.features)
    np.testing.assert_allclose(np.sqrt(a.row_sq_norms()), 1.0, atol=1e-12)
    if kind == "classification":
        assert set(np.unique(a.labels)) <= {-1.0, 1.0}


def test_synth_rejects_bad_arguments():
    with pytest.raises(ValueError):
        synth_instance("ranking", 5, 5, 0)
    with pytest.raises(ValueError):
        synth_instance("regression", 0, 5, 0)
    with pytest.raises(ValueError):
        synth_instance("regression", 5, 5, 0, correlation=1.0)


def test_degenerate_one_by_one():
    ds = synth_instance("regression", 1, 1, seed=0)
    back = parse_libsvm(serialize_libsvm(ds))
    obj = CompositeObjective(back, "squared", l2(0.1))
    res = run_qning(obj, np.zeros(1), QningConfig(kappa=obj.L, max_iter=50))
    a, b = back.dense_features()[0, 0], back.labels[0]
    np.testing.assert_allclose(res.z, [a * b / (a * a + 0.1)], rtol=1e-6)


def test_planted_support_recovered():
    ds, x_star = synth_instance("regression", 500, 50, seed=1, return_model=True)
    lam, _ = select_lasso_lambda(ds)
    obj = CompositeObjective(ds, "squared", l1(lam))
    res = run_qning(obj, np.zeros(ds.d), QningConfig(kappa=obj.L, max_iter=500))
    found = set(np.flatnonzero(res.z))
    planted = set(np.flatnonzero(x_star))
    overlap = len(found & planted) / len(found | planted)
    assert overlap >= 0.8
