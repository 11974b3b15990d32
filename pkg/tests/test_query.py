"""Workload matrices, databases, sensitivity, and the text file formats."""

import itertools

import numpy as np
import pytest

from geonoise.body import PolytopeHandle, membership
from geonoise.query import (Database, NeighborPair, QueryMatrix, evaluate,
                            hypercube_query, load_database, load_matrix,
                            random_bernoulli_query, save_database, save_matrix,
                            sensitivity)
from geonoise.rng import RngStream


def test_evaluate_identity_and_row_sum():
    q = QueryMatrix(np.eye(2))
    np.testing.assert_allclose(evaluate(q, [0.3, -0.2]), [0.3, -0.2])
    ones = QueryMatrix(np.ones((1, 3)))
    np.testing.assert_allclose(evaluate(ones, [1.0, 2.0, 3.0]), [6.0])


def test_evaluate_matches_naive_product():
    gen = RngStream(11).generator()
    entries = gen.uniform(-1, 1, size=(3, 5))
    x = gen.standard_normal(5)
    want = np.array([sum(entries[i, j] * x[j] for j in range(5)) for i in range(3)])
    np.testing.assert_allclose(evaluate(QueryMatrix(entries), x), want, atol=1e-12)


def test_evaluate_is_linear():
    gen = RngStream(12).generator()
    q = QueryMatrix(gen.uniform(-1, 1, size=(4, 6)))
    x, y = gen.standard_normal(6), gen.standard_normal(6)
    a, b = 0.7, -1.3
    lhs = evaluate(q, a * x + b * y)
    rhs = a * evaluate(q, x) + b * evaluate(q, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_evaluate_rejects_wrong_length():
    with pytest.raises(ValueError):
        evaluate(QueryMatrix(np.eye(2)), [1.0, 2.0, 3.0])


def test_sensitivity_examples():
    assert sensitivity(hypercube_query(3)) == 3.0
    assert sensitivity(QueryMatrix(np.eye(2))) == 1.0
    q = QueryMatrix(np.array([[0.5, -0.25], [0.5, 0.25]]))
    assert sensitivity(q) == pytest.approx(1.0)


def test_sensitivity_is_max_column_l1():
    gen = RngStream(13).generator()
    for _ in range(8):
        entries = gen.uniform(-1, 1, size=(3, 7))
        want = max(np.abs(entries[:, j]).sum() for j in range(7))
        assert sensitivity(QueryMatrix(entries)) == pytest.approx(want)
        assert sensitivity(QueryMatrix(entries)) <= 3.0 + 1e-12


def test_neighbor_answers_bounded_by_sensitivity():
    gen = RngStream(14).generator()
    q = QueryMatrix(gen.uniform(-1, 1, size=(4, 6)))
    for _ in range(6):
        x = gen.standard_normal(6)
        step = gen.standard_normal(6)
        step *= 1.0 / np.abs(step).sum()  # exactly l1 distance 1 away
        gap = np.abs(evaluate(q, x + step) - evaluate(q, x)).sum()
        assert gap <= sensitivity(q) + 1e-9


def test_bernoulli_query_shape_and_determinism():
    q1 = random_bernoulli_query(2, 4, RngStream(5))
    q2 = random_bernoulli_query(2, 4, RngStream(5))
    np.testing.assert_array_equal(q1.entries, q2.entries)
    assert set(np.unique(q1.entries)) <= {-1.0, 1.0}


def test_bernoulli_entry_mean_near_zero():
    q = random_bernoulli_query(10, 10_000, RngStream(6))
    assert abs(q.entries.mean()) < 0.02


def test_bernoulli_rejects_d_above_n():
    with pytest.raises(ValueError):
        random_bernoulli_query(5, 3, RngStream(0))


def test_hypercube_enumerates_all_sign_patterns():
    assert {tuple(c) for c in hypercube_query(1).entries.T} == {(1.0,), (-1.0,)}
    cols = {tuple(c) for c in hypercube_query(2).entries.T}
    assert cols == set(itertools.product([1.0, -1.0], repeat=2))
    # lexicographic: bit 0 -> +1, most significant bit first
    q = hypercube_query(2)
    np.testing.assert_array_equal(q.entries[:, 0], [1.0, 1.0])
    np.testing.assert_array_equal(q.entries[:, 1], [1.0, -1.0])
    np.testing.assert_array_equal(q.entries[:, 3], [-1.0, -1.0])


def test_hypercube_body_contains_cube():
    handle = PolytopeHandle(hypercube_query(2))
    for corner in itertools.product([0.99, -0.99], repeat=2):
        assert membership(handle, np.array(corner)) == "inside"


def test_hypercube_dim_guards():
    with pytest.raises(ValueError):
        hypercube_query(0)
    with pytest.raises(ValueError):
        hypercube_query(21)


def test_entry_bound_enforced_unless_relaxed():
    with pytest.raises(ValueError):
        QueryMatrix(np.array([[1.5]]))
    q = QueryMatrix(np.array([[1.5]]), bounded=False)
    assert sensitivity(q) == 1.5


def test_neighbor_pair_distance_guard():
    a = Database(np.zeros(3))
    NeighborPair(a, Database(np.array([0.5, -0.5, 0.0])))
    with pytest.raises(ValueError):
        NeighborPair(a, Database(np.array([1.0, -0.5, 0.0])))


def test_matrix_roundtrip_is_exact(tmp_path):
    q = QueryMatrix(RngStream(7).generator().uniform(-1, 1, size=(3, 5)))
    path = tmp_path / "workload.txt"
    save_matrix(q, path)
    back = load_matrix(path)
    np.testing.assert_array_equal(back.entries, q.entries)
    assert back.d == 3 and back.n == 5


def test_database_roundtrip_is_exact(tmp_path):
    db = Database(np.array([0.25, -1.75, 3e-17]))
    path = tmp_path / "db.txt"
    save_database(db, path)
    np.testing.assert_array_equal(load_database(path).values, db.values)


def test_load_matrix_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n1 0\n0 1\n")
    with pytest.raises(ValueError):
        load_matrix(bad)
    short = tmp_path / "short.txt"
    short.write_text("2 2\n1 0\n")
    with pytest.raises(ValueError):
        load_matrix(short)
