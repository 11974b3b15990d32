"""Exact LP oracle for tiny finite mechanism-design instances.

The in-house dense simplex is validated head-to-head against scipy's HiGHS
solver on random feasible bounded programs, and the mechanism LP against
closed forms: a single database needs no privacy, huge eps makes the
constraints vacuous, and the classic two-point instance has optimum
1/(1 + e^eps).
"""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from geonoise.lp import (LP_VARIABLE_CAP, SimplexError, TinyInstance,
                         _simplex_min, lp_optimal_error, tiny_instance)
from geonoise.rng import RngStream


def _grid_instance():
    answers = np.arange(-2.0, 2.25, 0.25)[:, None]
    return tiny_instance(np.array([[0.0], [1.0]]), answers)


def test_simplex_against_scipy_on_random_programs():
    gen = RngStream(701).generator()
    for _ in range(20):
        n = int(gen.integers(3, 9))
        m_ub = int(gen.integers(2, 7))
        m_eq = int(gen.integers(1, 4))
        c = gen.uniform(0.1, 2.0, n)
        A_ub = gen.uniform(-1.0, 1.0, (m_ub, n))
        A_eq = gen.uniform(0.0, 1.0, (m_eq, n))
        x0 = gen.uniform(0.0, 1.0, n)
        b_eq = A_eq @ x0
        b_ub = np.maximum(A_ub @ x0, 0.0) + gen.uniform(0.1, 1.0, m_ub)
        _, value, _ = _simplex_min(c, A_ub, b_ub, A_eq, b_eq)
        ref = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * n, method="highs")
        assert ref.status == 0
        assert abs(value - ref.fun) <= 1e-7 * (1.0 + abs(ref.fun))


def test_simplex_unbounded_and_infeasible():
    with pytest.raises(SimplexError):
        _simplex_min(np.array([-1.0]), np.array([[-1.0]]), np.array([0.0]),
                     np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(SimplexError):
        _simplex_min(np.array([1.0]), np.array([[1.0]]), np.array([1.0]),
                     np.array([[1.0]]), np.array([2.0]))


def test_single_database_needs_no_noise():
    inst = tiny_instance(np.array([[0.0]]),
                         np.array([[-0.5], [0.25], [2.0]]))
    sol = lp_optimal_error(inst, 1.0)
    assert abs(sol.value - 0.25) <= 1e-9
    np.testing.assert_allclose(sol.table.sum(axis=1), [1.0], atol=1e-9)
    assert sol.table[0, 1] >= 1.0 - 1e-9


def test_huge_eps_recovers_pointwise_minimum():
    inst = tiny_instance(np.array([[0.0], [1.0]]),
                         np.array([[-0.25], [1.5]]))
    sol = lp_optimal_error(inst, 50.0)
    # per-database minima are 0.25 and 0.5; the worst case drives the optimum
    assert abs(sol.value - 0.5) <= 1e-9


def test_two_point_instance_closed_form():
    inst = tiny_instance(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]))
    for eps in (0.5, 1.0, 2.0):
        sol = lp_optimal_error(inst, eps)
        assert abs(sol.value - 1.0 / (1.0 + math.exp(eps))) <= 1e-9


def test_grid_instance_matches_closed_form_and_is_feasible():
    # extra grid answers cannot beat the two-point optimum
    inst = _grid_instance()
    eps = 1.0
    sol = lp_optimal_error(inst, eps)
    assert abs(sol.value - 1.0 / (1.0 + math.e)) <= 1e-9

    table = sol.table
    assert np.all(table >= -1e-9)
    np.testing.assert_allclose(table.sum(axis=1), np.ones(2), atol=1e-9)
    # the returned mechanism honors its own error and ratio constraints
    exp_err = (table * inst.err).sum(axis=1)
    assert np.all(exp_err <= sol.value + 1e-9)
    dist = inst.distances()
    for xi in range(2):
        for yi in range(2):
            if xi == yi:
                continue
            g = math.exp(eps * dist[xi, yi])
            assert np.all(table[xi] <= g * table[yi] + 1e-9)


def test_instance_serialization_roundtrip():
    inst = _grid_instance()
    back = TinyInstance.from_json(inst.to_json())
    np.testing.assert_allclose(back.databases, inst.databases)
    np.testing.assert_allclose(back.answers, inst.answers)
    np.testing.assert_allclose(back.values, inst.values)
    np.testing.assert_allclose(back.err, inst.err)

    # omitted fields regenerate: values default to the databases, err to l2
    sparse = '{"databases": [[0.0], [1.0]], "answers": [[0.0], [1.0]]}'
    lean = TinyInstance.from_json(sparse)
    np.testing.assert_allclose(lean.values, lean.databases)
    np.testing.assert_allclose(lean.err, [[0.0, 1.0], [1.0, 0.0]])


def test_instance_validation():
    with pytest.raises(ValueError):
        TinyInstance(np.zeros((101, 1)), np.zeros((100, 1)),
                     np.zeros((101, 1)), np.zeros((101, 100)))
    with pytest.raises(ValueError):
        tiny_instance(np.array([[0.0]]), np.array([[1.0]]),
                      err=np.array([[-0.5]]))
    with pytest.raises(ValueError):
        tiny_instance(np.array([[0.0]]), np.array([[1.0]]),
                      err=np.zeros((2, 3)))
    assert 101 * 100 > LP_VARIABLE_CAP


def test_row_cap_and_eps_validation():
    inst = tiny_instance(np.arange(21.0)[:, None],
                         np.linspace(0.0, 20.0, 100)[:, None])
    with pytest.raises(ValueError):
        lp_optimal_error(inst, 1.0)
    small = tiny_instance(np.array([[0.0]]), np.array([[0.0]]))
    with pytest.raises(ValueError):
        lp_optimal_error(small, 0.0)
