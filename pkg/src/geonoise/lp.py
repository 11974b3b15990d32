"""Exact optimal mechanisms for tiny finite instances.

On a finite database set D and finite answer set R, a mechanism is just the
table mu(x, a) of output probabilities, and the best achievable worst-case
expected error under the privacy ratio constraints is a linear program:

    minimize t
    s.t.     sum_a mu(x, a) = 1                                  for x in D
             sum_a mu(x, a) err(x, a) <= t                       for x in D
             mu(x, a) <= exp(eps * dist(x, y)) * mu(y, a)        for x != y, a
             mu >= 0, t >= 0

The solver below is a dense two-phase simplex with Bland's rule. It exists to
keep the oracle self-contained and auditable; the instances are capped small,
so no sparse machinery is warranted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .query import QueryMatrix

LP_VARIABLE_CAP = 10_000
_LP_ROW_CAP = 40_000
_PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class TinyInstance:
    """Finite mechanism-design instance: databases, answers, error table."""

    databases: np.ndarray  # (m, n) histograms
    answers: np.ndarray    # (R, d) candidate outputs
    values: np.ndarray     # (m, d) query answers F(x)
    err: np.ndarray        # (m, R) nonnegative losses

    def __post_init__(self):
        db = np.atleast_2d(np.asarray(self.databases, dtype=float))
        ans = np.atleast_2d(np.asarray(self.answers, dtype=float))
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        errs = np.asarray(self.err, dtype=float)
        m, n_r = db.shape[0], ans.shape[0]
        if vals.shape[0] != m:
            raise ValueError("values must have one row per database")
        if errs.shape != (m, n_r):
            raise ValueError(f"err table must be shape {(m, n_r)}, got {errs.shape}")
        if np.any(errs < 0):
            raise ValueError("error table must be nonnegative")
        if m * n_r > LP_VARIABLE_CAP:
            raise ValueError(
                f"instance has {m * n_r} mechanism variables, cap is {LP_VARIABLE_CAP}")
        object.__setattr__(self, "databases", db)
        object.__setattr__(self, "answers", ans)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "err", errs)

    @property
    def n_databases(self) -> int:
        return self.databases.shape[0]

    @property
    def n_answers(self) -> int:
        return self.answers.shape[0]

    def distances(self) -> np.ndarray:
        """Pairwise l1 distances between databases."""
        db = self.databases
        return np.abs(db[:, None, :] - db[None, :, :]).sum(axis=2)

    def to_json(self) -> str:
        return json.dumps({
            "databases": self.databases.tolist(),
            "answers": self.answers.tolist(),
            "values": self.values.tolist(),
            "err": self.err.tolist(),
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "TinyInstance":
        raw = json.loads(text)
        db = np.atleast_2d(np.asarray(raw["databases"], dtype=float))
        ans = np.atleast_2d(np.asarray(raw["answers"], dtype=float))
        if "values" in raw:
            vals = np.asarray(raw["values"], dtype=float)
        else:
            vals = db
        if "err" in raw:
            errs = np.asarray(raw["err"], dtype=float)
        else:
            vals2 = np.atleast_2d(vals)
            errs = np.linalg.norm(vals2[:, None, :] - ans[None, :, :], axis=2)
        return TinyInstance(db, ans, vals, errs)


def tiny_instance(databases, answers, query: "QueryMatrix | None" = None,
                  err: "np.ndarray | None" = None) -> TinyInstance:
    """Build an instance; default loss is the l2 distance from F(x) to a."""
    db = np.atleast_2d(np.asarray(databases, dtype=float))
    ans = np.atleast_2d(np.asarray(answers, dtype=float))
    if query is None:
        vals = db
    else:
        vals = db @ query.entries.T
    if err is None:
        err = np.linalg.norm(vals[:, None, :] - ans[None, :, :], axis=2)
    return TinyInstance(db, ans, vals, err)


@dataclass(frozen=True)
class LpSolution:
    value: float           # optimal worst-case expected error
    table: np.ndarray      # (m, R) optimal mu
    iterations: int


class SimplexError(RuntimeError):
    """Dense simplex failed (iteration cap or unexpected infeasibility)."""


def _simplex_min(c, A_ub, b_ub, A_eq, b_eq, max_iter: int = 20_000):
    """min c.x s.t. A_ub x <= b_ub, A_eq x = b_eq, x >= 0. Dense, Bland's rule.

    Requires b_ub >= 0 and b_eq >= 0 (true for this module's programs), so
    slacks start basic for the inequality rows and artificials only cover the
    equality rows.
    """
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    n = c.size
    m = m_ub + m_eq
    if np.any(b_ub < 0) or np.any(b_eq < 0):
        raise SimplexError("negative right-hand side not supported")

    # columns: n structural | m_ub slacks | m_eq artificials | rhs
    T = np.zeros((m, n + m_ub + m_eq + 1))
    T[:m_ub, :n] = A_ub
    T[m_ub:, :n] = A_eq
    T[:m_ub, n:n + m_ub] = np.eye(m_ub)
    T[m_ub:, n + m_ub:n + m_ub + m_eq] = np.eye(m_eq)
    T[:m_ub, -1] = b_ub
    T[m_ub:, -1] = b_eq
    basis = np.concatenate([np.arange(n, n + m_ub),
                            np.arange(n + m_ub, n + m_ub + m_eq)])

    total_iters = 0

    def run_phase(cost, allowed):
        nonlocal total_iters
        z = np.zeros(T.shape[1] - 1)
        z[:cost.size] = cost
        # reduced costs r = z - z_B . B^-1 A, maintained from the tableau
        while True:
            r = z - z[basis] @ T[:, :-1]
            enter = -1
            for jcol in range(allowed):
                if r[jcol] < -_PIVOT_TOL:
                    enter = jcol
                    break
            if enter < 0:
                return
            col = T[:, enter]
            pos = col > _PIVOT_TOL
            if not pos.any():
                raise SimplexError("unbounded direction in a bounded program")
            ratios = np.where(pos, T[:, -1] / np.where(pos, col, 1.0), np.inf)
            best = np.min(ratios)
            cand = np.nonzero(ratios <= best + _PIVOT_TOL * (1 + abs(best)))[0]
            leave = cand[np.argmin(basis[cand])]  # Bland tie-break
            piv = T[leave, enter]
            T[leave] /= piv
            other = np.nonzero(np.abs(T[:, enter]) > 0)[0]
            other = other[other != leave]
            T[other] -= np.outer(T[other, enter], T[leave])
            basis[leave] = enter
            total_iters += 1
            if total_iters > max_iter:
                raise SimplexError(f"simplex iteration cap {max_iter} exceeded")

    # phase 1: drive artificials to zero
    if m_eq:
        art_cost = np.zeros(n + m_ub + m_eq)
        art_cost[n + m_ub:] = 1.0
        run_phase(art_cost, n + m_ub)  # artificials may not re-enter
        art_level = T[np.isin(basis, np.arange(n + m_ub, n + m_ub + m_eq)), -1].sum()
        if art_level > 1e-7:
            raise SimplexError("phase 1 ended infeasible")
        # expel artificials still basic at level zero
        for row in range(m):
            if basis[row] >= n + m_ub:
                cand = np.nonzero(np.abs(T[row, :n + m_ub]) > _PIVOT_TOL)[0]
                if cand.size:
                    enter = cand[0]
                    piv = T[row, enter]
                    T[row] /= piv
                    other = np.arange(m) != row
                    T[other] -= np.outer(T[other, enter], T[row])
                    basis[row] = enter

    run_phase(np.concatenate([c, np.zeros(m_ub)]), n + m_ub)

    x = np.zeros(n + m_ub + m_eq)
    x[basis] = T[:, -1]
    return x[:n], float(c @ x[:n]), total_iters


def lp_optimal_error(instance: TinyInstance, eps: float) -> LpSolution:
    """Solve the tiny-instance program exactly; returns optimum and mu table."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    m, n_r = instance.n_databases, instance.n_answers
    n_mu = m * n_r
    n = n_mu + 1  # trailing variable is t
    dist = instance.distances()

    ratio_rows = m * (m - 1) * n_r
    rows_ub = m + ratio_rows
    if rows_ub + m > _LP_ROW_CAP:
        raise ValueError(f"instance generates {rows_ub + m} LP rows, cap is {_LP_ROW_CAP}")

    A_eq = np.zeros((m, n))
    for x in range(m):
        A_eq[x, x * n_r:(x + 1) * n_r] = 1.0
    b_eq = np.ones(m)

    A_ub = np.zeros((rows_ub, n))
    b_ub = np.zeros(rows_ub)
    for x in range(m):
        A_ub[x, x * n_r:(x + 1) * n_r] = instance.err[x]
        A_ub[x, -1] = -1.0
    row = m
    for x in range(m):
        for y in range(m):
            if x == y:
                continue
            g = math.exp(eps * dist[x, y])
            for a in range(n_r):
                A_ub[row, x * n_r + a] = 1.0
                A_ub[row, y * n_r + a] = -g
                row += 1

    c = np.zeros(n)
    c[-1] = 1.0
    sol, value, iters = _simplex_min(c, A_ub, b_ub, A_eq, b_eq)
    table = sol[:n_mu].reshape(m, n_r)
    return LpSolution(value=value, table=table, iterations=iters)
