"""Linear query matrices over histogram databases.

A query workload is a d x n real matrix; a database is a vector in R^n
(histogram counts, fractional values allowed). Answering the workload on
database x means computing the matrix-vector product. Sensitivity is measured
against neighboring databases at l1 distance 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import as_generator

HYPERCUBE_DIM_CAP = 20  # 2^d columns are materialized; keeps memory < ~200 MB


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class QueryMatrix:
    """A d x n workload of non-adaptive linear queries.

    Entries are confined to [-1, 1] unless ``bounded`` is False, which is used
    for workloads that arise from projecting a bounded workload onto a
    subspace (projection can push entries outside the unit range). Sensitivity
    is always the maximum column l1 norm, whatever the entry range.
    """

    entries: np.ndarray
    bounded: bool = True

    def __post_init__(self) -> None:
        arr = _as_float_array(self.entries, "query matrix")
        if arr.ndim != 2:
            raise ValueError(f"query matrix must be 2-D, got shape {arr.shape}")
        d, n = arr.shape
        if d < 1 or n < 1:
            raise ValueError(f"query matrix must be at least 1x1, got {d}x{n}")
        if d > n:
            raise ValueError(f"query matrix needs d <= n, got d={d} > n={n}")
        if self.bounded and np.abs(arr).max() > 1.0 + 1e-12:
            raise ValueError("bounded query matrix entries must lie in [-1, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class Database:
    """A histogram database: one real value per bucket."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_float_array(self.values, "database")
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"database must be a non-empty vector, got shape {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NeighborPair:
    """Two databases at l1 distance at most 1 (the privacy adjacency)."""

    left: Database
    right: Database
    max_distance: float = field(default=1.0)

    def __post_init__(self) -> None:
        if self.left.n != self.right.n:
            raise ValueError("neighboring databases must have equal length")
        dist = float(np.abs(self.left.values - self.right.values).sum())
        if dist > self.max_distance + 1e-12:
            raise ValueError(
                f"databases are at l1 distance {dist:.6g} > {self.max_distance:.6g}"
            )

    @property
    def distance(self) -> float:
        return float(np.abs(self.left.values - self.right.values).sum())


def _database_values(x, n: int) -> np.ndarray:
    if isinstance(x, Database):
        vals = x.values
    else:
        vals = _as_float_array(x, "database")
        if vals.ndim != 1:
            raise ValueError(f"database must be a vector, got shape {vals.shape}")
    if vals.size != n:
        raise ValueError(f"database length {vals.size} does not match n={n}")
    return vals


def evaluate(query: QueryMatrix, x) -> np.ndarray:
    """True (non-private) answer vector: the d query values on database x."""
    vals = _database_values(x, query.n)
    return query.entries @ vals


def sensitivity(query: QueryMatrix) -> float:
    """Max l1 change of the answer vector over neighboring databases.

    Equals the maximum column l1 norm: moving one unit of histogram mass
    perturbs the answer by at most the largest column, and exactly achieves it.
    """
    return float(np.abs(query.entries).sum(axis=0).max())


def random_bernoulli_query(d: int, n: int, rng) -> QueryMatrix:
    """Uniform random +-1 workload, the generic hard instance family."""
    gen = as_generator(rng)
    entries = gen.integers(0, 2, size=(d, n)).astype(float) * 2.0 - 1.0
    return QueryMatrix(entries)


def hypercube_query(d: int) -> QueryMatrix:
    """All 2^d sign patterns as columns, in lexicographic order.

    Column j spells out the binary digits of j from the most significant bit:
    bit 0 -> +1, bit 1 -> -1. The image of the l1 ball under this workload is
    the full cube [-1, 1]^d.
    """
    if d < 1:
        raise ValueError("hypercube workload needs d >= 1")
    if d > HYPERCUBE_DIM_CAP:
        raise ValueError(f"hypercube workload capped at d <= {HYPERCUBE_DIM_CAP}")
    cols = 1 << d
    j = np.arange(cols)
    entries = np.empty((d, cols))
    for row in range(d):
        bit = (j >> (d - 1 - row)) & 1
        entries[row] = 1.0 - 2.0 * bit
    return QueryMatrix(entries)


# --- text file formats -------------------------------------------------------
# Matrix file: first line "d n", then d lines of n whitespace-separated decimals.
# Database file: one line of n whitespace-separated decimals.


def save_matrix(query: QueryMatrix, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{query.d} {query.n}\n")
        for row in query.entries:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_matrix(path) -> QueryMatrix:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'd n'")
        try:
            d, n = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}: first line must be 'd n'") from exc
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split()])
    if len(rows) != d or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {d} rows of {n} values")
    entries = np.array(rows)
    bounded = bool(np.abs(entries).max() <= 1.0 + 1e-12)
    return QueryMatrix(entries, bounded=bounded)


def save_database(db: Database, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(" ".join(f"{v:.17g}" for v in db.values) + "\n")


def load_database(path) -> Database:
    path = Path(path)
    text = path.read_text().strip()
    if not text:
        raise ValueError(f"{path}: empty database file")
    return Database(np.array([float(tok) for tok in text.split()]))
