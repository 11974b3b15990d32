"""The noise body of a workload: the image of the unit l1 ball.

For a d x n workload F the body is the symmetric convex hull of the +-columns
of F, a polytope given by its vertex description. All geometric primitives
run against that description through one engine: a batched Frank-Wolfe solver
for min_{||x||_1 <= r} ||Wx - a||_2. Frank-Wolfe fits because the linear
minimization oracle over the l1 ball is exact and free (pick the best signed
coordinate), and every iterate is primal feasible, so the achieved objective
is always a sound upper bound on the distance while the duality gap yields a
sound lower bound. Membership is decided only up to a tolerance band eta; the
band is an explicit part of every contract here (weak-oracle semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .query import QueryMatrix

# status codes for batched distance certification
CERT_INSIDE = 0
CERT_OUTSIDE = 1
CERT_TIGHT = 2
CERT_UNRESOLVED = 3


class OracleConvergenceError(RuntimeError):
    """The distance solver hit its iteration cap before certifying an answer."""


def _dedup_signed_columns(entries: np.ndarray) -> np.ndarray:
    """Unique columns up to sign; duplicates cannot change the hull."""
    cols = entries.T.copy()
    # canonical sign: first nonzero entry positive
    for i in range(cols.shape[0]):
        nz = np.nonzero(cols[i])[0]
        if nz.size and cols[i, nz[0]] < 0:
            cols[i] = -cols[i]
    cols = np.unique(cols, axis=0)
    # drop all-zero columns unless nothing else remains
    nonzero = np.any(cols != 0, axis=1)
    if nonzero.any():
        cols = cols[nonzero]
    return cols.T.copy()


@dataclass
class PolytopeHandle:
    """Vertex-description handle for the noise body of a workload.

    ``inflate`` switches the handle to the Minkowski sum of the body with the
    unit Euclidean ball (guaranteeing a unit inscribed ball, at the price of
    fattening every direction by 1). ``eta`` is the Euclidean tolerance of the
    weak membership oracle: answers are reliable outside an eta-wide shell
    around the boundary and unconstrained inside it.
    """

    query: QueryMatrix
    inflate: bool = False
    eta: float = 1e-3

    columns: np.ndarray = field(init=False, repr=False)  # (d, nW) deduped
    box: np.ndarray = field(init=False, repr=False)  # per-axis extent of the hull
    outer_radius: float = field(init=False)

    def __post_init__(self) -> None:
        if not (0 < self.eta < 1):
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        self.columns = _dedup_signed_columns(self.query.entries)
        self.box = np.abs(self.columns).max(axis=1)
        # max vertex norm is the exact outer radius of the hull
        self.outer_radius = float(np.linalg.norm(self.columns, axis=0).max())
        if self.inflate:
            self.box = self.box + 1.0
            self.outer_radius += 1.0

    @property
    def dim(self) -> int:
        return self.query.d

    @property
    def degenerate_axes(self) -> np.ndarray:
        """Axes along which the (un-inflated) hull has zero extent."""
        box = self.box - 1.0 if self.inflate else self.box
        return np.nonzero(box <= 0)[0]

    def normalized_columns(self) -> np.ndarray:
        """Columns rescaled so each axis extent is 1; inflate not supported."""
        if self.inflate:
            raise ValueError("normalized coordinates are undefined for inflated bodies")
        if self.degenerate_axes.size:
            raise ValueError("body has zero extent along some axis; cannot normalize")
        return self.columns / self.box[:, None]


@dataclass
class DistanceCertificates:
    """Batched output of the Frank-Wolfe distance solver.

    value[i] is a sound upper bound on dist(a_i, r K) (achieved by preimage
    row i); lower[i] is a sound lower bound (best duality-gap certificate seen).
    """

    value: np.ndarray
    lower: np.ndarray
    preimage: np.ndarray
    image: np.ndarray
    status: np.ndarray
    iterations: int


def min_distance_batch(
    columns: np.ndarray,
    points: np.ndarray,
    radius,
    *,
    warm: "np.ndarray | None" = None,
    warm_image: "np.ndarray | None" = None,
    certify_below=-np.inf,
    certify_above=np.inf,
    gap_tol: "float | None" = None,
    max_iter: int = 2000,
) -> DistanceCertificates:
    """Bracket dist(a_i, r_i * hull(+-columns)) for a batch of points.

    Rows stop as soon as one certificate fires: value <= certify_below
    (CERT_INSIDE), lower > certify_above (CERT_OUTSIDE), or value - lower <=
    gap_tol (CERT_TIGHT). Rows that never certify are CERT_UNRESOLVED; their
    brackets are still sound, just wide.
    """
    W = np.ascontiguousarray(columns, dtype=float)
    d, n_cols = W.shape
    A = np.atleast_2d(np.asarray(points, dtype=float))
    m = A.shape[0]
    if A.shape[1] != d:
        raise ValueError(f"points have dim {A.shape[1]}, body has dim {d}")
    r = np.broadcast_to(np.asarray(radius, dtype=float), (m,)).copy()
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    below = np.broadcast_to(np.asarray(certify_below, dtype=float), (m,))
    above = np.broadcast_to(np.asarray(certify_above, dtype=float), (m,))
    # gap_tol may be per-row; None disables the tight exit
    gt = np.broadcast_to(np.asarray(-1.0 if gap_tol is None else gap_tol, dtype=float), (m,))

    WT = np.ascontiguousarray(W.T)
    if warm is None:
        X = np.zeros((m, n_cols))
        P = np.zeros((m, d))
    else:
        X = np.array(warm, dtype=float, copy=True)
        if X.shape != (m, n_cols):
            raise ValueError("warm preimage has wrong shape")
        P = X @ WT if warm_image is None else np.array(warm_image, dtype=float, copy=True)

    value = np.linalg.norm(P - A, axis=1)
    lower = np.zeros(m)
    status = np.full(m, CERT_UNRESOLVED, dtype=np.int8)

    status[value <= below] = CERT_INSIDE
    idx = np.nonzero(status == CERT_UNRESOLVED)[0]

    iters = 0
    while idx.size and iters < max_iter:
        iters += 1
        Ai, ri = A[idx], r[idx]
        Xi = X[idx]
        Ri = P[idx] - Ai
        v = np.linalg.norm(Ri, axis=1)
        G = Ri @ W  # gradients in coefficient space
        rows = np.arange(idx.size)
        j = np.argmax(np.abs(G), axis=1)
        gj = G[rows, j]
        # duality gap of the current iterate over the r-scaled l1 ball
        gap = np.einsum("ij,ij->i", G, Xi) + ri * np.abs(gj)
        gap = np.maximum(gap, 0.0)
        lb = np.sqrt(np.maximum(v * v - 2.0 * gap, 0.0))
        # separating-hyperplane bound along u = (a - p)/v: exact at the
        # projection, so it tightens linearly where the gap bound is quadratic
        ra = np.einsum("ij,ij->i", Ri, Ai)
        with np.errstate(divide="ignore", invalid="ignore"):
            lb_sep = np.where(v > 0, (-ra - ri * np.abs(gj)) / np.maximum(v, 1e-300), 0.0)

        value[idx] = v
        lower[idx] = np.maximum(lower[idx], np.maximum(lb, lb_sep))

        done_in = v <= below[idx]
        done_out = lower[idx] > above[idx]
        done_tight = v - lower[idx] <= gt[idx]
        done = done_in | done_out | done_tight
        if done.any():
            gi = idx[done]
            status[gi] = np.where(
                done_in[done],
                CERT_INSIDE,
                np.where(done_out[done], CERT_OUTSIDE, CERT_TIGHT),
            )
            keep = ~done
            idx = idx[keep]
            if not idx.size:
                break
            rows = np.arange(idx.size)
            ri, j, gj = ri[keep], j[keep], gj[keep]
            G, Xi = G[keep], Xi[keep]

        # pairwise Frank-Wolfe step: move mass from the worst active atom
        # (or the slack of the l1 budget) onto the best signed coordinate.
        # Pairwise steps converge linearly in practice where the classic
        # convex-combination step crawls near the boundary.
        sign_x = np.sign(Xi)
        aw = np.where(Xi != 0.0, G * sign_x, -np.inf)
        k_col = np.argmax(aw, axis=1)
        kv_raw = aw[rows, k_col]
        slack = np.maximum(1.0 - np.abs(Xi).sum(axis=1) / np.maximum(ri, 1e-300), 0.0)
        coord_val = np.where(np.isfinite(kv_raw), ri * kv_raw, -np.inf)
        slack_val = np.where(slack > 1e-12, 0.0, -np.inf)
        pair = coord_val >= slack_val
        sign_xk = sign_x[rows, k_col]
        s_in = -ri * np.sign(gj)
        s_out = np.where(pair, -ri * sign_xk, 0.0)
        gamma_max = np.where(pair, np.abs(Xi[rows, k_col]) / np.maximum(ri, 1e-300), slack)
        gap_dir = ri * np.abs(gj) + np.where(pair, ri * kv_raw, 0.0)
        Wd = s_in[:, None] * WT[j] + s_out[:, None] * WT[k_col]
        denom = np.einsum("ij,ij->i", Wd, Wd)
        gamma = np.where(denom > 0, gap_dir / np.maximum(denom, 1e-300), 0.0)
        gamma = np.minimum(np.maximum(gamma, 0.0), gamma_max)
        X[idx, j] += gamma * s_in
        X[idx, k_col] += gamma * s_out
        P[idx] += gamma[:, None] * Wd
        # an exhausted away atom leaves an fp residue; zero it so it cannot
        # be re-picked forever (not valid when both updates hit one coord)
        dropped = pair & (gamma >= gamma_max * (1.0 - 1e-12)) & (j != k_col)
        if dropped.any():
            X[idx[dropped], k_col[dropped]] = 0.0

    if idx.size:  # final bracket refresh for unresolved rows
        v = np.linalg.norm(P[idx] - A[idx], axis=1)
        value[idx] = v
        status[idx[v <= below[idx]]] = CERT_INSIDE

    return DistanceCertificates(value, lower, X, P, status, iters)


def l1_distance_to_image(source, point, radius: float = 1.0, *, eta: "float | None" = None,
                         max_iter: "int | None" = None) -> float:
    """Distance from ``point`` to the radius-scaled body, up to +eta slack.

    Returns v with dist <= v <= dist + eta. v <= eta therefore certifies the
    point lies within eta of the body; v > eta certifies it lies outside it.
    """
    handle = source if isinstance(source, PolytopeHandle) else PolytopeHandle(source)
    if handle.inflate:
        raise ValueError("l1_distance_to_image measures the bare body; inflate unsupported")
    eta = handle.eta if eta is None else eta
    if not (0 < eta < 1):
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    a = np.asarray(point, dtype=float).reshape(-1)
    if a.size != handle.dim:
        raise ValueError(f"point has dim {a.size}, body has dim {handle.dim}")
    if max_iter is None:
        d, n = handle.query.d, handle.query.n
        max_iter = int(min(10.0 * d * n / (eta * eta), 500_000))
    res = min_distance_batch(
        handle.columns, a[None, :], radius,
        certify_below=0.25 * eta, gap_tol=eta, max_iter=max_iter,
    )
    if res.status[0] == CERT_UNRESOLVED:
        raise OracleConvergenceError(
            f"distance solver did not converge in {max_iter} iterations "
            f"(bracket [{res.lower[0]:.3g}, {res.value[0]:.3g}])"
        )
    return float(res.value[0])


def membership(handle: PolytopeHandle, point, radius: float = 1.0, *,
               max_iter: int = 200_000) -> str:
    """Classify ``point`` against the radius-scaled body.

    Returns "inside" (certified within eta of the body), "outside" (certified
    not within eta of the body), or "boundary-band" when the point sits inside
    the eta ambiguity shell. Raises OracleConvergenceError if no certificate
    was reached.
    """
    a = np.asarray(point, dtype=float).reshape(-1)
    if a.size != handle.dim:
        raise ValueError(f"point has dim {a.size}, body has dim {handle.dim}")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    eta = handle.eta
    # for an inflated handle the target distance to the bare hull is radius
    target = radius if handle.inflate else 0.0
    res = min_distance_batch(
        handle.columns, a[None, :], radius,
        certify_below=target + 0.5 * eta,
        certify_above=target + eta,
        gap_tol=eta / 8.0,
        max_iter=max_iter,
    )
    st = int(res.status[0])
    if st == CERT_INSIDE:
        return "inside"
    if st == CERT_OUTSIDE:
        return "outside"
    if st == CERT_TIGHT:
        v, lb = float(res.value[0]), float(res.lower[0])
        if v <= target + 0.75 * eta:
            return "inside"
        if lb > target + 0.9 * eta:
            return "outside"
        return "boundary-band"
    raise OracleConvergenceError("membership oracle hit its iteration cap")


def minkowski_norm(handle: PolytopeHandle, point, *, rel_tol: float = 1e-4,
                   max_doublings: int = 60) -> float:
    """Gauge of ``point`` w.r.t. the body: min r with point in r*body.

    Bisection over the weak membership oracle; the per-probe tolerance tracks
    the bracket so early probes are cheap and late probes are sharp. Points
    outside the body's span have no finite scaling and return inf.
    """
    if handle.inflate:
        raise ValueError("minkowski_norm is defined for the bare body; inflate unsupported")
    a = np.asarray(point, dtype=float).reshape(-1)
    if a.size != handle.dim:
        raise ValueError(f"point has dim {a.size}, body has dim {handle.dim}")
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0.0:
        return 0.0
    degen = handle.degenerate_axes
    if degen.size and np.abs(a[degen]).max() > 1e-12 * norm_a:
        return math.inf  # nonzero component along an axis the body cannot reach
    # per-axis extents give a sound lower bound on the gauge
    with np.errstate(divide="ignore", invalid="ignore"):
        axis_ratio = np.abs(a) / handle.box
    axis_ratio = axis_ratio[np.isfinite(axis_ratio)]
    lo = max(norm_a / handle.outer_radius, float(axis_ratio.max()) if axis_ratio.size else 0.0)
    if not np.isfinite(lo) or lo == 0.0:
        lo = norm_a / handle.outer_radius

    def inside(r: float, tol_abs: float) -> bool:
        res = min_distance_batch(
            handle.columns, a[None, :], r,
            certify_below=0.5 * tol_abs, certify_above=tol_abs,
            gap_tol=0.25 * tol_abs, max_iter=400_000,
        )
        st = int(res.status[0])
        if st == CERT_INSIDE:
            return True
        if st == CERT_OUTSIDE:
            return False
        if st == CERT_TIGHT:
            return float(res.value[0]) <= 0.75 * tol_abs
        raise OracleConvergenceError(f"norm probe at r={r:.6g} did not converge")

    # weak probes: answers within tol of the boundary may go either way, which
    # keeps every probe cheap and bounds the final gauge error by ~rel_tol
    tol = max(0.25 * rel_tol * norm_a, 1e-12)
    hi = max(lo, 1e-12)
    grew = 0
    while grew <= max_doublings:
        if inside(hi, tol):
            break
        hi *= 2.0
        grew += 1
    else:
        return math.inf
    if grew == 0:
        lo = hi * 0.5  # initial lower bound was already inside; rewiden
        while lo > 1e-12 and inside(lo, tol):
            hi = lo
            lo *= 0.5
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if inside(mid, tol):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
