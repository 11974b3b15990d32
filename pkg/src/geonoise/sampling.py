"""Approximately uniform samplers for noise bodies.

Two routes: exact-up-to-tolerance rejection from the bounding box (viable only
when the body fills a decent fraction of its box), and a lazy Metropolis walk
on a lattice spanning the box (the workhorse in higher dimension). Both run
in box-normalized coordinates so the membership tolerance and the lattice
respect anisotropic bodies; for the spec bodies with unit extents this is the
identity. The walk's stationary distribution is uniform over the lattice
cells whose centers pass the weak membership oracle, so the sampled body
matches the true body up to a per-axis inflation of half a cell plus the
membership band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .body import (
    CERT_INSIDE,
    CERT_TIGHT,
    CERT_UNRESOLVED,
    PolytopeHandle,
    min_distance_batch,
)
from .rng import as_generator


class AcceptanceRateError(RuntimeError):
    """Rejection sampling aborted: acceptance rate below the safety floor."""


# below this many live chains, batched dispatch overhead beats the work and
# the walk switches to a memoized per-cell path
_SCALAR_CUTOFF = 192


@dataclass
class GridWalkConfig:
    """Lattice walk parameters.

    beta is the lattice side length in normalized units (default 1/d^2); the
    step budget defaults to 50*d^2/beta^2; burn_in (default steps//2) is the
    discarded prefix when a trajectory of draws is collected and has no effect
    on single-draw sampling, which returns the state after the full budget.
    band is the membership tolerance used by the walk, default beta/8.
    """

    beta: "float | None" = None
    steps: "int | None" = None
    burn_in: "int | None" = None
    band: "float | None" = None
    max_fw_iter: int = 160

    def resolved(self, d: int) -> "GridWalkConfig":
        beta = 1.0 / (d * d) if self.beta is None else float(self.beta)
        if not (0 < beta <= 1):
            raise ValueError(f"lattice side must be in (0, 1], got {beta}")
        steps = int(math.ceil(50.0 * d * d / (beta * beta))) if self.steps is None else int(self.steps)
        if steps < 0:
            raise ValueError("step budget must be non-negative")
        burn_in = steps // 2 if self.burn_in is None else int(self.burn_in)
        band = beta / 8.0 if self.band is None else float(self.band)
        if not (0 < band < 1):
            raise ValueError(f"membership band must be in (0, 1), got {band}")
        return GridWalkConfig(beta, steps, burn_in, band, self.max_fw_iter)


@dataclass
class WalkDiagnostics:
    chains: int
    steps: int
    proposals: int = 0
    accepted: int = 0
    unresolved: int = 0
    fw_iterations: int = 0

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


class _CellMemo:
    """Sorted-tier map from int64 lattice cell ids to accept verdicts.

    Each insert appends one already-sorted tier; adjacent tiers of comparable
    size are merged, so tier count stays logarithmic and total merge work is
    linearithmic. Lookups are one vectorized searchsorted per tier. Ids never
    repeat across tiers because callers only insert ids that just missed.
    """

    __slots__ = ("tiers",)

    def __init__(self):
        self.tiers: "list[tuple[np.ndarray, np.ndarray]]" = []

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        """Return int8 verdicts: 1 accept, 0 reject, -1 unknown."""
        out = np.full(ids.shape, -1, dtype=np.int8)
        for store, verd in self.tiers:
            loc = np.searchsorted(store, ids)
            loc_c = np.minimum(loc, store.size - 1)
            hit = store[loc_c] == ids
            out[hit] = verd[loc_c[hit]]
        return out

    def insert(self, ids: np.ndarray, verdicts: np.ndarray) -> None:
        """ids must be sorted ascending (np.unique output qualifies)."""
        if not ids.size:
            return
        self.tiers.append((ids, np.asarray(verdicts, dtype=bool)))
        while len(self.tiers) >= 2 and self.tiers[-2][0].size < 2 * self.tiers[-1][0].size:
            i2, v2 = self.tiers.pop()
            i1, v1 = self.tiers.pop()
            merged = np.concatenate([i1, i2])
            mverd = np.concatenate([v1, v2])
            srt = np.argsort(merged, kind="stable")
            self.tiers.append((merged[srt], mverd[srt]))


def _working_geometry(handle: PolytopeHandle):
    """(columns, box, target distance, band scale) in the walk's metric."""
    if handle.inflate:
        # walk physically; membership = distance to the bare hull at most 1
        return handle.columns, handle.box, 1.0
    return handle.normalized_columns(), handle.box, 0.0


def grid_walk_batch(
    handle: PolytopeHandle,
    count: int,
    rng,
    config: "GridWalkConfig | None" = None,
    *,
    beta_per_chain: "np.ndarray | None" = None,
    steps_per_chain: "np.ndarray | None" = None,
    trace: "list | None" = None,
) -> "tuple[np.ndarray, WalkDiagnostics]":
    """Run ``count`` independent lattice walks in lockstep; return final points.

    Per-chain lattice sides / step budgets override the config when given
    (used by the efficient mechanism, whose accuracy parameter is coupled to
    the sampled radius). Chains past their budget stay frozen but the random
    stream keeps a fixed per-step shape, so results are reproducible.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = as_generator(rng)
    d = handle.dim
    cfg = (config or GridWalkConfig()).resolved(d)
    W, box, target = _working_geometry(handle)

    beta = np.full(count, cfg.beta) if beta_per_chain is None else np.asarray(beta_per_chain, dtype=float).copy()
    if beta.shape != (count,):
        raise ValueError("beta_per_chain must have one entry per chain")
    if np.any((beta <= 0) | (beta > 1)):
        raise ValueError("per-chain lattice sides must be in (0, 1]")
    if steps_per_chain is None:
        steps = np.full(count, cfg.steps, dtype=np.int64)
    else:
        steps = np.asarray(steps_per_chain, dtype=np.int64).copy()
        if steps.shape != (count,):
            raise ValueError("steps_per_chain must have one entry per chain")
    band = cfg.band * np.ones(count) if beta_per_chain is None else beta / 8.0

    # chains sorted by budget, longest first, so each iteration only touches
    # the still-active prefix; undone before returning
    order = np.argsort(-steps, kind="stable")
    inverse = np.empty(count, dtype=np.int64)
    inverse[order] = np.arange(count)
    steps_s = steps[order]
    beta_s = beta[order]
    band_s = band[order]
    in_thresh = target + 0.5 * band_s
    out_thresh = target + band_s
    mid_thresh = target + 0.75 * band_s
    # rows bracketed inside the tolerance window exit early as tight; the
    # midpoint rule below keeps their verdict within the band envelope
    gap_s = 0.5 * band_s

    n_cols = W.shape[1]
    # integer lattice coordinates: exact arithmetic, no float drift, and the
    # coordinates double as memo keys
    pos = np.zeros((count, d), dtype=np.int64)
    diag = WalkDiagnostics(chains=count, steps=int(steps_s[0]) if count else 0)

    # on a shared lattice (single beta) every chain sees the same cells, so
    # verdicts are memoized by int64 cell id and chains need no warm starts.
    # in lattice units the body spans +-1 per axis either way; only the band
    # is a physical length on inflated bodies and must be rescaled
    extent = 1.0 + cfg.band / max(float(box.min()), 1e-12) if handle.inflate else 1.0 + cfg.band
    K = int(math.ceil(extent / cfg.beta)) + 2
    base = 2 * K + 1
    use_ids = beta_per_chain is None and base ** d < 2 ** 62
    X = np.zeros((count, n_cols))  # warm preimages from each chain's last solve
    P = np.zeros((count, d))
    if use_ids:
        strides = (base ** np.arange(d)).astype(np.int64)
        cell_memo = _CellMemo()
    else:
        memo: dict = {}

    total_steps = int(steps_s[0]) if count else 0
    chain0 = int(inverse[0])  # sorted position of the caller's first chain
    for t in range(total_steps):
        live = int(np.searchsorted(-steps_s, -t, side="left"))
        if live == 0:
            break
        move_coin = gen.random(live)
        coord = gen.integers(0, d, size=live)
        sign = gen.integers(0, 2, size=live) * 2 - 1
        movers = np.nonzero(move_coin < 0.5)[0]
        if not movers.size:
            if trace is not None:
                trace.append((t, pos[chain0] * beta_s[chain0], False))
            continue
        prev0 = pos[chain0].copy() if trace is not None else None
        prop = pos[movers].copy()
        prop[np.arange(movers.size), coord[movers]] += sign[movers]
        if use_ids:
            ids = (prop + K) @ strides
            verd = cell_memo.lookup(ids)
            unk = verd < 0
            if unk.any():
                u_ids, u_first = np.unique(ids[unk], return_index=True)
                unk_chains = movers[unk]
                solve_chains = unk_chains[u_first]
                centers = prop[unk][u_first] * cfg.beta
                work = centers * box if handle.inflate else centers
                res = min_distance_batch(
                    W, work, 1.0,
                    warm=X[solve_chains], warm_image=P[solve_chains],
                    certify_below=target + 0.5 * cfg.band,
                    certify_above=target + cfg.band,
                    gap_tol=0.5 * cfg.band, max_iter=cfg.max_fw_iter,
                )
                fresh = (res.status == CERT_INSIDE) | (
                    (res.status == CERT_TIGHT) & (res.value <= target + 0.75 * cfg.band))
                diag.unresolved += int((res.status == CERT_UNRESOLVED).sum())
                diag.fw_iterations += res.iterations
                cell_memo.insert(u_ids, fresh)
                grp = np.searchsorted(u_ids, ids[unk])
                verd[unk] = fresh[grp]
                # refresh warm state for every chain whose cell was solved now;
                # even a rejected cell's projection is a good nearby warm start
                X[unk_chains] = res.preimage[grp]
                P[unk_chains] = res.image[grp]
            acc = verd == 1
            diag.proposals += movers.size
            diag.accepted += int(acc.sum())
            pos[movers[acc]] = prop[acc]
        else:
            prop_f = prop * beta_s[movers, None]
            work_points = prop_f * box if handle.inflate else prop_f
            if live > _SCALAR_CUTOFF:
                res = min_distance_batch(
                    W, work_points, 1.0,
                    warm=X[movers], warm_image=P[movers],
                    certify_below=in_thresh[movers], certify_above=out_thresh[movers],
                    gap_tol=gap_s[movers], max_iter=cfg.max_fw_iter,
                )
                accepted = (res.status == CERT_INSIDE) | (
                    (res.status == CERT_TIGHT) & (res.value <= mid_thresh[movers]))
                diag.proposals += movers.size
                diag.accepted += int(accepted.sum())
                diag.unresolved += int((res.status == CERT_UNRESOLVED).sum())
                diag.fw_iterations += res.iterations
                acc_idx = movers[accepted]
                pos[acc_idx] = prop[accepted]
                X[acc_idx] = res.preimage[accepted]
                P[acc_idx] = res.image[accepted]
            else:
                # small live prefix: per-proposal dispatch overhead dominates,
                # so decide cells one at a time with a memo keyed by the
                # chain's lattice side and integer cell
                prop_rows = prop.tolist()
                for i, ch in enumerate(movers):
                    key = (float(beta_s[ch]), *prop_rows[i])
                    verdict = memo.get(key)
                    diag.proposals += 1
                    if verdict is None:
                        res = min_distance_batch(
                            W, work_points[i][None], 1.0,
                            warm=X[ch][None], warm_image=P[ch][None],
                            certify_below=in_thresh[ch], certify_above=out_thresh[ch],
                            gap_tol=gap_s[ch], max_iter=cfg.max_fw_iter,
                        )
                        st = int(res.status[0])
                        verdict = st == CERT_INSIDE or (
                            st == CERT_TIGHT and float(res.value[0]) <= mid_thresh[ch])
                        if st == CERT_UNRESOLVED:
                            diag.unresolved += 1
                        diag.fw_iterations += res.iterations
                        if len(memo) < 2_000_000:
                            memo[key] = verdict
                        if verdict:
                            X[ch] = res.preimage[0]
                            P[ch] = res.image[0]
                    if verdict:
                        diag.accepted += 1
                        pos[ch] = prop[i]
        if trace is not None:
            trace.append((t, pos[chain0] * beta_s[chain0],
                          not np.array_equal(prev0, pos[chain0])))

    # smear over the lattice cell so the output density is piecewise constant
    perturb = gen.uniform(-0.5, 0.5, size=(count, d))
    out = (pos + perturb) * beta_s[:, None] * box
    return out[inverse], diag


def grid_walk_sample(handle: PolytopeHandle, rng, config: "GridWalkConfig | None" = None,
                     *, trace_path=None) -> np.ndarray:
    """One approximately uniform draw from the body via the lattice walk."""
    trace = [] if trace_path is not None else None
    pts, _ = grid_walk_batch(handle, 1, rng, config, trace=trace)
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            fh.write("step," + ",".join(f"x{i}" for i in range(handle.dim)) + ",accepted\n")
            for t, p, acc in trace:
                fh.write(f"{t}," + ",".join(f"{v:.6g}" for v in p) + f",{int(acc)}\n")
    return pts[0]


def rejection_sample(
    handle: PolytopeHandle,
    count: int,
    rng,
    *,
    min_rate: float = 1e-6,
    chunk: int = 16384,
    max_proposals: int = 200_000_000,
    max_fw_iter: int = 4000,
) -> np.ndarray:
    """Uniform draws (up to the membership band) by bounding-box rejection.

    Aborts with AcceptanceRateError once the observed rate is credibly below
    ``min_rate``; the lattice walk is the fallback for such bodies.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = as_generator(rng)
    d = handle.dim
    W, box, target = _working_geometry(handle)
    if handle.inflate:
        band = handle.eta
    else:
        band = handle.eta / float(box.max())
    in_thresh = target + 0.5 * band
    out_thresh = target + band

    out = np.empty((count, d))
    got = 0
    proposed = 0
    while got < count:
        if proposed >= max_proposals:
            raise AcceptanceRateError(
                f"rejection sampler gave up after {proposed} proposals ({got}/{count} accepted)"
            )
        m = min(chunk, max_proposals - proposed)
        raw = gen.uniform(-1.0, 1.0, size=(m, d))
        work = raw * box if handle.inflate else raw
        res = min_distance_batch(
            W, work, 1.0,
            certify_below=in_thresh, certify_above=out_thresh,
            gap_tol=0.5 * band, max_iter=max_fw_iter,
        )
        keep = (res.status == CERT_INSIDE) | (
            (res.status == CERT_TIGHT) & (res.value <= target + 0.75 * band))
        hits = work[keep]
        proposed += m
        take = min(count - got, hits.shape[0])
        if take:
            pts = hits[:take]
            out[got:got + take] = pts if handle.inflate else pts * box
            got += take
        if proposed >= 1_000_000 and (got + 1) / proposed < min_rate:
            raise AcceptanceRateError(
                f"acceptance rate {(got + 1) / proposed:.2e} below floor {min_rate:.2e} "
                f"after {proposed} proposals"
            )
    return out


def make_body_sampler(handle: PolytopeHandle, choice: str, rng,
                      config: "GridWalkConfig | None" = None):
    """Uniform-sampler factory: returns callable(count) -> (count, d) points."""
    gen = as_generator(rng)
    if choice == "rejection":
        return lambda count: rejection_sample(handle, count, gen)
    if choice == "grid-walk":
        return lambda count: grid_walk_batch(handle, count, gen, config)[0]
    raise ValueError(f"unknown sampler choice {choice!r}; use 'rejection' or 'grid-walk'")
