"""Empirical privacy and optimality audits.

The density-ratio audit histograms mechanism outputs on neighboring databases
and checks every well-populated bin against the e^eps bound, with a Wilson
interval guard so sampling noise does not produce false alarms. A failed audit
certifies a real violation direction; a passed one is evidence, not proof.
Multi-dimensional outputs are audited through their first coordinate: any
measurable projection of a private mechanism is private, so a projected
failure is a genuine failure.

The packing check turns the volume lower-bound proof into an executable test:
build a separated point set inside the scaled body, and verify the mechanism's
observed error is not small enough to contradict the disjoint-ball mass
argument at the claimed privacy level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .body import PolytopeHandle
from .query import NeighborPair, QueryMatrix, evaluate
from .rng import as_generator

_WILSON_Z = 1.96


@dataclass(frozen=True)
class AuditConfig:
    bin_width: float = 0.25
    trials: int = 100_000
    tolerance: float = 0.15
    min_count: int = 200

    def __post_init__(self):
        if self.bin_width <= 0 or self.trials <= 0 or self.tolerance <= 0 or self.min_count <= 0:
            raise ValueError("audit config values must all be positive")


@dataclass(frozen=True)
class AuditReport:
    mechanism: str
    eps: float
    worst_ratio: float
    bound: float
    verdict: str  # "pass" | "fail" | "inconclusive"
    bins_tested: int

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "eps": self.eps,
            "worst_ratio": self.worst_ratio,
            "bound": self.bound,
            "verdict": self.verdict,
            "bins_tested": self.bins_tested,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _wilson_bounds(count: int, total: int) -> "tuple[float, float]":
    """Wilson score interval for a binomial proportion."""
    if total == 0:
        return 0.0, 1.0
    z = _WILSON_Z
    p = count / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _ratio_histogram_test(left: np.ndarray, right: np.ndarray, bound: float,
                          cfg: AuditConfig, name: str, eps: float) -> AuditReport:
    lo = min(left.min(), right.min())
    hi = max(left.max(), right.max())
    w = cfg.bin_width
    start = math.floor(lo / w) * w
    n_bins = max(int(math.ceil((hi - start) / w)), 1)
    edges = start + w * np.arange(n_bins + 1)
    cl, _ = np.histogram(left, bins=edges)
    cr, _ = np.histogram(right, bins=edges)

    total = left.size
    worst = 0.0
    tested = 0
    for a, b in zip(cl.tolist(), cr.tolist()):
        if max(a, b) < cfg.min_count:
            continue
        tested += 1
        a_lo, a_hi = _wilson_bounds(a, total)
        b_lo, b_hi = _wilson_bounds(b, total)
        # guarded ratios: optimistic denominator so noise cannot fake a breach
        if b_hi > 0:
            worst = max(worst, a_lo / b_hi)
        elif a_lo > 0:
            worst = float("inf")
        if a_hi > 0:
            worst = max(worst, b_lo / a_hi)
        elif b_lo > 0:
            worst = float("inf")

    if tested == 0:
        verdict = "inconclusive"
    else:
        verdict = "pass" if worst <= bound else "fail"
    return AuditReport(name, eps, float(worst), float(bound), verdict, tested)


def _collect_first_coord(mechanism, query: QueryMatrix, x: np.ndarray,
                         trials: int, gen) -> np.ndarray:
    out = np.empty(trials)
    probe = np.asarray(mechanism(query, x, gen), dtype=float).reshape(-1)
    out[0] = probe[0]
    for i in range(1, trials):
        out[i] = float(np.asarray(mechanism(query, x, gen)).reshape(-1)[0])
    return out


def ratio_audit(mechanism, query: QueryMatrix, pair: NeighborPair, eps: float,
                cfg: AuditConfig, rng, *, name: "str | None" = None) -> AuditReport:
    """Histogram test of the e^eps density-ratio bound on a neighbor pair.

    ``mechanism`` is a callable (query, x, rng) -> answer vector. Vector
    mechanisms that support batching can expose it via a ``many`` attribute
    (query, x, count, rng) -> (count, d) array; the audit uses it when present.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    gen = as_generator(rng)
    label = name or getattr(mechanism, "__name__", "mechanism")
    many = getattr(mechanism, "many", None)
    if many is not None:
        left = np.asarray(many(query, pair.left, cfg.trials, gen))[:, 0]
        right = np.asarray(many(query, pair.right, cfg.trials, gen))[:, 0]
    else:
        left = _collect_first_coord(mechanism, query, pair.left, cfg.trials, gen)
        right = _collect_first_coord(mechanism, query, pair.right, cfg.trials, gen)
    bound = math.exp(eps) * (1.0 + cfg.tolerance)
    return _ratio_histogram_test(left, right, bound, cfg, label, eps)


def transitivity_check(mechanism, query: QueryMatrix, x, x_far, k: int, eps: float,
                       cfg: AuditConfig, rng, *, name: "str | None" = None) -> AuditReport:
    """Ratio audit across l1 distance k with the grouped bound e^(eps*k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(x, dtype=float)
    x_far = np.asarray(x_far, dtype=float)
    moved = float(np.abs(x - x_far).sum())
    if moved > k + 1e-9:
        raise ValueError(f"databases are l1 distance {moved} apart, claimed k={k}")
    gen = as_generator(rng)
    label = name or getattr(mechanism, "__name__", "mechanism")
    many = getattr(mechanism, "many", None)
    if many is not None:
        left = np.asarray(many(query, x, cfg.trials, gen))[:, 0]
        right = np.asarray(many(query, x_far, cfg.trials, gen))[:, 0]
    else:
        left = _collect_first_coord(mechanism, query, x, cfg.trials, gen)
        right = _collect_first_coord(mechanism, query, x_far, cfg.trials, gen)
    bound = math.exp(eps * k) * (1.0 + cfg.tolerance)
    return _ratio_histogram_test(left, right, bound, cfg, label, eps)


def greedy_packing(handle: PolytopeHandle, lam: float, target: float, rng,
                   budget: int, *, sampler=None) -> np.ndarray:
    """Grow a pairwise >= target point set inside lam*K from uniform samples.

    budget must cover the existence guarantee's scale (>= 10 * e^d candidate
    draws). target = 0 admits every candidate.
    """
    d = handle.dim
    if lam <= 0:
        raise ValueError("lam must be positive")
    if target < 0:
        raise ValueError("target must be nonnegative")
    if budget < 10.0 * math.exp(d):
        raise ValueError(f"budget {budget} below the 10*e^d = {10.0 * math.exp(d):.0f} floor")
    gen = as_generator(rng)
    if sampler is None:
        from .sampling import rejection_sample
        candidates = lam * rejection_sample(handle, budget, gen)
    else:
        candidates = lam * np.asarray(sampler(budget), dtype=float)

    kept = np.empty((0, d))
    for point in candidates:
        if kept.shape[0] == 0:
            kept = point[None, :]
            continue
        if target == 0.0 or np.min(np.linalg.norm(kept - point, axis=1)) >= target:
            kept = np.vstack([kept, point[None, :]])
    return kept


def _l1_ball_points(n: int, count: int, gen) -> np.ndarray:
    """Uniform draws from the unit l1 ball in R^n."""
    g = gen.standard_exponential(size=(count, n))
    signs = gen.integers(0, 2, size=(count, n)) * 2.0 - 1.0
    simplex = g / g.sum(axis=1, keepdims=True)
    radii = gen.random(count) ** (1.0 / n)
    return signs * simplex * radii[:, None]


def packing_error_check(mechanism, query: QueryMatrix, eps: float, rng, *,
                        trials: int = 200, budget: "int | None" = None,
                        name: "str | None" = None) -> dict:
    """Executable form of the volume lower-bound contradiction, d <= 4.

    Builds a packing of the image of lam*B1 (lam = d/2eps) at the largest
    tested separation whose size still exceeds 2*e^(2*eps*lam); any private
    mechanism whose median error fell below half that separation would violate
    the disjoint-ball mass argument, so measured median error >= bound passes.
    """
    d = query.d
    if d > 4:
        raise ValueError("packing check is desk-scale only (d <= 4)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    gen = as_generator(rng)
    lam = d / (2.0 * eps)
    need = 2.0 * math.exp(2.0 * eps * lam)
    if budget is None:
        budget = int(max(10.0 * math.exp(d), 400))

    # candidate preimages in lam*B1^n, images in lam*K
    w = lam * _l1_ball_points(query.n, budget, gen)
    p = w @ query.entries.T

    handle = PolytopeHandle(query)
    vol_radius = None
    from .estimates import estimate_volume_radius
    try:
        vol_radius = estimate_volume_radius(handle, gen, trials=20_000).radius
    except ValueError:
        vol_radius = 0.0
    label = name or getattr(mechanism, "__name__", "mechanism")

    best_sep = 0.0
    best_keep = None
    for c in (0.4, 0.2, 0.1, 0.05):
        sep = c * lam * vol_radius * math.sqrt(d)
        if sep <= 0:
            break
        kept_idx = []
        kept = np.empty((0, d))
        for i in range(budget):
            if kept.shape[0] == 0 or np.min(np.linalg.norm(kept - p[i], axis=1)) >= sep:
                kept_idx.append(i)
                kept = np.vstack([kept, p[i][None, :]])
        if len(kept_idx) > need:
            best_sep = sep
            best_keep = kept_idx
            break

    if best_keep is None:
        return {"mechanism": label, "eps": eps, "verdict": "inconclusive",
                "packing_size": 0, "bound": 0.0, "measured": float("nan")}

    bound = best_sep / 2.0
    # the mass argument constrains every preimage; probe a few
    probe = best_keep[:3]
    medians = []
    for i in probe:
        errs = np.empty(trials)
        fx = evaluate(query, w[i])
        for t in range(trials):
            a = np.asarray(mechanism(query, w[i], gen), dtype=float).reshape(-1)
            errs[t] = float(np.linalg.norm(a - fx))
        medians.append(float(np.median(errs)))
    measured = min(medians)
    verdict = "pass" if measured >= bound else "fail"
    return {"mechanism": label, "eps": eps, "verdict": verdict,
            "packing_size": len(best_keep), "bound": float(bound),
            "measured": measured}
