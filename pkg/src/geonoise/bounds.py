"""Volume-scaling lower bounds on query-release error, and reference curves.

The full-dimensional bound is eps^-1 * d * sqrt(d) * vol(K)^(1/d) where K is
the query body. The generalized bound takes the best k-dimensional orthogonal
projection; the supremum over all projections is not computable, so it is
restricted to the spans of the top-k covariance eigenvectors, which is the
family the recursive mechanism's analysis works with. The restricted value is
therefore itself a lower bound on the generalized one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .body import PolytopeHandle
from .estimates import (
    CovarianceSummary,
    VolumeEstimate,
    estimate_covariance,
    estimate_volume_radius,
    project_query,
)
from .query import QueryMatrix
from .rng import as_generator

# covariance and projected-volume estimates assume nothing; the bound's
# interpretation at general k leans on the body's isotropic constant being
# O(1), which is the (unproven) hyperplane conjecture
ALPHA_NOTE = "values assume the body's isotropic constant is O(1) (hyperplane conjecture)"


@dataclass(frozen=True)
class VolBound:
    """Full-dimensional volume lower bound with its Monte Carlo interval."""

    value: float
    ci_low: float
    ci_high: float
    estimate: VolumeEstimate


@dataclass(frozen=True)
class BoundReport:
    vol_lb: float
    gvol_lb: float
    per_k: "tuple[dict, ...]"
    volume_ci: "tuple[float, float]"
    alpha_assumption: str

    def to_dict(self) -> dict:
        return {
            "vol_lb": self.vol_lb,
            "gvol_lb": self.gvol_lb,
            "per_k": list(self.per_k),
            "volume_ci": list(self.volume_ci),
            "alpha_assumption": self.alpha_assumption,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def vol_lb(query: QueryMatrix, eps: float, rng, *, trials: int = 200_000) -> VolBound:
    """eps^-1 * d*sqrt(d) * vol(K)^(1/d), interval propagated from the volume."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    handle = PolytopeHandle(query)
    est = estimate_volume_radius(handle, as_generator(rng), trials=trials)
    d = query.d
    scale = d * math.sqrt(d) / eps
    return VolBound(scale * est.radius, scale * est.ci_low, scale * est.ci_high, est)


def gvol_lb(
    query: QueryMatrix,
    eps: float,
    cov: CovarianceSummary,
    rng,
    *,
    trials: int = 200_000,
    full_trials: "int | None" = None,
) -> BoundReport:
    """Best projected bound over top-k covariance eigenspaces, k = 1..d.

    The k-th entry projects K onto the span of the k leading eigenvectors and
    scores it eps^-1 * k*sqrt(k) * vol_k^(1/k). The k = d entry is a rotation
    of K, so it re-estimates the full bound; the reported vol_lb comes from an
    independent unprojected estimate so the two can cross-check.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = query.d
    if cov.eigenvectors.shape != (d, d):
        raise ValueError("covariance summary does not match the query dimension")
    gen = as_generator(rng)

    base = vol_lb(query, eps, gen, trials=trials if full_trials is None else full_trials)

    per_k = []
    best = -np.inf
    for k in range(1, d + 1):
        basis = cov.eigenvectors[:, :k]
        proj = project_query(query, basis)
        est = estimate_volume_radius(PolytopeHandle(proj), gen, trials=trials)
        scale = k * math.sqrt(k) / eps
        row = {
            "k": k,
            "value": scale * est.radius,
            "ci_low": scale * est.ci_low,
            "ci_high": scale * est.ci_high,
        }
        per_k.append(row)
        best = max(best, row["value"])

    return BoundReport(
        vol_lb=base.value,
        gvol_lb=float(best),
        per_k=tuple(per_k),
        volume_ci=(base.ci_low, base.ci_high),
        alpha_assumption=ALPHA_NOTE,
    )


def theory_curves(d: int, n: int, eps: float, delta: float = 0.1) -> dict:
    """Reference scalings with all constants set to 1, for trend comparison.

    laplace_ref = d*sqrt(d)/eps, knorm_ref = d*min(sqrt(d), sqrt(ln(n/d)))/eps,
    gauss_ref = d*sqrt(ln(1/delta))/eps. The K-norm reference follows the
    random-query error theorem, whose log(n/d) regime needs d <= n/2.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not (0 < delta < 1):
        raise ValueError("delta must be in (0, 1)")
    if d > n // 2:
        raise ValueError(f"knorm_ref needs d <= n/2, got d={d}, n={n}")
    return {
        "laplace_ref": d * math.sqrt(d) / eps,
        "knorm_ref": d * min(math.sqrt(d), math.sqrt(math.log(n / d))) / eps,
        "gauss_ref": d * math.sqrt(math.log(1.0 / delta)) / eps,
    }


def bound_report_for(query: QueryMatrix, eps: float, rng, *,
                     trials: int = 200_000, cov_samples: "int | None" = None,
                     sampler: str = "rejection") -> BoundReport:
    """Convenience wrapper: estimate covariance, then the full report."""
    gen = as_generator(rng)
    cov = estimate_covariance(PolytopeHandle(query), gen, samples=cov_samples,
                              sampler=sampler)
    return gvol_lb(query, eps, cov, gen, trials=trials)
