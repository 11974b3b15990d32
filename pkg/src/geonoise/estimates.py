"""Moment and volume estimation for noise bodies.

Covariance here means the raw second-moment matrix: the bodies are centrally
symmetric, so the true mean is the origin and subtracting an empirical mean
would only add noise. The eigendecomposition of that matrix drives the
recursive mechanism's subspace splits; the volume radius vol(K)^(1/d) feeds
the lower-bound calculations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .body import CERT_INSIDE, CERT_TIGHT, PolytopeHandle, min_distance_batch
from .query import QueryMatrix
from .rng import as_generator
from .sampling import GridWalkConfig, grid_walk_batch, rejection_sample


@dataclass(frozen=True)
class CovarianceSummary:
    """Second-moment matrix of a body with its sorted eigensystem.

    eigenvalues are descending; eigenvectors[:, i] pairs with eigenvalues[i].
    mean_norm records ‖empirical mean‖₂ as a sanity flag (the true centroid
    is 0 by symmetry); mean_ok is the check against the stated tolerance.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    samples: int
    mean_norm: float
    mean_ok: bool


def estimate_covariance(
    handle: PolytopeHandle,
    rng,
    *,
    samples: "int | None" = None,
    sampler: str = "grid-walk",
    walk_config: "GridWalkConfig | None" = None,
    mean_tol: float = 0.05,
) -> CovarianceSummary:
    """Second-moment matrix from approximately uniform draws.

    Default sample count is max(1000, d^4), enough to pin the matrix well at
    the dimensions this library targets. mean_tol bounds the acceptable
    empirical-mean norm relative to the body's outer radius.
    """
    gen = as_generator(rng)
    d = handle.dim
    if samples is None:
        samples = max(1000, d ** 4)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if sampler == "grid-walk":
        pts, _ = grid_walk_batch(handle, samples, gen, walk_config)
    elif sampler == "rejection":
        pts = rejection_sample(handle, samples, gen)
    elif callable(sampler):
        pts = np.asarray(sampler(samples), dtype=float)
        if pts.shape != (samples, d):
            raise ValueError("sampler returned wrong shape")
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    M = pts.T @ pts / samples
    M = 0.5 * (M + M.T)
    mean = pts.mean(axis=0)
    mean_norm = float(np.linalg.norm(mean))
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(vals)[::-1]
    return CovarianceSummary(
        matrix=M,
        eigenvalues=vals[order].copy(),
        eigenvectors=vecs[:, order].copy(),
        samples=samples,
        mean_norm=mean_norm,
        mean_ok=bool(mean_norm <= mean_tol * max(handle.outer_radius, 1e-12)),
    )


def top_eigenspace_projection(cov: CovarianceSummary, k: int):
    """Projector onto the span of the top-k eigenvectors, plus the basis.

    Returns (P, U): P = U Uᵀ is d x d, U is d x k with orthonormal columns.
    """
    d = cov.eigenvectors.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    U = cov.eigenvectors[:, :k].copy()
    return U @ U.T, U


def project_query(query: QueryMatrix, basis: np.ndarray) -> QueryMatrix:
    """Re-express the workload in the coordinates of an orthonormal basis.

    The result is basisᵀ F (k x n). Projected entries may leave [-1, 1], so
    the returned matrix drops the entry bound; its sensitivity is recomputed
    from its own columns by the usual rule.
    """
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2 or B.shape[0] != query.d:
        raise ValueError(f"basis must be {query.d} x k")
    gram = B.T @ B
    if not np.allclose(gram, np.eye(B.shape[1]), atol=1e-6):
        raise ValueError("basis columns are not orthonormal (Gram check failed)")
    return QueryMatrix(B.T @ query.entries, bounded=False)


@dataclass(frozen=True)
class VolumeEstimate:
    """vol(K)^(1/d) with a 95% confidence interval and the raw hit tally."""

    radius: float
    ci_low: float
    ci_high: float
    hits: int
    trials: int
    box_volume: float


def estimate_volume_radius(
    handle: PolytopeHandle,
    rng,
    trials: int = 200_000,
    *,
    dim_cap: int = 10,
    max_fw_iter: int = 4000,
) -> VolumeEstimate:
    """Monte Carlo vol(K)^(1/d) by hit counting inside the bounding box.

    The box is the tight per-axis extent of the body, so the hit rate decays
    with dimension much slower than against a fixed unit cube; the cap still
    guards against the regime where the rate is too small to resolve. The CI
    comes from the binomial normal approximation pushed through p^(1/d)
    (delta method on the log scale).
    """
    d = handle.dim
    if d > dim_cap:
        raise ValueError(f"volume estimation capped at d={dim_cap}, got d={d}")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    gen = as_generator(rng)
    W, box = (handle.columns, handle.box)
    if handle.inflate:
        raise ValueError("volume radius is defined for the bare body")
    degen = handle.degenerate_axes
    if degen.size:
        return VolumeEstimate(0.0, 0.0, 0.0, 0, trials, 0.0)
    Wn = handle.normalized_columns()
    band = handle.eta / float(box.max())
    hits = 0
    done = 0
    chunk = 65536
    while done < trials:
        m = min(chunk, trials - done)
        raw = gen.uniform(-1.0, 1.0, size=(m, d))
        res = min_distance_batch(
            Wn, raw, 1.0,
            certify_below=0.5 * band, certify_above=band,
            gap_tol=0.5 * band, max_iter=max_fw_iter,
        )
        hit = (res.status == CERT_INSIDE) | (
            (res.status == CERT_TIGHT) & (res.value <= 0.75 * band))
        hits += int(hit.sum())
        done += m
    p_hat = hits / trials
    box_volume = float(np.prod(2.0 * box))
    if hits == 0:
        return VolumeEstimate(0.0, 0.0, 0.0, 0, trials, box_volume)
    radius = float(p_hat ** (1.0 / d) * box_volume ** (1.0 / d))
    # delta method: Var(log p_hat) ~ (1-p)/(n p); push through exp(log/d)
    se_log = math.sqrt(max(1.0 - p_hat, 0.0) / (trials * p_hat))
    lo = radius * math.exp(-1.96 * se_log / d)
    hi = radius * math.exp(+1.96 * se_log / d)
    return VolumeEstimate(radius, lo, hi, hits, trials, box_volume)
