"""Private mechanisms for linear queries: Laplace, Gaussian, body-norm noise
(exact and walk-based variants), and the recursive non-isotropic mechanism.

All mechanisms share one output contract (NoiseSample) and one invariant: the
noise distribution never depends on the database, only on the query matrix,
so answers are translation covariant and unbiased. The body-norm mechanism
draws a = Fx + r*z with z uniform in the noise body K and r ~ Gamma(d+1, 1/eps),
which makes the answer density proportional to exp(-eps*||a - Fx||_K). Any
sampling body K' that contains K keeps the mechanism eps-private (the gauge
of K' is dominated by the gauge of K), so walk-induced body inflation costs
accuracy, never privacy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .body import PolytopeHandle
from .estimates import estimate_covariance, project_query, top_eigenspace_projection
from .query import QueryMatrix, evaluate, sensitivity
from .rng import GammaParams, as_generator, gamma_sample, gaussian_sample, laplace_sample
from .sampling import GridWalkConfig, grid_walk_batch, rejection_sample

MECHANISM_NAMES = ("laplace", "gaussian", "knorm", "knorm-mcmc", "nim")


@dataclass
class NoiseSample:
    """One mechanism invocation: the noisy answer plus diagnostics."""

    answer: np.ndarray
    mechanism: str
    epsilon: float
    trace: dict = field(default_factory=dict)


def _true_answer(query: QueryMatrix, x) -> np.ndarray:
    return evaluate(query, x)


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"epsilon must be positive and finite, got {eps}")
    return eps


def laplace_mechanism(query: QueryMatrix, x, eps: float, rng) -> NoiseSample:
    """Fx plus i.i.d. Laplace noise scaled to sensitivity/eps per coordinate."""
    eps = _check_eps(eps)
    gen = as_generator(rng)
    scale = sensitivity(query) / eps
    true = _true_answer(query, x)
    noise = laplace_sample(scale, gen, size=query.d)
    return NoiseSample(true + noise, "laplace", eps, {"scale": scale})


def laplace_many(query: QueryMatrix, x, eps: float, count: int, rng) -> np.ndarray:
    eps = _check_eps(eps)
    gen = as_generator(rng)
    scale = sensitivity(query) / eps
    true = _true_answer(query, x)
    return true + laplace_sample(scale, gen, size=(count, query.d))


def gaussian_sigma(query: QueryMatrix, eps: float, delta: float) -> float:
    """Standard calibration sigma = sensitivity * sqrt(2 ln(1.25/delta))/eps."""
    if not (0 < delta < 1):
        raise ValueError(f"delta must be in (0, 1) for the Gaussian mechanism, got {delta}")
    return sensitivity(query) * math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def gaussian_mechanism(query: QueryMatrix, x, eps: float, delta: float, rng) -> NoiseSample:
    eps = _check_eps(eps)
    gen = as_generator(rng)
    sigma = gaussian_sigma(query, eps, delta)
    true = _true_answer(query, x)
    noise = gaussian_sample(sigma, gen, size=query.d)
    return NoiseSample(true + noise, "gaussian", eps, {"sigma": sigma, "delta": delta})


def gaussian_many(query: QueryMatrix, x, eps: float, delta: float, count: int, rng) -> np.ndarray:
    eps = _check_eps(eps)
    gen = as_generator(rng)
    sigma = gaussian_sigma(query, eps, delta)
    true = _true_answer(query, x)
    return true + gaussian_sample(sigma, gen, size=(count, query.d))


def _body_draws(handle: PolytopeHandle, count: int, gen, sampler: str,
                walk_config: "GridWalkConfig | None"):
    if sampler == "rejection":
        return rejection_sample(handle, count, gen)
    if sampler == "grid-walk":
        pts, _ = grid_walk_batch(handle, count, gen, walk_config)
        return pts
    raise ValueError(f"unknown sampler {sampler!r}; use 'rejection' or 'grid-walk'")


def k_norm_mechanism(query: QueryMatrix, x, eps: float, rng, *,
                     sampler: str = "rejection",
                     walk_config: "GridWalkConfig | None" = None) -> NoiseSample:
    """Noise shaped to the body K: a = Fx + r*z, z uniform in K, r ~ Gamma(d+1, 1/eps)."""
    eps = _check_eps(eps)
    gen = as_generator(rng)
    handle = PolytopeHandle(query)
    z = _body_draws(handle, 1, gen, sampler, walk_config)[0]
    r = float(gamma_sample(GammaParams(query.d + 1, 1.0 / eps), gen))
    true = _true_answer(query, x)
    return NoiseSample(true + r * z, "knorm", eps,
                       {"r": r, "z": z, "sampler": sampler})


def k_norm_many(query: QueryMatrix, x, eps: float, count: int, rng, *,
                sampler: str = "rejection",
                walk_config: "GridWalkConfig | None" = None,
                handle: "PolytopeHandle | None" = None) -> np.ndarray:
    eps = _check_eps(eps)
    gen = as_generator(rng)
    if handle is None:
        handle = PolytopeHandle(query)
    z = _body_draws(handle, count, gen, sampler, walk_config)
    r = gamma_sample(GammaParams(query.d + 1, 1.0 / eps), gen, size=count)
    true = _true_answer(query, x)
    return true + r[:, None] * z


# walk lattice side as a fraction of the accuracy parameter: the sampled body
# is inflated by about half a lattice cell, so walking at beta/2 keeps the
# realized body within the (1+beta) envelope the accuracy analysis assumes
_EFFICIENT_GRID_FACTOR = 0.5


def _efficient_walk_params(d: int, eps: float, r: np.ndarray):
    beta = np.minimum(eps / d, 1.0 / np.maximum(r, 1e-300))
    beta = np.minimum(beta, 1.0)
    grid = _EFFICIENT_GRID_FACTOR * beta
    steps = np.ceil(50.0 * d * d / (grid * grid)).astype(np.int64)
    return beta, grid, steps


def k_norm_efficient(query: QueryMatrix, x, eps: float, rng, *,
                     steps_cap: int = 2_000_000) -> NoiseSample:
    """Walk-based body-norm mechanism with accuracy coupled to the radius.

    Draws r first, then walks the body at accuracy beta = min(eps/d, 1/r):
    large radii demand a finer walk because the body error is scaled by r.
    """
    eps = _check_eps(eps)
    gen = as_generator(rng)
    d = query.d
    r = float(gamma_sample(GammaParams(d + 1, 1.0 / eps), gen))
    beta, grid, steps = _efficient_walk_params(d, eps, np.array([r]))
    steps = np.minimum(steps, steps_cap)
    handle = PolytopeHandle(query)
    z, diag = grid_walk_batch(handle, 1, gen, GridWalkConfig(),
                              beta_per_chain=grid, steps_per_chain=steps)
    true = _true_answer(query, x)
    return NoiseSample(true + r * z[0], "knorm-mcmc", eps,
                       {"r": r, "beta": float(beta[0]), "grid": float(grid[0]),
                        "steps": int(steps[0]), "accept_rate": diag.accept_rate})


def k_norm_efficient_many(query: QueryMatrix, x, eps: float, count: int, rng, *,
                          steps_cap: int = 2_000_000,
                          handle: "PolytopeHandle | None" = None) -> np.ndarray:
    eps = _check_eps(eps)
    gen = as_generator(rng)
    d = query.d
    r = gamma_sample(GammaParams(d + 1, 1.0 / eps), gen, size=count)
    beta, grid, steps = _efficient_walk_params(d, eps, r)
    steps = np.minimum(steps, steps_cap)
    if handle is None:
        handle = PolytopeHandle(query)
    z, _ = grid_walk_batch(handle, count, gen, GridWalkConfig(),
                           beta_per_chain=grid, steps_per_chain=steps)
    true = _true_answer(query, x)
    return true + r[:, None] * z


@dataclass(frozen=True)
class NimLevel:
    """One recursion level: the query in level coordinates plus bases.

    basis (d x d_m) maps level coordinates back to the original space;
    emit_basis (d x e_m) spans the block answered at this level. The level
    bodies and bases are functions of the public query matrix only.
    """

    dim: int
    emit_dim: int
    basis: np.ndarray
    emit_basis: np.ndarray
    query: QueryMatrix
    emit_moment: float  # sum of emitted-block eigenvalues of the level body


@dataclass(frozen=True)
class NimPlan:
    """Precomputed recursion structure for a query matrix.

    eps_weights sum to 1; level m runs its draw at eps_total * eps_weights[m].
    The plan depends only on the query (plus sampling noise in the covariance
    estimates), never on the database, so reusing it across invocations is
    privacy-neutral.
    """

    levels: "tuple[NimLevel, ...]"
    schedule: str
    eps_weights: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.levels)


def _level_dims(d: int):
    dims = []
    while True:
        dims.append(d)
        if d == 1:
            break
        d = d // 2
    return dims


def nim_schedule_weights(levels: "list[NimLevel]", schedule: str) -> np.ndarray:
    """Per-level budget fractions (sum exactly 1).

    "uniform" splits evenly. "balanced" minimizes the predicted total squared
    error sum_m (d_m+1)(d_m+2) S_m / eps_m^2 subject to sum eps_m = eps, which
    gives eps_m proportional to ((d_m+1)(d_m+2) S_m)^(1/3); S_m is the emitted
    block's eigenvalue mass, a public function of the query.
    """
    L = len(levels)
    if schedule == "uniform":
        w = np.full(L, 1.0 / L)
    elif schedule == "balanced":
        raw = np.array([
            ((lv.dim + 1) * (lv.dim + 2) * max(lv.emit_moment, 1e-300)) ** (1.0 / 3.0)
            for lv in levels
        ])
        w = raw / raw.sum()
    else:
        raise ValueError(f"unknown schedule {schedule!r}; use 'balanced' or 'uniform'")
    w[-1] = 1.0 - w[:-1].sum()  # exact budget accounting against fp drift
    return w


def build_nim_plan(query: QueryMatrix, rng, *, schedule: str = "balanced",
                   cov_samples: "int | None" = None,
                   walk_config: "GridWalkConfig | None" = None,
                   sampler: str = "auto") -> NimPlan:
    """Precompute the recursion: level bodies, eigensplits, budget weights.

    Each level estimates the covariance of the current body, keeps the top
    half of the spectrum for recursion and marks the bottom half for
    answering. sampler "auto" uses rejection in one dimension (exact there)
    and the lattice walk otherwise.
    """
    gen = as_generator(rng)
    d = query.d
    levels: "list[NimLevel]" = []
    basis = np.eye(d)
    current = query
    for dim in _level_dims(d):
        if dim == 1:
            emit_basis = basis.copy()
            lv_handle = PolytopeHandle(current)
            # 1-D body: the second moment is extent^2/3, no sampling needed
            extent = float(lv_handle.box[0])
            levels.append(NimLevel(1, 1, basis.copy(), emit_basis, current,
                                   extent * extent / 3.0))
            break
        handle = PolytopeHandle(current)
        use = sampler
        if use == "auto":
            use = "rejection" if dim == 1 else "grid-walk"
        cov = estimate_covariance(handle, gen, samples=cov_samples, sampler=use,
                                  walk_config=walk_config)
        keep = dim // 2
        _, U = top_eigenspace_projection(cov, keep)
        V = cov.eigenvectors[:, keep:]
        emit_moment = float(cov.eigenvalues[keep:].sum())
        levels.append(NimLevel(
            dim=dim,
            emit_dim=dim - keep,
            basis=basis.copy(),
            emit_basis=basis @ V,
            query=current,
            emit_moment=emit_moment,
        ))
        basis = basis @ U
        current = project_query(current, U)
    weights = nim_schedule_weights(levels, schedule)
    return NimPlan(tuple(levels), schedule, weights)


def nim_many(query: QueryMatrix, x, eps: float, count: int, rng, *,
             plan: "NimPlan | None" = None, schedule: str = "balanced",
             sampler: str = "auto",
             walk_config: "GridWalkConfig | None" = None,
             cov_samples: "int | None" = None) -> np.ndarray:
    """Batch of recursive-mechanism answers sharing one plan.

    Per level m: a_m = F_m x + r_m z_m in level coordinates with z_m uniform
    in the level body and r_m ~ Gamma(d_m+1, 1/eps_m); the bottom eigenblock
    of a_m is emitted, and the levels' emitted blocks assemble the answer in
    the original coordinates. The emitted bases are mutually orthogonal and
    complete, so the true answers recompose exactly and the total error is
    the orthogonal sum of per-level noise.
    """
    eps = _check_eps(eps)
    gen = as_generator(rng)
    if plan is None:
        plan = build_nim_plan(query, gen, schedule=schedule,
                              cov_samples=cov_samples, walk_config=walk_config,
                              sampler=sampler)
    true = _true_answer(query, x)
    out = np.tile(true, (count, 1)).astype(float)
    for lv, w in zip(plan.levels, plan.eps_weights):
        eps_m = eps * w
        lv_handle = PolytopeHandle(lv.query)
        use = sampler
        if use == "auto":
            use = "rejection" if lv.dim == 1 else "grid-walk"
        z = _body_draws(lv_handle, count, gen, use, walk_config)
        r = gamma_sample(GammaParams(lv.dim + 1, 1.0 / eps_m), gen, size=count)
        noise = r[:, None] * z  # level coordinates
        # emitted part of the level noise, mapped to original coordinates
        emit = noise @ (lv.basis.T @ lv.emit_basis)
        out += emit @ lv.emit_basis.T
    return out


def nim_mechanism(query: QueryMatrix, x, eps: float, rng, *,
                  plan: "NimPlan | None" = None, schedule: str = "balanced",
                  sampler: str = "auto",
                  walk_config: "GridWalkConfig | None" = None,
                  cov_samples: "int | None" = None) -> NoiseSample:
    """Single recursive-mechanism invocation with a full per-level trace."""
    eps = _check_eps(eps)
    gen = as_generator(rng)
    if plan is None:
        plan = build_nim_plan(query, gen, schedule=schedule,
                              cov_samples=cov_samples, walk_config=walk_config,
                              sampler=sampler)
    true = _true_answer(query, x)
    answer = true.astype(float).copy()
    level_info = []
    for lv, w in zip(plan.levels, plan.eps_weights):
        eps_m = eps * w
        lv_handle = PolytopeHandle(lv.query)
        use = sampler
        if use == "auto":
            use = "rejection" if lv.dim == 1 else "grid-walk"
        z = _body_draws(lv_handle, 1, gen, use, walk_config)[0]
        r = float(gamma_sample(GammaParams(lv.dim + 1, 1.0 / eps_m), gen))
        a_level = evaluate(lv.query, x) + r * z
        # emitted block of the level noise, in original coordinates
        answer += lv.emit_basis @ ((lv.basis.T @ lv.emit_basis).T @ (r * z))
        level_info.append({
            "dim": lv.dim,
            "emit_dim": lv.emit_dim,
            "eps": eps_m,
            "r": r,
            "answer": a_level,
        })
    return NoiseSample(answer, "nim", eps,
                       {"levels": level_info, "schedule": plan.schedule,
                        "eps_total_check": float(sum(li["eps"] for li in level_info))})


def run_mechanism(name: str, query: QueryMatrix, x, eps: float, count: int, rng, *,
                  delta: float = 0.1,
                  sampler: str = "rejection",
                  walk_config: "GridWalkConfig | None" = None,
                  nim_plan: "NimPlan | None" = None,
                  nim_schedule: str = "balanced") -> np.ndarray:
    """Dispatch by external mechanism name; returns (count, d) answers."""
    if name == "laplace":
        return laplace_many(query, x, eps, count, rng)
    if name == "gaussian":
        return gaussian_many(query, x, eps, delta, count, rng)
    if name == "knorm":
        return k_norm_many(query, x, eps, count, rng, sampler=sampler,
                           walk_config=walk_config)
    if name == "knorm-mcmc":
        return k_norm_efficient_many(query, x, eps, count, rng)
    if name == "nim":
        return nim_many(query, x, eps, count, rng, plan=nim_plan,
                        schedule=nim_schedule, walk_config=walk_config)
    raise ValueError(f"unknown mechanism {name!r}; choose from {MECHANISM_NAMES}")
