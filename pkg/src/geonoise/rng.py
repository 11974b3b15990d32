"""Seeded randomness with named substreams.

Every stochastic routine in this package takes a ``numpy.random.Generator``.
`RngStream` is the reproducibility contract: a (seed, stream_id) pair always
yields the same generator, and distinct stream ids give statistically
independent streams, so parallel experiment cells can be re-run in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Identifier for one single-owner random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        # SeedSequence hashes the pair, so (1, 2) and (2, 1) do not collide.
        return np.random.default_rng(np.random.SeedSequence((self.seed, self.stream_id)))

    def substream(self, index: int) -> "RngStream":
        """Derive a child stream; children of distinct indexes are independent."""
        if index < 0:
            raise ValueError("substream index must be non-negative")
        return RngStream(self.seed, self.stream_id * 100_003 + index + 1)


def as_generator(rng: "np.random.Generator | RngStream | int") -> np.random.Generator:
    """Coerce a generator, stream, or bare seed to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random generator")


@dataclass(frozen=True)
class GammaParams:
    """Shape/scale parametrization; mean = shape*scale."""

    shape: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and np.isfinite(self.shape)):
            raise ValueError(f"gamma shape must be positive, got {self.shape}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"gamma scale must be positive, got {self.scale}")

    def moment(self, order: int) -> float:
        """E[r^order] = scale^order * Gamma(shape+order)/Gamma(shape)."""
        if order < 0:
            raise ValueError("moment order must be non-negative")
        value = 1.0
        # Gamma(k+m)/Gamma(k) = k (k+1) ... (k+m-1) avoids overflow for large shapes.
        for j in range(order):
            value *= (self.shape + j) * self.scale
        return value


def gamma_sample(params: GammaParams, rng, size=None) -> "float | np.ndarray":
    """Draw from Gamma(shape, scale)."""
    gen = as_generator(rng)
    out = gen.gamma(params.shape, params.scale, size=size)
    return float(out) if size is None else out


def laplace_sample(scale: float, rng, size=None) -> "float | np.ndarray":
    """Draw centered Laplace noise with the given scale (variance 2*scale^2)."""
    if not (scale > 0 and np.isfinite(scale)):
        raise ValueError(f"laplace scale must be positive, got {scale}")
    gen = as_generator(rng)
    out = gen.laplace(0.0, scale, size=size)
    return float(out) if size is None else out


def gaussian_sample(sigma: float, rng, size=None) -> "float | np.ndarray":
    """Draw centered Gaussian noise with standard deviation sigma."""
    if not (sigma > 0 and np.isfinite(sigma)):
        raise ValueError(f"gaussian sigma must be positive, got {sigma}")
    gen = as_generator(rng)
    out = gen.normal(0.0, sigma, size=size)
    return float(out) if size is None else out
