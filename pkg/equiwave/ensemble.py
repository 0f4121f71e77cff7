"""Random waves: coefficient vectors on the unit sphere of a spectral window.

Every sample owns its generator, seeded from (master_seed, index), so batches
can be split across threads in any way and still reproduce exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional
import logging
import math

import numpy as np
from scipy.special import betainc

from .errors import InvalidArgumentError
from .manifold import (
    BallRegion,
    PointLike,
    QuadratureRule,
    ball_quadrature,
    manifold_quadrature,
    suggested_order,
)
from .spectral import SpectralWindow

logger = logging.getLogger(__name__)

SEED_BITS = 32
MAX_MASTER_SEED = 2**SEED_BITS - 1
MAX_SAMPLE_INDEX = 2**SEED_BITS - 1
BATCH_CHUNK = 256
MIN_TAIL_DIMENSION = 2


class Normalization(str, Enum):
    UNIT_SPHERE = "unit_sphere"
    GAUSSIAN_RAW = "gaussian_raw"


@dataclass(frozen=True, eq=False)
class RandomWave:
    """u = sum_j a_j e_j over the modes of `window`."""

    window: SpectralWindow
    coefficients: np.ndarray
    seed: Optional[int]
    normalization: Normalization

    @classmethod
    def from_coefficients(cls, window: SpectralWindow, coefficients) -> RandomWave:
        a = np.asarray(coefficients, dtype=float)
        if a.shape != (window.dimension,):
            raise InvalidArgumentError(
                f"expected {window.dimension} coefficients, got shape {a.shape}"
            )
        return cls(window, a, None, Normalization.GAUSSIAN_RAW)

    @property
    def norm_sq(self) -> float:
        return float(self.coefficients @ self.coefficients)


def derive_seed(master_seed: int, index: int) -> int:
    """Per-sample seed; injective in (master_seed, index)."""
    if not (0 <= master_seed <= MAX_MASTER_SEED):
        raise InvalidArgumentError(
            f"master seed must be between 0 and {MAX_MASTER_SEED}, got {master_seed}"
        )
    if not (0 <= index <= MAX_SAMPLE_INDEX):
        raise InvalidArgumentError(
            f"sample index must be between 0 and {MAX_SAMPLE_INDEX}, got {index}"
        )
    return (master_seed << SEED_BITS) | index


def draw_coefficients(dimension: int, seed: int, normalization: Normalization) -> np.ndarray:
    if dimension < 1:
        raise InvalidArgumentError(f"dimension must be at least 1, got {dimension}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(dimension)
    if normalization is Normalization.GAUSSIAN_RAW:
        return g * math.sqrt(1.0 / dimension)
    norm = np.linalg.norm(g)
    while norm == 0.0:
        g = rng.standard_normal(dimension)
        norm = np.linalg.norm(g)
    return g / norm


def sample_unit_sphere(window: SpectralWindow, seed: int) -> RandomWave:
    """Coefficients uniform on S^(N-1): normalized i.i.d. standard normals."""
    a = draw_coefficients(window.dimension, seed, Normalization.UNIT_SPHERE)
    return RandomWave(window, a, seed, Normalization.UNIT_SPHERE)


def sample_gaussian(window: SpectralWindow, seed: int) -> RandomWave:
    """I.i.d. normal coefficients of variance 1/N, so E ||u||^2 = 1."""
    a = draw_coefficients(window.dimension, seed, Normalization.GAUSSIAN_RAW)
    return RandomWave(window, a, seed, Normalization.GAUSSIAN_RAW)


def eval_wave_many(u: RandomWave, points: PointLike) -> np.ndarray:
    return u.window.values(points) @ u.coefficients


def eval_wave(u: RandomWave, x: PointLike) -> float:
    return float(eval_wave_many(u, x)[0])


def mass_rule(window: SpectralWindow, ball: BallRegion | None, order: int | None = None) -> QuadratureRule:
    """Quadrature used for ball masses; `ball=None` is the whole manifold."""
    m = window.manifold
    if ball is None:
        return manifold_quadrature(m, order)
    if order is None:
        order = suggested_order(window.frequency, ball.radius)
    return ball_quadrature(m, ball, order)


def ball_masses(
    window: SpectralWindow,
    coefficients: np.ndarray,
    ball: BallRegion | None,
    *,
    order: int | None = None,
) -> np.ndarray:
    """F(a) for each row of `coefficients` (shape (samples, N))."""
    rule = mass_rule(window, ball, order)
    values = np.atleast_2d(coefficients) @ window.node_values(rule).T
    return (values * values) @ rule.weights


def ball_mass(u: RandomWave, ball: BallRegion | None, *, order: int | None = None) -> float:
    """Integral of |u|^2 over the ball by quadrature."""
    return float(ball_masses(u.window, u.coefficients, ball, order=order)[0])


def _check_tail(s_norm: float, d: int, t: np.ndarray) -> None:
    if d < MIN_TAIL_DIMENSION:
        raise InvalidArgumentError(f"sphere dimension d must be at least 2, got {d}")
    if not s_norm > 0.0:
        raise InvalidArgumentError(f"s_norm must be positive, got {s_norm}")
    if np.any(t < 0.0):
        raise InvalidArgumentError("thresholds must be nonnegative")


def amplitude_tail(s_norm: float, d: int, t):
    """(1 - t^2/|s|^2)^((d-1)/2) for t < |s|, else 0.

    This is the survival function of the length of the projection of a
    uniform point of S^d onto a 2-plane scaled by |s|.
    """
    t_arr = np.asarray(t, dtype=float)
    _check_tail(s_norm, d, t_arr)
    base = np.clip(1.0 - (t_arr / s_norm) ** 2, 0.0, 1.0)
    out = np.where(t_arr < s_norm, base ** ((d - 1) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def pointwise_amplitude_tail(s_norm: float, d: int, t):
    """P(|<a, s>| > t) for a uniform on S^d: I_{1 - t^2/|s|^2}(d/2, 1/2)."""
    t_arr = np.asarray(t, dtype=float)
    _check_tail(s_norm, d, t_arr)
    x = np.clip(1.0 - (t_arr / s_norm) ** 2, 0.0, 1.0)
    out = np.where(t_arr < s_norm, betainc(d / 2.0, 0.5, x), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SampleBatch:
    """Functional values of `count` samples, stored in sample-index order."""

    master_seed: int
    count: int
    normalization: Normalization
    values: np.ndarray

    def seed_for(self, index: int) -> int:
        return derive_seed(self.master_seed, index)

    @property
    def mean(self):
        return self.values.mean(axis=0)

    @property
    def second_moment(self):
        return (self.values * self.values).mean(axis=0)

    @property
    def variance(self):
        return self.values.var(axis=0, ddof=1)

    @property
    def standard_error(self):
        return np.sqrt(self.variance / self.count)

    @property
    def minimum(self):
        return self.values.min(axis=0)

    @property
    def maximum(self):
        return self.values.max(axis=0)


Functional = Callable[[np.ndarray], np.ndarray]


def sample_batch(
    window: SpectralWindow,
    functional: Functional,
    count: int,
    master_seed: int,
    *,
    normalization: Normalization = Normalization.UNIT_SPHERE,
    threads: int = 1,
) -> SampleBatch:
    """Evaluate `functional` on `count` random coefficient vectors.

    `functional` receives a (chunk, N) matrix of coefficient rows and returns
    an array whose first axis runs over those rows. Chunks have a fixed size
    and results are placed by sample index, so the batch does not depend on
    `threads`.
    """
    if count < 1:
        raise InvalidArgumentError(f"sample count must be at least 1, got {count}")
    if count - 1 > MAX_SAMPLE_INDEX:
        raise InvalidArgumentError(f"sample count must not exceed {MAX_SAMPLE_INDEX + 1}")
    if threads < 1:
        raise InvalidArgumentError(f"threads must be at least 1, got {threads}")
    derive_seed(master_seed, 0)
    dimension = window.dimension

    def run_chunk(start: int) -> np.ndarray:
        stop = min(start + BATCH_CHUNK, count)
        rows = np.stack(
            [
                draw_coefficients(dimension, derive_seed(master_seed, i), normalization)
                for i in range(start, stop)
            ]
        )
        return np.asarray(functional(rows), dtype=float)

    starts = range(0, count, BATCH_CHUNK)
    if threads == 1:
        chunks = [run_chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_chunk, starts))
    values = np.concatenate(chunks, axis=0)
    logger.info(
        "batch sampled: N=%d count=%d master_seed=%d threads=%d",
        dimension,
        count,
        master_seed,
        threads,
    )
    return SampleBatch(master_seed, count, normalization, values)
