"""Monte Carlo experiments that exercise the equidistribution statements.

Each runner takes fully validated inputs, is deterministic given its seed
and returns plain dataclass rows that the report module serializes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence
import logging
import math

import numpy as np
from scipy.stats import kstest

from .analytics import (
    DEFAULT_GRAM_CAP,
    ball_moments,
    gram_matrix,
    levy_bound,
    lipschitz_bound,
    lipschitz_envelope,
    report_moments,
    worst_case_ball_mass,
    worst_case_envelope,
)
from .ensemble import (
    amplitude_tail,
    pointwise_amplitude_tail,
    sample_batch,
)
from .errors import EmptyWindowError, InvalidArgumentError, ResourceLimitError
from .manifold import (
    BallRegion,
    ManifoldModel,
    Parity,
    Point,
    as_coords,
    geodesic_distances,
    probe_points,
    random_points,
)
from .spectral import (
    KernelProfile,
    SpectralWindow,
    build_window,
    counting_function,
    kernel_profile,
    pointwise_weyl_remainders,
    weyl_band_average,
    weyl_remainder,
    window_diagonal,
)

logger = logging.getLogger(__name__)

MIN_TAIL_SAMPLES = 1000
DEFAULT_PROBE_COUNT = 32
COVER_CHECK_SAMPLES = 10_000
# Eigenvalues of the reference Gram matrix below this fraction of the top one
# are dropped from the per-ball factors.
LOW_RANK_RTOL = 1e-13
FACTOR_BLOCK_COLUMNS = 8192
DEFAULT_AMPLITUDE_GRID = 64


# --- Weyl diagnostics ------------------------------------------------------------


@dataclass(frozen=True)
class WeylRow:
    frequency: float
    count: int
    remainder: float
    pointwise_sup: float
    ratio: float
    pointwise_ratio: float
    band_average: float


def run_weyl_diagnostics(
    m: ManifoldModel,
    frequencies: Sequence[float],
    *,
    probes: int = DEFAULT_PROBE_COUNT,
) -> list[WeylRow]:
    """N, R(lambda), sup over the probe set of R(lambda, x), and R / lambda^(n-1)."""
    points = probe_points(m, probes)
    rows = []
    for lam in frequencies:
        lam = float(lam)
        remainder = weyl_remainder(m, lam)
        sup = float(np.max(pointwise_weyl_remainders(m, lam, points)))
        scale = lam ** (m.dimension - 1)
        rows.append(
            WeylRow(
                frequency=lam,
                count=counting_function(m, lam),
                remainder=remainder,
                pointwise_sup=sup,
                ratio=remainder / scale if lam > 0.0 else math.nan,
                pointwise_ratio=sup / scale if lam > 0.0 else math.nan,
                band_average=weyl_band_average(m, lam) if lam > 0.0 else math.nan,
            )
        )
        logger.info("weyl row: manifold=%s lambda=%s R=%.6g", m.name, lam, remainder)
    return rows


# --- Moment sweeps ---------------------------------------------------------------


class WindowRule(str, Enum):
    CONSTANT = "constant"
    POWER = "power"
    FULL = "full"


@dataclass(frozen=True)
class SweepSpec:
    """lambda grid with window rule W(lambda) and radius rule r = c lambda^(-alpha).

    On the sphere `degrees` may replace `frequencies`; each degree l then
    runs at lambda = sqrt(l(l+1)).
    """

    manifold: ManifoldModel
    frequencies: tuple[float, ...]
    window: WindowRule = WindowRule.CONSTANT
    width: float = 1.0
    beta: float = 0.5
    r_scale: float = 1.0
    r_alpha: float = 0.5
    center: Point = Point(0.0, 0.0)
    samples: int = 0
    seed: int = 0
    degrees: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.degrees:
            if not self.manifold.is_sphere:
                raise InvalidArgumentError("degrees apply only to sphere2 sweeps")
            object.__setattr__(
                self,
                "frequencies",
                tuple(math.sqrt(ell * (ell + 1)) for ell in self.degrees),
            )
        if not self.frequencies:
            raise InvalidArgumentError("sweep needs at least one lambda")
        if self.samples < 0:
            raise InvalidArgumentError(f"samples must be nonnegative, got {self.samples}")
        for lam in self.frequencies:
            r = self.radius_at(lam)
            if not (0.0 < r <= self.manifold.injectivity_radius):
                raise InvalidArgumentError(
                    f"r({lam:.6g}) = {r:.6g} must satisfy 0 < r <= "
                    f"{self.manifold.injectivity_radius:.6g}"
                )
            w = self.width_at(lam)
            if not (1.0 <= w <= lam):
                raise InvalidArgumentError(
                    f"W({lam:.6g}) = {w:.6g} must satisfy 1 <= W <= lambda"
                )

    def width_at(self, frequency: float) -> float:
        if self.window is WindowRule.FULL:
            return frequency
        if self.window is WindowRule.POWER:
            return frequency**self.beta
        return self.width

    def radius_at(self, frequency: float) -> float:
        return self.r_scale * frequency ** (-self.r_alpha)

    @property
    def in_admissible_regime(self) -> bool:
        """r lambda grows without bound exactly when alpha < 1."""
        return self.r_alpha < 1.0


@dataclass(frozen=True)
class MomentRow:
    frequency: float
    dimension: int
    width: float
    radius: float
    e_closed: float
    e_mc: float
    e_mc_se: float
    target: float
    var_exact: float
    var_mc: float
    var_mc_se: float
    var_approx: float
    var_ratio: float
    relative_gap: float
    method: str
    mc_skipped: bool
    error: str = ""


def _variance_se(values: np.ndarray) -> float:
    n = values.size
    centred = values - values.mean()
    var = centred.var(ddof=1)
    m4 = np.mean(centred**4)
    return math.sqrt(max(m4 - var * var, 0.0) / n)


def run_moment_point(
    window: SpectralWindow,
    ball: BallRegion,
    samples: int,
    seed: int,
    *,
    threads: int = 1,
    order: Optional[int] = None,
    gram_cap: int = DEFAULT_GRAM_CAP,
) -> MomentRow:
    """Closed-form moments of F at one ball, with Monte Carlo beside them."""
    moments = ball_moments(window, ball, order=order, cap=gram_cap)
    report = report_moments(moments, window, ball)
    mc_skipped = samples == 0 or moments.gram is None
    e_mc = e_se = var_mc = var_se = math.nan
    if not mc_skipped:
        # a^T M a is the quadrature ball mass for the same rule
        batch = sample_batch(window, moments.gram.quadratic_form, samples, seed, threads=threads)
        e_mc = float(batch.mean)
        e_se = float(batch.standard_error) if samples > 1 else math.nan
        var_mc = float(batch.variance) if samples > 1 else math.nan
        var_se = _variance_se(batch.values) if samples > 1 else math.nan
    return MomentRow(
        frequency=window.frequency,
        dimension=report.dimension,
        width=window.width,
        radius=ball.radius,
        e_closed=report.expectation,
        e_mc=e_mc,
        e_mc_se=e_se,
        target=report.target,
        var_exact=report.variance_exact,
        var_mc=var_mc,
        var_mc_se=var_se,
        var_approx=report.variance_approx,
        var_ratio=report.variance_exact / report.ball_volume**2,
        relative_gap=report.relative_gap,
        method=report.method,
        mc_skipped=mc_skipped,
    )


def _empty_row(spec: SweepSpec, lam: float, reason: str) -> MomentRow:
    nan = math.nan
    r = spec.radius_at(lam)
    ball_volume = BallRegion(spec.manifold, spec.center, r).volume
    return MomentRow(
        frequency=lam,
        dimension=0,
        width=spec.width_at(lam),
        radius=r,
        e_closed=nan,
        e_mc=nan,
        e_mc_se=nan,
        target=ball_volume / spec.manifold.volume,
        var_exact=nan,
        var_mc=nan,
        var_mc_se=nan,
        var_approx=nan,
        var_ratio=nan,
        relative_gap=nan,
        method="none",
        mc_skipped=True,
        error=reason,
    )


def run_moment_sweep(
    spec: SweepSpec,
    *,
    threads: int = 1,
    order: Optional[int] = None,
    gram_cap: int = DEFAULT_GRAM_CAP,
) -> list[MomentRow]:
    """One row per lambda; an empty window yields a row marked `empty_window`."""
    rows = []
    for index, lam in enumerate(spec.frequencies):
        try:
            window = build_window(spec.manifold, lam, spec.width_at(lam))
        except EmptyWindowError:
            logger.warning("empty window in sweep: lambda=%s", lam)
            rows.append(_empty_row(spec, lam, "empty_window"))
            continue
        ball = BallRegion(spec.manifold, spec.center, spec.radius_at(lam))
        # rows draw from disjoint seed streams
        seed = (spec.seed + index) % 2**32
        rows.append(
            run_moment_point(
                window,
                ball,
                spec.samples,
                seed,
                threads=threads,
                order=order,
                gram_cap=gram_cap,
            )
        )
    return rows


# --- Tail concentration --------------------------------------------------------


@dataclass(frozen=True)
class TailReport:
    t: np.ndarray
    empirical: np.ndarray
    levy_bound: np.ndarray
    n_samples: int
    median: float
    expectation: float
    mean_mc: float
    lipschitz: float
    dimension: int

    def binomial_se(self) -> np.ndarray:
        p = self.empirical
        return np.sqrt(p * (1.0 - p) / self.n_samples)


def run_tail_experiment(
    window: SpectralWindow,
    ball: BallRegion,
    samples: int,
    t_grid: Sequence[float],
    seed: int,
    *,
    threads: int = 1,
    order: Optional[int] = None,
    gram_cap: int = DEFAULT_GRAM_CAP,
) -> TailReport:
    """Empirical P(|F - Me F| > t) against the Levy bound with L = 2 lambda_max(M)."""
    if samples < MIN_TAIL_SAMPLES:
        raise InvalidArgumentError(
            f"tail experiment needs at least {MIN_TAIL_SAMPLES} samples, got {samples}"
        )
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or np.any(t < 0.0) or np.any(np.diff(t) < 0.0):
        raise InvalidArgumentError("t_grid must be a nonempty ascending list of t >= 0")
    g = gram_matrix(window, ball, order=order, cap=gram_cap)
    lipschitz = lipschitz_bound(g)
    batch = sample_batch(window, g.quadratic_form, samples, seed, threads=threads)
    values = batch.values
    median = float(np.median(values))
    deviation = np.abs(values - median)
    empirical = np.array([np.count_nonzero(deviation > ti) / samples for ti in t])
    bound = np.asarray(levy_bound(lipschitz, window.dimension - 1, t), dtype=float)
    logger.info(
        "tail experiment: N=%d samples=%d median=%.6g L=%.6g",
        window.dimension,
        samples,
        median,
        lipschitz,
    )
    return TailReport(
        t=t,
        empirical=empirical,
        levy_bound=np.atleast_1d(bound),
        n_samples=samples,
        median=median,
        expectation=g.trace / g.dimension,
        mean_mc=float(batch.mean),
        lipschitz=lipschitz,
        dimension=window.dimension,
    )


# --- Covers and the uniform experiment ------------------------------------------


@dataclass(frozen=True, eq=False)
class CoverSpec:
    """Centres whose radius-r balls cover the manifold."""

    manifold: ManifoldModel
    radius: float
    centers: np.ndarray
    delta: float = 0.0

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])

    def threshold(self, frequency: float) -> float:
        """Deviation threshold r^n lambda^(-delta)."""
        return self.radius**self.manifold.dimension * frequency ** (-self.delta)

    def balls(self) -> list[BallRegion]:
        return [BallRegion(self.manifold, Point(u, v), self.radius) for u, v in self.centers]


def _torus_cover(r: float) -> np.ndarray:
    n = math.ceil(2.0 * math.pi / r)
    step = 2.0 * math.pi / n
    grid = step * (np.arange(n) + 0.5)
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=1)


def _sphere_cover(r: float) -> np.ndarray:
    bands = math.ceil(math.pi / r)
    d_theta = math.pi / bands
    # along a meridian then along the centre's latitude: d_theta/2 + arc/2 <= r
    half_arc = r - d_theta / 2.0
    centers = [(0.0, 0.0), (math.pi, 0.0)]
    for i in range(bands):
        theta = (i + 0.5) * d_theta
        count = max(1, math.ceil(math.pi * math.sin(theta) / half_arc))
        for j in range(count):
            centers.append((theta, 2.0 * math.pi * j / count))
    return np.array(centers)


def cover_distances(cover: CoverSpec, points: np.ndarray, *, block: int = 512) -> np.ndarray:
    """Distance from each point to its nearest cover centre."""
    points = as_coords(points)
    nearest = np.full(points.shape[0], np.inf)
    for start in range(0, points.shape[0], block):
        chunk = points[start : start + block]
        a = np.repeat(chunk, cover.size, axis=0)
        b = np.tile(cover.centers, (chunk.shape[0], 1))
        d = geodesic_distances(cover.manifold, a, b).reshape(chunk.shape[0], cover.size)
        nearest[start : start + block] = d.min(axis=1)
    return nearest


def build_cover(
    m: ManifoldModel,
    r: float,
    *,
    delta: float = 0.0,
    check_samples: int = COVER_CHECK_SAMPLES,
    seed: int = 0,
) -> CoverSpec:
    """Torus: square grid of spacing <= r. Sphere: latitude bands plus both poles.

    Coverage is verified on `check_samples` uniform points.
    """
    if not (0.0 < r <= m.injectivity_radius):
        raise InvalidArgumentError(
            f"cover radius must satisfy 0 < r <= {m.injectivity_radius:.6g}, got {r}"
        )
    centers = _torus_cover(r) if m.is_torus else _sphere_cover(r)
    cover = CoverSpec(m, float(r), centers, float(delta))
    if check_samples:
        points = random_points(m, check_samples, np.random.default_rng(seed))
        worst = float(cover_distances(cover, points).max())
        if worst > r:
            raise InvalidArgumentError(
                f"cover of radius {r} leaves a point at distance {worst:.6g}"
            )
    logger.info("cover built: manifold=%s r=%s centers=%d", m.name, r, cover.size)
    return cover


@dataclass(frozen=True)
class UniformReport:
    empirical_prob: float
    per_ball_rates: np.ndarray
    threshold: float
    target: float
    n_balls: int
    n_samples: int


def _torus_ball_factors(
    window: SpectralWindow, cover: CoverSpec, order: Optional[int]
) -> np.ndarray:
    """Per-ball factors L_k (N x rank) with F_k(a) = |a L_k|^2.

    Translating a ball by z rotates each (cos, sin) pair of coefficients by
    the angle k.z, so every factor is a rotation of one reference factor.
    """
    reference = BallRegion(window.manifold, Point(0.0, 0.0), cover.radius)
    entries = gram_matrix(window, reference, order=order, cap=window.dimension).entries
    eigvals, eigvecs = np.linalg.eigh(entries)
    keep = eigvals > LOW_RANK_RTOL * eigvals.max()
    base = eigvecs[:, keep] * np.sqrt(eigvals[keep])

    cos_rows = [i for i, mode in enumerate(window.modes) if mode.label.parity is Parity.COS]
    ks = np.array(
        [[window.modes[i].label.k1, window.modes[i].label.k2] for i in cos_rows], dtype=float
    ).reshape(-1, 2)
    cos_idx = np.array(cos_rows, dtype=int)
    sin_idx = cos_idx + 1

    factors = np.empty((cover.size,) + base.shape)
    for b, center in enumerate(cover.centers):
        theta = ks @ center
        c = np.cos(theta)[:, None]
        s = np.sin(theta)[:, None]
        factor = base.copy()
        factor[cos_idx] = c * base[cos_idx] - s * base[sin_idx]
        factor[sin_idx] = s * base[cos_idx] + c * base[sin_idx]
        factors[b] = factor
    return factors


def _generic_ball_factors(
    window: SpectralWindow, cover: CoverSpec, order: Optional[int]
) -> np.ndarray:
    factors = []
    rank = 0
    for ball in cover.balls():
        entries = gram_matrix(window, ball, order=order, cap=window.dimension).entries
        eigvals, eigvecs = np.linalg.eigh(entries)
        keep = eigvals > LOW_RANK_RTOL * eigvals.max()
        factors.append(eigvecs[:, keep] * np.sqrt(eigvals[keep]))
        rank = max(rank, int(keep.sum()))
    padded = np.zeros((cover.size, window.dimension, rank))
    for b, factor in enumerate(factors):
        padded[b, :, : factor.shape[1]] = factor
    return padded


def run_uniform_experiment(
    window: SpectralWindow,
    cover: CoverSpec,
    samples: int,
    seed: int,
    *,
    threads: int = 1,
    order: Optional[int] = None,
    gram_cap: int = DEFAULT_GRAM_CAP,
) -> UniformReport:
    """Fraction of samples with |F_k - Vol(B)/Vol(M)| >= r^n lambda^(-delta) on some ball."""
    if window.manifold != cover.manifold:
        raise InvalidArgumentError("cover and window live on different manifolds")
    if window.dimension > gram_cap:
        raise ResourceLimitError(
            f"window dimension {window.dimension} exceeds the Gram cap {gram_cap}"
        )
    threshold = cover.threshold(window.frequency)
    target = BallRegion(cover.manifold, Point(0.0, 0.0), cover.radius).volume / (
        cover.manifold.volume
    )
    if window.manifold.is_torus:
        factors = _torus_ball_factors(window, cover, order)
    else:
        factors = _generic_ball_factors(window, cover, order)
    n_balls, n_modes, rank = factors.shape
    flat = factors.transpose(1, 0, 2).reshape(n_modes, n_balls * rank)
    per_block = max(1, FACTOR_BLOCK_COLUMNS // max(rank, 1))

    def deviations(rows: np.ndarray) -> np.ndarray:
        out = np.empty((rows.shape[0], n_balls))
        for start in range(0, n_balls, per_block):
            stop = min(start + per_block, n_balls)
            projected = rows @ flat[:, start * rank : stop * rank]
            masses = (projected * projected).reshape(rows.shape[0], stop - start, rank).sum(axis=2)
            out[:, start:stop] = np.abs(masses - target) >= threshold
        return out

    batch = sample_batch(window, deviations, samples, seed, threads=threads)
    hits = batch.values
    probability = float(np.mean(hits.max(axis=1))) if n_balls else 0.0
    logger.info(
        "uniform experiment: N=%d balls=%d rank=%d threshold=%.6g prob=%.6g",
        window.dimension,
        n_balls,
        rank,
        threshold,
        probability,
    )
    return UniformReport(
        empirical_prob=probability,
        per_ball_rates=hits.mean(axis=0),
        threshold=threshold,
        target=target,
        n_balls=n_balls,
        n_samples=samples,
    )


# --- Theorem regime -------------------------------------------------------------


@dataclass(frozen=True)
class TheoremRegime:
    regime: str
    epsilon: float
    epsilon_floor: float
    admissible: bool
    decay_exponent: float


def theorem_regime(
    frequency: float, width: float, radius: float, delta: float, n: int = 2
) -> TheoremRegime:
    """Which uniform-cover regime (frequency, W, r) sits in and the implied epsilon.

    Small balls (1/lambda <= r <= 1/W): r = lambda^(-1/2 + eps/2) W^(1/(2(n-1))),
    admissible when eps > 2 delta/(n-1), decay exponent eps (n-1) - 2 delta.
    Large balls (r >= 1/W): r = lambda^(-(n-1)/(2n) + eps/2) W^(-1/(2n)),
    admissible when eps > 2 delta/n, decay exponent eps n - 2 delta.
    """
    if frequency <= 1.0:
        raise InvalidArgumentError(f"regime needs lambda > 1, got {frequency}")
    log_lam = math.log(frequency)
    if radius < 1.0 / frequency:
        return TheoremRegime("below_planck", math.nan, math.nan, False, math.nan)
    if radius <= 1.0 / width:
        eps = 1.0 + 2.0 * math.log(radius * width ** (-1.0 / (2 * (n - 1)))) / log_lam
        floor = 2.0 * delta / (n - 1)
        return TheoremRegime("small_ball", eps, floor, eps > floor, eps * (n - 1) - 2.0 * delta)
    eps = (n - 1) / n + 2.0 * math.log(radius * width ** (1.0 / (2 * n))) / log_lam
    floor = 2.0 * delta / n
    return TheoremRegime("large_ball", eps, floor, eps > floor, eps * n - 2.0 * delta)


# --- Worst-case sweep ------------------------------------------------------------


@dataclass(frozen=True)
class WorstCaseRow:
    radius: float
    lambda_max: float
    ratio: float
    lipschitz: float
    envelope: float
    lipschitz_envelope: float


@dataclass(frozen=True)
class WorstCaseReport:
    rows: list[WorstCaseRow]
    constant: float
    spread: float


def run_worst_case_sweep(
    window: SpectralWindow,
    radii: Sequence[float],
    center: Point,
    *,
    order: Optional[int] = None,
    gram_cap: int = DEFAULT_GRAM_CAP,
) -> WorstCaseReport:
    """lambda_max(M)/r across radii; the constant is their geometric mean."""
    if not radii:
        raise InvalidArgumentError("worst-case sweep needs at least one radius")
    rows = []
    for r in radii:
        g = gram_matrix(window, BallRegion(window.manifold, center, r), order=order, cap=gram_cap)
        top = worst_case_ball_mass(g)
        rows.append(
            WorstCaseRow(
                radius=float(r),
                lambda_max=top,
                ratio=top / r,
                lipschitz=2.0 * top,
                envelope=worst_case_envelope(window.frequency, window.width, r),
                lipschitz_envelope=lipschitz_envelope(window.frequency, window.width, r),
            )
        )
    ratios = np.array([row.ratio for row in rows])
    constant = float(np.exp(np.mean(np.log(ratios))))
    spread = float(ratios.max() / ratios.min())
    logger.info("worst-case sweep: constant=%.6g spread=%.4f", constant, spread)
    return WorstCaseReport(rows, constant, spread)


# --- Kernel profile and amplitude law --------------------------------------------


@dataclass(frozen=True)
class KernelProfileRow:
    separation: float
    value: float
    bound: float


def run_kernel_profile(
    window: SpectralWindow,
    x: Point,
    direction: float,
    max_separation: float,
    samples: int,
) -> tuple[KernelProfile, list[KernelProfileRow]]:
    profile = kernel_profile(window, x, direction, max_separation, samples)
    rows = [
        KernelProfileRow(float(d), float(v), float(b))
        for d, v, b in zip(profile.separations, profile.values, profile.bound_values)
    ]
    return profile, rows


@dataclass(frozen=True)
class AmplitudeReport:
    s_norm: float
    sphere_dimension: int
    n_samples: int
    ks_pointwise: float
    ks_plane: float
    t: np.ndarray
    empirical: np.ndarray
    pointwise_tail: np.ndarray
    plane_tail: np.ndarray


def run_amplitude_experiment(
    window: SpectralWindow,
    x: Point,
    samples: int,
    seed: int,
    *,
    threads: int = 1,
    grid: int = DEFAULT_AMPLITUDE_GRID,
) -> AmplitudeReport:
    """Law of |u(x)| against the exact real-coefficient tail and the 2-plane tail."""
    if window.dimension < 3:
        raise InvalidArgumentError(
            f"amplitude law needs at least 3 modes, got {window.dimension}"
        )
    basis = window.values(x)[0]
    s_norm = float(math.sqrt(window_diagonal(window, x)[0]))
    d = window.dimension - 1
    batch = sample_batch(window, lambda rows: np.abs(rows @ basis), samples, seed, threads=threads)
    values = batch.values

    ks_pointwise = float(
        kstest(values, lambda t: 1.0 - pointwise_amplitude_tail(s_norm, d, np.maximum(t, 0.0))).statistic
    )
    ks_plane = float(
        kstest(values, lambda t: 1.0 - amplitude_tail(s_norm, d, np.maximum(t, 0.0))).statistic
    )
    t = np.linspace(0.0, float(values.max()), grid)
    sorted_values = np.sort(values)
    empirical = 1.0 - np.searchsorted(sorted_values, t, side="right") / samples
    return AmplitudeReport(
        s_norm=s_norm,
        sphere_dimension=d,
        n_samples=samples,
        ks_pointwise=ks_pointwise,
        ks_plane=ks_plane,
        t=t,
        empirical=empirical,
        pointwise_tail=np.atleast_1d(pointwise_amplitude_tail(s_norm, d, t)),
        plane_tail=np.atleast_1d(amplitude_tail(s_norm, d, t)),
    )
