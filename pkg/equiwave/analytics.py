"""Closed-form statistics of the ball mass F(a) = a^T M a.

M is the Gram matrix of the window's modes over a ball. Under the uniform
measure on the unit sphere of coefficients its trace gives the expectation,
its Frobenius norm the variance and its top eigenvalue the worst case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional
import logging
import math

import numpy as np
from scipy.fft import irfft2, next_fast_len, rfft2
from scipy.linalg import LinAlgError, eigh
from scipy.special import gamma, j1

from .errors import (
    DegenerateWindowError,
    InvalidArgumentError,
    NumericFailureError,
    ResourceLimitError,
)
from .ensemble import mass_rule
from .manifold import BallRegion, Parity
from .spectral import SpectralWindow, window_diagonal

logger = logging.getLogger(__name__)

DEFAULT_GRAM_CAP = 4000
DEFAULT_POWER_TOL = 1e-10
DEFAULT_POWER_MAX_ITER = 10_000
POWER_START_SEED = 0
POWER_START_JITTER = 1e-2


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """M_ij = integral over the ball of e_i e_j; `ball=None` is the whole manifold."""

    entries: np.ndarray
    trace: float
    frobenius_sq: float
    window: Optional[SpectralWindow] = None
    ball: Optional[BallRegion] = None

    @property
    def dimension(self) -> int:
        return int(self.entries.shape[0])

    def quadratic_form(self, coefficients: np.ndarray) -> np.ndarray:
        """a^T M a for each row of `coefficients`."""
        a = np.atleast_2d(coefficients)
        return np.einsum("ij,ij->i", a @ self.entries, a)


def gram_from_entries(
    entries,
    window: Optional[SpectralWindow] = None,
    ball: Optional[BallRegion] = None,
) -> GramMatrix:
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"Gram matrix must be square, got shape {m.shape}")
    m = 0.5 * (m + m.T)
    return GramMatrix(m, float(np.trace(m)), float(np.sum(m * m)), window, ball)


def gram_matrix(
    window: SpectralWindow,
    ball: Optional[BallRegion] = None,
    *,
    order: Optional[int] = None,
    cap: int = DEFAULT_GRAM_CAP,
) -> GramMatrix:
    """Dense Gram matrix from the cached node x mode values and quadrature weights."""
    if window.dimension > cap:
        raise ResourceLimitError(
            f"window dimension {window.dimension} exceeds the Gram cap {cap}"
        )
    rule = mass_rule(window, ball, order)
    weighted = np.sqrt(rule.weights)[:, None] * window.node_values(rule)
    g = gram_from_entries(weighted.T @ weighted, window, ball)
    logger.debug(
        "gram built: N=%d nodes=%d trace=%.6g", g.dimension, rule.size, g.trace
    )
    return g


# --- Torus moments without forming M -------------------------------------------


def _disk_transform(radius: float, xi: np.ndarray) -> np.ndarray:
    """Fourier transform of the indicator of a disk: 2 pi r^2 J1(r|xi|)/(r|xi|)."""
    z = radius * xi
    out = np.full_like(z, math.pi * radius * radius)
    nz = z > 0.0
    out[nz] = 2.0 * math.pi * radius * radius * j1(z[nz]) / z[nz]
    return out


def torus_lattice_moments(window: SpectralWindow, ball: BallRegion) -> tuple[float, float]:
    """(trace M, ||M||_F^2) on the torus from the window's lattice set.

    The kernel is (1/4pi^2) sum over k in S of exp(i k.(x-y)) with S the
    full set of lattice points of the window, so ||M||_F^2 is a sum over
    differences xi = k - k' weighted by the squared disk transform.
    """
    if not window.manifold.is_torus:
        raise InvalidArgumentError("lattice moments exist only on torus2")
    n = window.dimension
    trace = n * ball.volume / (4.0 * math.pi**2)

    points = []
    for mode in window.modes:
        label = mode.label
        if label.parity is Parity.CONST:
            points.append((0, 0))
        elif label.parity is Parity.COS:
            points.append((label.k1, label.k2))
            points.append((-label.k1, -label.k2))
    ks = np.array(points, dtype=int)
    k = int(np.abs(ks).max()) if ks.size else 0
    size = next_fast_len(4 * k + 1)
    grid = np.zeros((size, size))
    grid[ks[:, 0] % size, ks[:, 1] % size] = 1.0
    spectrum = rfft2(grid)
    autocorr = np.rint(irfft2(spectrum * np.conj(spectrum), s=grid.shape))

    idx = np.arange(size)
    freq = np.where(idx <= 2 * k, idx, idx - size).astype(float)
    f1, f2 = np.meshgrid(freq, freq, indexing="ij")
    hit = autocorr > 0.0
    xi = np.hypot(f1[hit], f2[hit])
    g = _disk_transform(ball.radius, xi)
    frobenius_sq = float(np.sum(autocorr[hit] * g * g) / (16.0 * math.pi**4))
    return trace, frobenius_sq


@dataclass(frozen=True, eq=False)
class BallMoments:
    dimension: int
    trace: float
    frobenius_sq: float
    method: str
    # set when the dense Gram matrix was formed
    gram: Optional[GramMatrix] = None


def ball_moments(
    window: SpectralWindow,
    ball: BallRegion,
    *,
    order: Optional[int] = None,
    cap: int = DEFAULT_GRAM_CAP,
) -> BallMoments:
    """trace M and ||M||_F^2; dense Gram when N fits the cap, lattice sum otherwise."""
    if window.dimension <= cap:
        g = gram_matrix(window, ball, order=order, cap=cap)
        return BallMoments(g.dimension, g.trace, g.frobenius_sq, "gram", g)
    if window.manifold.is_torus:
        trace, fro = torus_lattice_moments(window, ball)
        return BallMoments(window.dimension, trace, fro, "lattice")
    raise ResourceLimitError(
        f"window dimension {window.dimension} exceeds the Gram cap {cap}"
    )


# --- Moments of F ---------------------------------------------------------------


def _moments(g: GramMatrix | BallMoments) -> tuple[int, float, float]:
    return g.dimension, g.trace, g.frobenius_sq


def expected_ball_mass(g: GramMatrix | BallMoments) -> float:
    """E(F) = trace M / N, exact under the unit-sphere measure."""
    n, trace, _ = _moments(g)
    return trace / n


def variance_ball_mass_exact(g: GramMatrix | BallMoments) -> float:
    """Var(F) = 2/(N(N+2)) (||M||_F^2 - (trace M)^2 / N)."""
    n, trace, fro = _moments(g)
    if n < 2:
        raise DegenerateWindowError(f"variance needs at least 2 modes, got {n}")
    return 2.0 / (n * (n + 2.0)) * (fro - trace * trace / n)


def variance_ball_mass_approx(g: GramMatrix | BallMoments) -> float:
    """The large-N form 2 ||M||_F^2 / N^2."""
    n, _, fro = _moments(g)
    if n < 1:
        raise DegenerateWindowError("variance needs a nonempty window")
    return 2.0 * fro / (n * n)


def relative_gap(g: GramMatrix | BallMoments) -> float:
    """|approx - exact| / exact; equals (2 + rho)/(N - rho), rho = (tr M)^2/||M||_F^2."""
    exact = variance_ball_mass_exact(g)
    approx = variance_ball_mass_approx(g)
    if exact <= 0.0:
        return math.inf
    return abs(approx - exact) / exact


@dataclass(frozen=True)
class MomentReport:
    dimension: int
    expectation: float
    variance_exact: float
    variance_approx: float
    relative_gap: float
    target: float
    ball_volume: float
    method: str


def moment_report(
    window: SpectralWindow,
    ball: BallRegion,
    *,
    order: Optional[int] = None,
    cap: int = DEFAULT_GRAM_CAP,
) -> MomentReport:
    return report_moments(ball_moments(window, ball, order=order, cap=cap), window, ball)


def report_moments(
    moments: BallMoments, window: SpectralWindow, ball: BallRegion
) -> MomentReport:
    return MomentReport(
        dimension=moments.dimension,
        expectation=expected_ball_mass(moments),
        variance_exact=variance_ball_mass_exact(moments),
        variance_approx=variance_ball_mass_approx(moments),
        relative_gap=relative_gap(moments),
        target=ball.volume / window.manifold.volume,
        ball_volume=ball.volume,
        method=moments.method,
    )


# --- Worst case and Lipschitz -------------------------------------------------


def top_eigenvalue(
    entries: np.ndarray,
    *,
    tol: float = DEFAULT_POWER_TOL,
    max_iter: int = DEFAULT_POWER_MAX_ITER,
    fallback: bool = True,
) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from the normalized all-ones vector plus a fixed-seed perturbation,
    so no eigenvector is orthogonal to the start. Stops once the residual
    ||M v - rho v|| is at most `tol * rho`. Without convergence a dense
    top-eigenvalue solve takes over, unless `fallback` is false.
    """
    n = entries.shape[0]
    rng = np.random.default_rng(POWER_START_SEED)
    v = np.ones(n) + POWER_START_JITTER * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for iteration in range(1, max_iter + 1):
        w = entries @ v
        rayleigh = float(v @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        residual = float(np.linalg.norm(w - rayleigh * v))
        if residual <= tol * max(abs(rayleigh), np.finfo(float).tiny):
            logger.debug("power iteration converged: n=%d iterations=%d", n, iteration)
            return rayleigh
        v = w / norm
    if not fallback:
        raise NumericFailureError(
            f"power iteration did not converge in {max_iter} iterations (n={n})"
        )
    logger.info("power iteration stalled after %d iterations (n=%d); using dense solve", max_iter, n)
    try:
        top = eigh(entries, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except LinAlgError as exc:
        raise NumericFailureError(f"dense eigensolve failed (n={n}): {exc}") from exc
    return float(top[0])


def worst_case_ball_mass(
    g: GramMatrix,
    tol: float = DEFAULT_POWER_TOL,
    *,
    max_iter: int = DEFAULT_POWER_MAX_ITER,
) -> float:
    """lambda_max(M): the largest ball mass over unit coefficient vectors."""
    return top_eigenvalue(g.entries, tol=tol, max_iter=max_iter)


def lipschitz_bound(g: GramMatrix, tol: float = DEFAULT_POWER_TOL) -> float:
    """2 lambda_max(M), since |a^T M a - b^T M b| <= 2 lambda_max |a - b| on the sphere."""
    return 2.0 * worst_case_ball_mass(g, tol)


def levy_bound(lipschitz: float, d: int, t):
    """exp(-(d-1) t^2 / (2 L^2)) with d = N - 1."""
    t_arr = np.asarray(t, dtype=float)
    out = np.exp(-(d - 1) * t_arr * t_arr / (2.0 * lipschitz * lipschitz))
    return float(out) if out.ndim == 0 else out


def worst_case_envelope(frequency: float, width: float, radius: float) -> float:
    """Shape of the worst-case ball mass: W r up to r = 1/W, then 1.

    Below the Planck scale the pointwise bound W lambda times the disk
    area takes over.
    """
    if radius <= 0.0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}")
    if radius < 1.0 / frequency:
        return min(1.0, width * frequency * math.pi * radius * radius)
    return min(1.0, width * radius)


def lipschitz_envelope(frequency: float, width: float, radius: float) -> float:
    """Lipschitz shape of F: r W for 1/lambda <= r <= 1/W, 1 beyond."""
    return worst_case_envelope(frequency, width, radius)


# --- Variance budget -------------------------------------------------------------


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class VarianceBudget:
    planck: float
    annulus: float
    remainder: float
    rem: float

    @property
    def total(self) -> float:
        return self.planck + self.annulus + self.remainder


def variance_budget(window: SpectralWindow, ball: BallRegion) -> VarianceBudget:
    """Three-term diagnostic split of the variance bound at `ball`.

    Rem is the measured deviation of the diagonal E(x0, x0) at the centre
    from c_n (lambda^n - (lambda - W)^n) / (2 pi)^n.
    """
    m = window.manifold
    n = m.dimension
    lam = window.frequency
    width = window.width
    vol = ball.volume
    local = unit_ball_volume(n) * (lam**n - window.lo**n) / (2.0 * math.pi) ** n
    rem = abs(float(window_diagonal(window, ball.center)[0]) - local)
    return VarianceBudget(
        planck=lam ** (-n) * vol,
        annulus=lam ** (-(n - 1)) * ball.radius * vol,
        remainder=width ** (-2) * lam ** (-2 * (n - 1)) * rem * rem * vol * vol,
        rem=rem,
    )
