"""Spectral windows, projector kernels and Weyl-law diagnostics.

A window is the span of eigenmodes with frequency in the closed interval
[lambda - W, lambda]. Its projector kernel is evaluated either by direct
summation over the modes or by a closed per-model fast path: the addition
theorem on the sphere, a lattice cosine sum on the torus.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
import logging
import math
import threading

import numpy as np
from scipy.signal import find_peaks
from scipy.special import eval_legendre

from .errors import EmptyWindowError, InvalidArgumentError
from .manifold import (
    EigenMode,
    ManifoldModel,
    Parity,
    Point,
    PointLike,
    QuadratureRule,
    as_coords,
    count_modes,
    enumerate_modes,
    eval_modes,
    geodesic_points,
    sphere_vectors,
)

logger = logging.getLogger(__name__)

MIN_WIDTH = 1.0
NODE_CACHE_ENTRIES = 8
WEYL_BAND_POINTS = 64
WEYL_BAND_SPAN = 1.5


@dataclass(frozen=True, eq=False)
class SpectralWindow:
    """Modes of `manifold` with frequency in [frequency - width, frequency]."""

    manifold: ManifoldModel
    frequency: float
    width: float
    modes: tuple[EigenMode, ...]
    _node_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.modes)

    @property
    def lo(self) -> float:
        return max(0.0, self.frequency - self.width)

    @property
    def degrees(self) -> list[int]:
        """Sphere degrees present in the window (each with all its orders)."""
        return sorted({mode.label.degree for mode in self.modes})

    def node_values(self, rule: QuadratureRule) -> np.ndarray:
        """Mode values at the rule's nodes, shape (nodes, modes); cached per rule."""
        with self._lock:
            cached = self._node_cache.get(rule.key)
            if cached is not None:
                self._node_cache.move_to_end(rule.key)
                return cached
        values = eval_modes(self.manifold, self.modes, rule.nodes)
        values.setflags(write=False)
        with self._lock:
            self._node_cache[rule.key] = values
            while len(self._node_cache) > NODE_CACHE_ENTRIES:
                self._node_cache.popitem(last=False)
        return values

    def values(self, points: PointLike) -> np.ndarray:
        return eval_modes(self.manifold, self.modes, points)


def _make_window(m: ManifoldModel, frequency: float, width: float) -> SpectralWindow:
    lo = max(0.0, frequency - width)
    modes = tuple(enumerate_modes(m, lo, frequency))
    return SpectralWindow(m, float(frequency), float(width), modes)


def build_window(m: ManifoldModel, frequency: float, width: float) -> SpectralWindow:
    """H_W(lambda); raises EmptyWindowError when no frequency lies in the window."""
    if not (MIN_WIDTH <= width <= frequency):
        raise InvalidArgumentError(
            f"window must satisfy 1 <= W <= lambda, got W={width}, lambda={frequency}"
        )
    window = _make_window(m, frequency, width)
    if window.dimension == 0:
        raise EmptyWindowError(
            f"no {m.name} eigenfrequency in [{window.lo:.6g}, {frequency:.6g}]"
        )
    logger.info(
        "window built: manifold=%s lambda=%s W=%s N=%d",
        m.name,
        frequency,
        width,
        window.dimension,
    )
    return window


def degree_window(m: ManifoldModel, degree: int, width: float = 1.0) -> SpectralWindow:
    """Sphere window centred on the frequency sqrt(l(l+1)) of a single degree."""
    if not m.is_sphere:
        raise InvalidArgumentError("degree windows exist only on sphere2")
    if degree < 1:
        raise InvalidArgumentError(f"degree must be at least 1, got {degree}")
    return build_window(m, math.sqrt(degree * (degree + 1)), width)


# --- Projector kernel ---------------------------------------------------------


def _ordered_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Swap rows so each pair is in lexicographic order; makes K(x,y) == K(y,x)."""
    swap = (a[:, 0] > b[:, 0]) | ((a[:, 0] == b[:, 0]) & (a[:, 1] > b[:, 1]))
    first = np.where(swap[:, None], b, a)
    second = np.where(swap[:, None], a, b)
    return first, second


def _torus_kernel(window: SpectralWindow, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    const = 0.0
    reps = []
    for mode in window.modes:
        label = mode.label
        if label.parity is Parity.CONST:
            const = 1.0 / (4.0 * math.pi**2)
        elif label.parity is Parity.COS:
            reps.append((label.k1, label.k2))
    out = np.full(a.shape[0], const)
    if reps:
        ks = np.array(reps, dtype=float)
        phase = (a - b) @ ks.T
        out = out + np.cos(phase).sum(axis=1) / (2.0 * math.pi**2)
    return out


def _sphere_kernel(window: SpectralWindow, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    cos_d = np.clip(np.einsum("ij,ij->i", sphere_vectors(a), sphere_vectors(b)), -1.0, 1.0)
    out = np.zeros(a.shape[0])
    for ell in window.degrees:
        out += (2.0 * ell + 1.0) / (4.0 * math.pi) * eval_legendre(ell, cos_d)
    return out


def kernel_values(
    window: SpectralWindow, xs: PointLike, ys: PointLike, *, direct: bool = False
) -> np.ndarray:
    """Elementwise E(x_i, y_i); `ys` may also be a single point."""
    a = as_coords(xs)
    b = as_coords(ys)
    if b.shape[0] == 1 and a.shape[0] > 1:
        b = np.repeat(b, a.shape[0], axis=0)
    elif a.shape[0] == 1 and b.shape[0] > 1:
        a = np.repeat(a, b.shape[0], axis=0)
    a, b = _ordered_pair(a, b)
    if direct:
        return np.einsum("ij,ij->i", window.values(a), window.values(b))
    if window.manifold.is_torus:
        return _torus_kernel(window, a, b)
    return _sphere_kernel(window, a, b)


def projector_kernel(
    window: SpectralWindow, x: Point, y: Point, *, direct: bool = False
) -> float:
    """E_[lambda-W, lambda](x, y) = sum over the window of e_i(x) e_i(y)."""
    return float(kernel_values(window, x, y, direct=direct)[0])


def window_diagonal(window: SpectralWindow, points: PointLike) -> np.ndarray:
    """E(x, x) at each point by direct summation of squared modes."""
    values = window.values(points)
    return np.einsum("ij,ij->i", values, values)


# --- Weyl law ------------------------------------------------------------------


def _check_frequency(frequency: float) -> None:
    if frequency < 0.0:
        raise InvalidArgumentError(f"frequency must be nonnegative, got {frequency}")


def local_weyl_term(frequency: float) -> float:
    """c_2 lambda^2 / (2 pi)^2 = lambda^2 / (4 pi)."""
    return frequency * frequency / (4.0 * math.pi)


def counting_function(m: ManifoldModel, frequency: float) -> int:
    """N(lambda): number of modes with frequency <= lambda."""
    _check_frequency(frequency)
    return count_modes(m, 0.0, frequency)


def weyl_remainder(m: ManifoldModel, frequency: float) -> float:
    """R(lambda) = N(lambda) - lambda^2 Vol(M) / (4 pi)."""
    n = counting_function(m, frequency)
    return n - frequency * frequency * m.volume / (4.0 * math.pi)


def pointwise_weyl_remainders(
    m: ManifoldModel, frequency: float, points: PointLike
) -> np.ndarray:
    """R(lambda, x) = E_[0,lambda](x, x) - lambda^2 / (4 pi) at every point."""
    _check_frequency(frequency)
    window = _make_window(m, frequency, frequency)
    return window_diagonal(window, points) - local_weyl_term(frequency)


def pointwise_weyl_remainder(m: ManifoldModel, frequency: float, x: Point) -> float:
    return float(pointwise_weyl_remainders(m, frequency, x)[0])


def weyl_band_average(
    m: ManifoldModel, frequency: float, points: int = WEYL_BAND_POINTS
) -> float:
    """Mean of |R(mu)| / mu over mu in [lambda, 1.5 lambda).

    The lattice remainder oscillates wildly between neighbouring radii, so
    trends are read off this average rather than single values.
    """
    if frequency <= 0.0:
        raise InvalidArgumentError(f"band average needs lambda > 0, got {frequency}")
    grid = np.linspace(frequency, WEYL_BAND_SPAN * frequency, points, endpoint=False)
    ratios = [abs(weyl_remainder(m, float(mu))) / mu ** (m.dimension - 1) for mu in grid]
    return float(np.mean(ratios))


# --- Kernel profile -------------------------------------------------------------


@dataclass(frozen=True)
class KernelProfile:
    """E(x, y) sampled along a geodesic from `base` with its fitted envelopes."""

    base: Point
    direction: float
    separations: np.ndarray
    values: np.ndarray
    bound_values: np.ndarray
    decay_exponent: float
    far_constant_ls: float
    far_constant_sup: float
    near_constant: float

    def fraction_below_envelope(self, frequency: float) -> float:
        far = self.separations >= 1.0 / frequency
        if not far.any():
            return 1.0
        inside = np.abs(self.values[far]) <= self.bound_values[far] * (1.0 + 1e-12)
        return float(np.mean(inside))


def kernel_profile(
    window: SpectralWindow,
    x: Point,
    direction: float,
    max_separation: float,
    samples: int,
) -> KernelProfile:
    """Kernel along a geodesic with the two-regime envelope fitted to the data.

    Near field (d <= 1/lambda) is capped by near_constant * W * lambda^(n-1);
    far field is compared against C * W * lambda^((n-1)/2) * d^(-(n-1)/2).
    """
    m = window.manifold
    if not (0.0 < max_separation <= m.injectivity_radius):
        raise InvalidArgumentError(
            f"max_separation must satisfy 0 < d <= {m.injectivity_radius:.6g}, "
            f"got {max_separation}"
        )
    if samples < 2:
        raise InvalidArgumentError(f"profile needs at least 2 samples, got {samples}")
    n = m.dimension
    lam = window.frequency
    width = window.width

    separations = np.linspace(0.0, max_separation, samples)
    coords = geodesic_points(m, x, direction, separations)
    values = kernel_values(window, coords, x)
    # the exact diagonal, not a point displaced by rounding
    values[0] = float(window_diagonal(window, x)[0])

    near_constant = values[0] / (width * lam ** (n - 1))
    far = separations >= 1.0 / lam
    shape = np.zeros_like(separations)
    shape[far] = width * lam ** ((n - 1) / 2.0) * separations[far] ** (-(n - 1) / 2.0)

    magnitude = np.abs(values)
    far_sup = float(np.max(magnitude[far] / shape[far])) if far.any() else float("nan")
    decay = float("nan")
    far_ls = float("nan")
    if far.any():
        far_idx = np.flatnonzero(far)
        peaks, _ = find_peaks(magnitude[far_idx])
        peak_idx = far_idx[peaks]
        peak_idx = peak_idx[magnitude[peak_idx] > 0.0]
        if peak_idx.size >= 2:
            log_d = np.log(separations[peak_idx])
            log_k = np.log(magnitude[peak_idx])
            decay = float(np.polyfit(log_d, log_k, 1)[0])
            far_ls = float(np.exp(np.mean(log_k - np.log(shape[peak_idx]))))

    bound = np.where(far, far_sup * shape, near_constant * width * lam ** (n - 1))
    logger.debug(
        "kernel profile: manifold=%s lambda=%s W=%s decay=%.4f far_sup=%.4g",
        m.name,
        lam,
        width,
        decay,
        far_sup,
    )
    return KernelProfile(
        base=m.canonical(x),
        direction=float(direction),
        separations=separations,
        values=values,
        bound_values=bound,
        decay_exponent=decay,
        far_constant_ls=far_ls,
        far_constant_sup=far_sup,
        near_constant=float(near_constant),
    )
