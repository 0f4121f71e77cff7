"""Model manifolds for equiwave: the flat 2-torus and the round 2-sphere.

Both models come with an exact real orthonormal eigenbasis of the Laplacian,
geodesic balls and Gauss-Legendre quadrature rules. All objects here are
immutable and every function is pure, so they can be shared across threads.

Chart conventions:
- torus2: (x1, x2) in [0, 2pi)^2
- sphere2: (theta, phi), theta in [0, pi] the colatitude, phi in [0, 2pi);
  the poles carry phi = 0
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union
import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidArgumentError, ResourceLimitError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

MIN_QUADRATURE_ORDER = 8
DEFAULT_BALL_ORDER = 64
DEFAULT_MANIFOLD_ORDER = 256

MAX_SPHERE_DEGREE = 200
TORUS_FREQUENCY_CAP = 512.0
SPHERE_FREQUENCY_CAP = math.sqrt(MAX_SPHERE_DEGREE * (MAX_SPHERE_DEGREE + 1))

# Squared eigenfrequencies are integers on both models; float window bounds
# are snapped to them with this relative slack.
FREQUENCY_SQ_RTOL = 1e-10

TORUS_CONST_NORM = 1.0 / TWO_PI
TORUS_TRIG_NORM = 1.0 / (math.pi * math.sqrt(2.0))
SPHERE_Y00 = 1.0 / math.sqrt(4.0 * math.pi)


class ManifoldKind(str, Enum):
    TORUS2 = "torus2"
    SPHERE2 = "sphere2"


@dataclass(frozen=True)
class ManifoldModel:
    """One of the two supported geometries."""

    kind: ManifoldKind
    volume: float
    injectivity_radius: float
    diameter: float
    frequency_cap: float
    dimension: int = 2
    # c_n: volume of the unit ball in R^n.
    weyl_constant: float = math.pi

    @classmethod
    def torus(cls, frequency_cap: float = TORUS_FREQUENCY_CAP) -> ManifoldModel:
        return cls(
            kind=ManifoldKind.TORUS2,
            volume=4.0 * math.pi**2,
            injectivity_radius=math.pi,
            diameter=math.pi * math.sqrt(2.0),
            frequency_cap=float(frequency_cap),
        )

    @classmethod
    def sphere(cls, frequency_cap: float = SPHERE_FREQUENCY_CAP) -> ManifoldModel:
        if frequency_cap > SPHERE_FREQUENCY_CAP * (1.0 + 1e-12):
            raise InvalidArgumentError(
                f"sphere frequency cap must not exceed {SPHERE_FREQUENCY_CAP:.6g} "
                f"(degree {MAX_SPHERE_DEGREE})"
            )
        return cls(
            kind=ManifoldKind.SPHERE2,
            volume=4.0 * math.pi,
            injectivity_radius=math.pi,
            diameter=math.pi,
            frequency_cap=float(frequency_cap),
        )

    @property
    def is_torus(self) -> bool:
        return self.kind is ManifoldKind.TORUS2

    @property
    def is_sphere(self) -> bool:
        return self.kind is ManifoldKind.SPHERE2

    @property
    def name(self) -> str:
        return self.kind.value

    def canonical(self, point: Point) -> Point:
        """Reduce a point's chart coordinates to the canonical ranges."""
        u, v = canonical_coords(self, as_coords(point))[0]
        return Point(float(u), float(v))


def manifold_from_name(name: str) -> ManifoldModel:
    """Build a model from its kind name (`torus2` or `sphere2`)."""
    try:
        kind = ManifoldKind(name.strip())
    except ValueError:
        choices = ", ".join(k.value for k in ManifoldKind)
        raise InvalidArgumentError(
            f"unknown manifold {name!r}; expected one of {choices}"
        ) from None
    return ManifoldModel.torus() if kind is ManifoldKind.TORUS2 else ManifoldModel.sphere()


@dataclass(frozen=True)
class Point:
    """Chart coordinates: (x1, x2) on the torus, (theta, phi) on the sphere."""

    u: float
    v: float


PointLike = Union[Point, Sequence[Point], Sequence[Sequence[float]], np.ndarray]


def as_coords(points: PointLike) -> np.ndarray:
    """Coordinates of one or many points as a float array of shape (n, 2)."""
    if isinstance(points, Point):
        return np.array([[points.u, points.v]], dtype=float)
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=float).reshape(-1, 2)
    items = list(points)
    if items and isinstance(items[0], Point):
        return np.array([[p.u, p.v] for p in items], dtype=float).reshape(-1, 2)
    return np.asarray(items, dtype=float).reshape(-1, 2)


def as_points(coords: np.ndarray) -> list[Point]:
    return [Point(float(u), float(v)) for u, v in np.asarray(coords).reshape(-1, 2)]


def sphere_vectors(coords: np.ndarray) -> np.ndarray:
    """Unit vectors in R^3 for sphere chart coordinates."""
    theta, phi = coords[:, 0], coords[:, 1]
    s = np.sin(theta)
    return np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=1)


def vectors_to_coords(vectors: np.ndarray) -> np.ndarray:
    """Canonical (theta, phi) for unit (or nonzero) vectors in R^3."""
    x, y, z = vectors[:, 0], vectors[:, 1], vectors[:, 2]
    rho = np.hypot(x, y)
    theta = np.arctan2(rho, z)
    phi = np.where(rho > 0.0, np.mod(np.arctan2(y, x), TWO_PI), 0.0)
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return np.stack([theta, phi], axis=1)


def canonical_coords(m: ManifoldModel, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if m.is_torus:
        out = np.mod(coords, TWO_PI)
        # mod of a tiny negative rounds up to exactly 2pi
        out[out >= TWO_PI] = 0.0
        return out
    return vectors_to_coords(sphere_vectors(coords))


def geodesic_distances(m: ManifoldModel, xs: PointLike, ys: PointLike) -> np.ndarray:
    """Elementwise geodesic distances; shapes (n, 2) and (n, 2) or (1, 2)."""
    a = as_coords(xs)
    b = as_coords(ys)
    if m.is_torus:
        d = np.mod(np.abs(a - b), TWO_PI)
        d = np.minimum(d, TWO_PI - d)
        return np.hypot(d[:, 0], d[:, 1])
    va = sphere_vectors(a)
    vb = sphere_vectors(b)
    cross = np.linalg.norm(np.cross(va, vb), axis=1)
    dot = np.einsum("ij,ij->i", va, vb)
    return np.arctan2(cross, dot)


def geodesic_distance(m: ManifoldModel, x: Point, y: Point) -> float:
    return float(geodesic_distances(m, x, y)[0])


def geodesic_points(
    m: ManifoldModel, x: Point, direction: float, separations: np.ndarray
) -> np.ndarray:
    """Points at the given distances along the geodesic leaving `x`.

    `direction` is the angle of the unit tangent: measured from the x1 axis on
    the torus and from the southward meridian e_theta towards e_phi on the
    sphere.
    """
    d = np.asarray(separations, dtype=float)
    base = as_coords(x)
    if m.is_torus:
        step = np.stack([np.cos(direction) * d, np.sin(direction) * d], axis=1)
        return canonical_coords(m, base + step)
    theta, phi = base[0]
    p = sphere_vectors(base)[0]
    e_theta = np.array(
        [math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), -math.sin(theta)]
    )
    e_phi = np.array([-math.sin(phi), math.cos(phi), 0.0])
    tangent = math.cos(direction) * e_theta + math.sin(direction) * e_phi
    vectors = np.cos(d)[:, None] * p[None, :] + np.sin(d)[:, None] * tangent[None, :]
    return vectors_to_coords(vectors)


def random_points(m: ManifoldModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` points drawn uniformly with respect to area."""
    if m.is_torus:
        return rng.uniform(0.0, TWO_PI, size=(count, 2))
    z = rng.uniform(-1.0, 1.0, size=count)
    phi = rng.uniform(0.0, TWO_PI, size=count)
    return np.stack([np.arccos(z), phi], axis=1)


def probe_points(m: ManifoldModel, count: int = 32) -> np.ndarray:
    """Deterministic, well-spread probe set; on the sphere it includes both poles."""
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    if m.is_torus:
        i = np.arange(count, dtype=float)
        return np.stack([TWO_PI * (i + 0.5) / count, TWO_PI * np.mod(i * golden, 1.0)], axis=1)
    if count < 2:
        raise InvalidArgumentError("sphere probe set needs at least the two poles")
    inner = count - 2
    i = np.arange(inner, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / max(inner, 1)
    lattice = np.stack([np.arccos(z), np.mod(TWO_PI * i * golden, TWO_PI)], axis=1)
    poles = np.array([[0.0, 0.0], [math.pi, 0.0]])
    return np.concatenate([poles, lattice.reshape(-1, 2)], axis=0)


# --- Eigenbasis --------------------------------------------------------------


class Parity(str, Enum):
    CONST = "const"
    COS = "cos"
    SIN = "sin"


@dataclass(frozen=True)
class TorusLabel:
    k1: int
    k2: int
    parity: Parity


@dataclass(frozen=True)
class SphereLabel:
    """Real spherical harmonic: order > 0 is the cosine, order < 0 the sine."""

    degree: int
    order: int


@dataclass(frozen=True)
class EigenMode:
    """A real orthonormal eigenfunction, Delta e = frequency^2 e."""

    mode_id: int
    frequency_sq: int
    label: Union[TorusLabel, SphereLabel]

    @property
    def frequency(self) -> float:
        return math.sqrt(self.frequency_sq)


def squared_bounds(lo: float, hi: float) -> tuple[int, int]:
    """Integer range of squared frequencies inside the closed window [lo, hi]."""
    lo_sq = lo * lo
    hi_sq = hi * hi
    slack = FREQUENCY_SQ_RTOL * max(1.0, hi_sq)
    q_min = max(0, math.ceil(lo_sq - slack))
    q_max = math.floor(hi_sq + slack)
    return q_min, q_max


def _lattice(radius_sq: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = math.isqrt(max(radius_sq, 0))
    r = np.arange(-k, k + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    k1 = k1.ravel()
    k2 = k2.ravel()
    q = k1 * k1 + k2 * k2
    keep = q <= radius_sq
    return k1[keep], k2[keep], q[keep]


def _torus_modes(q_min: int, q_max: int) -> list[EigenMode]:
    k1, k2, q = _lattice(q_max)
    offset = int(np.count_nonzero(q < q_min))
    in_window = q >= q_min
    representative = in_window & ((k1 > 0) | ((k1 == 0) & (k2 > 0)))
    reps = np.flatnonzero(representative)
    reps = reps[np.lexsort((k2[reps], k1[reps], q[reps]))]

    modes: list[EigenMode] = []
    mode_id = offset
    if q_min == 0:
        modes.append(EigenMode(mode_id, 0, TorusLabel(0, 0, Parity.CONST)))
        mode_id += 1
    for i in reps:
        a, b, s = int(k1[i]), int(k2[i]), int(q[i])
        modes.append(EigenMode(mode_id, s, TorusLabel(a, b, Parity.COS)))
        modes.append(EigenMode(mode_id + 1, s, TorusLabel(a, b, Parity.SIN)))
        mode_id += 2
    return modes


def _sphere_degree_range(q_min: int, q_max: int) -> range:
    # smallest l with l(l+1) >= q_min, largest with l(l+1) <= q_max
    lo = max(0, math.isqrt(q_min) - 1)
    while lo * (lo + 1) < q_min:
        lo += 1
    hi = math.isqrt(q_max)
    while hi * (hi + 1) > q_max:
        hi -= 1
    return range(lo, hi + 1)


def _sphere_modes(q_min: int, q_max: int) -> list[EigenMode]:
    modes: list[EigenMode] = []
    for ell in _sphere_degree_range(q_min, q_max):
        if ell > MAX_SPHERE_DEGREE:
            raise ResourceLimitError(
                f"spherical harmonic degree {ell} exceeds cap {MAX_SPHERE_DEGREE}"
            )
        for order in range(-ell, ell + 1):
            modes.append(
                EigenMode(ell * ell + order + ell, ell * (ell + 1), SphereLabel(ell, order))
            )
    return modes


def enumerate_modes(m: ManifoldModel, lo: float, hi: float) -> list[EigenMode]:
    """All modes with frequency in the closed interval [lo, hi], in canonical order.

    Torus: by |k|^2, then lexicographic k, then parity (cos before sin).
    Sphere: by degree, then order from -l to l.
    """
    if not (0.0 <= lo <= hi):
        raise InvalidArgumentError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    if hi > m.frequency_cap * (1.0 + 1e-12):
        raise ResourceLimitError(
            f"frequency {hi:.6g} exceeds the {m.name} cap {m.frequency_cap:.6g}"
        )
    q_min, q_max = squared_bounds(lo, hi)
    if q_min > q_max:
        return []
    modes = _torus_modes(q_min, q_max) if m.is_torus else _sphere_modes(q_min, q_max)
    logger.debug("modes enumerated: manifold=%s lo=%s hi=%s count=%d", m.name, lo, hi, len(modes))
    return modes


def _lattice_count(q_max: int) -> int:
    """Number of k in Z^2 with |k|^2 <= q_max."""
    if q_max < 0:
        return 0
    k = math.isqrt(q_max)
    return sum(2 * math.isqrt(q_max - k1 * k1) + 1 for k1 in range(-k, k + 1))


def count_modes(m: ManifoldModel, lo: float, hi: float) -> int:
    """len(enumerate_modes(m, lo, hi)) without building the modes."""
    if not (0.0 <= lo <= hi):
        raise InvalidArgumentError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    q_min, q_max = squared_bounds(lo, hi)
    if q_min > q_max:
        return 0
    if m.is_torus:
        return _lattice_count(q_max) - _lattice_count(q_min - 1)
    return sum(2 * ell + 1 for ell in _sphere_degree_range(q_min, q_max))


def _torus_basis(coords: np.ndarray, labels: Sequence[TorusLabel]) -> np.ndarray:
    ks = np.array([[lab.k1, lab.k2] for lab in labels], dtype=float).reshape(-1, 2)
    parity = np.array([lab.parity.value for lab in labels])
    phase = coords @ ks.T
    out = np.empty((coords.shape[0], len(labels)))
    cos_cols = parity == Parity.COS.value
    sin_cols = parity == Parity.SIN.value
    const_cols = parity == Parity.CONST.value
    out[:, cos_cols] = TORUS_TRIG_NORM * np.cos(phase[:, cos_cols])
    out[:, sin_cols] = TORUS_TRIG_NORM * np.sin(phase[:, sin_cols])
    out[:, const_cols] = TORUS_CONST_NORM
    return out


def _sphere_basis(coords: np.ndarray, labels: Sequence[SphereLabel]) -> np.ndarray:
    """Real spherical harmonics by the fully normalized Legendre recurrence."""
    out = np.zeros((coords.shape[0], len(labels)))
    if not labels:
        return out
    columns = {(lab.degree, lab.order): j for j, lab in enumerate(labels)}
    lmax = max(lab.degree for lab in labels)
    theta, phi = coords[:, 0], coords[:, 1]
    x = np.cos(theta)
    s = np.sin(theta)

    p_mm = np.full(coords.shape[0], SPHERE_Y00)
    for m in range(lmax + 1):
        if m > 0:
            p_mm = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p_mm
            cos_m = math.sqrt(2.0) * np.cos(m * phi)
            sin_m = math.sqrt(2.0) * np.sin(m * phi)
        p_prev = np.zeros_like(p_mm)
        p_cur = p_mm
        for ell in range(m, lmax + 1):
            if ell == m + 1:
                p_prev, p_cur = p_cur, math.sqrt(2.0 * m + 3.0) * x * p_mm
            elif ell > m + 1:
                a = math.sqrt((2.0 * ell - 1.0) * (2.0 * ell + 1.0) / ((ell - m) * (ell + m)))
                b = math.sqrt(
                    (2.0 * ell + 1.0)
                    * (ell - 1.0 - m)
                    * (ell - 1.0 + m)
                    / ((2.0 * ell - 3.0) * (ell - m) * (ell + m))
                )
                p_prev, p_cur = p_cur, a * x * p_cur - b * p_prev
            if m == 0:
                j = columns.get((ell, 0))
                if j is not None:
                    out[:, j] = p_cur
                continue
            j = columns.get((ell, m))
            if j is not None:
                out[:, j] = p_cur * cos_m
            j = columns.get((ell, -m))
            if j is not None:
                out[:, j] = p_cur * sin_m
    return out


def eval_modes(m: ManifoldModel, modes: Sequence[EigenMode], points: PointLike) -> np.ndarray:
    """Basis values as an array of shape (len(points), len(modes))."""
    coords = as_coords(points)
    labels = [mode.label for mode in modes]
    if m.is_torus:
        return _torus_basis(coords, labels)
    if coords.size and (coords[:, 0].min() < 0.0 or coords[:, 0].max() > math.pi):
        coords = canonical_coords(m, coords)
    return _sphere_basis(coords, labels)


def eval_mode(m: ManifoldModel, mode: EigenMode, x: Point) -> float:
    return float(eval_modes(m, [mode], x)[0, 0])


# --- Balls and quadrature ----------------------------------------------------


@dataclass(frozen=True)
class BallRegion:
    """Closed geodesic ball B(center, radius) with 0 < radius <= Inj M."""

    manifold: ManifoldModel
    center: Point
    radius: float

    def __post_init__(self) -> None:
        inj = self.manifold.injectivity_radius
        if not (0.0 < self.radius <= inj):
            raise InvalidArgumentError(
                f"ball radius must satisfy 0 < r <= {inj:.6g}, got {self.radius}"
            )
        object.__setattr__(self, "center", self.manifold.canonical(self.center))

    @property
    def volume(self) -> float:
        r = self.radius
        if self.manifold.is_torus:
            return math.pi * r * r
        return 4.0 * math.pi * math.sin(r / 2.0) ** 2

    @property
    def is_whole_manifold(self) -> bool:
        return self.manifold.is_sphere and self.radius == math.pi


class QuadratureTarget(str, Enum):
    BALL = "ball"
    WHOLE_MANIFOLD = "whole_manifold"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes (chart coordinates, shape (n, 2)) with positive area weights."""

    nodes: np.ndarray
    weights: np.ndarray
    target: QuadratureTarget
    order: int
    # Identifies the rule so evaluations at its nodes can be cached.
    key: tuple

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def points(self) -> list[Point]:
        return as_points(self.nodes)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values (first axis runs over the nodes)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _check_order(order: int) -> None:
    if order < MIN_QUADRATURE_ORDER:
        raise InvalidArgumentError(
            f"quadrature order must be at least {MIN_QUADRATURE_ORDER}, got {order}"
        )


def suggested_order(frequency: float, radius: float) -> int:
    """Radial node count resolving products of two modes of the given frequency."""
    return max(DEFAULT_BALL_ORDER, math.ceil(2.0 * frequency * radius) + 24)


def _rotation_to(center: Point) -> np.ndarray:
    """Rotation carrying the north pole to `center`."""
    t, p = center.u, center.v
    ry = np.array(
        [[math.cos(t), 0.0, math.sin(t)], [0.0, 1.0, 0.0], [-math.sin(t), 0.0, math.cos(t)]]
    )
    rz = np.array(
        [[math.cos(p), -math.sin(p), 0.0], [math.sin(p), math.cos(p), 0.0], [0.0, 0.0, 1.0]]
    )
    return rz @ ry


def ball_quadrature(
    m: ManifoldModel, ball: BallRegion, order: int | None = None
) -> QuadratureRule:
    """Tensor Gauss-Legendre x trapezoid rule over a geodesic ball.

    Torus: Gauss-Legendre in the polar radius, uniform in angle.
    Sphere: the cap is built around the north pole (Gauss-Legendre in
    cos theta over [cos r, 1], uniform in phi) and rotated onto the center.
    """
    if order is None:
        order = DEFAULT_BALL_ORDER
    _check_order(order)
    t, w = leggauss(order)
    n_ang = 2 * order
    angles = TWO_PI * np.arange(n_ang) / n_ang
    ang_weight = TWO_PI / n_ang
    r = ball.radius

    if m.is_torus:
        rho = 0.5 * r * (1.0 + t)
        radial_w = 0.5 * r * w * rho
        offsets = np.stack(
            [np.outer(rho, np.cos(angles)).ravel(), np.outer(rho, np.sin(angles)).ravel()],
            axis=1,
        )
        nodes = canonical_coords(m, offsets + np.array([ball.center.u, ball.center.v]))
        weights = np.outer(radial_w, np.full(n_ang, ang_weight)).ravel()
    else:
        # 1 - cos r written without cancellation
        height = 2.0 * math.sin(r / 2.0) ** 2
        z = 1.0 - 0.5 * height * (1.0 - t)
        z_w = 0.5 * height * w
        s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        local = np.stack(
            [
                np.outer(s, np.cos(angles)).ravel(),
                np.outer(s, np.sin(angles)).ravel(),
                np.repeat(z, n_ang),
            ],
            axis=1,
        )
        nodes = vectors_to_coords(local @ _rotation_to(ball.center).T)
        weights = np.outer(z_w, np.full(n_ang, ang_weight)).ravel()

    key = (m.kind.value, QuadratureTarget.BALL.value, ball.center.u, ball.center.v, r, order)
    return QuadratureRule(nodes, weights, QuadratureTarget.BALL, order, key)


def manifold_quadrature(m: ManifoldModel, order: int | None = None) -> QuadratureRule:
    """Whole-manifold rule: uniform order x order grid on the torus; on the
    sphere `order` Gauss-Legendre nodes in cos theta times 2*order in phi."""
    if order is None:
        order = DEFAULT_MANIFOLD_ORDER
    _check_order(order)
    if m.is_torus:
        grid = TWO_PI * np.arange(order) / order
        g1, g2 = np.meshgrid(grid, grid, indexing="ij")
        nodes = np.stack([g1.ravel(), g2.ravel()], axis=1)
        weights = np.full(order * order, (TWO_PI / order) ** 2)
    else:
        t, w = leggauss(order)
        n_phi = 2 * order
        phi = TWO_PI * np.arange(n_phi) / n_phi
        theta = np.arccos(t)
        nodes = np.stack([np.repeat(theta, n_phi), np.tile(phi, order)], axis=1)
        weights = np.outer(w, np.full(n_phi, TWO_PI / n_phi)).ravel()
    key = (m.kind.value, QuadratureTarget.WHOLE_MANIFOLD.value, order)
    return QuadratureRule(nodes, weights, QuadratureTarget.WHOLE_MANIFOLD, order, key)


def integrate_over(rule: QuadratureRule, values: Iterable[float]) -> float:
    return float(rule.integrate(np.asarray(list(values), dtype=float)))
