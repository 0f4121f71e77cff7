from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import eval_legendre, j1

from equiwave import manifold
from equiwave.errors import InvalidArgumentError, ResourceLimitError
from equiwave.manifold import BallRegion, ManifoldModel, Point

TORUS = ManifoldModel.torus()
SPHERE = ManifoldModel.sphere()


def _assert_orthonormal_within(m: ManifoldModel, modes, order: int, atol: float) -> None:
    rule = manifold.manifold_quadrature(m, order)
    values = manifold.eval_modes(m, modes, rule.nodes)
    gram = values.T @ (rule.weights[:, None] * values)
    np.testing.assert_allclose(gram, np.eye(len(modes)), atol=atol)


def _assert_orthonormal(m: ManifoldModel, modes, order: int) -> None:
    _assert_orthonormal_within(m, modes, order, atol=1e-10)


def test_manifold_from_name_builds_both_models() -> None:
    assert manifold.manifold_from_name("torus2").is_torus
    assert manifold.manifold_from_name(" sphere2 ").is_sphere


def test_manifold_from_name_rejects_unknown() -> None:
    with pytest.raises(InvalidArgumentError):
        manifold.manifold_from_name("klein-bottle")


def test_model_constants() -> None:
    assert TORUS.volume == pytest.approx(4.0 * math.pi**2)
    assert SPHERE.volume == pytest.approx(4.0 * math.pi)
    assert TORUS.injectivity_radius == SPHERE.injectivity_radius == math.pi
    assert TORUS.diameter == pytest.approx(math.pi * math.sqrt(2.0))
    assert SPHERE.frequency_cap == pytest.approx(math.sqrt(200 * 201))


def test_sphere_cap_above_degree_limit_raises() -> None:
    with pytest.raises(InvalidArgumentError):
        ManifoldModel.sphere(frequency_cap=500.0)


@pytest.mark.parametrize("hi,expected", [(5.0, 81), (10.0, 317)])
def test_torus_lattice_counts(hi: float, expected: int) -> None:
    assert manifold.count_modes(TORUS, 0.0, hi) == expected
    assert len(manifold.enumerate_modes(TORUS, 0.0, hi)) == expected


@pytest.mark.parametrize("degree", [0, 1, 4, 30])
def test_sphere_counts_are_full_degrees(degree: int) -> None:
    lam = math.sqrt(degree * (degree + 1))
    assert manifold.count_modes(SPHERE, 0.0, lam) == (degree + 1) ** 2


@pytest.mark.parametrize(
    "m,lo,hi",
    [
        (TORUS, 3.0, 7.5),
        (TORUS, math.sqrt(2.0), math.sqrt(50.0)),
        (SPHERE, 2.0, 9.0),
        (SPHERE, math.sqrt(12.0), math.sqrt(12.0)),
    ],
)
def test_enumerate_matches_count_and_window(m: ManifoldModel, lo: float, hi: float) -> None:
    modes = manifold.enumerate_modes(m, lo, hi)
    assert len(modes) == manifold.count_modes(m, lo, hi)
    squares = [mode.frequency_sq for mode in modes]
    assert squares == sorted(squares)
    assert all(lo - 1e-9 <= mode.frequency <= hi + 1e-9 for mode in modes)


def test_closed_window_endpoints_are_included() -> None:
    assert manifold.squared_bounds(math.sqrt(2.0), math.sqrt(5.0)) == (2, 5)
    single = manifold.enumerate_modes(SPHERE, math.sqrt(12.0), math.sqrt(12.0))
    assert {mode.label.degree for mode in single} == {3}


def test_torus_mode_ids_follow_global_order() -> None:
    full = manifold.enumerate_modes(TORUS, 0.0, 5.0)
    sub = manifold.enumerate_modes(TORUS, 3.0, 5.0)
    expected = [(mode.mode_id, mode.label) for mode in full if mode.frequency_sq >= 9]
    assert [(mode.mode_id, mode.label) for mode in sub] == expected
    assert [mode.mode_id for mode in full] == list(range(len(full)))


def test_sphere_mode_ids() -> None:
    modes = manifold.enumerate_modes(SPHERE, math.sqrt(12.0), math.sqrt(12.0))
    assert [mode.mode_id for mode in modes] == list(range(9, 16))
    assert [mode.label.order for mode in modes] == list(range(-3, 4))


def test_enumerate_rejects_bad_ranges() -> None:
    with pytest.raises(InvalidArgumentError):
        manifold.enumerate_modes(TORUS, 5.0, 4.0)
    with pytest.raises(InvalidArgumentError):
        manifold.enumerate_modes(TORUS, -1.0, 4.0)
    with pytest.raises(ResourceLimitError):
        manifold.enumerate_modes(SPHERE, 0.0, 300.0)
    with pytest.raises(ResourceLimitError):
        manifold.enumerate_modes(TORUS, 0.0, 600.0)


def test_torus_basis_is_orthonormal() -> None:
    _assert_orthonormal(TORUS, manifold.enumerate_modes(TORUS, 0.0, 6.0), order=64)


def test_sphere_basis_is_orthonormal() -> None:
    _assert_orthonormal(SPHERE, manifold.enumerate_modes(SPHERE, 0.0, math.sqrt(110.0)), order=32)


@pytest.mark.parametrize("degree", [1, 5, 40])
def test_zonal_harmonic_at_north_pole(degree: int) -> None:
    mode = manifold.EigenMode(0, degree * (degree + 1), manifold.SphereLabel(degree, 0))
    value = manifold.eval_mode(SPHERE, mode, Point(0.0, 0.0))
    assert value == pytest.approx(math.sqrt((2 * degree + 1) / (4.0 * math.pi)), rel=1e-12)


def test_torus_modes_are_trig_functions() -> None:
    x = Point(0.4, 1.3)
    cos_mode = manifold.EigenMode(0, 25, manifold.TorusLabel(3, 4, manifold.Parity.COS))
    sin_mode = manifold.EigenMode(1, 25, manifold.TorusLabel(3, 4, manifold.Parity.SIN))
    norm = 1.0 / (math.pi * math.sqrt(2.0))
    assert manifold.eval_mode(TORUS, cos_mode, x) == pytest.approx(norm * math.cos(3 * 0.4 + 4 * 1.3))
    assert manifold.eval_mode(TORUS, sin_mode, x) == pytest.approx(norm * math.sin(3 * 0.4 + 4 * 1.3))


def test_torus_distance_wraps() -> None:
    assert manifold.geodesic_distance(TORUS, Point(0.1, 0.0), Point(2 * math.pi - 0.1, 0.0)) == pytest.approx(0.2)
    assert manifold.geodesic_distance(TORUS, Point(0.0, 0.0), Point(math.pi, math.pi)) == pytest.approx(
        TORUS.diameter
    )


def test_sphere_distance() -> None:
    assert manifold.geodesic_distance(SPHERE, Point(0.0, 0.0), Point(math.pi / 2, 1.0)) == pytest.approx(
        math.pi / 2
    )
    assert manifold.geodesic_distance(SPHERE, Point(0.0, 0.0), Point(math.pi, 0.0)) == pytest.approx(math.pi)


@pytest.mark.parametrize("m,base", [(TORUS, Point(1.0, 2.0)), (SPHERE, Point(0.7, 1.1))])
def test_geodesic_points_sit_at_requested_distance(m: ManifoldModel, base: Point) -> None:
    separations = np.linspace(0.0, 3.0, 7)
    coords = manifold.geodesic_points(m, base, 0.3, separations)
    np.testing.assert_allclose(manifold.geodesic_distances(m, coords, base), separations, atol=1e-10)


def test_canonical_coordinates() -> None:
    p = TORUS.canonical(Point(-0.1, 7.0))
    assert p.u == pytest.approx(2 * math.pi - 0.1)
    assert p.v == pytest.approx(7.0 - 2 * math.pi)
    pole = SPHERE.canonical(Point(0.0, 2.5))
    assert pole == Point(0.0, 0.0)


def test_probe_points_include_poles() -> None:
    probes = manifold.probe_points(SPHERE, 32)
    assert probes.shape == (32, 2)
    np.testing.assert_array_equal(probes[:2], [[0.0, 0.0], [math.pi, 0.0]])
    assert manifold.probe_points(TORUS, 16).shape == (16, 2)


def test_random_points_are_reproducible() -> None:
    a = manifold.random_points(SPHERE, 100, np.random.default_rng(3))
    b = manifold.random_points(SPHERE, 100, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    assert np.all((a[:, 0] >= 0.0) & (a[:, 0] <= math.pi))


@pytest.mark.parametrize("radius", [0.0, -0.1, math.pi + 1e-6])
def test_ball_radius_out_of_range_raises(radius: float) -> None:
    with pytest.raises(InvalidArgumentError):
        BallRegion(TORUS, Point(0.0, 0.0), radius)


def test_ball_radius_at_injectivity_radius_is_allowed() -> None:
    assert BallRegion(TORUS, Point(0.0, 0.0), math.pi).volume == pytest.approx(math.pi**3)
    whole = BallRegion(SPHERE, Point(0.3, 0.2), math.pi)
    assert whole.is_whole_manifold
    assert whole.volume == pytest.approx(4.0 * math.pi)


@pytest.mark.parametrize(
    "m,center,radius",
    [(TORUS, Point(6.0, 0.2), 0.5), (SPHERE, Point(1.0, 2.0), 0.3), (SPHERE, Point(0.0, 0.0), 2.0)],
)
def test_ball_quadrature_measure_and_support(m: ManifoldModel, center: Point, radius: float) -> None:
    ball = BallRegion(m, center, radius)
    rule = manifold.ball_quadrature(m, ball, 16)
    assert rule.measure == pytest.approx(ball.volume, rel=1e-12)
    assert rule.size == 16 * 32
    distances = manifold.geodesic_distances(m, rule.nodes, ball.center)
    assert distances.max() <= radius + 1e-12


def test_ball_quadrature_integrates_torus_mode() -> None:
    center = Point(1.0, 0.5)
    r = 0.7
    ball = BallRegion(TORUS, center, r)
    rule = manifold.ball_quadrature(TORUS, ball)
    mode = manifold.EigenMode(0, 25, manifold.TorusLabel(3, 4, manifold.Parity.COS))
    values = manifold.eval_modes(TORUS, [mode], rule.nodes)[:, 0]
    expected = (
        manifold.TORUS_TRIG_NORM * math.cos(3 * center.u + 4 * center.v) * 2 * math.pi * r * j1(5 * r) / 5
    )
    assert manifold.integrate_over(rule, values) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_ball_quadrature_follows_rotated_cap() -> None:
    # integral over a cap of P_l(x . c) is 2 pi (P_{l-1}(cos r) - P_{l+1}(cos r)) / (2l + 1)
    degree = 7
    r = 0.6
    center = Point(1.0, 2.0)
    ball = BallRegion(SPHERE, center, r)
    rule = manifold.ball_quadrature(SPHERE, ball)
    c = manifold.sphere_vectors(manifold.as_coords(center))[0]
    values = eval_legendre(degree, manifold.sphere_vectors(rule.nodes) @ c)
    z = math.cos(r)
    expected = (
        2 * math.pi * (eval_legendre(degree - 1, z) - eval_legendre(degree + 1, z)) / (2 * degree + 1)
    )
    assert float(rule.integrate(values)) == pytest.approx(expected, rel=1e-10)


def test_quadrature_order_below_minimum_raises() -> None:
    ball = BallRegion(TORUS, Point(0.0, 0.0), 0.5)
    with pytest.raises(InvalidArgumentError):
        manifold.ball_quadrature(TORUS, ball, manifold.MIN_QUADRATURE_ORDER - 1)
    with pytest.raises(InvalidArgumentError):
        manifold.manifold_quadrature(SPHERE, 4)


def test_suggested_order_grows_with_frequency_times_radius() -> None:
    assert manifold.suggested_order(10.0, 0.1) == manifold.DEFAULT_BALL_ORDER
    assert manifold.suggested_order(200.0, 1.0) == 424


def test_torus_modes_up_to_thirty_are_orthonormal() -> None:
    modes = manifold.enumerate_modes(TORUS, 0.0, 30.0)
    picks = np.random.default_rng(0).choice(len(modes), size=300, replace=False)
    subset = [modes[i] for i in sorted(set(picks) | {0, len(modes) - 1})]
    rule = manifold.manifold_quadrature(TORUS, 64)
    values = manifold.eval_modes(TORUS, subset, rule.nodes)
    gram = values.T @ (rule.weights[:, None] * values)
    np.testing.assert_allclose(gram, np.eye(len(subset)), atol=1e-8)


def test_sphere_modes_up_to_thirty_are_orthonormal() -> None:
    modes = manifold.enumerate_modes(SPHERE, 0.0, 30.0)
    assert len(modes) == 30 * 30
    _assert_orthonormal_within(SPHERE, modes, order=32, atol=1e-8)


@pytest.mark.parametrize(
    "m,frequency,center,radius",
    [(TORUS, 30.0, Point(1.0, 2.0), 0.5), (SPHERE, 30.0, Point(1.0, 2.0), 0.5), (SPHERE, 30.0, Point(0.0, 0.0), 0.05)],
)
def test_doubling_ball_order_leaves_integrals_unchanged(
    m: ManifoldModel, frequency: float, center: Point, radius: float
) -> None:
    modes = manifold.enumerate_modes(m, frequency - 1.0, frequency)
    ball = BallRegion(m, center, radius)
    order = manifold.suggested_order(frequency, radius)
    integrals = []
    for rule in (manifold.ball_quadrature(m, ball, order), manifold.ball_quadrature(m, ball, 2 * order)):
        values = manifold.eval_modes(m, modes, rule.nodes)
        integrals.append(values.T @ (rule.weights[:, None] * values))
    np.testing.assert_allclose(integrals[0], integrals[1], rtol=0.0, atol=1e-9)


@pytest.mark.parametrize("m", [TORUS, SPHERE])
def test_geodesic_distance_is_a_metric(m: ManifoldModel) -> None:
    rng = np.random.default_rng(12)
    a, b, c = (manifold.random_points(m, 1000, rng) for _ in range(3))
    ab = manifold.geodesic_distances(m, a, b)
    assert np.array_equal(ab, manifold.geodesic_distances(m, b, a))
    assert np.all(ab >= 0.0)
    assert np.all(manifold.geodesic_distances(m, a, a) == 0.0)
    bc = manifold.geodesic_distances(m, b, c)
    ac = manifold.geodesic_distances(m, a, c)
    assert np.all(ac <= ab + bc + 1e-12)
