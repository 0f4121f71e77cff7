from __future__ import annotations

from types import SimpleNamespace
import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from equiwave import analytics, ensemble, spectral
from equiwave.errors import (
    DegenerateWindowError,
    InvalidArgumentError,
    NumericFailureError,
    ResourceLimitError,
)
from equiwave.manifold import BallRegion, ManifoldModel, Point

TORUS = ManifoldModel.torus()
SPHERE = ManifoldModel.sphere()


def _psd(eigenvalues, seed: int = 0) -> np.ndarray:
    q = ortho_group.rvs(len(eigenvalues), random_state=seed)
    return q @ np.diag(eigenvalues) @ q.T


@pytest.mark.parametrize(
    "m,frequency,width",
    [(TORUS, 8.0, 2.0), (SPHERE, math.sqrt(56.0), 2.0)],
)
def test_whole_manifold_gram_is_identity(m: ManifoldModel, frequency: float, width: float) -> None:
    window = spectral.build_window(m, frequency, width)
    g = analytics.gram_matrix(window, None, order=64)
    np.testing.assert_allclose(g.entries, np.eye(window.dimension), atol=1e-10)
    assert g.trace == pytest.approx(window.dimension)


@pytest.mark.parametrize(
    "m,frequency,center,radius",
    [
        (TORUS, 20.0, Point(1.0, 2.0), 0.4),
        (SPHERE, math.sqrt(20 * 21), Point(0.9, 4.0), 0.5),
    ],
)
def test_expectation_equals_volume_fraction(
    m: ManifoldModel, frequency: float, center: Point, radius: float
) -> None:
    window = spectral.build_window(m, frequency, 3.0)
    ball = BallRegion(m, center, radius)
    g = analytics.gram_matrix(window, ball)
    assert analytics.expected_ball_mass(g) == pytest.approx(ball.volume / m.volume, rel=1e-10)


def test_gram_cap_is_enforced() -> None:
    window = spectral.build_window(TORUS, 10.0, 2.0)
    ball = BallRegion(TORUS, Point(0.0, 0.0), 0.5)
    with pytest.raises(ResourceLimitError):
        analytics.gram_matrix(window, ball, cap=10)
    with pytest.raises(ResourceLimitError):
        analytics.ball_moments(spectral.degree_window(SPHERE, 10), BallRegion(SPHERE, Point(0.0, 0.0), 0.5), cap=5)


def test_lattice_moments_match_dense_gram() -> None:
    window = spectral.build_window(TORUS, 12.0, 3.0)
    ball = BallRegion(TORUS, Point(0.7, 5.0), 0.4)
    dense = analytics.ball_moments(window, ball)
    lattice = analytics.ball_moments(window, ball, cap=1)
    assert dense.method == "gram" and dense.gram is not None
    assert lattice.method == "lattice" and lattice.gram is None
    assert lattice.trace == pytest.approx(dense.trace, rel=1e-9)
    assert lattice.frobenius_sq == pytest.approx(dense.frobenius_sq, rel=1e-9)


def test_lattice_moments_need_torus() -> None:
    window = spectral.degree_window(SPHERE, 3)
    with pytest.raises(InvalidArgumentError):
        analytics.torus_lattice_moments(window, BallRegion(SPHERE, Point(0.0, 0.0), 0.5))


def test_exact_variance_matches_monte_carlo_for_a_fixed_matrix() -> None:
    g = analytics.gram_from_entries(_psd([0.9, 0.5, 0.3, 0.1, 0.05]))
    count = 200_000
    batch = ensemble.sample_batch(SimpleNamespace(dimension=5), g.quadratic_form, count, 3)
    values = batch.values
    assert abs(values.mean() - analytics.expected_ball_mass(g)) <= 4.0 * values.std() / math.sqrt(count)
    exact = analytics.variance_ball_mass_exact(g)
    assert values.var(ddof=1) == pytest.approx(exact, rel=0.03)


def test_variance_depends_only_on_spectrum() -> None:
    eigenvalues = [0.8, 0.4, 0.2, 0.2, 0.1, 0.0]
    rotated = analytics.gram_from_entries(_psd(eigenvalues, seed=4))
    diagonal = analytics.gram_from_entries(np.diag(eigenvalues))
    assert analytics.variance_ball_mass_exact(rotated) == pytest.approx(
        analytics.variance_ball_mass_exact(diagonal), rel=1e-12
    )


def test_relative_gap_identity() -> None:
    window = spectral.build_window(TORUS, 15.0, 3.0)
    g = analytics.gram_matrix(window, BallRegion(TORUS, Point(2.0, 2.0), 0.5))
    n = g.dimension
    rho = g.trace**2 / g.frobenius_sq
    assert analytics.relative_gap(g) == pytest.approx((2.0 + rho) / (n - rho), rel=1e-9)
    assert analytics.variance_ball_mass_approx(g) >= analytics.variance_ball_mass_exact(g)


def test_relative_gap_is_infinite_for_scalar_matrix() -> None:
    g = analytics.gram_from_entries(0.25 * np.eye(4))
    assert analytics.variance_ball_mass_exact(g) == pytest.approx(0.0, abs=1e-15)
    assert analytics.relative_gap(g) == math.inf


def test_variance_needs_two_modes() -> None:
    with pytest.raises(DegenerateWindowError):
        analytics.variance_ball_mass_exact(analytics.gram_from_entries([[0.5]]))


def test_gram_from_entries_requires_square() -> None:
    with pytest.raises(InvalidArgumentError):
        analytics.gram_from_entries(np.zeros((2, 3)))


def test_moment_report_fields() -> None:
    window = spectral.build_window(TORUS, 10.0, 2.0)
    ball = BallRegion(TORUS, Point(0.0, 0.0), 0.5)
    report = analytics.moment_report(window, ball)
    assert report.dimension == window.dimension
    assert report.target == pytest.approx(ball.volume / TORUS.volume)
    assert report.expectation == pytest.approx(report.target, rel=1e-10)
    assert report.method == "gram"


def test_power_iteration_matches_dense_solver() -> None:
    entries = _psd([1.0, 0.7, 0.3, 0.2, 0.1, 0.05, 0.0, 0.0], seed=8)
    assert analytics.top_eigenvalue(entries) == pytest.approx(np.linalg.eigvalsh(entries)[-1], abs=1e-9)


@pytest.mark.parametrize("radius", [0.05, 0.1, 0.2, 0.4])
def test_worst_case_on_single_degree_matches_dense(radius: float) -> None:
    window = spectral.degree_window(SPHERE, 50)
    g = analytics.gram_matrix(window, BallRegion(SPHERE, Point(0.0, 0.0), radius))
    assert g.dimension == 101
    dense = float(np.linalg.eigvalsh(g.entries)[-1])
    assert abs(analytics.worst_case_ball_mass(g) - dense) <= 1e-8
    assert analytics.lipschitz_bound(g) == pytest.approx(2.0 * dense, abs=1e-8)


def test_power_iteration_reports_non_convergence_without_fallback() -> None:
    with pytest.raises(NumericFailureError):
        analytics.top_eigenvalue(np.diag([1.0, 0.9]), max_iter=1, fallback=False)


def test_power_iteration_falls_back_to_dense_solve() -> None:
    entries = _psd([1.0, 0.9999, 0.5, 0.1], seed=2)
    assert analytics.top_eigenvalue(entries, max_iter=1) == pytest.approx(1.0, abs=1e-12)


def test_power_iteration_finds_eigenvector_orthogonal_to_ones() -> None:
    # top eigenvector (1, -1, 0)/sqrt(2) is orthogonal to the all-ones start
    entries = np.array([[0.5, -0.4, 0.0], [-0.4, 0.5, 0.0], [0.0, 0.0, 0.3]])
    assert analytics.top_eigenvalue(entries) == pytest.approx(0.9, abs=1e-10)


@pytest.mark.parametrize(
    "window_args,center,radius",
    [
        ((TORUS, 40.0, 1.0), Point(0.0, 0.0), 1.0),
        ((TORUS, 30.0, 1.0), Point(0.0, 0.0), 2.0),
        ((TORUS, 20.0, 1.0), Point(0.0, 0.0), math.pi),
        ((SPHERE, math.sqrt(50 * 51), 1.0), Point(0.0, 0.0), 1.5),
        ((SPHERE, math.sqrt(30 * 31), 3.0), Point(0.0, 0.0), 2.5),
        ((SPHERE, math.sqrt(20 * 21), 1.0), Point(0.0, 0.0), 3.0),
    ],
)
def test_worst_case_matches_dense_on_wide_balls(window_args, center: Point, radius: float) -> None:
    m = window_args[0]
    window = spectral.build_window(*window_args)
    g = analytics.gram_matrix(window, BallRegion(m, center, radius))
    dense = float(np.linalg.eigvalsh(g.entries)[-1])
    assert abs(analytics.worst_case_ball_mass(g) - dense) <= 1e-8


def test_power_iteration_on_zero_matrix() -> None:
    assert analytics.top_eigenvalue(np.zeros((3, 3))) == 0.0


def test_levy_bound_shape() -> None:
    assert analytics.levy_bound(0.5, 101, 0.0) == 1.0
    t = np.array([0.0, 0.05, 0.1])
    bound = analytics.levy_bound(0.5, 101, t)
    np.testing.assert_allclose(bound, np.exp(-100 * t * t / 0.5))
    assert np.all(np.diff(bound) < 0)


def test_worst_case_envelope_regimes() -> None:
    # below the Planck scale, between 1/lambda and 1/W, and beyond 1/W
    assert analytics.worst_case_envelope(100.0, 4.0, 0.005) == pytest.approx(4.0 * 100.0 * math.pi * 0.005**2)
    assert analytics.worst_case_envelope(100.0, 4.0, 0.1) == pytest.approx(0.4)
    assert analytics.worst_case_envelope(100.0, 4.0, 0.5) == 1.0
    assert analytics.lipschitz_envelope(100.0, 4.0, 0.1) == pytest.approx(0.4)
    with pytest.raises(InvalidArgumentError):
        analytics.worst_case_envelope(100.0, 4.0, 0.0)


def test_unit_ball_volume() -> None:
    assert analytics.unit_ball_volume(2) == pytest.approx(math.pi)
    assert analytics.unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)


def test_variance_budget_on_torus() -> None:
    window = spectral.build_window(TORUS, 20.0, 4.0)
    ball = BallRegion(TORUS, Point(1.0, 1.0), 0.3)
    budget = analytics.variance_budget(window, ball)
    local = (20.0**2 - 16.0**2) / (4.0 * math.pi)
    assert budget.rem == pytest.approx(abs(window.dimension / (4.0 * math.pi**2) - local), rel=1e-9)
    assert budget.planck == pytest.approx(ball.volume / 400.0)
    assert budget.annulus == pytest.approx(0.3 * ball.volume / 20.0)
    assert budget.total == pytest.approx(budget.planck + budget.annulus + budget.remainder)
    assert min(budget.planck, budget.annulus, budget.remainder) >= 0.0


def test_lipschitz_bound_holds_on_random_pairs() -> None:
    window = spectral.build_window(TORUS, 12.0, 3.0)
    g = analytics.gram_matrix(window, BallRegion(TORUS, Point(1.0, 1.0), 0.6))
    bound = analytics.lipschitz_bound(g)
    fake = SimpleNamespace(dimension=g.dimension)
    a = ensemble.sample_batch(fake, lambda rows: rows, 10_000, 5).values
    b = ensemble.sample_batch(fake, lambda rows: rows, 10_000, 6).values
    ratios = np.abs(g.quadratic_form(a) - g.quadratic_form(b)) / np.linalg.norm(a - b, axis=1)
    assert np.all(ratios <= bound * (1.0 + 1e-12))


@pytest.mark.parametrize("m,frequency,center", [(TORUS, 15.0, Point(1.0, 2.0)), (SPHERE, math.sqrt(15 * 16), Point(0.8, 0.3))])
def test_trace_and_top_eigenvalue_grow_with_radius(m: ManifoldModel, frequency: float, center: Point) -> None:
    window = spectral.build_window(m, frequency, 3.0)
    traces = []
    tops = []
    for radius in (0.1, 0.3, 0.6, 1.2, 2.4):
        g = analytics.gram_matrix(window, BallRegion(m, center, radius))
        traces.append(g.trace)
        tops.append(analytics.worst_case_ball_mass(g))
    assert all(b > a for a, b in zip(traces, traces[1:]))
    assert all(b >= a - 1e-10 for a, b in zip(tops, tops[1:]))
