from __future__ import annotations

import math

from equiwave import analytics, ensemble, manifold, spectral


def main() -> None:
    torus = manifold.ManifoldModel.torus()
    window = spectral.build_window(torus, 10.0, 2.0)
    assert window.dimension == manifold.count_modes(torus, 8.0, 10.0)

    ball = manifold.BallRegion(torus, manifold.Point(0.0, 0.0), 0.5)
    g = analytics.gram_matrix(window, ball)
    assert math.isclose(analytics.expected_ball_mass(g), ball.volume / torus.volume, rel_tol=1e-8)

    u = ensemble.sample_unit_sphere(window, ensemble.derive_seed(7, 0))
    assert math.isclose(u.norm_sq, 1.0, rel_tol=1e-12)

    print("ok")


if __name__ == "__main__":
    main()
