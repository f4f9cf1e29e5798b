import math

import numpy as np
import pytest

from ahrad.h3 import (
    H3Point,
    SeparableBump,
    h3_distance,
    horosphere_integral,
    lax_phillips_field,
    periodized_field,
    sphere_area,
    spherical_mean,
    wave_solution_h3,
)
from ahrad.manifold import GridSpec, build_metric


def test_distance_and_area():
    assert h3_distance(H3Point(1.0), H3Point(1.0, (2.0, 0.0))) == pytest.approx(1.762747,
                                                                                 abs=1e-6)
    assert h3_distance(H3Point(1.0), H3Point(math.e)) == pytest.approx(1.0)
    assert sphere_area(1.0) == pytest.approx(4 * math.pi * math.sinh(1.0) ** 2)
    assert sphere_area(1.0) == pytest.approx(17.3555, abs=2e-4)
    with pytest.raises(ValueError):
        H3Point(0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_spherical_mean_of_power(alpha):
    # x^alpha is an eigenfunction; its spherical mean is x0^alpha times the
    # spherical function sinh((alpha-1) t) / ((alpha-1) sinh t)
    z = H3Point(0.7, (0.2, -0.1))
    t = 0.9
    phi = t / math.sinh(t) if alpha == 1 else \
        math.sinh((alpha - 1) * t) / ((alpha - 1) * math.sinh(t))
    M = spherical_mean(lambda x, y1, y2: x**alpha + 0 * y1, t, z)
    assert M == pytest.approx(z.x**alpha * phi, rel=1e-10)


def test_wave_solution_initial_velocity():
    f = SeparableBump(0.3, 0.6, (0.0, 0.0), 0.4)
    z = H3Point(0.45, (0.1, 0.0))
    t = 1e-3
    assert wave_solution_h3(f, t, z) / t == pytest.approx(f(0.45, 0.1, 0.0), rel=1e-4)


def test_horosphere_of_cubic():
    f = lambda x, y1, y2: x**3 + 0 * y1   # noqa: E731
    for s in (-1.0, 0.3):
        assert horosphere_integral(f, s, (0.0, 0.0)) == pytest.approx(
            0.5 * math.pi * math.exp(3 * s), rel=1e-10)
    s = np.array([-0.5, 0.0, 0.5])
    F = lax_phillips_field(f, s, [(0.0, 0.0)], order=16)
    assert np.allclose(F[:, 0], 0.5 * np.exp(2 * s), rtol=1e-5)


def test_torus_coefficients():
    f = SeparableBump(0.3, 0.6, (0.5, -0.25), 0.4)
    L = 6.0
    k = np.array([[0, 0], [1, 0], [0, 2]])
    c = f.fourier(k, L)
    # direct quadrature of the periodized Gaussian over one period
    y = np.linspace(-L / 2, L / 2, 401)[:-1] + 0.5
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    g = sum(np.exp(-((Y1 - 0.5 + a * L) ** 2 + (Y2 + 0.25 + b * L) ** 2) / (2 * 0.16))
            for a in (-1, 0, 1) for b in (-1, 0, 1))
    dy = (y[1] - y[0]) ** 2
    ref = [np.sum(g * np.exp(-2j * math.pi * (kk[0] * Y1 + kk[1] * Y2) / L)) * dy / L**2
           for kk in k]
    assert np.allclose(c, ref, atol=1e-10)


def test_periodized_model_matches_oracle():
    f = SeparableBump(0.3, 0.6, (0.0, 0.0), 0.6)
    m = build_metric("hyperbolic", n=2, L=6.0, x_max=4.0)
    s = np.linspace(-1.3, 1.0, 24)
    ys = [(0.0, 0.0), (0.3, 0.2)]
    lp = lax_phillips_field(f, s, ys, order=16)
    pde = periodized_field(m, f, 8, GridSpec(5e-3, 2.0), s, ys)
    assert np.linalg.norm(pde - lp) / np.linalg.norm(lp) < 1e-3
