import math

import numpy as np
import pytest

from ahrad.errors import OutsideTriangle, ParityViolation, SupportTouchesCorner
from ahrad.fields import field_from_edge
from ahrad.goursat import (
    assemble_problem,
    diagonal_data,
    energy_functional,
    odd_data_from_field,
    sample_interior,
    solve_data,
    solve_forward,
    solve_inward,
)
from ahrad.manifold import CauchyData, GridSpec, LogGridSpec, bump_data, build_metric, \
    smooth_bump


def test_characteristic_coefficient_hyperbolic():
    # for c = 1 only the transverse term survives: G = x' t' kappa^2
    m = build_metric("hyperbolic", n=1, L=2 * math.pi, x_max=1.0)
    p = assemble_problem(m, np.array([[1]]), GridSpec(0.01, 1.0))
    assert p.G(np.array([0.5]), np.array([0.7]))[0, 0] == pytest.approx(0.35)


@pytest.mark.parametrize("grid", [GridSpec(2e-3, 3.0, s_min=-4),
                                  LogGridSpec(0.005, 2.0, s_min=-4)])
def test_free_string_dalembert(grid):
    # hyperbolic mode 0 has V = 0; odd data give F(s) = (1/2) e^{-s/2} f2(e^s)
    m = build_metric("hyperbolic", n=1, x_max=4.0)
    d = bump_data(m, 0.2, 1.5)
    mf = solve_data(m, d, grid)
    s = np.linspace(-1.8, 0.5, 200)
    F = field_from_edge(mf.edge, grid, s)[0]
    ref = 0.5 * np.exp(-s / 2) * smooth_bump(np.exp(s), 0.2, 1.5)
    assert np.abs(F - ref).max() < 2e-4 * np.abs(ref).max()


def test_cap_reflection_is_odd():
    # beyond sqrt(x_max) the free string meets the Dirichlet cap; the mirrored
    # solution sends back -f2 at the image depth
    m = build_metric("hyperbolic", n=1, x_max=1.0)
    grid = GridSpec(2e-3, 3.0, s_min=-4)
    d = bump_data(m, 0.2, 0.6)
    s = np.linspace(0.3, 1.5, 100)       # after reflection: x = 1 / e^s in (0.22, 0.74)
    F = field_from_edge(solve_data(m, d, grid).edge, grid, s)[0]
    xr = np.exp(-s)
    ref = -0.5 * smooth_bump(xr, 0.2, 0.6) * np.exp(s / 2)
    assert np.abs(F - ref).max() < 2e-4 * np.abs(ref).max()


def test_inward_march_inverts_forward():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    grid = GridSpec(4e-3, 1.0)
    d = bump_data(m, 0.1, 0.7, modes=np.array([[0], [2]]), amp2=[1.0, 0.4j])
    problem = assemble_problem(m, d.modes, grid)
    fwd = solve_forward(problem, diagonal_data(m, d, grid))
    back = solve_inward(problem, fwd.edge, parity=-1)
    assert np.abs(back.near - fwd.near).max() < 1e-12 * np.abs(fwd.near).max()
    rec = odd_data_from_field(m, back, d.modes, grid)
    _, f2 = d.interpolate(rec.x)
    assert np.abs(rec.f2 - f2).max() < 1e-3 * np.abs(f2).max()


def test_parity_violation_detected():
    # an odd field vanishes on the diagonal, so a nonzero corner value is
    # inconsistent with the odd closure
    m = build_metric("hyperbolic", n=1, x_max=1.0)
    grid = GridSpec(4e-3, 1.0)
    problem = assemble_problem(m, np.array([[0]]), grid)
    edge = np.ones((grid.N + 1, 1), complex)
    with pytest.raises(ParityViolation):
        solve_inward(problem, edge, parity=-1)
    even = solve_inward(problem, edge, parity=1)
    assert np.isfinite(even.near).all()


def test_support_touching_corner_rejected():
    m = build_metric("hyperbolic", n=1, x_max=1.0)
    x = np.linspace(1e-5, 1.0, 4001)
    d = bump_data(m, 1e-5, 0.1, x=x)
    with pytest.raises(SupportTouchesCorner):
        solve_data(m, d, GridSpec(4e-2, 1.0))


def test_interior_sampling_recovers_data():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    d = bump_data(m, 0.15, 0.5)
    mf = solve_data(m, d, GridSpec(2e-3, 1.2), keep=True)
    mf.parity = -1
    x = np.linspace(0.1, 0.6, 101)
    u, ut = sample_interior(m, mf, 0.0, x)
    _, f2 = d.interpolate(x)
    assert np.abs(u).max() < 1e-12
    assert np.abs(ut[:, 0] - f2[0]).max() < 2e-3
    with pytest.raises(OutsideTriangle):
        sample_interior(m, mf, 2.0, x)


def test_energy_functional_converges():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    d = bump_data(m, 0.15, 0.5, amp1=[0.5], amp2=[1.0])
    ratios = []
    for delta in (8e-3, 4e-3):
        grid = GridSpec(delta, 1.0)
        problem = assemble_problem(m, d.modes, grid)
        diag = diagonal_data(m, CauchyData(d.modes, d.x, d.f1, 0 * d.f2), grid)
        mf = solve_forward(problem, diag, keep=True)
        mf.parity = 1
        lhs, rhs = energy_functional(problem, mf)
        assert lhs > 0 and rhs > 0
        ratios.append(lhs / rhs)
    assert ratios[1] == pytest.approx(ratios[0], rel=0.02)
