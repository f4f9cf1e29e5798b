import math

import numpy as np
import pytest

from ahrad.errors import NotInRange, TailNotDecayed, WindowExceedsTriangle
from ahrad.fields import (
    RadiationFieldSamples,
    backward_field,
    convolve_s,
    edge_from_field,
    evolve_cauchy,
    field_from_edge,
    field_norm,
    filter_identity_residual,
    forward_field,
    fourier_field,
    inverse_forward_field,
    translate,
)
from ahrad.goursat import check_window
from ahrad.manifold import CauchyData, GridSpec, LogGridSpec, bump_data, build_metric, \
    energy_norm


@pytest.fixture(scope="module")
def funnel():
    return build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)


def _gaussian_field(s, centre=0.0, width=0.3):
    F = np.exp(-((s - centre) ** 2) / (2 * width**2))[None, :].astype(complex)
    return RadiationFieldSamples(np.array([[0]]), s, F, 2 * math.pi)


def test_edge_field_round_trip():
    grid = GridSpec(2e-3, 2.0, s_min=-5)
    s = grid.s_grid()
    F = _gaussian_field(s, -1.0)
    edge = edge_from_field(F, grid, grid.N)
    back = field_from_edge(edge, grid, s)
    assert np.abs(back - F.F).max() < 1e-6


def test_fourier_of_gaussian():
    s = np.linspace(-8, 8, 1601)
    F = _gaussian_field(s, 0.0, 1.0)
    lam, hat = fourier_field(F, np.linspace(-3, 3, 13))
    assert np.allclose(hat[0], math.sqrt(2 * math.pi) * np.exp(-lam**2 / 2), atol=1e-10)
    shifted = _gaussian_field(s, 0.5, 1.0)
    _, hs = fourier_field(shifted, lam)
    # F(s - 1/2) picks up exp(+i lambda / 2) with the +i lambda s convention
    assert np.allclose(hs[0], np.exp(0.5j * lam) * hat[0], atol=1e-8)
    with pytest.raises(TailNotDecayed):
        fourier_field(_gaussian_field(s, 7.5, 1.0), lam)


def test_translate_and_convolve():
    s = np.linspace(-4, 4, 801)
    F = _gaussian_field(s)
    T = translate(F, 0.25)
    assert np.abs(T.F[0] - np.exp(-((s + 0.25) ** 2) / 0.18)).max() < 1e-6
    box = np.ones(21) / (21 * F.ds)
    C = convolve_s(F, box)
    assert field_norm(C) < field_norm(F)
    assert C.tags["filtered"]


def test_backward_field_relation(funnel):
    grid = GridSpec(2e-3, 2.0, s_min=-4)
    d = bump_data(funnel, 0.15, 0.5, amp1=[0.5], amp2=[1.0])
    Fm = backward_field(funnel, d, grid)
    flipped = CauchyData(d.modes, d.x, -d.f1, d.f2)
    Fp = forward_field(funnel, flipped, grid)
    assert np.array_equal(Fm.F[0], Fp.F[0][::-1])
    assert np.array_equal(Fm.s, -Fp.s[::-1])
    assert Fm.tags["kind"] == "backward"


def test_unitarity_mixed_data(funnel):
    d = bump_data(funnel, 0.15, 0.5, modes=np.array([[-1], [0], [1]]),
                  amp1=[0.3 - 0.2j, 1, 0.3 + 0.2j], amp2=[1j, 0.5, -1j])
    E = energy_norm(funnel, d)
    F = forward_field(funnel, d, GridSpec(2e-3, 4.0, s_min=-5))
    assert abs(field_norm(F) ** 2 - E) / E < 2e-3


def test_inverse_forward_field(funnel):
    grid = LogGridSpec(0.01, 14.0, s_min=-4)
    d = bump_data(funnel, 0.15, 0.5, modes=np.array([[0], [2]]), amp2=[1.0, 0.5])
    F = forward_field(funnel, d, grid)
    rec = inverse_forward_field(funnel, F, grid)
    _, f2 = d.interpolate(rec.x)
    assert np.linalg.norm(rec.f2 - f2) / np.linalg.norm(f2) < 1e-3
    assert not np.any(rec.f1)


def test_field_outside_range_rejected(funnel):
    grid = GridSpec(4e-3, 2.0, s_min=-4)
    F = _gaussian_field(grid.s_grid(), 1.0, 0.1)   # lives beyond log x_max = 0
    with pytest.raises(NotInRange):
        inverse_forward_field(funnel, F, grid)


def test_window_beyond_triangle():
    with pytest.raises(WindowExceedsTriangle):
        check_window(GridSpec(4e-3, 1.0), 0.5)
    check_window(GridSpec(4e-3, 1.0), 0.0)


def test_translation_property(funnel):
    grid = GridSpec(2e-3, 4.0, s_min=-5)
    d = bump_data(funnel, 0.15, 0.5, amp1=[0.5], amp2=[1.0])
    F0 = forward_field(funnel, d, grid)
    for tau in (0.1, -0.2):
        Ft = forward_field(funnel, evolve_cauchy(funnel, d, tau, grid), grid)
        ref = translate(F0, tau)
        ok = (F0.s <= F0.s[-1] - max(tau, 0)) & (F0.s >= F0.s[0] - min(tau, 0))
        err = np.abs(Ft.F[:, ok] - ref.F[:, ok]).max() / np.abs(F0.F).max()
        assert err < 5e-3


def test_filter_identity_degree_one(funnel):
    d = bump_data(funnel, 0.15, 0.5, amp1=[0.3], amp2=[1.0])
    lam = np.linspace(0.5, 4.0, 30)
    res = filter_identity_residual(funnel, d, [1.0, 0.5], LogGridSpec(0.01, 16.0), lam)
    assert res < 1e-3
