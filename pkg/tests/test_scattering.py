import math

import numpy as np
import pytest

from ahrad.errors import FitIllConditioned, ProbeDeficient
from ahrad.fields import backward_field, forward_field
from ahrad.manifold import LogGridSpec, bump_data, build_metric
from ahrad.scattering import (
    boundary_potential_coefficient,
    indicial_roots,
    membership_Mb,
    membership_Mf,
    scattering_apply,
    scattering_matrix_dynamic,
    scattering_matrix_stationary,
    stationary_sample,
)


@pytest.mark.parametrize("X", [1.0, 2.0])
def test_free_string_closed_form(X):
    # hyperbolic mode 0: w = sin(lambda (r - r_cap)), so a = -X^(2 i lambda)
    m = build_metric("hyperbolic", n=1, x_max=X)
    for lam in (0.7, 2.5):
        a = scattering_matrix_stationary(m, 0, lam)
        assert a == pytest.approx(-(X ** (2j * lam)), abs=1e-9)


def test_stationary_frozen_values():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    assert scattering_matrix_stationary(m, 0, 1.0) == pytest.approx(
        -0.9997135138095318 + 0.02393512704371819j, abs=1e-9)
    assert scattering_matrix_stationary(m, 2, 3.0) == pytest.approx(
        -0.8368095416867964 + 0.5474941012850582j, abs=1e-9)
    mb = build_metric("bump", {"a": 0.05}, n=2, x_max=1.0)
    assert scattering_matrix_stationary(mb, (1, 0), 2.0) == pytest.approx(
        -0.9992717996113019 + 0.038155871128699254j, abs=1e-9)


def test_stationary_is_unitary():
    m = build_metric("bump", {"a": 0.05}, n=1, x_max=1.0)
    s = stationary_sample(m, 2, np.linspace(0.5, 8, 6))
    assert np.allclose(np.abs(s.a), 1, atol=1e-8)


def test_indicial_roots():
    for prof, params in [("hyperbolic", {}), ("funnel", {"a": 0.1}), ("bump", {"a": 0.05})]:
        m = build_metric(prof, params, n=1, x_max=1.0)
        for k, lam in [(0, 2.0), (3, 0.5)]:
            rp, rm = indicial_roots(m, k, lam)
            assert {round(rp.real, 9), round(rm.real, 9)} == {0.5}
            assert sorted([rp.imag, rm.imag]) == pytest.approx([-lam, lam], abs=1e-6)


def test_boundary_potential_coefficient():
    m = build_metric("funnel", {"a": 0.1}, n=2, L=2 * math.pi, x_max=1.0)
    # c''(0) = 0.2, (n - n^2/2) = 0 for n = 2
    assert boundary_potential_coefficient(m, (1, 1)) == pytest.approx(2.0)
    m1 = build_metric("funnel", {"a": 0.1}, n=1, L=2 * math.pi, x_max=1.0)
    assert boundary_potential_coefficient(m1, 0) == pytest.approx(0.5 * 0.2)


def test_small_lambda_is_ill_conditioned():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    with pytest.raises(FitIllConditioned):
        scattering_matrix_stationary(m, 0, 1e-9)
    with pytest.raises(ValueError):
        scattering_matrix_stationary(m, 0, 0.0)


@pytest.fixture(scope="module")
def funnel_setup():
    m = build_metric("funnel", {"a": 0.1}, n=1, x_max=1.0)
    grid = LogGridSpec(0.01, 14.0, s_min=-4)
    probe = bump_data(m, 0.3, 0.55, modes=np.array([[0], [2]]), amp1=[0.7, 0.7],
                      amp2=[1.0, 1.0])
    return m, grid, probe


def test_dynamic_matches_stationary(funnel_setup):
    m, grid, probe = funnel_setup
    lam = np.linspace(0.5, 8, 9)
    dyn = scattering_matrix_dynamic(m, 2, lam, probe, grid)
    st = stationary_sample(m, 2, lam)
    ok = ~dyn.masked
    assert ok.sum() >= 8
    assert np.max(np.abs(dyn.a[ok] - st.a[ok])) < 2e-3
    rec = dyn.to_record()
    assert rec["method"] == "dynamic" and rec["k"] == [2] and len(rec["a_re"]) == 9
    with pytest.raises(ProbeDeficient):
        scattering_matrix_dynamic(m, 1, lam, probe, grid)


def test_membership(funnel_setup):
    m, grid, probe = funnel_setup
    odd = probe.parts()[1]
    Ff = forward_field(m, odd, grid)
    Fb = backward_field(m, odd, grid)
    assert membership_Mf(m, Ff, grid) < 1e-3
    assert membership_Mb(m, Fb, grid) < 1e-3
    SF = scattering_apply(m, Fb, grid)
    assert np.abs(SF.F - Ff.F).max() < 1e-3 * np.abs(Ff.F).max()
    assert membership_Mf(m, Ff.scaled(0.0), grid) == 0.0
