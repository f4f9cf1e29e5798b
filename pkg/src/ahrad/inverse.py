"""Support theorem checks and the jump pipeline of the inverse problem.

The jump pipeline takes an incoming field ``G`` (a backward field, smoothed
in ``s``), recovers its odd data ``w``, truncates ``w`` sharply at depth
``x1`` and scatters the result.  The outgoing field then has a jump at
``s = log x1`` whose size is ``(1/2) x1^(-n/2) |h|^(1/4)(x1) w(x1)``: the
boundary sees the metric at depth ``x1`` through that amplitude.

All of it runs on the square of side ``sqrt(x_max)``, where no
characteristic reaches the cap, so the results do not depend on the cap.
Truncation and scattering act on the diagonal data of the characteristic
scheme directly, which keeps the truncation aligned with a cell boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    FitIllConditioned,
    FitResidualHigh,
    InconsistentProbes,
    WindowTooShort,
)
from .fields import (
    backward_field,
    convolve_s,
    edge_from_field,
    field_from_edge,
)
from .goursat import (
    DiagonalData,
    assemble_problem,
    odd_data_from_field,
    solve_forward,
    solve_inward,
)
from .manifold import GridSpec, find_point_spectrum


# --------------------------------------------------------------------------
# support theorem
# --------------------------------------------------------------------------

def support_roundtrip(m, d, grid, floor=1e-6):
    """Onset of the forward field against the inner edge of the data.

    Returns ``(s_star, x_star)``: ``s_star`` is the first edge midpoint
    ``s`` where ``|F|`` exceeds ``floor`` times its maximum, ``x_star`` the
    first depth where ``|f|`` exceeds ``floor`` times its maximum.  Zero data
    give ``(inf, inf)``.
    """
    if d.is_zero():
        return math.inf, math.inf
    from .goursat import solve_data
    mf = solve_data(m, d, grid)
    R = np.abs(np.diff(mf.edge, axis=0)).max(axis=1)
    mids = grid.delta * (np.arange(len(R)) + 0.5)
    R = R * mids
    first = np.nonzero(R > floor * R.max())[0][0]
    s_star = 2 * math.log(mids[first])
    mag = np.abs(d.f1).max(axis=0) + np.abs(d.f2).max(axis=0)
    x_star = float(d.x[np.nonzero(mag > floor * mag.max())[0][0]])
    return s_star, x_star


# --------------------------------------------------------------------------
# truncation and jumps
# --------------------------------------------------------------------------

def window_grid(m, delta, s_min=-6.0, ds=0.01):
    """The cap-free square ``[0, sqrt(x_max)]^2`` on a ``t'`` grid."""
    return GridSpec(delta, math.sqrt(m.x_max), 0, s_min, None, ds)


def align_depth(x1, delta):
    """Depth ``(i delta)^2`` nearest to ``x1``; returns ``(x1_aligned, i)``."""
    i = max(1, int(round(math.sqrt(x1) / delta)))
    return (i * delta) ** 2, i


def truncate_project(m, F, x1, grid=None):
    """``P x1`` on a backward field: keep only the part of the odd data at
    depths ``x >= x1`` and return the backward field of the result.

    The cut is made on the transverse derivative along the diagonal of the
    window grid (aligned to the node depth nearest ``x1``), so the recovered
    and the truncated data never pass through an interpolant.
    """
    if grid is None:
        grid = window_grid(m, 0.002, -float(F.s[-1]), F.ds)
    if not np.any(F.F):
        return F
    _, i1 = align_depth(x1, grid.delta)
    problem = assemble_problem(m, F.modes, grid)
    inward = solve_inward(problem, edge_from_field(F.reflected(), grid, grid.N), parity=-1)
    b = -inward.near / grid.delta
    b[:i1] = 0.0
    edge = _odd_edge_from_b(problem, b)
    s = -F.s[::-1]
    out = field_from_edge(edge, grid, s)
    return F.with_values(out[:, ::-1].copy(), truncated=float(align_depth(x1, grid.delta)[0]))


def even_mollifier(eps, ds):
    """Samples of a smooth even bump of half-width ``eps`` with unit integral."""
    n = int(math.floor(eps / ds))
    s = ds * np.arange(-n, n + 1)
    u = s / eps
    inside = np.abs(u) < 1
    phi = np.zeros_like(s)
    phi[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return phi / (phi.sum() * ds)


@dataclass
class JumpMeasurement:
    x1: float
    J: np.ndarray
    w_at_x1: np.ndarray
    predicted: np.ndarray
    residual: float
    fit_samples: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def rel_err(self):
        den = np.abs(self.predicted)
        return np.abs(self.J - self.predicted) / np.where(den > 0, den, 1.0)


def _odd_edge_from_b(problem, b):
    """Forward sweep for odd diagonal data given the transverse derivative."""
    N = problem.grid.N
    z_node = np.zeros((N + 1, b.shape[1]), complex)
    z_mid = np.zeros_like(b)
    diag = DiagonalData(z_node, z_mid, z_mid, z_mid, b, -1)
    return solve_forward(problem, diag).edge


def _fit_jump(R, mids, i1, count):
    s = 2 * np.log(mids[i1:i1 + count])
    sig = s - 2 * math.log(i1 * (mids[1] - mids[0]))
    A = np.stack([np.ones_like(sig), sig, sig**2], axis=1)
    if np.linalg.cond(A) > 1e10:
        raise FitIllConditioned("jump fit matrix is singular")
    coef, *_ = np.linalg.lstsq(A, R[i1:i1 + count], rcond=None)
    resid = R[i1:i1 + count] - A @ coef
    return coef[0], np.abs(resid).max(axis=0)


def predicted_jump(m, w_values, x1):
    """``(1/2) x1^(-n/2) |h|^(1/4)(x1) w(x1)`` (``|h|(0) = 1``)."""
    return 0.5 * x1 ** (-0.5 * m.n) * float(m.quarter_det(np.array([x1]))[0]) \
        * np.asarray(w_values)


def jump_amplitude(m, F, x1, delta, phi=None, fit_samples=16, tol=1e-3):
    """Measure the jump of ``S P x1 (phi * F)`` at ``s = log x1``.

    ``F`` is a backward field on the window grid.  ``x1`` is aligned to the
    nearest node depth.  Returns a :class:`JumpMeasurement` holding the
    per-mode measured jump ``J``, the recovered data at ``x1`` and the
    predicted amplitude.
    """
    grid = window_grid(m, delta, -float(F.s[-1]), F.ds)
    x1, i1 = align_depth(x1, delta)
    N = grid.N
    if math.log(x1) + math.log(4) > math.log(m.x_max) + 1e-12:
        raise WindowTooShort(f"x1={x1:.4g}: clean window leaves the square")
    if not 8 <= fit_samples <= 32 or i1 + fit_samples > N:
        raise WindowTooShort("fit window needs 8..32 samples inside the grid")
    if not np.any(F.F):
        z = np.zeros(len(F.modes), complex)
        return JumpMeasurement(x1, z, z, z, 0.0, fit_samples)
    G = F if phi is None else convolve_s(F, phi)
    Gf = G.reflected()                              # forward field of the same data
    problem = assemble_problem(m, F.modes, grid)
    row = edge_from_field(Gf, grid, N)
    inward = solve_inward(problem, row, parity=-1)
    b = -inward.near / delta                        # transverse derivative on the diagonal
    b_cut = b.copy()
    b_cut[:i1] = 0.0
    edge = _odd_edge_from_b(problem, b_cut)
    mids = delta * (np.arange(N) + 0.5)
    R = 0.5 * mids[:, None] * np.diff(edge, axis=0) / delta
    J, res = _fit_jump(R, mids, i1, fit_samples)
    scale = max(np.abs(J).max(), 1e-300)
    if res.max() > tol * scale:
        raise FitResidualHigh(f"jump fit residual {res.max() / scale:.3g}")
    data = odd_data_from_field(m, inward, F.modes, grid)
    w = np.array([np.interp(x1, data.x, row_.real) + 1j * np.interp(x1, data.x, row_.imag)
                  for row_ in data.f2])
    pred = predicted_jump(m, w, x1)
    return JumpMeasurement(x1, J, w, pred, float(res.max() / scale), fit_samples,
                           {"window": [math.log(x1), math.log(x1) + math.log(4)]})


# --------------------------------------------------------------------------
# transport equation
# --------------------------------------------------------------------------

def transport_v1(m, x1, w_at_x1, x, rtol=1e-12):
    """Integrate ``(2 d/dx + A) v = 0`` from ``v(x1) = x1^(-n/2-1) w / 2``
    down to the depths ``x`` (all in ``(0, x1]``)."""
    x = np.asarray(x, dtype=float)
    v1 = 0.5 * x1 ** (-0.5 * m.n - 1) * w_at_x1
    if np.all(x == x1):
        return np.full(x.shape, v1, dtype=complex)
    order = np.argsort(-x)
    xs = x[order]

    def rhs(t, y):
        return -0.5 * m.A(np.array([t]))[0] * y

    sol = solve_ivp(rhs, (x1, float(xs[-1])), [1.0], t_eval=xs, method="DOP853",
                    rtol=rtol, atol=1e-15)
    out = np.empty(x.shape, dtype=complex)
    out[order] = v1 * sol.y[0]
    return out


def transport_closed_form(m, x1, w_at_x1, x):
    x = np.asarray(x, dtype=float)
    q = m.quarter_det(np.array([x1]))[0] / m.quarter_det(x)
    return 0.5 * q * x1 ** (-0.5 * m.n - 1) * w_at_x1


# --------------------------------------------------------------------------
# collar comparison
# --------------------------------------------------------------------------

def eigenvalue_gate(m, modes):
    """Reject metrics with point spectrum on the probed modes."""
    found = find_point_spectrum(m, [tuple(np.atleast_1d(k)) for k in modes])
    if found:
        raise ValueError(f"metric has eigenvalues {found}; the jump pipeline "
                         "assumes none")


def recover_profile(m1, m2, probes, x1_ladder, delta, phi=None, differ_tol=2e-5,
                    equal_tol=0.03, probe_tol=0.05, gate=True):
    """Compare the jump profiles two metrics produce from the same fields.

    ``probes`` are odd Cauchy data; each one's backward field under ``m1`` is
    fed into the jump pipeline of both metrics.  A ladder point is flagged
    when the extracted profiles ``J`` differ by more than ``differ_tol``
    (relative).  Returns a report dict; raises :class:`InconsistentProbes` if,
    for one metric, the probes' measured/predicted ratios scatter by more than
    ``probe_tol``.
    """
    if gate:
        for mm in (m1, m2):
            eigenvalue_gate(mm, probes[0].modes)
    grid1 = window_grid(m1, delta)
    rows = []
    for x1 in x1_ladder:
        per = []
        for d in probes:
            F = backward_field(m1, d, grid1)
            j1 = jump_amplitude(m1, F, x1, delta, phi)
            j2 = jump_amplitude(m2, F, x1, delta, phi)
            per.append((j1, j2))
        rows.append(per)
    x1s, Jm, Jp, rel, diffs = [], [], [], [], []
    for per in rows:
        for which in (0, 1):
            ratios = [np.abs(p[which].J).max() / max(np.abs(p[which].predicted).max(),
                                                     1e-300) for p in per]
            if max(ratios) - min(ratios) > probe_tol:
                raise InconsistentProbes(f"x1={per[0][0].x1:.4g}: ratios {ratios}")
        j1, j2 = per[0]
        x1s.append(j1.x1)
        Jm.append(float(np.abs(j1.J).max()))
        Jp.append(float(np.abs(j1.predicted).max()))
        rel.append(float(j1.rel_err.max()))
        diffs.append(max(float(np.abs(p[0].J - p[1].J).max() / np.abs(p[0].J).max())
                         for p in per))
    flagged = [x for x, dv in zip(x1s, diffs) if dv > differ_tol]
    verdict = "differ" if flagged else "equal"
    return {
        "x1": x1s,
        "J_measured": Jm,
        "J_predicted": Jp,
        "rel_err": rel,
        "profile_diff": diffs,
        "verdict": verdict,
        "first_diff_x1": flagged[0] if flagged else None,
        "equal_within": bool(max(diffs) < equal_tol),
    }


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1)
