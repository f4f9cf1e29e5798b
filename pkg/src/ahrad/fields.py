"""Forward and backward radiation fields and their inverses.

A radiation field is stored per boundary mode as samples ``F_k(s)`` on a
uniform ``s`` grid.  With the torus measure ``L^n`` on the boundary the field
norm is ``||F||^2 = L^n sum_k int |F_k(s)|^2 ds``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NotInRange, OutsideTriangle, SupportTouchesCorner, TailNotDecayed
from .goursat import (
    assemble_problem,
    check_window,
    odd_data_from_field,
    sample_interior,
    solve_data,
    solve_inward,
)
from .manifold import CauchyData, GridSpec, LogGridSpec


@dataclass(frozen=True)
class RadiationFieldSamples:
    """Per-mode samples ``F[k_index, s_index]`` of a radiation field."""

    modes: np.ndarray
    s: np.ndarray
    F: np.ndarray
    measure: float
    tags: dict = field(default_factory=dict)

    @property
    def ds(self):
        return float(self.s[1] - self.s[0])

    def with_values(self, F, **tags):
        return replace(self, F=F, tags={**self.tags, **tags})

    def __add__(self, other):
        _compatible(self, other)
        return self.with_values(self.F + other.F, parity="mixed")

    def __sub__(self, other):
        _compatible(self, other)
        return self.with_values(self.F - other.F, parity="mixed")

    def scaled(self, a):
        return self.with_values(a * self.F)

    def reflected(self):
        """``F(-s)`` on the mirrored grid ``-s`` (reversed to stay increasing)."""
        return replace(self, s=-self.s[::-1], F=self.F[:, ::-1].copy())

    def mode(self, k):
        k = np.atleast_1d(np.asarray(k, dtype=int))
        for i, q in enumerate(self.modes):
            if np.array_equal(q, k):
                return self.F[i]
        raise KeyError(tuple(k))


def _compatible(a, b):
    if not (np.array_equal(a.modes, b.modes) and a.s.shape == b.s.shape
            and np.allclose(a.s, b.s)):
        raise ValueError("fields live on different grids")


def zero_field(modes, s, measure):
    return RadiationFieldSamples(np.asarray(modes), np.asarray(s),
                                 np.zeros((len(modes), len(s)), complex), measure,
                                 {"parity": "zero"})


# --------------------------------------------------------------------------
# edge row <-> field
# --------------------------------------------------------------------------

def _lagrange4(nodes0, h, values, t):
    """Local four-point interpolation of ``values`` (on ``nodes0 + h*j``) at ``t``.

    Locality keeps exact zeros exact, which the finite-speed checks rely on.
    """
    n = values.shape[0]
    u = (t - nodes0) / h
    j0 = np.clip(np.floor(u).astype(int) - 1, 0, n - 4)
    r = u - j0
    out = np.zeros((len(t),) + values.shape[1:], values.dtype)
    for a in range(4):
        wgt = np.ones_like(r)
        for b in range(4):
            if b != a:
                wgt = wgt * (r - b) / (a - b)
        out += wgt[:, None] * values[j0 + a]
    return out


def _edge_mids(grid, count):
    """Edge midpoints in the grid's own variable and in ``s``."""
    if grid.chart == "log":
        v = grid.u_start + grid.h * (np.arange(count) + 0.5)
        return v, v
    t = grid.delta * (np.arange(count) + 0.5)
    return t, 2 * np.log(t)


def field_from_edge(edge, grid, s):
    """Radiation field from the edge row ``W(edge, j)``: shape (ncol, ns).

    In the ``t'`` chart ``F = (1/2) t' dW/dt'`` at ``t' = exp(s/2)``; in the
    log chart ``F = dW/dv`` at ``v = s``.  Derivatives are midpoint
    differences, resampled by local four-point interpolation.
    """
    delta = grid.delta
    dW = np.diff(edge, axis=0) / delta
    mids, _ = _edge_mids(grid, len(dW))
    s = np.asarray(s, dtype=float)
    if grid.chart == "log":
        R, t = dW, s
    else:
        R, t = 0.5 * mids[:, None] * dW, np.exp(0.5 * s)
    out = _lagrange4(mids[0], delta, R, t)
    out[t < mids[0]] = 0.0
    return out.T


def edge_from_field(F, grid, N):
    """Edge row ``W(edge, j)`` from ``F``: the exact inverse of
    :func:`field_from_edge` up to the resampling in ``s``.

    Each increment ``W(j+1) - W(j)`` is ``delta`` times the field at the cell
    midpoint (times ``2/t'`` in the ``t'`` chart).
    """
    mids, sm = _edge_mids(grid, N)
    spl = CubicSpline(F.s, F.F.T, axis=0, extrapolate=False)
    vals = np.zeros((N, F.F.shape[0]), complex)
    inside = (sm >= F.s[0]) & (sm <= F.s[-1])
    vals[inside] = spl(sm[inside])
    inc = grid.delta * vals
    if grid.chart != "log":
        inc = inc * (2 / mids)[:, None]
    row = np.zeros((N + 1, F.F.shape[0]), complex)
    row[1:] = np.cumsum(inc, axis=0)
    return row


# --------------------------------------------------------------------------
# forward / backward fields
# --------------------------------------------------------------------------

def _parity_tag(d):
    a, b = bool(np.any(d.f1)), bool(np.any(d.f2))
    return "even" if a and not b else ("odd" if b and not a else "mixed")


def forward_field(m, d, grid):
    """Forward radiation field of the Cauchy data ``d`` on ``grid.s_grid()``."""
    s = grid.s_grid()
    check_window(grid, s[-1])
    measure = m.L**m.n
    if d.is_zero():
        return zero_field(d.modes, s, measure)
    mf = solve_data(m, d, grid)
    F = field_from_edge(mf.edge, grid, s)
    return RadiationFieldSamples(d.modes, s, F, measure,
                                 {"kind": "forward", "parity": _parity_tag(d),
                                  "delta": grid.delta})


def backward_field(m, d, grid):
    """Backward field via ``R_-(f1, f2)(s) = R_+(-f1, f2)(-s)``."""
    flipped = CauchyData(d.modes, d.x, -d.f1, d.f2)
    Fp = forward_field(m, flipped, grid)
    out = Fp.reflected()
    return replace(out, tags={**Fp.tags, "kind": "backward", "parity": _parity_tag(d)})


def _subgrid(grid, F):
    """Grid truncated to the part of the triangle covered by ``F``."""
    if grid.chart == "log":
        top = min(grid.s_max, float(F.s[-1]))
        return LogGridSpec(grid.h, top, grid.u_start, grid.K, float(F.s[0]), F.ds)
    N = min(grid.N, int(math.floor(math.exp(F.s[-1] / 2) / grid.delta + 0.5 - 1e-9)))
    return GridSpec(grid.delta, N * grid.delta, grid.K, float(F.s[0]), None, F.ds)


def inverse_forward_field(m, F, grid, check=True, tol=None):
    """Odd data ``(0, f)`` whose forward field is ``F``.

    The edge row is integrated from ``F``, marched inward with odd parity and
    ``f`` is read off the first off-diagonal.  With ``check`` the result is
    propagated forward again; a relative L2 mismatch above ``tol`` (default
    ``20 delta^2``) raises :class:`NotInRange`.
    """
    sub = _subgrid(grid, F)
    N = sub.N
    problem = assemble_problem(m, F.modes, sub)
    if not np.any(F.F):
        x = problem.diagonal_depths(0.5)
        x = x[x <= m.x_max]
        z = np.zeros((len(F.modes), len(x)), complex)
        return CauchyData(F.modes, x, z, z.copy())
    row = edge_from_field(F, sub, N)
    mf = solve_inward(problem, row, parity=-1)
    d = odd_data_from_field(m, mf, F.modes, sub)
    if check:
        tol = 20 * grid.delta**2 if tol is None else tol
        try:
            back = forward_field(m, d, sub)
        except (SupportTouchesCorner, ValueError) as exc:
            raise NotInRange(f"reconstruction cannot be re-propagated: {exc}") from exc
        res = round_trip_residual(F, back)
        if res > tol:
            raise NotInRange(f"round-trip residual {res:.3g} > {tol:.3g}")
    return d


def round_trip_residual(F, G):
    """Relative L2 distance of ``G`` from ``F`` on their common s samples."""
    n = min(G.F.shape[1], F.F.shape[1])
    den = np.linalg.norm(F.F[:, :n])
    return float(np.linalg.norm(G.F[:, :n] - F.F[:, :n]) / den) if den else 0.0


def evolve_cauchy(m, d, tau, grid):
    """Cauchy data ``(u(tau), d_t u(tau))`` on the data grid of ``d``.

    Even and odd parts are solved separately so that negative times can use
    the reflection across the diagonal.
    """
    if tau == 0:
        return d
    x = d.x
    tp_max = np.sqrt(x.max()) * math.exp(abs(tau) / 2)
    if tp_max > grid.N * grid.delta:
        raise OutsideTriangle(f"tau={tau} needs T >= {tp_max:.4g}")
    f1 = np.zeros((len(d.modes), len(x)), complex)
    f2 = np.zeros_like(f1)
    for part in d.parts():
        if part.is_zero():
            continue
        mf = solve_data(m, part, grid, keep=True)
        mf.parity = 1 if np.any(part.f1) else -1
        u, ut = sample_interior(m, mf, tau, x)
        f1 += u.T
        f2 += ut.T
    return CauchyData(d.modes, x, f1, f2)


# --------------------------------------------------------------------------
# field-side utilities
# --------------------------------------------------------------------------

def field_norm(F):
    """``sqrt(L^n sum_k int |F_k|^2 ds)``."""
    if not np.any(F.F):
        return 0.0
    dens = np.sum(np.abs(F.F) ** 2, axis=0)
    return math.sqrt(F.measure * float(np.trapezoid(dens, F.s)))


def translate(F, tau):
    """``F(s + tau)`` on the same grid (zero where it leaves the window)."""
    spl = CubicSpline(F.s, F.F.T, axis=0, extrapolate=False)
    return F.with_values(np.nan_to_num(spl(F.s + tau)).T)


def convolve_s(F, phi):
    """Convolution in ``s`` with the window samples ``phi`` (odd length,
    centred, spacing equal to the field's)."""
    phi = np.asarray(phi)
    if len(phi) % 2 == 0:
        raise ValueError("window must have odd length")
    if len(phi) >= len(F.s):
        raise ValueError("window longer than the s grid")
    out = np.array([np.convolve(row, phi, mode="same") for row in F.F]) * F.ds
    return F.with_values(out, filtered=True)


def default_lambda_grid(count=512, lam_max=16.0):
    return np.linspace(-lam_max, lam_max, count)


def fourier_field(F, lam=None, check_tail=True):
    """``hat F_k(lambda) = int F_k(s) exp(+i lambda s) ds`` on a lambda grid.

    Computed by direct trapezoid quadrature over the s window (equivalent to
    a zero-padded DFT evaluated on the requested grid).  Returns
    ``(lam, values)`` with values of shape ``(modes, len(lam))``.
    """
    lam = default_lambda_grid() if lam is None else np.asarray(lam, dtype=float)
    if check_tail and np.any(F.F):
        top = np.abs(F.F).max()
        edge = max(np.abs(F.F[:, 0]).max(), np.abs(F.F[:, -1]).max())
        if edge > 1e-6 * top:
            raise TailNotDecayed(f"|F| at window edge is {edge / top:.2g} of max")
    w = np.full(len(F.s), F.ds)
    w[0] = w[-1] = 0.5 * F.ds
    kernel = np.exp(1j * np.outer(F.s, lam)) * w[:, None]
    return lam, F.F @ kernel


def filter_identity_residual(m, d, q, grid, lam):
    """Relative mismatch between ``hat R_+(q(L) d)`` and ``q(lambda^2) hat R_+ d``.

    ``L = Delta_g - n^2/4`` and ``q`` is a polynomial given by its
    coefficients in increasing degree.  Returns the relative L2 difference
    over the requested ``lambda`` samples.
    """
    from .manifold import shifted_laplacian
    lam = np.asarray(lam, dtype=float)
    base = forward_field(m, d, grid)
    _, hb = fourier_field(base, lam)
    total = d.scaled(0.0)
    power_d = d
    for j, cj in enumerate(q):
        if j:
            power_d = shifted_laplacian(m, power_d)
        if cj:
            total = total + power_d.scaled(cj)
    _, lhs = fourier_field(forward_field(m, total, grid), lam)
    rhs = np.polyval(np.asarray(q)[::-1], lam**2)[None, :] * hb
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def dump_field_csv(path, F):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "s", "re_F", "im_F"])
        for k, row in zip(F.modes, F.F):
            key = " ".join(str(int(v)) for v in np.atleast_1d(k))
            for s, v in zip(F.s, row):
                w.writerow([key, "%.17g" % s, "%.17g" % v.real, "%.17g" % v.imag])


def dump_fourier_csv(path, modes, lam, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "re", "im"])
        for k, row in zip(modes, values):
            key = " ".join(str(int(v)) for v in np.atleast_1d(k))
            for l_, v in zip(lam, row):
                w.writerow([key, "%.17g" % l_, "%.17g" % v.real, "%.17g" % v.imag])
