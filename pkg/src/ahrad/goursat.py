"""Characteristic (Goursat) solver for one boundary mode at a time.

In the null coordinates ``t' = sqrt(x) e^(t/2)``, ``x' = sqrt(x) e^(-t/2)``
the string form of the wave equation on a mode becomes

    d_x' d_t' W + Q(x' t') W = 0,     Q(p) = -V(p) / p,

on the quadrant ``x', t' >= 0``, with the spatial slice ``t = 0`` on the
diagonal ``x' = t'`` and the radiation field living on the edge ``x' = 0``.
``W`` equals ``|h|^(1/4) V`` where ``V = x^(-n/2) u`` is the rescaled field.

The Dirichlet cap at ``x = x_max`` is handled by odd reflection across the
hyperbola ``x' t' = x_max``: on the far side the equation uses the mirrored
potential and the data are continued as the odd image.  With that, the
whole square ``[0, T]^2`` can be marched without a boundary condition, and
``T`` is free to exceed ``sqrt(x_max)``.

The scheme is the classical second order box scheme: on every cell

    W_NE - W_NW - W_SE + W_SW = -(delta^2 Q_c / 4) (W_NE + W_NW + W_SE + W_SW),

with ``Q_c`` taken at the cell centre.  Marching from the diagonal outward
("forward", towards the edge ``x' = 0``) and marching from the edge inward
are exact discrete inverses of one another.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import (
    NonFiniteField,
    OutsideTriangle,
    ParityViolation,
    SupportTouchesCorner,
    WindowExceedsTriangle,
)
from .manifold import CauchyData, GridSpec, WarpedMetric


# --------------------------------------------------------------------------
# problem assembly
# --------------------------------------------------------------------------

@dataclass
class ModeProblem:
    """Coefficients of the characteristic equation for a batch of modes.

    ``kappa2`` holds ``(2 pi |k| / L)^2`` per column.  Columns may repeat
    modes (for instance to carry several data sets through one sweep).
    """

    metric: WarpedMetric
    grid: GridSpec
    kappa2: np.ndarray

    def potential(self, x):
        """Mirror-aware potential ``V(x)`` per column: shape ``(len(x), ncols)``."""
        m = self.metric
        xt = m.mirror(np.asarray(x, dtype=float))
        c = m.c(xt)
        v0 = m.static_potential(xt)
        return v0[:, None] + (xt**2 / c**2)[:, None] * self.kappa2[None, :]

    def Q(self, p):
        """``Q = -V(p)/p`` at the points ``p`` for every column."""
        p = np.asarray(p, dtype=float)
        return -self.potential(p) / p[:, None]

    def coef(self, ic, jc):
        """Zeroth-order coefficient of the equation in grid coordinates at the
        fractional indices ``(ic, jc)`` (cell centres are half-integers).

        In the ``t'`` chart this is ``Q(x' t')``; in the log chart, where the
        equation reads ``d_u d_v W = (V/4) W``, it is ``-V(x)/4``.
        """
        g = self.grid
        ic = np.asarray(ic, dtype=float)
        jc = np.asarray(jc, dtype=float)
        if g.chart == "log":
            x = np.exp(g.u_start + 0.5 * (ic + jc) * g.h)
            return -0.25 * self.potential(x)
        return self.Q(ic * jc * g.delta**2)

    def diagonal_depths(self, offset=0.0):
        """Depths ``x`` of the diagonal points with index ``i + offset``."""
        g = self.grid
        idx = np.arange(g.N + (1 if offset == 0 else 0)) + offset
        if g.chart == "log":
            return np.exp(g.u_start + idx * g.h)
        return (idx * g.delta) ** 2

    def G(self, xp, tp):
        """Mode term ``x't' omega^2(x't')`` (physical region)."""
        p = np.asarray(xp, dtype=float) * np.asarray(tp, dtype=float)
        c = self.metric.c(p)
        return (p / c**2)[..., None] * self.kappa2

    def C(self, xp, tp):
        """Metric term of the conjugated operator (physical region)."""
        p = np.asarray(xp, dtype=float) * np.asarray(tp, dtype=float)
        return self.metric.conjugation_coefficient(p)


def assemble_problem(metric, k, grid):
    """Problem for the modes ``k``: one mode (int or tuple) or an (M, n) array
    of modes, one per column."""
    k = np.asarray(k, dtype=int)
    modes = k.reshape(-1, metric.n) if k.ndim else k.reshape(1, 1)
    kappa2 = np.array([metric.wavenumber2(q) for q in modes])
    return ModeProblem(metric, grid, kappa2)


# --------------------------------------------------------------------------
# diagonal data
# --------------------------------------------------------------------------

@dataclass
class DiagonalData:
    """Goursat data on the diagonal ``x' = t' = m``.

    ``a_node`` holds ``W(i, i)`` at ``m = i delta``; the ``*_mid`` arrays hold
    ``W``, its first two derivatives along the diagonal and the transverse
    derivative ``d_x' W`` at the midpoints ``m = (i + 1/2) delta``.
    """

    a_node: np.ndarray
    a_mid: np.ndarray
    da_mid: np.ndarray
    d2a_mid: np.ndarray
    b_mid: np.ndarray
    parity: int


def _string_values(m, spl, lo, hi, x):
    """Values and two x-derivatives of a string datum, odd beyond the cap."""
    X = m.x_max
    xt = m.mirror(x)
    inside = (xt >= lo) & (xt <= hi)
    ncol = spl.c.shape[-1]
    v = np.zeros((len(x), ncol), complex)
    v1 = np.zeros_like(v)
    v2 = np.zeros_like(v)
    if np.any(inside):
        xi = xt[inside]
        v[inside] = spl(xi)
        v1[inside] = spl(xi, 1)
        v2[inside] = spl(xi, 2)
    far = (x > X)[:, None]
    xs = np.where(x > 0, x, 1.0)[:, None]
    w = np.where(far, -v, v)
    w1 = np.where(far, v1 * X**2 / xs**2, v1)
    w2 = np.where(far, -v2 * X**4 / xs**4 - 2 * v1 * X**2 / xs**3, v2)
    return w, w1, w2


def diagonal_data(metric, data, grid):
    """Goursat data on the diagonal for every column of ``data``.

    Raises :class:`SupportTouchesCorner` if the data reach within four grid
    cells of the corner, and ``ValueError`` if they do not vanish at the cap
    (a relative level of 1e-6 is tolerated so that reconstructed data with
    small noise near the cap can be re-propagated).
    """
    if data.is_zero():
        raise ValueError("zero data")
    lo, hi = data.support
    lo = max(lo, float(data.x[0]))
    delta = grid.delta
    corner = math.exp(grid.u_start + 4 * delta) if grid.chart == "log" else (4 * delta) ** 2
    if lo < corner:
        raise SupportTouchesCorner(f"data reach x={lo:.3g} < {corner:.3g}")
    if hi >= metric.x_max:
        f1x, f2x = data.interpolate(np.array([metric.x_max]))
        edge = np.abs(f1x).max() + np.abs(f2x).max()
        top = np.abs(data.f1).max() + np.abs(data.f2).max()
        if edge > 1e-6 * top:
            raise ValueError("data must vanish at the cap")
        hi = metric.x_max
    spl1, spl2 = data.string_splines(metric)
    probe = ModeProblem(metric, grid, np.zeros(1))
    a_node = _string_values(metric, spl1, lo, hi, probe.diagonal_depths())[0]
    xm = probe.diagonal_depths(0.5)
    w, w1, w2 = _string_values(metric, spl1, lo, hi, xm)
    z = _string_values(metric, spl2, lo, hi, xm)[0]
    x = xm[:, None]
    if grid.chart == "log":
        da = x * w1
        d2a = x * w1 + x**2 * w2
        b = 0.5 * (x * w1 - z)
    else:
        col = np.sqrt(x)
        da = 2 * col * w1
        d2a = 2 * w1 + 4 * x * w2
        b = -(z - x * w1) / col
    has1 = bool(np.any(data.f1))
    has2 = bool(np.any(data.f2))
    parity = 1 if has1 and not has2 else (-1 if has2 and not has1 else 0)
    return DiagonalData(a_node, w, da, d2a, b, parity)


# --------------------------------------------------------------------------
# outward march
# --------------------------------------------------------------------------

@dataclass
class ModeField:
    """Result of a sweep over the square ``[0, T]^2``.

    ``edge[j]`` is ``W(0, j delta)``; ``near[i]`` is ``W(i, i+1)``;
    ``diag[i]`` is ``W(i, i)``.  ``W`` (upper triangle, ``W[i, j]`` for
    ``i <= j``) is kept only on request.
    """

    delta: float
    edge: np.ndarray
    near: np.ndarray
    diag: np.ndarray
    parity: int
    W: np.ndarray | None = None

    @property
    def N(self):
        return len(self.edge) - 1


def solve_forward(problem, diag, keep=False):
    """March from the diagonal to the edge ``x' = 0`` layer by layer."""
    delta = problem.grid.delta
    N = problem.grid.N
    ncol = diag.a_node.shape[1]
    W = None
    if keep:
        W = np.zeros((N + 1, N + 1, ncol), complex)
        idx = np.arange(N + 1)
        W[idx, idx] = diag.a_node
    h = 0.5 * delta
    mid = np.arange(N) + 0.5
    q = problem.coef(mid, mid)
    prev = diag.a_node
    cur = diag.a_mid + h * (diag.da_mid - 2 * diag.b_mid) \
        + 0.5 * h**2 * (diag.d2a_mid + 4 * q * diag.a_mid)
    edge = np.zeros((N + 1, ncol), complex)
    edge[0] = prev[0]
    edge[1] = cur[0]
    near = cur.copy()
    if keep:
        idx = np.arange(N)
        W[idx, idx + 1] = cur
    for d in range(1, N):
        i = np.arange(N - d)
        e = 0.25 * delta**2 * problem.coef(i + 0.5, i + d + 0.5)
        sw = cur[:-1]
        ne = cur[1:]
        se = prev[1:-1]
        nxt = (ne + sw - se + e * (sw + se + ne)) / (1.0 - e)
        prev, cur = cur, nxt
        edge[d + 1] = cur[0]
        if keep:
            W[i, i + d + 1] = cur
        if d % 64 == 0 and not np.all(np.isfinite(cur)):
            raise NonFiniteField(f"non-finite values at layer {d}")
    if not np.all(np.isfinite(edge)):
        raise NonFiniteField("non-finite edge values")
    return ModeField(delta, edge, near, diag.a_node.copy(), diag.parity, W)


def solve_data(metric, data, grid, keep=False, columns=None):
    """Solve for Cauchy data; ``columns`` overrides ``kappa2`` per column."""
    problem = assemble_problem(metric, data.modes, grid)
    if columns is not None:
        problem.kappa2 = np.asarray(columns, dtype=float)
    return solve_forward(problem, diagonal_data(metric, data, grid), keep=keep)


# --------------------------------------------------------------------------
# inward march
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _inward_row(row, q, e_scale, i, parity, out):
    n_top = row.shape[0] - 1
    ncol = row.shape[1]
    for c in range(ncol):
        e = e_scale * q[i, c]
        sw = row[i, c]
        nw = row[i + 1, c]
        se = parity * nw
        out[i + 1, c] = (se + nw - sw - e * (se + nw + sw)) / (1.0 + e)
        for j in range(i + 1, n_top):
            e = e_scale * q[j, c]
            sw = row[j, c]
            se = out[j, c]
            nw = row[j + 1, c]
            out[j + 1, c] = (se + nw - sw - e * (sw + se + nw)) / (1.0 + e)


def solve_inward(problem, edge, parity=-1, keep=False):
    """March from the edge values ``W(0, j delta)`` towards the diagonal.

    ``parity`` selects the symmetry ``W(t', x') = parity * W(x', t')`` used to
    close each row at the diagonal.  Returns a :class:`ModeField` whose
    ``near`` and ``diag`` arrays hold the recovered diagonal data.
    """
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    delta = problem.grid.delta
    edge = np.ascontiguousarray(edge, dtype=complex)
    N = edge.shape[0] - 1
    ncol = edge.shape[1]
    row = edge.copy()
    near = np.zeros((N, ncol), complex)
    diag = np.zeros((N + 1, ncol), complex)
    diag[0] = row[0]
    near[0] = row[1]
    W = None
    if keep:
        W = np.zeros((N + 1, N + 1, ncol), complex)
        W[0] = row
    jj = np.arange(N + 1) + 0.5
    for i in range(N):
        q = np.ascontiguousarray(problem.coef(np.full(N + 1, i + 0.5), jj))
        out = np.zeros_like(row)
        _inward_row(row, q, 0.25 * delta**2, i, parity, out)
        row = out
        diag[i + 1] = row[i + 1]
        if i + 1 < N:
            near[i + 1] = row[i + 2]
        if keep:
            W[i + 1, i + 1:] = row[i + 1:]
    if not np.all(np.isfinite(near)):
        raise NonFiniteField("non-finite values in inward march")
    if parity == -1:
        scale = np.max(np.abs(near)) + 1e-300
        if np.max(np.abs(diag[1:])) > 1e-9 * scale:
            raise ParityViolation("odd field does not vanish on the diagonal")
    return ModeField(delta, edge, near, diag, parity, W)


def odd_data_from_field(metric, field, modes, grid):
    """Read the odd Cauchy datum ``f2`` off a field's first off-diagonal.

    For odd data the seed step gives ``W(i, i+1) = -delta * b`` exactly, with
    ``b`` the transverse derivative.  Only depths up to the cap are returned.
    """
    delta = field.delta
    probe = ModeProblem(metric, grid, np.zeros(1))
    x = probe.diagonal_depths(0.5)[: field.N]
    b = -field.near / delta
    if grid.chart == "log":
        w2 = -2 * b
    else:
        w2 = -np.sqrt(x)[:, None] * b
    keep = x <= metric.x_max
    x = x[keep]
    f2 = (w2[keep] * (x ** (0.5 * metric.n) / metric.quarter_det(x))[:, None]).T
    modes = np.asarray(modes, dtype=int).reshape(len(modes), -1)
    return CauchyData(modes, x, np.zeros_like(f2), f2)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

def _full_square(field):
    W = field.W
    if W is None:
        raise ValueError("field was solved without keep=True")
    full = W.copy()
    lower = np.tril_indices(W.shape[0], -1)
    full[lower] = field.parity * W[lower[1], lower[0]]
    return full


def energy_functional(problem, field):
    """Both sides of the characteristic energy inequality.

    Returns ``(lhs, rhs)`` where ``lhs`` integrates the field and its
    gradient over the physical part of the square and ``rhs`` integrates the
    diagonal data.  Both include the torus measure ``L^n``.
    """
    m = problem.metric
    full = _full_square(field)
    delta = field.delta
    N = field.N
    dx, dt = np.gradient(full, delta, axis=(0, 1))
    g = delta * np.arange(N + 1)
    xp, tp = np.meshgrid(g, g, indexing="ij")
    p = xp * tp
    phys = p <= m.x_max
    pc = np.where(phys, p, 0.0)
    c = m.c(pc)
    root_h = c**m.n
    kap = problem.kappa2[None, None, :]
    dens = (np.abs(full) ** 2 * (1 + (xp * tp * (xp + tp) / c**2)[..., None] * kap)
            + xp[..., None] * np.abs(dx) ** 2 + tp[..., None] * np.abs(dt) ** 2)
    dens = dens * (root_h * phys)[..., None]
    lhs = np.trapezoid(np.trapezoid(dens, dx=delta, axis=0), dx=delta, axis=0)
    # diagonal side: f1 = W, f2 = d_x' W, grad f1 from the mode frequency
    d = np.arange(N + 1)
    f1 = full[d, d]
    f2 = dx[d, d]
    diag_p = g**2
    physd = diag_p <= m.x_max
    cd = m.c(np.where(physd, diag_p, 0.0))
    dd = (g[:, None] * (np.abs(f1) ** 2 + np.abs(f2) ** 2)
          + (g**3 / cd**2)[:, None] * kap[0] * np.abs(f1) ** 2)
    dd = dd * (cd**m.n * physd)[:, None]
    rhs = np.trapezoid(dd, dx=delta, axis=0)
    scale = m.L**m.n
    return scale * float(np.sum(lhs)), scale * float(np.sum(rhs))


def _stencil(u, N):
    """Four-point Lagrange weights around fractional grid positions ``u``."""
    i0 = np.clip(np.floor(u).astype(int) - 1, 0, N - 3)
    r = u - i0
    w = []
    for a in range(4):
        wa = np.ones_like(r)
        for b in range(4):
            if b != a:
                wa = wa * (r - b) / (a - b)
        w.append(wa)
    return w, i0


def sample_interior(metric, field, t, x):
    """Rescaled field ``u`` and ``d_t u`` at time ``t`` and depths ``x``.

    ``x`` may be a scalar or an array; results have shape ``(len(x), ncols)``
    (or ``(ncols,)`` for scalar ``x``).  Uses bicubic Lagrange interpolation
    of ``W`` and centred differences for the derivatives; ``t < 0`` is handled by the
    field's parity.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = field.delta
    N = field.N
    if np.any(x <= 0) or np.any(x > metric.x_max):
        raise OutsideTriangle("x outside (0, x_max]")
    tp = np.sqrt(x) * np.exp(t / 2)
    xp = np.sqrt(x) * np.exp(-t / 2)
    if max(tp.max(), xp.max()) > N * delta + 1e-12:
        raise OutsideTriangle(f"t={t} reaches beyond the computed square")
    full = _full_square(field)
    dx, dt = np.gradient(full, delta, axis=(0, 1))
    wi, i0 = _stencil(xp / delta, N)
    wj, j0 = _stencil(tp / delta, N)

    def interp(A):
        out = 0
        for a in range(4):
            for b in range(4):
                out = out + (wi[a] * wj[b])[:, None] * A[i0 + a, j0 + b]
        return out

    Wv = interp(full)
    Wt = 0.5 * (tp[:, None] * interp(dt) - xp[:, None] * interp(dx))
    scale = (x ** (0.5 * metric.n) / metric.quarter_det(x))[:, None]
    uu, ut = scale * Wv, scale * Wt
    return (uu[0], ut[0]) if scalar else (uu, ut)


def check_window(grid, s_top):
    """Raise :class:`WindowExceedsTriangle` if ``s_top`` lies beyond the grid."""
    top = grid.u_start + grid.N * grid.h if grid.chart == "log" \
        else 2 * np.log(grid.N * grid.delta)
    if s_top > top + 1e-12:
        raise WindowExceedsTriangle(f"s={s_top} beyond 2 log T")


def dump_field_csv(path, field, column=0, stride=1):
    """Write ``i, j, x_prime, t_prime, re_W, im_W`` rows for one column."""
    full = _full_square(field)
    delta = field.delta
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x_prime", "t_prime", "re_W", "im_W"])
        for i in range(0, field.N + 1, stride):
            for j in range(i, field.N + 1, stride):
                v = full[i, j, column]
                w.writerow([i, j, "%.17g" % (i * delta), "%.17g" % (j * delta),
                            "%.17g" % v.real, "%.17g" % v.imag])
