"""Closed-form reference computations in hyperbolic 3-space.

Upper half space ``{(x, y1, y2): x > 0}`` with ``g = (dx^2 + |dy|^2) / x^2``.
Geodesic spheres and horospheres are Euclidean spheres, and every surface
integral here is done in the same way: slice the sphere by height ``x``
(the Euclidean area element of a sphere of radius ``R`` is ``R dx dphi``)
and integrate the slices with Gauss-Legendre in ``x`` and the periodic
trapezoid rule in ``phi``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DifferencingUnresolved, QuadratureUnresolved


@dataclass(frozen=True)
class H3Point:
    x: float
    y: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError("height must be positive")


def h3_distance(z, zp):
    """Hyperbolic distance between two points of the upper half space."""
    x, y = z.x, np.asarray(z.y, dtype=float)
    xp, yp = zp.x, np.asarray(zp.y, dtype=float)
    q = (x**2 + xp**2 + float(np.sum((y - yp) ** 2))) / (2 * x * xp)
    return float(np.arccosh(max(q, 1.0)))


def sphere_area(t):
    return 4 * math.pi * math.sinh(t) ** 2


@dataclass(frozen=True)
class SeparableBump:
    """``f(x, y) = b(x) * exp(-|y - y0|^2 / (2 sigma^2))`` with ``b`` a smooth
    log-x bump on ``[x_a, x_b]`` (or a constant when ``x_a`` is None)."""

    x_a: float | None
    x_b: float | None
    y0: tuple = (0.0, 0.0)
    sigma: float = 0.4
    amplitude: float = 1.0

    @property
    def x_range(self):
        return (self.x_a, self.x_b) if self.x_a is not None else None

    def profile(self, x):
        from .manifold import smooth_bump
        if self.x_a is None:
            return np.full_like(np.asarray(x, dtype=float), self.amplitude)
        return self.amplitude * smooth_bump(x, self.x_a, self.x_b)

    def __call__(self, x, y1, y2):
        r2 = (y1 - self.y0[0]) ** 2 + (y2 - self.y0[1]) ** 2
        return self.profile(x) * np.exp(-r2 / (2 * self.sigma**2))

    def fourier(self, k, L):
        """Torus coefficient of the periodized bump for mode ``k``: the
        y-factor only (the x profile is returned by :meth:`profile`)."""
        k = np.asarray(k, dtype=float)
        s = self.sigma
        g = (math.sqrt(2 * math.pi) * s / L) ** 2 * np.exp(
            -0.5 * (2 * math.pi * s / L) ** 2 * np.sum(k**2, axis=-1))
        phase = np.exp(-2j * math.pi * (k @ np.asarray(self.y0, dtype=float)) / L)
        return g * phase


def _sphere_integral(f, hc, y, R, order, x_range=None):
    """``int f dsigma_e / x^2`` over the Euclidean sphere of centre ``(hc, y)``
    and radius ``R`` lying in ``x > 0``."""
    lo, hi = hc - R, hc + R
    if x_range is not None:
        lo, hi = max(lo, x_range[0]), min(hi, x_range[1])
    if not hi > lo or hi <= 0:
        return 0.0
    lo = max(lo, 0.0)
    xg, wg = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    ws = 0.5 * (hi - lo) * wg
    nphi = 2 * order
    phi = 2 * math.pi * np.arange(nphi) / nphi
    rh = np.sqrt(np.maximum(R**2 - (xs - hc) ** 2, 0.0))
    y1 = y[0] + rh[:, None] * np.cos(phi)[None, :]
    y2 = y[1] + rh[:, None] * np.sin(phi)[None, :]
    vals = f(xs[:, None], y1, y2)
    ring = vals.sum(axis=1) * (2 * math.pi / nphi)
    return float(np.sum(ws * ring * R / xs**2))


def _resolved(compute, order, what):
    a = compute(order)
    b = compute(2 * order)
    if abs(b - a) > 5e-3 * max(abs(b), 1e-300) and abs(b - a) > 1e-14:
        raise QuadratureUnresolved(f"{what}: order {order} -> {2 * order} changed "
                                   f"{a:.6g} -> {b:.6g}")
    return b


def spherical_mean(f, t, z, order=64):
    """Mean of ``f`` over the geodesic sphere of radius ``t`` about ``z``."""
    if t <= 0:
        raise ValueError("t must be positive")
    hc = z.x * math.cosh(t)
    R = z.x * math.sinh(t)
    xr = getattr(f, "x_range", None)

    def compute(o):
        return _sphere_integral(f, hc, z.y, R, o, xr) / sphere_area(t)

    return _resolved(compute, order, "spherical mean")


def wave_solution_h3(f, t, z, order=64):
    """``u(t, z) = sinh(t) M(f, t, z)``: the solution with data ``(0, f)``."""
    return math.sinh(t) * spherical_mean(f, t, z, order)


def horosphere_integral(f, s, y, order=64):
    """``H(s, y)``: integral of ``f`` over the horosphere tangent to the
    boundary at ``y`` with Euclidean diameter ``e^s``."""
    R = 0.5 * math.exp(s)
    return _sphere_integral(f, R, y, R, order, getattr(f, "x_range", None))


def _lp_samples(f, s_grid, y_points, order, h):
    out = np.zeros((len(s_grid), len(y_points)))
    for j, y in enumerate(y_points):
        for i, s in enumerate(s_grid):
            gp = horosphere_integral(f, s + h, y, order) / math.exp(s + h)
            gm = horosphere_integral(f, s - h, y, order) / math.exp(s - h)
            out[i, j] = (gp - gm) / (2 * h * 2 * math.pi)
    return out


def lax_phillips_field(f, s_grid, y_points, order=64, h=1e-3):
    """Forward field of the data ``(0, f)`` by horosphere quadrature.

    Returns samples of ``d/ds [H(s, y) / (2 pi e^s)]`` with shape
    ``(len(s_grid), len(y_points))``.  The derivative is a centred difference
    with step ``h``; both the step and the quadrature order are checked by
    halving/doubling, relative to the largest sample.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    base = _lp_samples(f, s_grid, y_points, order, h)
    scale = max(np.abs(base).max(), 1e-300)
    half = _lp_samples(f, s_grid, y_points, order, h / 2)
    if np.abs(half - base).max() > 5e-3 * scale:
        raise DifferencingUnresolved("step halving changed the field by more than 0.5%")
    fine = _lp_samples(f, s_grid, y_points, 2 * order, h)
    if np.abs(fine - base).max() > 5e-3 * scale:
        raise QuadratureUnresolved("order doubling changed the field by more than 0.5%")
    return fine


def periodized_field(m, f, K, grid, s_grid, y_points):
    """Forward field of the torus-periodized data ``(0, f)`` on the flat
    hyperbolic model, evaluated at physical points ``y``.

    Modes sharing ``|k|^2`` share one solve (the y profile only enters
    through a per-mode amplitude).  Returns ``(len(s_grid), len(y_points))``.
    """
    from .fields import field_from_edge
    from .goursat import solve_data
    from .manifold import CauchyData, mode_list

    modes = mode_list(K, m.n)
    k2 = np.sum(modes**2, axis=1)
    uniq, inv = np.unique(k2, return_inverse=True)
    x = np.linspace(f.x_a, f.x_b, 2001)
    prof = f.profile(x)
    rows = np.tile(prof, (len(uniq), 1)).astype(complex)
    reps = np.zeros((len(uniq), m.n), int)
    for u_i, q in enumerate(uniq):
        reps[u_i] = modes[np.nonzero(k2 == q)[0][0]]
    d = CauchyData(reps, x, np.zeros_like(rows), rows)
    mf = solve_data(m, d, grid)
    Fu = field_from_edge(mf.edge, grid, s_grid)  # (n_uniq, ns)
    amp = f.fourier(modes, m.L)
    yp = np.asarray(y_points, dtype=float)
    phase = np.exp(2j * math.pi * (yp @ modes.T) / m.L)  # (ny, M)
    coeff = amp[None, :] * phase                        # (ny, M)
    per_group = np.zeros((len(yp), len(uniq)), complex)
    np.add.at(per_group.T, inv, coeff.T)
    return (Fu.T @ per_group.T).real


def dump_lp_csv(path, s_grid, y_points, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "y1", "y2", "value"])
        for i, s in enumerate(s_grid):
            for j, y in enumerate(y_points):
                w.writerow(["%.17g" % s, "%.17g" % y[0], "%.17g" % y[1],
                            "%.17g" % values[i, j]])
