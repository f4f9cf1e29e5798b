"""Scattering operator and scattering matrix, dynamically and stationarily.

Dynamically, the scattering operator maps a backward field to the forward
field of the same data, and on a single mode it acts as a multiplier
``a_k(lambda)`` on Fourier transforms in ``s``.  Stationarily, ``a_k`` is read
off the two power-law branches ``x^(n/2 +- i lambda)`` of the generalized
eigenfunction that vanishes at the cap.  Fourier transforms use
``hat F(lambda) = int F(s) exp(+i lambda s) ds``; with that sign the two
computations produce the same ``a_k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import FitIllConditioned, ProbeDeficient
from .fields import (
    backward_field,
    forward_field,
    fourier_field,
    inverse_forward_field,
)
from .manifold import CauchyData


@dataclass
class ScatteringSample:
    k: tuple
    lam: np.ndarray
    a: np.ndarray
    method: str
    masked: np.ndarray = None
    probe: dict = field(default_factory=dict)

    def to_record(self):
        masked = np.zeros(len(self.lam), bool) if self.masked is None else self.masked
        a = np.where(masked, np.nan, self.a)
        return {
            "k": [int(v) for v in np.atleast_1d(self.k)],
            "lambda": [float(v) for v in self.lam],
            "a_re": [None if m else float(v.real) for v, m in zip(a, masked)],
            "a_im": [None if m else float(v.imag) for v, m in zip(a, masked)],
            "method": self.method,
            "masked": [bool(v) for v in masked],
        }


def write_record(path, samples):
    with open(path, "w") as fh:
        json.dump([s.to_record() for s in samples], fh, indent=1)


# --------------------------------------------------------------------------
# operator level
# --------------------------------------------------------------------------

def scattering_apply(m, F, grid):
    """``S F = R_+ R_-^{-1} F`` for a backward field ``F`` of odd data.

    Uses ``R_-(0, f)(s) = R_+(0, f)(-s)``: the odd data are recovered from the
    reflected field and propagated forward.
    """
    if not np.any(F.F):
        return F
    f = inverse_forward_field(m, F.reflected(), grid, check=False)
    return forward_field(m, f, grid)


def _relative(a, b):
    n = min(a.F.shape[1], b.F.shape[1])
    den = np.linalg.norm(a.F[:, :n])
    if den == 0:
        return 0.0
    return float(np.linalg.norm(a.F[:, :n] - b.F[:, :n]) / den)


def membership_Mf(m, F, grid):
    """``||F - S F*|| / ||F||`` with ``F*(s) = F(-s)``; 0 for ``F = 0``."""
    if not np.any(F.F):
        return 0.0
    return _relative(F, scattering_apply(m, F.reflected(), grid))


def membership_Mb(m, F, grid):
    """``||F* - S F|| / ||F||``; 0 for ``F = 0``."""
    if not np.any(F.F):
        return 0.0
    Fs = F.reflected()
    SF = scattering_apply(m, F, grid)
    return _relative(Fs, SF)


# --------------------------------------------------------------------------
# dynamic multiplier
# --------------------------------------------------------------------------

def scattering_matrices_dynamic(m, ks, lam, probe, grid, floor=1e-8):
    """``a_k(lambda) = hat F_+ / hat F_-`` for each mode in ``ks``.

    One forward and one backward sweep serve all requested modes.  Points
    where ``|hat F_-|`` falls below ``floor`` times its maximum are masked
    (value ``nan``).  Raises :class:`ProbeDeficient` if a mode is missing
    from the probe or every point of a mode is masked.
    """
    rows = []
    for k in ks:
        k = np.atleast_1d(np.asarray(k, dtype=int))
        hit = [i for i, q in enumerate(probe.modes) if np.array_equal(q, k)]
        if not hit:
            raise ProbeDeficient(f"probe has no mode {tuple(k)}")
        rows.append(hit[0])
    d = CauchyData(probe.modes[rows], probe.x, probe.f1[rows], probe.f2[rows])
    lam = np.asarray(lam, dtype=float)
    Fp = forward_field(m, d, grid)
    Fm = backward_field(m, d, grid)
    _, hp = fourier_field(Fp, lam)
    _, hm = fourier_field(Fm, lam)
    out = []
    for r, k in enumerate(d.modes):
        mag = np.abs(hm[r])
        masked = mag < floor * mag.max()
        if np.all(masked):
            raise ProbeDeficient(f"probe spectrum vanishes for mode {tuple(k)}")
        a = np.full(len(lam), np.nan + 0j)
        a[~masked] = hp[r][~masked] / hm[r][~masked]
        desc = {"x_lo": d.x_lo, "x_hi": d.x_hi, "parity": Fp.tags.get("parity")}
        out.append(ScatteringSample(tuple(int(v) for v in k), lam, a, "dynamic",
                                    masked, desc))
    return out


def scattering_matrix_dynamic(m, k, lam, probe, grid, floor=1e-8):
    """Single-mode version of :func:`scattering_matrices_dynamic`."""
    return scattering_matrices_dynamic(m, [k], lam, probe, grid, floor)[0]


# --------------------------------------------------------------------------
# stationary multiplier
# --------------------------------------------------------------------------

def boundary_potential_coefficient(m, k):
    """``v2 = lim V(x)/x^2`` as ``x -> 0`` for mode ``k``."""
    c2 = float(m.warp(np.array([0.0]))[2][0])
    return (m.n - 0.5 * m.n**2) * c2 + m.wavenumber2(k)


def indicial_roots(m, k, lam, x0=1e-7):
    """Frobenius exponents of the mode equation for ``u`` at ``x = 0``.

    Computed from the limiting potential, so they reflect the actual metric;
    for every admissible profile they equal ``n/2 +- i lambda``.
    """
    v0 = float(m.potential(np.array([x0]), m.wavenumber2(k))[0])
    mu = np.sqrt(complex(v0 - lam**2))
    return 0.5 * m.n + mu, 0.5 * m.n - mu


def scattering_matrix_stationary(m, k, lam, eps=1e-3, rtol=1e-12):
    """``a = beta / alpha`` from the branches of the cap-vanishing solution.

    In ``r = -log x`` the mode equation is ``w'' = (V - lambda^2) w``.  It is
    integrated from the cap (``w = 0``, ``w' = 1``) out to ``x = eps`` and
    matched to ``alpha x^{i lambda}(1 + c x^2) + beta x^{-i lambda}(1 + d x^2)``
    using both ``w`` and ``w'``.
    """
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    kap = m.wavenumber2(k)
    r_cap = -math.log(m.x_max)
    r_fit = -math.log(eps)

    V = m.potential_function(kap)

    def rhs(r, y):
        return [y[1], (V(math.exp(-r)) - lam**2) * y[0]]

    sol = solve_ivp(rhs, (r_cap, r_fit), [0.0, 1.0], method="DOP853", rtol=rtol,
                    atol=1e-14)
    w, wr = sol.y[0, -1], sol.y[1, -1]
    v2 = boundary_potential_coefficient(m, k)
    x = eps
    il = 1j * lam
    c = v2 / (lam**2 + (il + 2) ** 2)
    d = v2 / (lam**2 + (-il + 2) ** 2)
    # basis values and r-derivatives (d/dr = -x d/dx)
    p_val = x**il * (1 + c * x**2)
    p_der = -(il * x**il + (il + 2) * c * x ** (il + 2))
    q_val = x**-il * (1 + d * x**2)
    q_der = -(-il * x**-il + (-il + 2) * d * x ** (-il + 2))
    A = np.array([[p_val, q_val], [p_der, q_der]])
    if np.linalg.cond(A) > 1e8:
        raise FitIllConditioned(f"condition number {np.linalg.cond(A):.3g}")
    alpha, beta = np.linalg.solve(A, np.array([w, wr], dtype=complex))
    return complex(beta / alpha)


def stationary_sample(m, k, lam, eps=1e-3):
    lam = np.asarray(lam, dtype=float)
    a = np.array([scattering_matrix_stationary(m, k, float(v), eps) for v in lam])
    return ScatteringSample(tuple(np.atleast_1d(k).tolist()), lam, a, "stationary")
