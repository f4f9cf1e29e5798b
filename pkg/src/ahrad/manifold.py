"""Rotationally symmetric asymptotically hyperbolic model manifolds.

The model is ``g = (dx**2 + c(x)**2 |dy|**2) / x**2`` on ``(0, x_max] x T^n``
where ``T^n`` is the flat torus of period ``L`` and ``x = x_max`` carries a
Dirichlet cap.  Every boundary Fourier mode ``exp(2 pi i k.y / L)`` decouples,
and on a single mode the shifted wave operator becomes the flat string

    w_tt = w_rr - V(r) w,    r = -log x,    u = c**(-n/2) x**(n/2) w,

which is the form every solver in this package is built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    BadNormalization,
    NonPositiveWarp,
    QuadratureUnresolved,
    RootBracketingFailed,
)

PROFILES = ("hyperbolic", "funnel", "bump")


# --------------------------------------------------------------------------
# smooth helpers
# --------------------------------------------------------------------------

def _expm(u):
    """exp(-1/u) for u > 0, zero otherwise, with its first two derivatives."""
    u = np.asarray(u, dtype=float)
    pos = u > 0
    up = np.where(pos, u, 1.0)
    e = np.where(pos, np.exp(-1.0 / up), 0.0)
    d1 = np.where(pos, e / up**2, 0.0)
    d2 = np.where(pos, e * (1.0 / up**4 - 2.0 / up**3), 0.0)
    return e, d1, d2


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1.  Returns (S, S', S'')."""
    a, a1, a2 = _expm(u)
    b, b1, b2 = _expm(1.0 - np.asarray(u, dtype=float))
    b1 = -b1
    den = a + b
    s = a / den
    num1 = a1 * b - a * b1
    s1 = num1 / den**2
    num1p = a2 * b - a * b2
    s2 = num1p / den**2 - 2.0 * num1 * (a1 + b1) / den**3
    return s, s1, s2


def smooth_bump(x, x_a, x_b):
    """C-infinity bump supported in [x_a, x_b], bump(geometric mean) == 1.

    The bump is built in the variable log x so that it looks the same at
    every depth.
    """
    x = np.asarray(x, dtype=float)
    xs = np.where(x > 0, x, 1.0)
    u = (np.log(xs) - math.log(x_a)) / (math.log(x_b) - math.log(x_a))
    inside = (u > 0) & (u < 1) & (x > 0)
    uu = np.where(inside, u, 0.5)
    val = np.where(inside, np.exp(4.0 - 1.0 / (uu * (1.0 - uu))), 0.0)
    return val


# --------------------------------------------------------------------------
# metric
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WarpedMetric:
    """Warped product ``(dx^2 + c(x)^2 |dy|^2)/x^2`` with a Dirichlet cap.

    ``params`` holds the profile parameters:

    * ``hyperbolic``: none, ``c == 1``.
    * ``funnel``: ``a``; optional ``cut_lo``, ``cut_hi`` for the collar cutoff
      (defaults: no cutoff).  ``c = 1 + a x^2 sigma(x)``.
    * ``bump``: ``a``, ``x0`` (0.5), ``w`` (0.15), ``cut_lo`` (0.02),
      ``cut_hi`` (0.1).  ``c = 1 + a exp(-(x-x0)^2/w^2) sigma(x)``.
    """

    n: int
    L: float
    x_max: float
    profile: str = "hyperbolic"
    params: dict = field(default_factory=dict)
    cap: str = "dirichlet"

    # -- warping function --------------------------------------------------

    def _sigma(self, x):
        dlo, dhi = (0.02, 0.1) if self.profile == "bump" else (None, None)
        lo = self.params.get("cut_lo", dlo)
        hi = self.params.get("cut_hi", dhi)
        if lo is None or hi is None:
            one = np.ones_like(x)
            return one, np.zeros_like(x), np.zeros_like(x)
        s, s1, s2 = smooth_step((x - lo) / (hi - lo))
        h = hi - lo
        return s, s1 / h, s2 / h**2

    def warp(self, x):
        """Return ``(c, c', c'')`` at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.profile == "hyperbolic":
            return np.ones_like(x), np.zeros_like(x), np.zeros_like(x)
        a = float(self.params["a"])
        sg, sg1, sg2 = self._sigma(x)
        if self.profile == "funnel":
            p, p1, p2 = x**2, 2 * x, 2.0 * np.ones_like(x)
        elif self.profile == "bump":
            x0 = float(self.params.get("x0", 0.5))
            w = float(self.params.get("w", 0.15))
            z = (x - x0) / w
            p = np.exp(-z**2)
            p1 = -2 * z / w * p
            p2 = (4 * z**2 - 2) / w**2 * p
        else:  # pragma: no cover - guarded in build_metric
            raise ValueError(self.profile)
        c = 1.0 + a * p * sg
        c1 = a * (p1 * sg + p * sg1)
        c2 = a * (p2 * sg + 2 * p1 * sg1 + p * sg2)
        return c, c1, c2

    def c(self, x):
        return self.warp(x)[0]

    def dc(self, x):
        return self.warp(x)[1]

    def det_h(self, x):
        """``|h|(x) = c(x)^(2n)``."""
        return self.c(x) ** (2 * self.n)

    def A(self, x):
        """``A = (1/2) d/dx log|h| = n c'/c``."""
        c, c1, _ = self.warp(x)
        return self.n * c1 / c

    def quarter_det(self, x):
        """``|h|^(1/4) = c^(n/2)``."""
        return self.c(x) ** (0.5 * self.n)

    # -- one-dimensional reduction ------------------------------------------

    def static_potential(self, x):
        """Mode-independent part ``V0`` of the string potential at depth ``x``."""
        n = self.n
        c, c1, c2 = self.warp(x)
        x = np.asarray(x, dtype=float)
        b = x * c1 / c
        return 0.5 * n * (b + x**2 * c2 / c - b**2) + 0.25 * n**2 * (b**2 - 2 * b)

    def potential(self, x, kappa2):
        """String potential ``V(x) = V0(x) + x^2 kappa^2 / c(x)^2``."""
        x = np.asarray(x, dtype=float)
        c = self.c(x)
        return self.static_potential(x) + x**2 * kappa2 / c**2

    def conjugation_coefficient(self, p):
        """Zeroth-order coefficient ``C`` of the conjugated characteristic
        operator, as a function of ``p = x' t'`` (physical range only)."""
        p = np.asarray(p, dtype=float)
        return -self.static_potential(p) / p

    def mirror(self, x):
        """Image depth ``x_max**2 / x`` for ``x > x_max``; identity otherwise."""
        x = np.asarray(x, dtype=float)
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > self.x_max, self.x_max**2 / xs, x)

    def wavenumber2(self, k):
        """``(2 pi |k| / L)^2`` for an integer mode or mode tuple."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        return float((2 * math.pi / self.L) ** 2 * np.sum(k**2))

    def potential_function(self, kappa2):
        """Fast scalar ``x -> V(x)`` (pure ``math``), for ODE right-hand sides."""
        n = self.n
        prof = self.profile
        if prof == "hyperbolic":
            return lambda x: x * x * kappa2
        a = float(self.params["a"])
        dlo, dhi = (0.02, 0.1) if prof == "bump" else (None, None)
        lo = self.params.get("cut_lo", dlo)
        hi = self.params.get("cut_hi", dhi)
        x0 = float(self.params.get("x0", 0.5))
        w = float(self.params.get("w", 0.15))

        def e(u):
            if u <= 0:
                return 0.0, 0.0, 0.0
            v = math.exp(-1.0 / u)
            return v, v / u**2, v * (1.0 / u**4 - 2.0 / u**3)

        def sigma(x):
            if lo is None:
                return 1.0, 0.0, 0.0
            u = (x - lo) / (hi - lo)
            if u <= 0:
                return 0.0, 0.0, 0.0
            if u >= 1:
                return 1.0, 0.0, 0.0
            s_, s1, s2 = (float(q) for q in smooth_step(u))
            return s_, s1 / (hi - lo), s2 / (hi - lo) ** 2

        def V(x):
            sg, sg1, sg2 = sigma(x)
            if prof == "funnel":
                p, p1, p2 = x * x, 2 * x, 2.0
            else:
                z = (x - x0) / w
                p = math.exp(-z * z)
                p1 = -2 * z / w * p
                p2 = (4 * z * z - 2) / w**2 * p
            c = 1.0 + a * p * sg
            c1 = a * (p1 * sg + p * sg1)
            c2 = a * (p2 * sg + 2 * p1 * sg1 + p * sg2)
            b = x * c1 / c
            v0 = 0.5 * n * (b + x * x * c2 / c - b * b) + 0.25 * n * n * (b * b - 2 * b)
            return v0 + x * x * kappa2 / (c * c)

        return V

    def to_dict(self):
        return {
            "profile": self.profile,
            **{k: v for k, v in self.params.items()},
            "n": self.n,
            "L": self.L,
            "x_max": self.x_max,
        }


def build_metric(profile_id, params=None, n=1, L=2 * math.pi, x_max=1.0):
    """Construct and validate a :class:`WarpedMetric`."""
    params = dict(params or {})
    if profile_id not in PROFILES:
        raise ValueError(f"unknown profile {profile_id!r}")
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if not (L > 0 and x_max > 0):
        raise ValueError("L and x_max must be positive")
    if profile_id != "hyperbolic" and "a" not in params:
        raise ValueError(f"profile {profile_id!r} needs parameter 'a'")
    m = WarpedMetric(n=n, L=float(L), x_max=float(x_max), profile=profile_id,
                     params=params)
    xs = np.linspace(0.0, x_max, 20001)
    c, c1, _ = m.warp(xs)
    if not np.all(np.isfinite(c)) or np.min(c) <= 0:
        raise NonPositiveWarp(f"c(x) <= 0 on [0, {x_max}] (min {np.min(c):.3g})")
    if abs(c[0] - 1.0) > 1e-12 or abs(c1[0]) > 1e-12:
        raise BadNormalization(f"c(0)={c[0]!r}, c'(0)={c1[0]!r}")
    return m


def metric_from_config(block):
    """Build a metric from the JSON block used in run configurations."""
    block = dict(block)
    profile = block.pop("profile")
    n = int(block.pop("n", 1))
    L = float(block.pop("L", 2 * math.pi))
    x_max = float(block.pop("x_max", 1.0))
    return build_metric(profile, block, n=n, L=L, x_max=x_max)


def mode_frequency(m, k, x):
    """Eigenvalue of ``-Delta_h`` on mode ``k`` at depth ``x``: (2 pi |k|/L)^2 / c(x)^2."""
    return m.wavenumber2(k) / m.c(x) ** 2


# --------------------------------------------------------------------------
# grids and data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Discretization of the characteristic triangle and of the s axis.

    ``T`` may exceed ``sqrt(x_max)``: the part of the triangle beyond the cap
    hyperbola carries the odd image of the solution (see :mod:`ahrad.goursat`).
    """

    chart = "tprime"

    delta: float
    T: float
    K: int = 0
    s_min: float = -6.0
    s_max: float | None = None
    ds: float = 0.01

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.s_max is not None and self.s_max > 2 * math.log(self.T) + 1e-12:
            raise ValueError("s_max must not exceed 2 log T")

    @property
    def N(self):
        return int(round(self.T / self.delta))

    @property
    def s_top(self):
        return 2 * math.log(self.N * self.delta) if self.s_max is None else self.s_max

    def s_grid(self):
        count = int(math.floor((self.s_top - self.s_min) / self.ds + 1e-9)) + 1
        return self.s_min + self.ds * np.arange(count)

    def refined(self, factor=2):
        return GridSpec(self.delta / factor, self.T, self.K, self.s_min, self.s_max,
                        self.ds)

    def to_dict(self):
        return {"delta": self.delta, "T": self.T, "K": self.K, "s_min": self.s_min,
                "s_max": self.s_max, "ds": self.ds}


@dataclass(frozen=True)
class LogGridSpec:
    """Characteristic grid uniform in ``u = 2 log x'`` and ``v = 2 log t'``.

    Nodes sit at ``u0 + i h`` on both axes, so the diagonal is still
    ``i == j``.  The edge ``u = u0`` stands in for ``x' = 0``; the default
    ``u0 = -(s_max + 20)`` keeps ``x = x' t'`` below ``e^-10`` along it, where
    the potential is negligible.  This chart reaches large ``s`` at a cost
    linear in ``s``, which the Fourier-side computations need.
    """

    chart = "log"

    h: float
    s_max: float
    u0: float | None = None
    K: int = 0
    s_min: float = -6.0
    ds: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.u0 is not None and self.u0 >= self.s_min:
            raise ValueError("u0 must lie below s_min")

    @property
    def delta(self):
        return self.h

    @property
    def u_start(self):
        return -(self.s_max + 20.0) if self.u0 is None else self.u0

    @property
    def N(self):
        return int(math.ceil((self.s_max - self.u_start) / self.h - 1e-9))

    @property
    def s_top(self):
        return self.s_max

    def s_grid(self):
        ds = self.h if self.ds is None else self.ds
        count = int(math.floor((self.s_max - self.s_min) / ds + 1e-9)) + 1
        return self.s_min + ds * np.arange(count)

    def refined(self, factor=2):
        return LogGridSpec(self.h / factor, self.s_max, self.u0, self.K, self.s_min,
                           None if self.ds is None else self.ds)

    def to_dict(self):
        return {"chart": "log", "h": self.h, "s_max": self.s_max, "u0": self.u_start,
                "K": self.K, "s_min": self.s_min, "ds": self.ds}


def mode_list(K, n):
    """All modes with every component in [-K, K], as an (M, n) int array."""
    ks = np.arange(-K, K + 1)
    if n == 1:
        return ks[:, None]
    k1, k2 = np.meshgrid(ks, ks, indexing="ij")
    return np.stack([k1.ravel(), k2.ravel()], axis=1)


@dataclass(frozen=True)
class CauchyData:
    """Per-mode Cauchy data ``(f1_k, f2_k)`` sampled on an x grid.

    ``modes`` is an (M, n) integer array; ``f1``, ``f2`` are (M, nx) complex.
    """

    modes: np.ndarray
    x: np.ndarray
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        if self.f1.shape != (len(self.modes), len(self.x)) or self.f2.shape != self.f1.shape:
            raise ValueError("f1/f2 must have shape (modes, x)")

    @property
    def support(self):
        """``(x_lo, x_hi)``: samples outside are below 1e-14 of the max."""
        mag = np.max(np.abs(self.f1), axis=0) + np.max(np.abs(self.f2), axis=0)
        top = mag.max()
        if top == 0:
            return (math.inf, -math.inf)
        idx = np.nonzero(mag > 1e-14 * top)[0]
        lo = self.x[max(idx[0] - 1, 0)]
        hi = self.x[min(idx[-1] + 1, len(self.x) - 1)]
        return (float(lo), float(hi))

    @property
    def x_lo(self):
        return self.support[0]

    @property
    def x_hi(self):
        return self.support[1]

    def is_zero(self):
        return not (np.any(self.f1) or np.any(self.f2))

    def scaled(self, t):
        return CauchyData(self.modes, self.x, t * self.f1, t * self.f2)

    def parts(self):
        """Split into the even part ``(f1, 0)`` and the odd part ``(0, f2)``."""
        z = np.zeros_like(self.f1)
        return (CauchyData(self.modes, self.x, self.f1, z),
                CauchyData(self.modes, self.x, z, self.f2))

    def __add__(self, other):
        if not (np.array_equal(self.modes, other.modes) and np.array_equal(self.x, other.x)):
            raise ValueError("incompatible CauchyData")
        return CauchyData(self.modes, self.x, self.f1 + other.f1, self.f2 + other.f2)

    def __neg__(self):
        return self.scaled(-1.0)

    def is_real_symmetric(self, tol=1e-12):
        """Check ``f_{-k} = conj(f_k)`` (data of a real field)."""
        index = {tuple(k): i for i, k in enumerate(self.modes)}
        for i, k in enumerate(self.modes):
            j = index.get(tuple(-k))
            if j is None:
                return False
            for f in (self.f1, self.f2):
                if np.max(np.abs(f[j] - np.conj(f[i]))) > tol * (np.max(np.abs(f)) + 1e-300):
                    return False
        return True

    def string_splines(self, m):
        """Cubic splines (in x) of the string data ``w_j = c^(n/2) x^(-n/2) f_j``.

        The spline value axis is the mode axis, so ``spl(x)`` has shape
        ``(len(x), M)``.
        """
        scale = m.quarter_det(self.x) * self.x ** (-0.5 * m.n)
        w1 = (self.f1 * scale).T
        w2 = (self.f2 * scale).T
        return CubicSpline(self.x, w1, axis=0), CubicSpline(self.x, w2, axis=0)

    def interpolate(self, x):
        """Evaluate ``(f1, f2)`` at new depths by cubic interpolation."""
        s1 = CubicSpline(self.x, self.f1.T, axis=0, extrapolate=False)
        s2 = CubicSpline(self.x, self.f2.T, axis=0, extrapolate=False)
        a = np.nan_to_num(s1(x)).T
        b = np.nan_to_num(s2(x)).T
        return a, b


def data_grid(m, count=4001, x_min=None):
    """Uniform x grid on ``[x_min, x_max]`` used for Cauchy data samples."""
    lo = m.x_max / count if x_min is None else x_min
    return np.linspace(lo, m.x_max, count)


def cauchy_from_functions(m, modes, f1=None, f2=None, x=None):
    """Sample callables ``f(x) -> (M, nx)`` (or ``None`` for zero) on a grid."""
    modes = np.asarray(modes, dtype=int).reshape(len(modes), -1)
    x = data_grid(m) if x is None else np.asarray(x, dtype=float)
    shape = (len(modes), len(x))
    a = np.zeros(shape, complex) if f1 is None else np.broadcast_to(f1(x), shape).astype(complex)
    b = np.zeros(shape, complex) if f2 is None else np.broadcast_to(f2(x), shape).astype(complex)
    return CauchyData(modes, x, a, b)


def bump_data(m, x_a, x_b, *, modes=None, amp1=None, amp2=None, x=None):
    """Cauchy data made of log-x bumps on ``[x_a, x_b]``.

    ``amp1``/``amp2`` are per-mode complex amplitudes (default: mode 0 only,
    odd data with amplitude 1).
    """
    if modes is None:
        modes = np.zeros((1, m.n), dtype=int)
    modes = np.asarray(modes, dtype=int).reshape(-1, m.n)
    M = len(modes)
    if amp1 is None and amp2 is None:
        amp2 = np.ones(M)
    x = data_grid(m) if x is None else x
    prof = smooth_bump(x, x_a, x_b)
    f1 = np.zeros((M, len(x)), complex) if amp1 is None else np.outer(amp1, prof)
    f2 = np.zeros((M, len(x)), complex) if amp2 is None else np.outer(amp2, prof)
    return CauchyData(modes, x, f1.astype(complex), f2.astype(complex))


def shifted_laplacian(m, d, power=1):
    """Apply ``(Delta_g - n^2/4)^power`` to both components of ``d``.

    On mode ``k`` the operator acts on ``w = c^(n/2) x^(-n/2) f`` as
    ``-(x d/dx)^2 + V``.  Derivatives are central differences in ``x``; their
    error is smooth, so repeated application stays second-order accurate.
    """
    x = d.x
    scale = m.quarter_det(x) * x ** (-0.5 * m.n)
    V = np.array([m.potential(x, m.wavenumber2(k)) for k in d.modes])
    out = []
    for f in (d.f1, d.f2):
        w = f * scale
        for _ in range(power):
            dw = np.gradient(w, x, axis=1, edge_order=2)
            d2w = np.gradient(dw, x, axis=1, edge_order=2)
            w = -(x * dw + x**2 * d2w) + V * w
        out.append(w / scale)
    return CauchyData(d.modes, x, out[0], out[1])


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

def _energy_on(m, d, x):
    s1 = CubicSpline(d.x, d.f1.T, axis=0)
    s2 = CubicSpline(d.x, d.f2.T, axis=0)
    f1 = s1(x).T
    df1 = s1(x, 1).T
    f2 = s2(x).T
    c = m.c(x)
    kap = np.array([m.wavenumber2(k) for k in d.modes])[:, None]
    dens = (x**2 * np.abs(df1) ** 2 + x**2 * kap / c**2 * np.abs(f1) ** 2
            - 0.25 * m.n**2 * np.abs(f1) ** 2 + np.abs(f2) ** 2)
    weight = c**m.n * x ** (-(m.n + 1))
    per_mode = np.trapezoid(dens * weight, x, axis=1)
    return 0.5 * m.L**m.n * float(np.sum(per_mode))


def energy_norm(m, d, check=True):
    """Squared energy norm ``||d||_E^2`` summed over modes (not clamped)."""
    if d.is_zero():
        return 0.0
    lo, hi = d.support
    lo = max(lo, d.x[0])
    x = d.x[(d.x >= lo) & (d.x <= hi)]
    if len(x) < 8:
        x = np.linspace(lo, hi, 64)
    e = _energy_on(m, d, x)
    if check:
        fine = np.linspace(x[0], x[-1], 2 * len(x) - 1)
        e2 = _energy_on(m, d, fine)
        if abs(e2 - e) > 1e-3 * max(abs(e2), 1e-300):
            raise QuadratureUnresolved(f"energy changed {e} -> {e2} under refinement")
        e = e2
    return e


# --------------------------------------------------------------------------
# point spectrum
# --------------------------------------------------------------------------

def _shoot(m, kappa2, mu, x_far=1e-6):
    """Value at the cap of the solution recessive at the boundary."""
    gamma = math.sqrt(0.25 * m.n**2 - mu)
    r_far = -math.log(x_far)
    r_cap = -math.log(m.x_max)

    V = m.potential_function(kappa2)

    def rhs(r, y):
        return [y[1], (V(math.exp(-r)) + gamma**2) * y[0]]

    sol = solve_ivp(rhs, (r_far, r_cap), [1.0, -gamma], method="DOP853",
                    rtol=1e-10, atol=1e-14)
    w_cap = sol.y[0, -1]
    # normalize the growth so the determinant stays O(1)
    return w_cap * math.exp(-gamma * (r_far - r_cap))


def find_point_spectrum(m, k_range, interval=None, samples=160):
    """Eigenvalues of Delta in ``interval`` (inside ``(0, n^2/4)``), per mode.

    Returns a sorted list of ``(k, mu)`` pairs; an empty list means no
    eigenvalue was found to the working resolution.
    """
    top = 0.25 * m.n**2
    lo, hi = interval if interval is not None else (1e-6, top - 1e-6)
    if not (0 < lo < hi < top):
        raise ValueError(f"interval must lie inside (0, {top})")
    found = []
    for k in k_range:
        kap = m.wavenumber2(k)
        mus = np.linspace(lo, hi, samples)
        vals = np.array([_shoot(m, kap, mu) for mu in mus])
        sign = np.sign(vals)
        for i in range(samples - 1):
            if sign[i] == 0:
                found.append((k, float(mus[i])))
            elif sign[i] * sign[i + 1] < 0:
                root = brentq(lambda mu, kap=kap: _shoot(m, kap, mu), mus[i], mus[i + 1],
                              xtol=1e-12)
                found.append((k, float(root)))
        # a touching zero without a sign change cannot be isolated here
        mag = np.abs(vals)
        scale = mag.max() if mag.max() > 0 else 1.0
        for i in range(1, samples - 1):
            if (mag[i] < mag[i - 1] and mag[i] < mag[i + 1] and mag[i] < 1e-6 * scale
                    and sign[i - 1] == sign[i + 1] != 0):
                raise RootBracketingFailed(f"near-double root at mu~{mus[i]:.6g}, k={k}")
    return sorted(found, key=lambda t: t[1])
