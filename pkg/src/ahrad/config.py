"""Run configuration: validation, defaults and hashing.

A configuration is a JSON object.  :func:`normalize` checks it and fills in
defaults; the normalized form is what gets hashed and written back, so
``normalize(normalize(c)) == normalize(c)``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import numpy as np

from .errors import ConfigInvalid
from .manifold import PROFILES, CauchyData, GridSpec, LogGridSpec, build_metric, data_grid, \
    smooth_bump

EXPERIMENTS = ("evolve", "field", "scatter", "invert", "oracle-h3", "recover",
               "convergence")

DEFAULT_TOLERANCES = {
    "unitarity": 0.02,
    "translation": 0.02,
    "finite_speed": 1e-12,
    "field_bound": 0.01,
    "membership": 0.03,
    "filter": 0.01,
    "h3": 0.03,
    "scatter_agreement": 0.02,
    "scatter_unitarity": 0.01,
    "indicial": 1e-6,
    "jump": 0.05,
    "transport": 1e-6,
    "profile_equal": 0.03,
    "field_order": 1.9,
    "unitarity_order": 1.5,
}

# experiment-specific blocks and their defaults
DEFAULT_BLOCKS = {
    "evolve": {"tau": [0.1, 0.3]},
    "field": {"filter": [1.0, 0.5]},
    "scatter": {"modes": None, "lambda": [0.5, 8.0, 32], "stationary_eps": 1e-3},
    "invert": {"x1": [0.1, 0.2, 0.3], "delta": 2e-3, "mollifier": 0.05, "fit_samples": 16},
    "oracle-h3": {"K": 8, "sigma": 0.6, "x_range": [0.3, 0.6], "s": [-1.3, 1.0, 60],
                  "y": [[0.0, 0.0], [0.3, 0.2], [0.8, 0.0]], "order": 16},
    "recover": {"metric2": None, "x1": [0.1, 0.15, 0.2, 0.25, 0.3], "delta": 2e-3,
                "mollifier": 0.05, "differ_tol": 2e-5, "expect": None},
    "convergence": {"levels": 3, "quantities": ["field", "unitarity"]},
}


def _fail(path, message):
    raise ConfigInvalid(path, message)


def _number(block, key, path, positive=False, default=None, integer=False):
    if key not in block:
        if default is None:
            _fail(f"{path}.{key}", "missing")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"{path}.{key}", f"expected a number, got {v!r}")
    if integer and int(v) != v:
        _fail(f"{path}.{key}", "expected an integer")
    if positive and not v > 0:
        _fail(f"{path}.{key}", "must be positive")
    return int(v) if integer else float(v)


def _metric_block(block, path):
    if not isinstance(block, dict):
        _fail(path, "expected an object")
    prof = block.get("profile")
    if prof not in PROFILES:
        _fail(f"{path}.profile", f"expected one of {PROFILES}")
    out = {"profile": prof,
           "n": _number(block, "n", path, default=1, integer=True),
           "L": _number(block, "L", path, positive=True, default=2 * math.pi),
           "x_max": _number(block, "x_max", path, positive=True, default=1.0)}
    params = {k: v for k, v in block.items() if k not in out}
    if out["n"] not in (1, 2):
        _fail(f"{path}.n", "must be 1 or 2")
    if prof != "hyperbolic":
        _number(params, "a", path)
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            _fail(f"{path}.{k}", "profile parameters must be numbers")
    out.update({k: float(v) for k, v in sorted(params.items())})
    try:
        metric_of(out)
    except ConfigInvalid:
        raise
    except Exception as exc:  # profile validation errors carry their own type
        _fail(path, str(exc))
    return out


def _grid_block(block, path):
    if not isinstance(block, dict):
        _fail(path, "expected an object")
    chart = block.get("chart", "tprime")
    if chart == "tprime":
        out = {"chart": chart,
               "delta": _number(block, "delta", path, positive=True),
               "T": _number(block, "T", path, positive=True),
               "K": _number(block, "K", path, default=0, integer=True),
               "s_min": _number(block, "s_min", path, default=-6.0),
               "s_max": block.get("s_max"),
               "ds": _number(block, "ds", path, positive=True, default=0.01)}
        if out["s_max"] is not None:
            out["s_max"] = _number(block, "s_max", path)
    elif chart == "log":
        out = {"chart": chart,
               "h": _number(block, "h", path, positive=True),
               "s_max": _number(block, "s_max", path),
               "K": _number(block, "K", path, default=0, integer=True),
               "s_min": _number(block, "s_min", path, default=-6.0)}
    else:
        _fail(f"{path}.chart", "expected 'tprime' or 'log'")
    try:
        grid_of(out)
    except ValueError as exc:
        _fail(path, str(exc))
    return out


def _amp(v, path):
    if v is None:
        return None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v), 0.0]
    if isinstance(v, list) and len(v) == 2 and all(isinstance(q, (int, float)) for q in v):
        return [float(v[0]), float(v[1])]
    _fail(path, "amplitude must be a number or [re, im]")


def _data_block(block, path, n):
    if not isinstance(block, dict):
        _fail(path, "expected an object")
    if "random" in block:
        r = block["random"]
        rp = f"{path}.random"
        if not isinstance(r, dict):
            _fail(rp, "expected an object")
        rng_ = r.get("x_range", [0.1, 0.6])
        if not (isinstance(rng_, list) and len(rng_) == 2 and 0 < rng_[0] < rng_[1]):
            _fail(f"{rp}.x_range", "expected [lo, hi] with 0 < lo < hi")
        modes = r.get("modes", [[0] * n])
        _modes(modes, f"{rp}.modes", n)
        return {"random": {"count": _number(r, "count", rp, positive=True, default=5,
                                            integer=True),
                           "modes": [list(map(int, k)) for k in modes],
                           "x_range": [float(rng_[0]), float(rng_[1])]}}
    bumps = block.get("bumps")
    if not isinstance(bumps, list) or not bumps:
        _fail(f"{path}.bumps", "expected a non-empty list")
    out = []
    for i, b in enumerate(bumps):
        bp = f"{path}.bumps[{i}]"
        if not isinstance(b, dict):
            _fail(bp, "expected an object")
        k = b.get("k")
        _modes([k], f"{bp}.k", n)
        xa = _number(b, "x_a", bp, positive=True)
        xb = _number(b, "x_b", bp, positive=True)
        if not xb > xa:
            _fail(f"{bp}.x_b", "must exceed x_a")
        a1, a2 = _amp(b.get("amp1"), f"{bp}.amp1"), _amp(b.get("amp2"), f"{bp}.amp2")
        if a1 is None and a2 is None:
            a2 = [1.0, 0.0]
        out.append({"k": list(map(int, k)), "x_a": xa, "x_b": xb, "amp1": a1, "amp2": a2})
    return {"bumps": out}


def _modes(modes, path, n):
    if not isinstance(modes, list) or not modes:
        _fail(path, "expected a non-empty list of modes")
    for k in modes:
        if not (isinstance(k, list) and len(k) == n and all(isinstance(q, int) for q in k)):
            _fail(path, f"each mode must be a list of {n} integers")


def normalize(cfg, source="config"):
    """Validate ``cfg`` and return its normalized copy.

    Raises :class:`ConfigInvalid` with the dotted path of the first bad field.
    """
    if not isinstance(cfg, dict):
        _fail(source, "configuration must be a JSON object")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        _fail("experiment", f"expected one of {EXPERIMENTS}")
    for key in ("metric", "grid", "data"):
        if key not in cfg:
            _fail(key, "missing")
    out = {"experiment": exp}
    out["metric"] = _metric_block(cfg["metric"], "metric")
    out["grid"] = _grid_block(cfg["grid"], "grid")
    out["data"] = _data_block(cfg["data"], "data", out["metric"]["n"])
    tol = dict(DEFAULT_TOLERANCES)
    given = cfg.get("tolerances", {})
    if not isinstance(given, dict):
        _fail("tolerances", "expected an object")
    for k in given:
        if k not in tol:
            _fail(f"tolerances.{k}", "unknown tolerance")
        tol[k] = _number(given, k, "tolerances", positive=True)
    out["tolerances"] = tol
    out["seed"] = _number(cfg, "seed", "config", default=0, integer=True) if "seed" in cfg \
        else 0
    outdir = cfg.get("output", "runs")
    if not isinstance(outdir, str) or not outdir:
        _fail("output", "expected a directory name")
    out["output"] = outdir
    params = copy.deepcopy(DEFAULT_BLOCKS[exp])
    given = cfg.get(exp, {})
    if not isinstance(given, dict):
        _fail(exp, "expected an object")
    for k, v in given.items():
        if k not in params:
            _fail(f"{exp}.{k}", "unknown setting")
        params[k] = v
    if exp == "recover":
        if params["metric2"] is None:
            _fail("recover.metric2", "missing")
        params["metric2"] = _metric_block(params["metric2"], "recover.metric2")
        if params["expect"] not in (None, "equal", "differ"):
            _fail("recover.expect", "expected 'equal', 'differ' or null")
    if exp == "convergence":
        lv = params["levels"]
        if not isinstance(lv, int) or lv < 3:
            _fail("convergence.levels", "a convergence study needs at least 3 levels")
        for q in params["quantities"]:
            if q not in ("field", "unitarity", "scattering"):
                _fail("convergence.quantities", f"unknown quantity {q!r}")
    if exp == "scatter" and params["modes"] is not None:
        _modes(params["modes"], "scatter.modes", out["metric"]["n"])
    out[exp] = params
    return out


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of a normalized configuration."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(str(path), "file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(path), f"invalid JSON ({exc})") from None
    return normalize(raw, str(path))


# --------------------------------------------------------------------------
# building library objects from normalized blocks
# --------------------------------------------------------------------------

def metric_of(block):
    params = {k: v for k, v in block.items() if k not in ("profile", "n", "L", "x_max")}
    return build_metric(block["profile"], params, n=block["n"], L=block["L"],
                        x_max=block["x_max"])


def grid_of(block):
    if block["chart"] == "log":
        return LogGridSpec(block["h"], block["s_max"], None, block["K"], block["s_min"])
    return GridSpec(block["delta"], block["T"], block["K"], block["s_min"],
                    block["s_max"], block["ds"])


def _cplx(a):
    return 0.0 if a is None else complex(a[0], a[1])


def data_of(m, block, seed=0, with_support=False):
    """List of :class:`CauchyData` described by a normalized data block.

    With ``with_support`` each entry is a pair ``(data, x0)`` where ``x0`` is
    the exact inner edge of the support (the smallest bump start).
    """
    x = data_grid(m)
    if "random" in block:
        r = block["random"]
        rng = np.random.default_rng(seed)
        modes = np.array(r["modes"], dtype=int)
        lo, hi = r["x_range"]
        out = []
        for _ in range(r["count"]):
            a, b = np.sort(rng.uniform(lo, hi, 2))
            b = max(b, a * 1.5)
            amp = rng.normal(size=(2, len(modes))) + 1j * rng.normal(size=(2, len(modes)))
            prof = smooth_bump(x, a, b)
            d = CauchyData(modes, x, np.outer(amp[0], prof), np.outer(amp[1], prof))
            out.append((d, float(a)) if with_support else d)
        return out
    keys = []
    for b in block["bumps"]:
        if b["k"] not in keys:
            keys.append(b["k"])
    modes = np.array(keys, dtype=int)
    f1 = np.zeros((len(modes), len(x)), complex)
    f2 = np.zeros_like(f1)
    for b in block["bumps"]:
        i = keys.index(b["k"])
        prof = smooth_bump(x, b["x_a"], b["x_b"])
        f1[i] += _cplx(b["amp1"]) * prof
        f2[i] += _cplx(b["amp2"]) * prof
    d = CauchyData(modes, x, f1, f2)
    if with_support:
        return [(d, min(b["x_a"] for b in block["bumps"]))]
    return [d]
