"""Command-line runner: ``ahrad <experiment> --config <path> [--force] [--jobs N]``.

Each run lives in ``<root>/<experiment>-<hash>`` where ``<hash>`` is the
SHA-256 of the normalized configuration.  The root is ``$AHRAD_OUT`` when
set, otherwise the configuration's ``output`` entry.  A run directory that
already holds a manifest is left alone unless ``--force`` is given.

Every experiment computes its quantities, evaluates a list of inline checks
and writes CSV/JSON artifacts plus ``manifest.json``.  The exit status is 0
only if every check passed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import AhradError, ConfigInvalid
from .fields import (
    backward_field,
    evolve_cauchy,
    field_norm,
    filter_identity_residual,
    forward_field,
    translate,
)
from .h3 import SeparableBump, lax_phillips_field, periodized_field
from .inverse import (
    even_mollifier,
    jump_amplitude,
    recover_profile,
    transport_closed_form,
    transport_v1,
    window_grid,
)
from .manifold import LogGridSpec, energy_norm
from .scattering import (
    indicial_roots,
    membership_Mf,
    scattering_matrices_dynamic,
    stationary_sample,
)

FMT = "%.17g"


# --------------------------------------------------------------------------
# bookkeeping
# --------------------------------------------------------------------------

class Checks:
    """Inline invariant checks of one run."""

    def __init__(self):
        self.items = []

    def upper(self, name, value, tol):
        self.items.append({"name": name, "value": float(value), "bound": "<=",
                           "tol": float(tol), "passed": bool(value <= tol)})

    def lower(self, name, value, tol):
        self.items.append({"name": name, "value": float(value), "bound": ">=",
                           "tol": float(tol), "passed": bool(value >= tol)})

    def truth(self, name, ok, detail=""):
        self.items.append({"name": name, "value": detail, "bound": "==", "tol": True,
                           "passed": bool(ok)})

    @property
    def passed(self):
        return all(c["passed"] for c in self.items)


class Artifacts:
    """Collects artifacts in memory; :meth:`flush` writes them in order."""

    def __init__(self, config_hash):
        self.hash = config_hash
        self.files = {}

    def csv(self, name, header, rows):
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(v if isinstance(v, str) else FMT % v for v in r))
        self.files[name] = "\r\n".join(lines) + "\r\n"

    def json(self, name, payload):
        body = {"config_hash": self.hash, **payload}
        self.files[name] = json.dumps(body, indent=1, sort_keys=True, default=_jsonable)

    def flush(self, directory):
        out = []
        for name in sorted(self.files):
            data = self.files[name].encode("utf-8")
            (directory / name).write_bytes(data)
            out.append({"name": name, "sha256": hashlib.sha256(data).hexdigest()})
        return out


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(type(v))


def _key(k):
    return " ".join(str(int(v)) for v in np.atleast_1d(k))


def _field_rows(F):
    for k, row in zip(F.modes, F.F):
        for s, v in zip(F.s, row):
            yield (_key(k), s, v.real, v.imag)


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("ahrad", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _setup(cfg):
    m = cfgmod.metric_of(cfg["metric"])
    grid = cfgmod.grid_of(cfg["grid"])
    datas = cfgmod.data_of(m, cfg["data"], cfg["seed"])
    return m, grid, datas


def _odd(d):
    return d.parts()[1]


def run_field(cfg, art, checks, jobs):
    m, grid, datas = _setup(cfg)
    tol = cfg["tolerances"]
    edges = [x0 for _, x0 in cfgmod.data_of(m, cfg["data"], cfg["seed"], True)]

    def one(item):
        d, x0 = item
        F = forward_field(m, d, grid)
        E = energy_norm(m, d)
        norm = field_norm(F)
        below = F.s < math.log(x0)
        top = np.abs(F.F).max()
        leak = np.abs(F.F[:, below]).max() / top if below.any() and top > 0 else 0.0
        odd = _odd(d)
        mem = membership_Mf(m, forward_field(m, odd, grid), grid) if not odd.is_zero() \
            else 0.0
        return F, E, norm, leak, mem

    results = _map(one, list(zip(datas, edges)), jobs)
    report = []
    for i, (F, E, norm, leak, mem) in enumerate(results):
        defect = abs(norm**2 - E) / E
        checks.upper(f"unitarity[{i}]", defect, tol["unitarity"])
        checks.upper(f"field_bound[{i}]", norm / (2 * math.sqrt(E)), 1 + tol["field_bound"])
        checks.upper(f"finite_speed[{i}]", leak, tol["finite_speed"])
        checks.upper(f"membership[{i}]", mem, tol["membership"])
        art.csv(f"field_{i}.csv", ["k", "s", "re_F", "im_F"], _field_rows(F))
        report.append({"index": i, "energy": E, "field_norm2": norm**2,
                       "unitarity_defect": defect, "finite_speed_leak": leak,
                       "membership_residual": mem})
    q = cfg["field"]["filter"]
    if q:
        fgrid = LogGridSpec(0.01, 20.0)
        lam = np.linspace(0.5, 4.0, 60)
        res = filter_identity_residual(m, datas[0], q, fgrid, lam)
        checks.upper("filter_identity", res, tol["filter"])
        report.append({"filter_polynomial": q, "filter_residual": res})
    art.json("unitarity.json", {"records": report})


def run_evolve(cfg, art, checks, jobs):
    m, grid, datas = _setup(cfg)
    taus = [float(t) for t in cfg["evolve"]["tau"]]
    rows, report = [], []
    for i, d in enumerate(datas):
        F0 = forward_field(m, d, grid)

        def one(tau, d=d, F0=F0):
            Ft = forward_field(m, evolve_cauchy(m, d, tau, grid), grid)
            shifted = translate(F0, tau)
            valid = F0.s <= F0.s[-1] - max(tau, 0)
            err = np.abs(Ft.F[:, valid] - shifted.F[:, valid]).max() / np.abs(F0.F).max()
            return Ft, float(err)

        for tau, (Ft, err) in zip(taus, _map(one, taus, jobs)):
            checks.upper(f"translation[{i}, tau={tau:g}]", err, cfg["tolerances"]["translation"])
            report.append({"index": i, "tau": tau, "max_rel_mismatch": err})
            for r in _field_rows(Ft):
                rows.append((str(i), FMT % tau) + r)
    art.csv("evolved_fields.csv", ["data", "tau", "k", "s", "re_F", "im_F"], rows)
    art.json("translation.json", {"records": report})


def run_scatter(cfg, art, checks, jobs):
    m, grid, datas = _setup(cfg)
    if grid.chart != "log":
        raise ConfigInvalid("grid.chart", "scattering needs the log chart")
    blk = cfg["scatter"]
    tol = cfg["tolerances"]
    probe = datas[0]
    ks = blk["modes"] if blk["modes"] is not None else [list(k) for k in probe.modes]
    lo, hi, count = blk["lambda"]
    lam = np.linspace(float(lo), float(hi), int(count))
    dyn = scattering_matrices_dynamic(m, ks, lam, probe, grid)
    stat = _map(lambda k: stationary_sample(m, k, lam, blk["stationary_eps"]), ks, jobs)
    rows = []
    for dy, st in zip(dyn, stat):
        ok = ~dy.masked
        rel = np.abs(dy.a - st.a) / np.abs(st.a)
        label = _key(dy.k)
        checks.upper(f"agreement[k={label}]", np.max(rel[ok]), tol["scatter_agreement"])
        checks.upper(f"unitarity[k={label}]", np.max(np.abs(np.abs(dy.a[ok]) - 1)),
                     tol["scatter_unitarity"])
        r_plus, r_minus = indicial_roots(m, dy.k, float(lam[0]))
        expect = 0.5 * m.n + 1j * lam[0]
        err = min(abs(r_plus - expect) + abs(r_minus - np.conj(expect)),
                  abs(r_minus - expect) + abs(r_plus - np.conj(expect)))
        checks.upper(f"indicial_roots[k={label}]", err, tol["indicial"])
        for j in range(len(lam)):
            a = dy.a[j]
            rows.append((label, lam[j], a.real, a.imag, st.a[j].real, st.a[j].imag,
                         float("nan") if dy.masked[j] else rel[j], str(int(dy.masked[j]))))
    art.csv("agreement.csv", ["k", "lambda", "re_dynamic", "im_dynamic", "re_stationary",
                              "im_stationary", "rel_diff", "masked"], rows)
    art.json("scattering.json", {"samples": [s.to_record() for s in dyn + stat]})


def _transport_error(m, x1, w):
    xs = np.linspace(0.2 * x1, x1, 9)
    a = transport_v1(m, x1, w, xs)
    b = transport_closed_form(m, x1, w, xs)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def run_invert(cfg, art, checks, jobs):
    m, _, datas = _setup(cfg)
    blk = cfg["invert"]
    tol = cfg["tolerances"]
    delta = float(blk["delta"])
    wgrid = window_grid(m, delta)
    rows, report = [], []
    for i, d in enumerate(datas):
        F = backward_field(m, _odd(d), wgrid)
        phi = even_mollifier(blk["mollifier"], F.ds)
        jumps = _map(lambda x1, F=F, phi=phi: jump_amplitude(m, F, x1, delta, phi,
                                                             blk["fit_samples"]),
                     blk["x1"], jobs)
        for jm in jumps:
            top = np.abs(jm.predicted).max()
            sig = np.abs(jm.predicted) > 1e-3 * top
            err = float(jm.rel_err[sig].max()) if top > 0 else 0.0
            checks.upper(f"jump[{i}, x1={jm.x1:.4g}]", err, tol["jump"])
            w0 = jm.w_at_x1[np.argmax(np.abs(jm.w_at_x1))]
            checks.upper(f"transport[{i}, x1={jm.x1:.4g}]", _transport_error(m, jm.x1, w0),
                         tol["transport"])
            for k, J, P in zip(d.modes, jm.J, jm.predicted):
                rows.append((str(i), _key(k), jm.x1, J.real, J.imag, P.real, P.imag))
            report.append({"index": i, "x1": jm.x1, "rel_err": err,
                           "fit_residual": jm.residual, "fit_samples": jm.fit_samples,
                           **jm.diagnostics})
    art.csv("jumps.csv", ["data", "k", "x1", "re_J", "im_J", "re_predicted", "im_predicted"],
            rows)
    art.json("invert.json", {"records": report})


def run_recover(cfg, art, checks, jobs):
    m1, _, datas = _setup(cfg)
    blk = cfg["recover"]
    m2 = cfgmod.metric_of(blk["metric2"])
    probes = [_odd(d) for d in datas]
    phi = even_mollifier(blk["mollifier"], 0.01)
    rep = recover_profile(m1, m2, probes, blk["x1"], blk["delta"], phi,
                          differ_tol=blk["differ_tol"],
                          equal_tol=cfg["tolerances"]["profile_equal"])
    if blk["expect"] is not None:
        checks.truth("verdict", rep["verdict"] == blk["expect"], rep["verdict"])
    if rep["verdict"] == "equal":
        checks.upper("profile_difference", max(rep["profile_diff"]),
                     cfg["tolerances"]["profile_equal"])
    for x1, e in zip(rep["x1"], rep["rel_err"]):
        checks.upper(f"jump[x1={x1:.4g}]", e, cfg["tolerances"]["jump"])
    art.csv("profile.csv", ["x1", "J_measured", "J_predicted", "rel_err", "profile_diff"],
            zip(rep["x1"], rep["J_measured"], rep["J_predicted"], rep["rel_err"],
                rep["profile_diff"]))
    art.json("recover.json", {"report": rep})


def run_oracle_h3(cfg, art, checks, jobs):
    m = cfgmod.metric_of(cfg["metric"])
    if m.profile != "hyperbolic" or m.n != 2:
        raise ConfigInvalid("metric", "the H3 oracle needs the hyperbolic profile with n=2")
    grid = cfgmod.grid_of(cfg["grid"])
    blk = cfg["oracle-h3"]
    f = SeparableBump(blk["x_range"][0], blk["x_range"][1], (0.0, 0.0), blk["sigma"])
    s = np.linspace(*blk["s"][:2], int(blk["s"][2]))
    ys = [tuple(y) for y in blk["y"]]
    order = int(blk["order"])

    def pde(g):
        return periodized_field(m, f, int(blk["K"]), g, s, ys)

    coarse_grid = type(grid)(grid.delta * 2, grid.T, grid.K, grid.s_min, grid.s_max, grid.ds)
    fine, coarse = _map(pde, [grid, coarse_grid], jobs)
    lp_hi, lp_lo = _map(lambda o: lax_phillips_field(f, s, ys, order=o), [order, order // 2],
                        jobs)

    def rel(a, b):
        return float(np.linalg.norm(a - b) / np.linalg.norm(b))

    e = rel(fine, lp_hi)
    e_pde = rel(coarse, lp_hi)
    e_quad = rel(fine, lp_lo)
    checks.upper("h3_difference", e, cfg["tolerances"]["h3"])
    checks.truth("pde_refinement_reduces", e < e_pde, f"{e_pde:.3g} -> {e:.3g}")
    checks.truth("quadrature_refinement_reduces", e < e_quad, f"{e_quad:.3g} -> {e:.3g}")
    rows = [(si, y[0], y[1], fine[i, j], lp_hi[i, j])
            for i, si in enumerate(s) for j, y in enumerate(ys)]
    art.csv("h3.csv", ["s", "y1", "y2", "pde", "oracle"], rows)
    art.json("h3.json", {"rel_l2": e, "rel_l2_coarse_pde": e_pde,
                         "rel_l2_coarse_quadrature": e_quad, "order": order})


def convergence_study(cfg, levels=None, jobs=1):
    """Richardson order estimates over ``levels`` successive 2x refinements.

    For field samples the order is ``log2(|q1 - q2| / |q2 - q3|)``; the same
    formula on the signed unitarity defect cancels any level-independent
    floor.  Scattering uses ``log2(e1 / e2)`` on the dynamic/stationary
    disagreement.  Returns a list of row dicts.
    """
    levels = cfg["convergence"]["levels"] if levels is None else levels
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    m, grid, datas = _setup(cfg)
    d = datas[0]
    grids = [grid]
    for _ in range(levels - 1):
        grids.append(grids[-1].refined())
    rows = []
    quantities = cfg["convergence"]["quantities"]
    if "field" in quantities or "unitarity" in quantities:
        fields = _map(lambda g: forward_field(m, d, g), grids, jobs)
        E = energy_norm(m, d)
        defects = [(field_norm(F) ** 2 - E) / E for F in fields]
        for i, g in enumerate(grids):
            if "field" in quantities and i >= 2:
                a = np.linalg.norm(fields[i - 2].F - fields[i - 1].F)
                b = np.linalg.norm(fields[i - 1].F - fields[i].F)
                rows.append({"quantity": "field", "level": i, "delta": g.delta,
                             "value": b, "order": math.log2(a / b)})
            if "unitarity" in quantities:
                order = math.nan
                if i >= 2:
                    order = math.log2(abs(defects[i - 2] - defects[i - 1])
                                      / abs(defects[i - 1] - defects[i]))
                rows.append({"quantity": "unitarity", "level": i, "delta": g.delta,
                             "value": defects[i], "order": order})
    if "scattering" in quantities:
        if grid.chart != "log":
            raise ConfigInvalid("grid.chart", "scattering convergence needs the log chart")
        lam = np.linspace(0.5, 8.0, 16)
        ks = [list(k) for k in d.modes]
        st = [stationary_sample(m, k, lam) for k in ks]
        errs = []
        for g in grids:
            dyn = scattering_matrices_dynamic(m, ks, lam, d, g)
            errs.append(max(float(np.nanmax(np.abs(a.a - b.a) / np.abs(b.a)))
                            for a, b in zip(dyn, st)))
        for i, g in enumerate(grids):
            order = math.log2(errs[i - 1] / errs[i]) if i else math.nan
            rows.append({"quantity": "scattering", "level": i, "delta": g.delta,
                         "value": errs[i], "order": order})
    return rows


def run_convergence(cfg, art, checks, jobs):
    rows = convergence_study(cfg, jobs=jobs)
    tol = cfg["tolerances"]
    for r in rows:
        if r["level"] < 2 or math.isnan(r["order"]):
            continue
        if r["quantity"] == "field":
            checks.lower(f"field_order[level={r['level']}]", r["order"], tol["field_order"])
        elif r["quantity"] == "unitarity":
            checks.lower(f"unitarity_order[level={r['level']}]", r["order"],
                         tol["unitarity_order"])
    art.csv("convergence.csv", ["quantity", "level", "delta", "value", "order"],
            [(r["quantity"], str(r["level"]), r["delta"], r["value"], r["order"])
             for r in rows])


RUNNERS = {
    "field": run_field,
    "evolve": run_evolve,
    "scatter": run_scatter,
    "invert": run_invert,
    "recover": run_recover,
    "oracle-h3": run_oracle_h3,
    "convergence": run_convergence,
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def run(cfg, force=False, jobs=1, out_root=None):
    """Execute a normalized configuration; returns ``(manifest, run_dir)``."""
    h = cfgmod.config_hash(cfg)
    root = Path(out_root or os.environ.get("AHRAD_OUT") or cfg["output"])
    run_dir = root / f"{cfg['experiment']}-{h[:16]}"
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists() and not force:
        with open(manifest_path, encoding="utf-8") as fh:
            return json.load(fh), run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    art = Artifacts(h)
    checks = Checks()
    start = time.perf_counter()
    error = None
    try:
        RUNNERS[cfg["experiment"]](cfg, art, checks, jobs)
    except ConfigInvalid:
        raise
    except AhradError as exc:
        error = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - start
    art.json("config.json", {"config": cfg})
    files = art.flush(run_dir)
    manifest = {
        "config_hash": h,
        "experiment": cfg["experiment"],
        "grid": cfg["grid"],
        "tolerances": cfg["tolerances"],
        "versions": _versions(),
        "wall_time_s": wall,
        "checks": checks.items,
        "error": error,
        "passed": error is None and checks.passed,
        "artifacts": files,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest, run_dir


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ahrad", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=cfgmod.EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--force", action="store_true", help="recompute an existing run")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"ahrad: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    if isinstance(raw, dict):
        raw.setdefault("experiment", args.experiment)
        if raw["experiment"] != args.experiment:
            print(f"ahrad: config is for {raw['experiment']!r}, not {args.experiment!r}",
                  file=sys.stderr)
            return 2
    try:
        cfg = cfgmod.normalize(raw, args.config)
        manifest, run_dir = run(cfg, args.force, args.jobs)
    except ConfigInvalid as exc:
        print(f"ahrad: invalid configuration at {exc.path}: {exc}", file=sys.stderr)
        return 2
    for c in manifest["checks"]:
        mark = "ok  " if c["passed"] else "FAIL"
        print(f"{mark} {c['name']}: {c['value']} {c['bound']} {c['tol']}")
    if manifest["error"]:
        print(f"ahrad: {cfg['experiment']} failed: {manifest['error']}", file=sys.stderr)
    print(f"{'PASS' if manifest['passed'] else 'FAIL'} {run_dir}")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
