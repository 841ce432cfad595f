"""Command line driver: ``minentlab run cfg.toml`` and ``minentlab sweep``.

Exit status 0 when every check passes, 2 when a check fails, 1 for
configuration errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import tomli

from . import cat0, entropy, jacobian, profiles, surgery, warped
from .errors import InvalidParameter, MinentError, PreconditionFailure

log = logging.getLogger("minentlab")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
DEFAULT_GRID = 10**4


class ConfigError(Exception):
    pass


@dataclass
class Result:
    lines: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> csv text
    checks: list = field(default_factory=list)  # (name, bool)
    plots: dict = field(default_factory=dict)  # name -> (x, y, label)
    summary: dict = field(default_factory=dict)
    extra_files: dict = field(default_factory=dict)

    def check(self, name, ok):
        self.checks.append((name, bool(ok)))

    def say(self, line):
        self.lines.append(line)


class Params:
    """Typed access to one config table with field-level diagnostics."""

    _missing = object()

    def __init__(self, table, section, base_dir="."):
        self.t = table
        self.section = section
        self.base_dir = base_dir
        self.used = set()

    def get(self, key, kind=float, default=_missing):
        self.used.add(key)
        if key not in self.t:
            if default is Params._missing:
                raise ConfigError(f"[{self.section}] missing required field '{key}'")
            return default
        v = self.t[key]
        try:
            if kind is float:
                if isinstance(v, bool):
                    raise TypeError
                return float(v)
            if kind is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError
                return int(v)
            if kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
                return v
            if kind is list:
                if not isinstance(v, list):
                    raise TypeError
                return v
            if kind is str:
                if not isinstance(v, str):
                    raise TypeError
                return v
            if kind is dict:
                if not isinstance(v, dict):
                    raise TypeError
                return v
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.section}] field '{key}': expected {kind.__name__}, got {v!r}") from None
        return v

    def floats(self, key, default=_missing):
        v = self.get(key, list, default)
        try:
            return [float(x) for x in v]
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.section}] field '{key}': expected a list of numbers") from None


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _csv(header, rows):
    out = [",".join(header)]
    out += [",".join(_fmt(x) for x in r) for r in rows]
    return "\n".join(out) + "\n"


def _svg(x, y, label, w=640, h=400, pad=40):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) > 2000:
        idx = np.linspace(0, len(x) - 1, 2000).astype(int)
        x, y = x[idx], y[idx]
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    sx = (w - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (h - 2 * pad) / ((y1 - y0) or 1.0)
    pts = " ".join(f"{pad + (a - x0) * sx:.2f},{h - pad - (b - y0) * sy:.2f}" for a, b in zip(x, y))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n'
            f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>\n'
            f'<text x="{pad}" y="20" font-size="12">{label} x:[{x0:.4g}, {x1:.4g}] y:[{y0:.4g}, {y1:.4g}]</text>\n'
            "</svg>\n")


# -- experiments ----------------------------------------------------------------

def exp_cap(p: Params, ctx):
    ell = p.get("ell", float, 1.0)
    delta = p.get("delta")
    m_r = p.get("m_r", float, 1.0)
    r = Result()
    prof, par = profiles.cusp_cap_profile(ell, delta)
    s = math.sqrt(delta * (1 + delta)) / (1 + 2 * delta)
    lo, hi = -par.eps - 1.0, par.plateau_start + 1.0
    r.say(f"cusp cap: ell = {ell:g}, delta = {delta:g}")
    r.say(f"  eps = {par.eps:.6g}, eps_prime = {par.eps_prime:.6g}, t_delta = {par.t_delta:.10g}")
    r.say(f"  ell_prime = {par.ell_prime:.10g}; interval [{ell * s:.6g}, {4 * ell * s:.6g}]")
    r.check("cap ratio, monotonicity and convexity bounds",
            profiles._cap_checks(prof, delta, lo, hi, ell, par.ell_prime, ctx["grid"]))
    r.check("cap ell_prime interval", ell * s <= par.ell_prime <= 4 * ell * s)
    m = warped.WarpedMetric2D(prof.restricted(lo, hi), 1.0)
    K = (1 + 2 * delta) ** 2
    rep = warped.curvature_scan(m, (lo, hi), ctx["grid"], (-K, 0.0))
    r.check("cap curvature in [-(1+2delta)^2, 0]", rep.verdict)
    ts = np.linspace(lo, hi, min(ctx["grid"], 2001))
    r.tables["profile"] = prof.to_table(ts)
    r.tables["curvature"] = rep.to_csv()
    r.plots["cap_profile"] = (ts, prof.eval0(ts), "phi")

    zbar = surgery.seifert_zeta_bar(delta)
    zeta = p.get("zeta", float, 0.5 * zbar)
    g, gpar = surgery.seifert_cusp_cap(m_r, delta, zeta)
    term = g.phi.eval0(g.domain[1]) * g.circumference
    r.say(f"Seifert cap: T_delta = {g.meta['T_delta']:.10g}, delta_r = {g.meta['delta_r']:.10g}, "
          f"T_r = {g.meta['T_r']:.10g}")
    r.say(f"  zeta = {zeta:.6g} (zeta_bar = {zbar:.6g}); terminal circumference = {term:.10g}")
    r.check("Seifert terminal circumference", abs(term - zeta * m_r) <= 1e-8)
    srep = warped.curvature_scan(g, g.domain, ctx["grid"], (-K, 0.0))
    r.check("Seifert cap curvature", srep.verdict)
    cap_vol = warped.cusp_volume(g, (g.meta["cap_start"], g.domain[1]))
    bound = surgery.seifert_cap_volume_bound(g, gpar)
    r.say(f"  cap-region volume = {cap_vol:.6g} <= {bound:.6g}")
    r.check("Seifert cap volume bound", cap_vol <= bound)
    r.summary = dict(delta=delta, ell_prime=par.ell_prime, eps=par.eps, T_delta=g.meta["T_delta"],
                     delta_r=g.meta["delta_r"])
    return r


def _cusp_spec(p: Params):
    za = p.get("zeta2_a")
    zb = p.get("zeta2_b")
    return surgery.TorusCuspSpec((za, zb), 1.0, p.get("base_area", float, 1.0))


def exp_conformal(p: Params, ctx):
    spec = _cusp_spec(p)
    delta = p.get("delta")
    r = Result()
    m = surgery.conformal_change(spec, delta)
    T, C = m.meta["T"], m.meta["C"]
    r.say(f"conformal change: zeta2 a,b = {spec.coefficients}, delta = {delta:g}")
    r.say(f"  C = {C:.10g}, T_delta = {T:.10g}; M'' = {profiles.BUMP_M2:.10g}, m'' = {profiles.BUMP_m2:.10g}")
    mid = warped.curvature_scan(m, (T, 2 * T), ctx["grid"], (-1 - delta, -1.0), tol=1e-6)
    r.check("curvature in [-1-delta, -1] on [T, 2T]", mid.verdict)
    for a, b in ((0.0, T), (2 * T, 3 * T)):
        rep = warped.curvature_scan(m, (a, b), 100, (-1.0, -1.0), tol=1e-6)
        r.check(f"curvature -1 on [{a:.4g}, {b:.4g}]", rep.verdict)
    ca, cb = spec.coefficients
    ok = all(abs(e.log_eval0(2 * T) + 2 * T - math.log(c)) <= 1e-12 for e, c in zip(m.profiles, (ca, cb)))
    r.check("cross-section at 2T equals e^{-t} zeta^2 h", ok)
    lv1 = math.log(spec.base_area) - T + math.log((1 - math.exp(-T)) / 2)
    lvol = warped.log_cusp_volume(m, (T, 2 * T))
    r.say(f"  log V1 = {lvol:.10g} <= log bound {lv1:.10g}")
    r.check("V1 bound", lvol <= lv1)
    r.tables["curvature"] = mid.to_csv()
    r.summary = dict(delta=delta, T=T, C=C, sigma_min=min(v[0] for v in mid.planes.values()))
    return r


def exp_flatten(p: Params, ctx):
    spec = _cusp_spec(p)
    delta = p.get("delta")
    r = Result()
    m = surgery.conformal_change(spec, delta)
    f = surgery.hyperbolic_flatten(m, delta)
    K = (1 + 2 * delta) ** 2
    rep = warped.curvature_scan(f, (0.0, f.meta["end"]), ctx["grid"], (-K, 0.0))
    r.check("global pinching [-(1+2delta)^2, 0]", rep.verdict)
    col = warped.curvature_scan(f, f.meta["collar"], 100, (0.0, 0.0), tol=1e-10)
    r.check("flat terminal collar", col.verdict)
    vd = surgery.volume_defect(f)
    r.check("volume defect below V1+V2+cap bounds", vd.ok)
    par = f.meta["cap"]
    r.say(f"hyperbolic flatten: delta = {delta:g}, T_delta = {f.meta['T']:.10g}, C = {f.meta['C']:.10g}")
    r.say(f"  cap eps = {par.eps:.6g}, eps_prime = {par.eps_prime:.6g}, ell'/ell = {par.ell_prime:.10g}")
    r.say(f"  log ell'_a, log ell'_b = {f.meta['log_ell_prime'][0]:.10g}, {f.meta['log_ell_prime'][1]:.10g}")
    r.say(f"  log10 |Vol - Vol_hyp| = {vd.log10_defect:.10g}; log10 bound = {vd.log_bound / math.log(10):.10g}")
    rows = [(delta, f.meta["T"], vd.log10_defect, vd.log_bound / math.log(10), vd.ok)]
    r.tables["volume"] = _csv(["delta", "T", "log10_abs_vol_diff", "log10_bound", "ok"], rows)
    r.tables["curvature_summary"] = _csv(["plane", "min", "max"],
                                         [(k, a, b) for k, (a, b) in rep.planes.items()])
    r.summary = dict(delta=delta, T=f.meta["T"], log10_abs_vol_diff=vd.log10_defect,
                     log10_bound=vd.log_bound / math.log(10))
    return r


def exp_tube(p: Params, ctx):
    spec = surgery.TubeSpec(p.get("L"), p.get("r"), tuple(p.floats("end_radii", [1.0, 1.0])), p.get("n", int, 3))
    tm, d = surgery.tube_metric(spec)
    r = Result()
    r.say(f"tube: n = {spec.n}, L = {spec.L:g}, r = {spec.r:g}")
    for k in ("middle_diameter", "volume", "volume_bound", "omega", "end_area_max"):
        r.say(f"  {k} = {d[k]:.10g}")
    r.check("middle diameter = pi r", abs(d["middle_diameter"] - math.pi * spec.r) < 1e-15)
    r.check("middle sections totally geodesic", d["max_abs_drho_middle"] == 0.0)
    r.check("volume bound", d["volume"] <= d["volume_bound"])
    ts = np.linspace(*tm.domain, min(ctx["grid"], 2001))
    r.tables["radius"] = tm.rho.to_table(ts)
    r.plots["tube_radius"] = (ts, tm.rho.eval0(ts), "rho")
    r.summary = dict(L=spec.L, r=spec.r, volume=d["volume"], volume_bound=d["volume_bound"])
    return r


def exp_compat(p: Params, ctx):
    exc = [tuple(int(v) for v in x) for x in p.get("exceptional", list, [])]
    bp = [tuple(float(v) for v in x) for x in p.get("boundary_products", list)]
    data = surgery.SeifertFibrationData(p.get("genus", int, 0), p.get("boundary_count", int), tuple(exc), tuple(bp))
    ok = surgery.leeb_compatibility(data)
    chi = surgery.orbifold_euler(data.genus, data.boundary_count, [q for q, _ in exc])
    e = surgery.euler_number(exc)
    r = Result()
    r.say(f"Seifert data: genus {data.genus}, l = {data.boundary_count}, fibers {exc}")
    r.say(f"  Euler number = {e:.10g}; orbifold Euler characteristic = {chi:.10g}; compatible = {ok}")
    expect = p.get("expect", bool, None)
    if expect is not None:
        r.check("compatibility matches expectation", ok == expect)
    r.tables["compat"] = _csv(["genus", "boundary_count", "euler_number", "chi_orb", "compatible"],
                              [(data.genus, data.boundary_count, e, chi, ok)])
    r.summary = dict(compatible=ok, euler_number=e, chi_orb=chi)
    return r


def make_oracle(d: dict, section="oracle"):
    p = Params(d, section)
    kind = p.get("kind", str)
    if kind == "free":
        rank = p.get("rank", int, 2)
        return entropy.FreeGroupOracle(rank, p.floats("lengths", [1.0] * rank))
    if kind == "z2":
        return entropy.z2_oracle()
    if kind == "cayley":
        rules = [tuple(x) for x in p.get("rules", list, [])]
        return entropy.CayleyOracle(p.get("generators", str), rules, p.get("lengths", dict, None))
    if kind == "h3":
        return entropy.hyperbolic3_oracle()
    if kind == "trivial":
        return entropy.TrivialOracle()
    raise ConfigError(f"[{section}] field 'kind': unknown oracle {kind!r}")


def exp_poincare(p: Params, ctx):
    oracle = make_oracle(p.get("oracle", dict), "poincare.oracle")
    s_grid = p.floats("s_grid")
    cutoff = p.get("cutoff", float, 10.0)
    R_max = p.get("R_max", float, 18.0)
    tol = p.get("tol", float, 1e-3)
    r = Result()
    fit = entropy.growth_regression(oracle, R_max)
    r.say(f"oracle {oracle.name}: growth slope on [{R_max / 2:g}, {R_max:g}] = {fit.slope:.10g} "
          f"(stderr {fit.stderr:.2e}, {fit.n_points} points)")
    r.check("growth regression within tol", fit.stderr <= tol)
    exact = getattr(oracle, "exact_critical_exponent", None)
    if exact:
        r.say(f"  exact critical exponent = {exact():.10g}")
        r.check("regression matches exact exponent", abs(fit.slope - exact()) <= tol)
    rows, prev = [], math.inf
    mono = True
    for s in s_grid:
        ps = entropy.poincare_partial(oracle, s, cutoff)
        mono &= ps <= prev + 1e-12 * abs(prev) if np.isfinite(prev) else True
        prev = ps
        rows.append((s, ps, cutoff, s > fit.slope))
    r.check("partial sums nonincreasing in s", mono if sorted(s_grid) == list(s_grid) else True)
    r.tables["poincare"] = _csv(["s", "partial_sum", "cutoff", "converged"], rows)
    r.summary = dict(slope=fit.slope, stderr=fit.stderr)
    return r


def exp_freeproduct(p: Params, ctx):
    f1 = make_oracle(p.get("factor1", dict), "freeproduct.factor1")
    f2 = make_oracle(p.get("factor2", dict), "freeproduct.factor2")
    L = p.get("L")
    s_grid = p.floats("s_grid")
    cutoff = p.get("cutoff", float, 30.0)
    rep = entropy.free_product_exponent_check(f1, f2, L, s_grid, cutoff=cutoff, budget=p.get("budget", int, 10**6))
    r = Result()
    r.say(f"free product {f1.name} * {f2.name}, L = {L:g}, modeled length cutoff {cutoff:g}")
    r.say(f"  elements enumerated = {rep.n_elements}, pair depth = {rep.depth}, truncated = {rep.truncated}")
    for row in rep.rows:
        r.say(f"  s = {row.s:g}: partial = {row.partial_sum:.12g}, bound = {row.bound:.12g}, "
              f"threshold_L = {row.threshold_L:.6g}, converged = {row.converged}, checked = {row.applicable}")
    r.check("partial sums below tube bound", rep.ok)
    r.tables["freeproduct"] = rep.to_csv()
    r.summary = dict(L=L, converged=rep.rows[0].converged, threshold_L=rep.rows[0].threshold_L,
                     partial_sum=rep.rows[0].partial_sum)
    return r


def _wedge_from(p: Params):
    fixture = p.get("fixture", str, None)
    if fixture is not None:
        if fixture not in cat0.FIXTURES:
            raise ConfigError(f"[{p.section}] field 'fixture': unknown {fixture!r}; one of {sorted(cat0.FIXTURES)}")
        return cat0.FIXTURES[fixture]()
    leaves = [cat0.make_leaf(d) for d in p.get("leaves", list)]
    hubs = [[(int(m[0]), tuple(m[1:])) for m in h] for h in p.get("hubs", list, [])]
    return cat0.WedgeSpace(leaves, hubs)


def read_measure_csv(path):
    atoms = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            leaf = int(row["leaf"])
            coords = [float(row["coord1"])]
            if row.get("coord2") not in (None, ""):
                coords.append(float(row["coord2"]))
            atoms.append((cat0.PointRef.of(leaf, *coords), float(row["weight"])))
    return atoms


def _measure_from(p: Params, X):
    if "measure_csv" in p.t:
        path = os.path.join(p.base_dir, p.get("measure_csv", str))
        atoms = read_measure_csv(path)
    else:
        atoms = []
        for m in p.get("masses", list):
            leaf, *coords, w = m
            dim = X.leaves[int(leaf)].dim
            atoms.append((cat0.PointRef.of(int(leaf), *coords[:dim]), float(w)))
    for a, _ in atoms:
        X.validate(a)
    return cat0.PointedMeasure.of(atoms)


def exp_barycenter(p: Params, ctx):
    X = _wedge_from(p)
    mu = _measure_from(p, X)
    tol = p.get("tol", float, 1e-9)
    b, rep = cat0.barycenter(X, mu, tol=tol, seed=ctx["seed"])
    rng = np.random.default_rng(ctx["seed"] + 1)
    b2, _ = cat0.barycenter(X, mu, tol=tol, seed=ctx["seed"],
                            init=cat0.random_point(X, rng, leaf=b.leaf))
    r = Result()
    r.say(f"barycenter: leaf {b.leaf}, coords {b.coords}")
    r.say(f"  B = {rep.value:.12g}, certificate = {rep.certificate:.3e}, iterations = {rep.iterations}")
    r.check("certificate <= tol", rep.certificate <= tol)
    agree = cat0.distance(X, b, b2)
    r.check("restart agreement within 10 tol", agree <= 10 * tol)
    r.extra_files["data/barycenter.json"] = rep.to_json() + "\n"
    r.tables["barycenter"] = _csv(["leaf"] + [f"coord{i + 1}" for i in range(len(b.coords))] + ["B", "certificate"],
                                  [(b.leaf, *b.coords, rep.value, rep.certificate)])
    r.summary = dict(leaf=b.leaf, B=rep.value, certificate=rep.certificate)
    return r


def exp_comparison(p: Params, ctx):
    names = p.get("fixtures", list, ["euclidean", "hyperbolic", "tripod"])
    samples = p.get("samples", int, 10**4)
    rng = np.random.default_rng(ctx["seed"])
    r = Result()
    rows = []
    for name in names:
        if name not in cat0.FIXTURES:
            raise ConfigError(f"[comparison] field 'fixtures': unknown {name!r}")
        X = cat0.FIXTURES[name]()
        gaps = np.array([cat0.comparison_gap(X, cat0.random_point(X, rng), cat0.random_point(X, rng),
                                             cat0.random_point(X, rng), rng.uniform()) for _ in range(samples)])
        ok = bool(gaps.min() >= -cat0.COMPARISON_SLACK)
        r.say(f"{name}: {samples} quadruples, min gap {gaps.min():.3e}, max gap {gaps.max():.3e}")
        r.check(f"comparison inequality on {name}", ok)
        rows.append((name, samples, gaps.min(), gaps.max(), ok))
    r.tables["comparison"] = _csv(["fixture", "samples", "min_gap", "max_gap", "ok"], rows)
    return r


def exp_algebraic(p: Params, ctx):
    n = p.get("n", int, 3)
    samples = p.get("samples", int, 10**5)
    cs = p.floats("c", [2.0])
    epss = p.floats("eps", [0.0])
    draws = p.get("draws", int, 100)
    r = Result()
    mx, arg = jacobian.algebraic_max(n, samples, seed=ctx["seed"])
    bound = jacobian.algebraic_bound(n)
    r.say(f"algebraic bound n = {n}: max {mx:.6f} at ({', '.join(f'{x:.6f}' for x in arg)}); bound {bound:.6f}")
    r.check("max below n^(n/2)/(n-1)^n", mx <= bound + 1e-9)
    r.check("argmax at the uniform point", float(np.abs(arg - 1.0 / n).max()) <= 1e-4)
    rows = []
    seeds = np.random.SeedSequence(ctx["seed"]).generate_state(draws)
    all_ok = True
    for sd in seeds:
        h = np.random.default_rng(int(sd)).dirichlet(np.ones(n))
        h = h / h.sum()
        sp = jacobian.SpectrumPoint.of(h)
        phi = jacobian.phi_of_spectrum(sp)
        for c in cs:
            for e in epss:
                ok = jacobian.jacobian_chain_check(sp, c, n, e)
                all_ok &= ok
                rows.append((int(sd), n, c, e, phi, jacobian.jacobian_bound(c, n, e), ok))
    r.check("jacobian chain on random spectra", all_ok)
    r.tables["algebraic"] = _csv(["seed", "n", "c", "eps", "phi", "bound", "ok"], rows)
    r.summary = dict(n=n, max=mx, bound=bound)
    return r


def exp_jacobi(p: Params, ctx):
    br = p.floats("breaks", [])
    vals = p.floats("values", [])
    R = p.get("R")
    sch = jacobian.CurvatureSchedule.from_prefix(br, vals, R)
    J0, J0p = p.get("J0", float, 0.0), p.get("J0p", float, 1.0)
    ii, prof = jacobian.jacobi_ii(sch, J0, J0p)
    lb = jacobian.ii_lower_bound(sch.R)
    r = Result()
    r.say(f"Jacobi field: ell = {sch.ell:g}, R = {sch.R:g}; II(ell) = {ii:.12g} >= {lb:.12g}")
    r.check("II(ell) >= 1 - 2 exp(-2R)", ii >= lb - 1e-8)
    r.tables["jacobi"] = _csv(["t", "J", "Jp", "II"], zip(prof.t, prof.J, prof.Jp, prof.II))
    n_rand = p.get("random", int, 0)
    rng = np.random.default_rng(ctx["seed"])
    rows, ok_all = [], True
    for k in range(n_rand):
        m = int(rng.integers(0, 4))
        b = np.cumsum(rng.uniform(0.1, 2.0, m))
        v = rng.uniform(-4.0, 0.0, m)
        Rk = rng.uniform(0.5, 5.0)
        s = jacobian.CurvatureSchedule.from_prefix(b, v, Rk)
        val, _ = jacobian.jacobi_ii(s, 0.0, rng.uniform(0.1, 3.0))
        ok = val >= jacobian.ii_lower_bound(Rk) - 1e-8
        ok_all &= ok
        rows.append((k, Rk, val, jacobian.ii_lower_bound(Rk), ok))
    if n_rand:
        r.check("random schedules satisfy the bound", ok_all)
        r.tables["jacobi_random"] = _csv(["draw", "R", "II", "bound", "ok"], rows)
    r.summary = dict(II=ii, bound=lb)
    return r


def exp_minent(p: Params, ctx):
    vols = p.floats("volumes", [])
    delta = p.get("delta", float, 0.0)
    n = p.get("n", int, 3)
    r = Result()
    tgt = entropy.minent_target(vols)
    bb = entropy.ent_upper_bound_bishop(delta, n)
    r.say(f"MinEnt target 2 (sum V)^(1/3) = {tgt:.10g} for volumes {vols}")
    r.say(f"Bishop-Gunther entropy bound (n-1)(1+2delta) = {bb:.10g}")
    r.tables["minent"] = _csv(["sum_volume", "target", "delta", "n", "bishop_bound"], [(sum(vols), tgt, delta, n, bb)])
    r.summary = dict(target=tgt, bishop=bb)
    return r


EXPERIMENTS = {
    "cap": exp_cap, "conformal": exp_conformal, "flatten": exp_flatten, "tube": exp_tube,
    "compat": exp_compat, "poincare": exp_poincare, "freeproduct": exp_freeproduct,
    "barycenter": exp_barycenter, "comparison": exp_comparison, "algebraic": exp_algebraic,
    "jacobi": exp_jacobi, "minent": exp_minent,
}


# -- driver -------------------------------------------------------------------

def load_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    kind = cfg.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError(f"field 'experiment': expected one of {sorted(EXPERIMENTS)}, got {kind!r}")
    return cfg


def _section(cfg):
    kind = cfg["experiment"]
    for name in (kind, "cusp" if kind in ("conformal", "flatten") else None):
        if name and name in cfg:
            if not isinstance(cfg[name], dict):
                raise ConfigError(f"[{name}] must be a table")
            return name, cfg[name]
    return kind, {}


def execute(cfg, base_dir, seed=None, grid=None):
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    grid = int(cfg.get("grid", DEFAULT_GRID) if grid is None else grid)
    if grid < 2:
        raise ConfigError("field 'grid': must be >= 2")
    name, table = _section(cfg)
    params = Params(table, name, base_dir)
    try:
        res = EXPERIMENTS[cfg["experiment"]](params, dict(seed=seed, grid=grid))
    except (InvalidParameter, PreconditionFailure) as exc:
        raise ConfigError(f"[{name}] {exc}") from None
    unknown = sorted(set(table) - params.used)
    if unknown:
        raise ConfigError(f"[{name}] unknown field(s): {', '.join(unknown)}")
    return res


def _atomic_write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_outputs(res: Result, out, header):
    lines = list(header) + [""] + res.lines + ["", "checks:"]
    for name, ok in res.checks:
        lines.append(f"  [{'pass' if ok else 'FAIL'}] {name}")
    failed = [n for n, ok in res.checks if not ok]
    lines.append("")
    lines.append("status: " + ("all checks passed" if not failed else "FAILED: " + "; ".join(failed)))
    _atomic_write(os.path.join(out, "report.txt"), "\n".join(lines) + "\n")
    for name, text in res.tables.items():
        _atomic_write(os.path.join(out, "data", f"{name}.csv"), text)
    for name, (x, y, label) in res.plots.items():
        _atomic_write(os.path.join(out, "plots", f"{name}.svg"), _svg(x, y, label))
    for rel, text in res.extra_files.items():
        _atomic_write(os.path.join(out, rel), text)
    return failed


def run(config_path, out=None, seed=None, grid=None) -> int:
    try:
        cfg = load_config(config_path)
        out = out or cfg.get("out") or os.path.join("out", cfg["experiment"])
        res = execute(cfg, os.path.dirname(os.path.abspath(config_path)), seed, grid)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MinentError as exc:
        print(f"check failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    failed = write_outputs(res, out, [f"experiment: {cfg['experiment']}", f"config: {os.path.basename(config_path)}"])
    print("\n".join(res.lines))
    if failed:
        print("failed checks: " + "; ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _parse_value(s):
    s = s.strip()
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if s in ("true", "false"):
        return s == "true"
    return s


def sweep(config_path, param, values, out=None, seed=None, grid=None) -> int:
    try:
        cfg = load_config(config_path)
        vals = [_parse_value(v) for v in (values.split(",") if isinstance(values, str) else values) if str(v).strip()]
        if not vals:
            raise ConfigError("--values: empty value list")
        out = out or cfg.get("out") or os.path.join("out", f"{cfg['experiment']}_sweep")
        name, _ = _section(cfg)
        sec, key = param.split(".", 1) if "." in param else (name, param)
        results = []
        for v in vals:
            c = copy.deepcopy(cfg)
            c.setdefault(sec, {})[key] = v
            results.append((v, execute(c, os.path.dirname(os.path.abspath(config_path)), seed, grid)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MinentError as exc:
        print(f"check failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    failed = []
    lines = [f"sweep of {cfg['experiment']} over {param} = {vals}", ""]
    for v, res in results:
        sub = os.path.join(out, f"{key}={v}")
        f = write_outputs(res, sub, [f"experiment: {cfg['experiment']}", f"{param} = {v}"])
        failed += [f"{key}={v}: {x}" for x in f]
        lines.append(f"{key} = {v}: " + ("pass" if not f else "FAIL " + "; ".join(f)))
    # per-value summaries and concatenated tables
    keys = [k for k in results[0][1].summary if k != key]
    rows = [(v, *[res.summary.get(k, "") for k in keys], all(ok for _, ok in res.checks)) for v, res in results]
    _atomic_write(os.path.join(out, "sweep.csv"), _csv([key] + keys + ["checks_ok"], rows))
    for tname in results[0][1].tables:
        parts = []
        for i, (v, res) in enumerate(results):
            text = res.tables.get(tname, "")
            body = [ln for ln in text.splitlines() if not ln.startswith("#")]
            if not body:
                continue
            if not parts:
                parts.append(f"{key}," + body[0])
            parts += [f"{_fmt(v)},{ln}" for ln in body[1:]]
        _atomic_write(os.path.join(out, "data", f"sweep_{tname}.csv"), "\n".join(parts) + "\n")
    _atomic_write(os.path.join(out, "report.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    if failed:
        print("failed checks: " + "; ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="minentlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--grid", type=int, default=None)
        if name == "sweep":
            sp.add_argument("--param", required=True)
            sp.add_argument("--values", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.cmd == "run":
        return run(args.config, args.out, args.seed, args.grid)
    return sweep(args.config, args.param, args.values, args.out, args.seed, args.grid)


if __name__ == "__main__":
    sys.exit(main())
