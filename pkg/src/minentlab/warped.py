"""Curvature and volume of warped products built from profiles.

2D: ``phi(t)^2 dx^2 + dt^2``.  3D: ``eta_a(t)^2 dx^2 + eta_b(t)^2 dy^2 + dt^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from .errors import InvalidParameter, OutOfRange
from .profiles import Profile

SCAN_TOL = 1e-9


@dataclass(frozen=True)
class WarpedMetric2D:
    phi: Profile
    circumference: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.circumference > 0:
            raise InvalidParameter("circumference must be positive")
        if not self.phi.positive:
            raise InvalidParameter("warping profile must be positive")

    @property
    def domain(self):
        return self.phi.domain

    @property
    def profiles(self):
        return (self.phi,)

    @property
    def factor(self):
        return self.circumference


@dataclass(frozen=True)
class DoubleWarpedMetric3D:
    eta_a: Profile
    eta_b: Profile
    base_area: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.base_area > 0:
            raise InvalidParameter("base_area must be positive")
        if not (self.eta_a.positive and self.eta_b.positive):
            raise InvalidParameter("warping profiles must be positive")
        if not np.allclose(self.eta_a.domain, self.eta_b.domain, rtol=0, atol=1e-12):
            raise InvalidParameter("profiles must share a domain")

    @property
    def domain(self):
        return self.eta_a.domain

    @property
    def profiles(self):
        return (self.eta_a, self.eta_b)

    @property
    def factor(self):
        return self.base_area

    def scaled(self, lam):
        return DoubleWarpedMetric3D(self.eta_a.scaled(lam), self.eta_b.scaled(lam), self.base_area, self.meta)


def _check_in(m, t):
    a, b = m.domain
    t = np.asarray(t, float)
    if np.any(t < a) or np.any(t > b):
        raise OutOfRange(f"t outside domain [{a}, {b}]")


def sectional_curvature_2d(m: WarpedMetric2D, t, side="right"):
    _check_in(m, t)
    return -m.phi.ratio2(t, side)


def sectional_curvatures_3d(m: DoubleWarpedMetric3D, t, side="right"):
    """(sigma_xy, sigma_xt, sigma_yt) at t; one-sided at breakpoints."""
    _check_in(m, t)
    ra, rb = m.eta_a.ratio1(t, side), m.eta_b.ratio1(t, side)
    return -ra * rb, -m.eta_a.ratio2(t, side), -m.eta_b.ratio2(t, side)


def _breakpoints(m):
    return sorted(set(x for p in m.profiles for x in p.breakpoints))


def _curvatures(m, t, side):
    if isinstance(m, WarpedMetric2D):
        return {"sigma": sectional_curvature_2d(m, t, side)}
    xy, xt, yt = sectional_curvatures_3d(m, t, side)
    return {"sigma_xy": xy, "sigma_xt": xt, "sigma_yt": yt}


@dataclass
class CurvatureReport:
    planes: dict  # name -> (min, max)
    bounds: tuple
    verdict: bool
    worst_t: float
    worst_excess: float
    t: np.ndarray = field(repr=False)
    values: dict = field(repr=False)

    def to_csv(self) -> str:
        names = list(self.values)
        lines = ["t," + ",".join(names)]
        for i in range(len(self.t)):
            lines.append(",".join(f"{x:.17g}" for x in [self.t[i]] + [self.values[k][i] for k in names]))
        lo, hi = self.bounds
        lines.append(f"# verdict {str(self.verdict).lower()} bounds {lo:.17g} {hi:.17g} "
                     f"worst_t {self.worst_t:.17g} excess {self.worst_excess:.3e}")
        return "\n".join(lines) + "\n"


def curvature_scan(m, interval, n_samples=10**4, bounds=(-1.0, 0.0), tol=SCAN_TOL, per_piece=None):
    """Evaluate every plane on a uniform grid plus a grid on each piece.

    Both one-sided values are taken at every breakpoint in the interval.
    """
    if n_samples < 2:
        raise InvalidParameter("n_samples must be >= 2")
    t0, t1 = interval
    _check_in(m, [t0, t1])
    per_piece = n_samples if per_piece is None else per_piece
    grids = [np.linspace(t0, t1, n_samples)]
    cuts = [t0] + [x for x in _breakpoints(m) if t0 < x < t1] + [t1]
    for a, b in zip(cuts, cuts[1:]):
        grids.append(np.linspace(a, b, per_piece))
    t = np.unique(np.concatenate(grids))
    right = _curvatures(m, t, "right")
    bp = np.array(cuts[1:-1] + [t1])
    left = _curvatures(m, bp, "left")
    tt = np.concatenate([t, bp])
    vals = {k: np.concatenate([right[k], left[k]]) for k in right}
    order = np.argsort(tt, kind="stable")
    tt = tt[order]
    vals = {k: v[order] for k, v in vals.items()}
    lo, hi = bounds
    planes = {k: (float(v.min()), float(v.max())) for k, v in vals.items()}
    stack = np.vstack(list(vals.values()))
    excess = np.maximum(lo - stack, stack - hi).max(axis=0)
    excess = np.where(np.isnan(excess), np.inf, excess)
    i = int(np.argmax(excess))
    return CurvatureReport(planes, (lo, hi), bool(excess[i] <= tol), float(tt[i]), float(excess[i]), tt, vals)


# -- volume ---------------------------------------------------------------

def _product_pieces(m, t0, t1):
    """Yield (lo, hi, [pieces of each profile]) on a common refinement."""
    cuts = sorted(set([t0, t1] + [x for x in _breakpoints(m) if t0 < x < t1]))
    for a, b in zip(cuts, cuts[1:]):
        mid = a + 0.5 * (b - a) if np.isfinite(b) else a + 1.0
        ps = []
        for p in m.profiles:
            k = int(np.searchsorted(p._bps, mid, side="right"))
            ps.append(p.pieces[k])
        yield a, b, ps


def _closed_form_log(ps, factor, a, b):
    """log of the integral of factor * prod(pieces) on [a, b] if all are exp/const."""
    logc, rate = math.log(factor), 0.0
    for p in ps:
        if p.tail is None:
            return None
        if p.tail[0] == "exp":
            logc += p.tail[1]
            rate += p.tail[2]
        else:
            if p.tail[1] <= 0:
                return -np.inf
            logc += math.log(p.tail[1])
    if rate == 0.0:
        if not np.isfinite(b):
            raise InvalidParameter("infinite interval with constant tail has infinite volume")
        return logc + math.log(b - a)
    # integral of exp(logc - rate t) on [a, b]
    if not np.isfinite(b):
        return logc - rate * a - math.log(rate)
    return logc - rate * a + math.log(-math.expm1(-rate * (b - a))) - math.log(rate)


def _log_integrand(m, ps, t):
    return sum(p.log0(t) for p in ps) + math.log(m.factor)


def log_cusp_volume(m, interval, epsrel=1e-12):
    """log of the volume of the slab over ``interval``; stable for deep cusps."""
    t0, t1 = interval
    if not t0 <= t1:
        raise InvalidParameter("inverted interval")
    a, b = m.domain
    if t0 < a or t1 > b:
        raise OutOfRange("interval outside domain")
    if t0 == t1:
        return -np.inf
    logs = []
    for lo, hi, ps in _product_pieces(m, t0, t1):
        cf = _closed_form_log(ps, m.factor, lo, hi)
        if cf is not None:
            logs.append(cf)
            continue
        if not np.isfinite(hi):
            raise InvalidParameter("infinite interval needs an exponential or constant tail; truncate t1")
        probe = np.linspace(lo, hi, 33)
        ref = float(np.max(_log_integrand(m, ps, probe)))
        val, _ = quad(lambda t: math.exp(float(_log_integrand(m, ps, np.array([t]))[0]) - ref),
                      lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
        logs.append(ref + math.log(val) if val > 0 else -np.inf)
    return float(logsumexp(logs))


def cusp_volume(m, interval, epsrel=1e-12):
    """Volume of the slab over ``interval`` (may underflow for deep cusps)."""
    return math.exp(log_cusp_volume(m, interval, epsrel))
