"""Cusp capping, conformal change, flattening and connected-sum tubes.

Also the Seifert bookkeeping: orbifold Euler characteristic, Euler number and
the compatibility test for boundary flat metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .errors import InvalidParameter, NoSolution, PreconditionFailure
from .profiles import (BUMP_M2, BUMP_m2, CapParameters, Piece, Profile, _bump_parts,
                       cusp_cap_profile, t_delta)
from .warped import DoubleWarpedMetric3D, WarpedMetric2D, log_cusp_volume

REL = 1e-12


# -- Seifert bookkeeping -----------------------------------------------------

@dataclass(frozen=True)
class SeifertFibrationData:
    genus: int
    boundary_count: int
    exceptional: tuple = ()
    boundary_products: tuple = ()  # (sigma_i(f,f), sigma_i(d_i,f)) per boundary torus

    def __post_init__(self):
        for p, q in self.exceptional:
            if p < 2 or math.gcd(p, q) != 1:
                raise InvalidParameter(f"exceptional fiber ({p}, {q}) must have p >= 2 and gcd 1")


def euler_number(exceptional) -> float:
    return float(sum(Fraction(q, p) for p, q in exceptional))


def leeb_compatibility(data: SeifertFibrationData) -> bool:
    """Do the boundary flat metrics fit a Seifert fibration with these invariants?"""
    if data.boundary_count < 1:
        raise InvalidParameter("closed Seifert manifolds are out of scope")
    if len(data.boundary_products) != data.boundary_count:
        raise InvalidParameter("need one (sigma(f,f), sigma(d,f)) pair per boundary torus")
    ff = np.array([x[0] for x in data.boundary_products], float)
    df = np.array([x[1] for x in data.boundary_products], float)
    f2 = ff[0]
    if np.any(np.abs(ff - f2) > REL * np.abs(ff).max()):
        return False
    target = -euler_number(data.exceptional) * f2
    scale = max(abs(target), np.abs(df).max(), abs(f2))
    return bool(abs(df.sum() - target) <= REL * scale)


def orbifold_euler(genus: int, boundary_count: int, cone_orders: Sequence[int]) -> float:
    """chi(|O|) - sum(1 - 1/p).  Negative genus counts cross-caps."""
    if boundary_count < 0:
        raise InvalidParameter("boundary_count must be >= 0")
    if any(int(p) != p or p < 2 for p in cone_orders):
        raise InvalidParameter("cone orders must be integers >= 2")
    chi = 2 - 2 * genus - boundary_count if genus >= 0 else 2 + genus - boundary_count
    return float(chi - sum(1 - Fraction(1, int(p)) for p in cone_orders))


# -- Seifert cusp cap ------------------------------------------------------

@lru_cache(maxsize=256)
def _unit_cap_ratio(d, shrink=0):
    e = min(d / 10.0, 0.01 * t_delta(d)) * 0.5**shrink
    _, par = cusp_cap_profile(1.0, d, eps=e, check=False)
    return par.ell_prime


def _log_terminal(d, shrink=0):
    # log of terminal circumference / m_r for the cap started at T = 1/d
    return math.log(_unit_cap_ratio(d, shrink)) - 1.0 / d


def seifert_zeta_bar(delta):
    return 0.5 * math.exp(_log_terminal(delta))


def seifert_cusp_cap(m_r, delta, zeta):
    """Cap a cusp of circumference ``m_r`` so its terminal length is ``zeta*m_r``.

    Returns ``(WarpedMetric2D, CapParameters)``; the metric's ``meta`` holds
    T_delta = 1/delta, the root delta_r actually used and T_r = 1/delta_r.
    """
    for k, v in (("m_r", m_r), ("delta", delta), ("zeta", zeta)):
        if not v > 0:
            raise InvalidParameter(f"{k} must be positive")
    if delta > 0.5:
        raise InvalidParameter("delta must be <= 1/2")
    zbar = seifert_zeta_bar(delta)
    if zeta > zbar:
        raise NoSolution(f"zeta={zeta:.6g} unreachable; achievable range (0, {zbar:.6g}]", achievable=(0.0, zbar))
    target = math.log(zeta)
    shrink = 0
    for _ in range(5):
        f = lambda u: _log_terminal(math.exp(u), shrink) - target
        hi = math.log(delta)
        lo = hi - 1.0
        while f(lo) > 0:
            lo -= 1.0
        u = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        d_r = math.exp(u)
        e = min(d_r / 10.0, 0.01 * t_delta(d_r)) * 0.5**shrink
        cap, par = cusp_cap_profile(1.0, d_r, eps=e, check=True)
        if par.shrink_steps == 0:
            break
        shrink += par.shrink_steps
    else:
        raise NoSolution("cap checks kept failing during root finding")
    T = 1.0 / d_r
    phi = cap.shifted(T).log_scaled(-T)
    end = T + max(par.t_delta + 2 * par.ramp_width, par.plateau_start + par.ramp_width)
    phi = phi.restricted(0.0, end)
    phi.name = "seifert_cap"
    meta = dict(T_delta=1.0 / delta, delta=delta, delta_r=d_r, T_r=T, zeta=zeta, zeta_bar=zbar,
                cap_start=T - par.eps, end=end)
    return WarpedMetric2D(phi, float(m_r), meta), par


def seifert_cap_volume_bound(m, par: CapParameters):
    d = par.delta
    return math.exp(-(1.0 / d - 1.0)) * (math.log1p(1.0 / d) / (2 * (1 + 2 * d)) + 1.0) * m.circumference


# -- conformal change ---------------------------------------------------------

@dataclass(frozen=True)
class TorusCuspSpec:
    h_diag: tuple
    zeta2: float
    base_area: float = 1.0
    k_diag: tuple = (1.0, 1.0)

    def __post_init__(self):
        if tuple(self.k_diag) != (1.0, 1.0):
            raise InvalidParameter("reference metric must be diagonalized to (1, 1)")
        a, b = self.h_diag
        if not (a > 0 and b > 0 and self.zeta2 > 0 and self.base_area > 0):
            raise InvalidParameter("h_diag, zeta2 and base_area must be positive")
        if not (self.zeta2 * a < 1 and self.zeta2 * b < 1):
            raise InvalidParameter("need zeta2*a < 1 and zeta2*b < 1")

    @property
    def coefficients(self):
        return self.zeta2 * self.h_diag[0], self.zeta2 * self.h_diag[1]


def conformal_constant(spec: TorusCuspSpec, M2=BUMP_M2, m2=BUMP_m2):
    ca, cb = spec.coefficients
    return max(4 * (1 - ca) / ca, 4 * (1 - cb) / cb, (M2 + 4) / ca, (M2 + 4) / cb, math.sqrt(-m2 / 4))


def _transition_piece(T, c):
    alpha = 1.0 - c

    def parts(t):
        s = (np.asarray(t, float) - T) / T
        b, b1, b2, _ = _bump_parts(s)
        b, b1, b2 = (x.reshape(np.shape(t)) for x in (b, b1, b2))
        g = b + (1.0 - b) * c
        return g, alpha * b1 / T, alpha * b2 / T**2

    def log0(t):
        g, _, _ = parts(t)
        return -np.asarray(t, float) + np.log(g)

    def r1(t):
        g, g1, _ = parts(t)
        return -1.0 + g1 / g

    def r2(t):
        g, g1, g2 = parts(t)
        return 1.0 - 2.0 * g1 / g + g2 / g

    return Piece.from_log(T, 2 * T, log0, r1, r2)


def conformal_change(spec: TorusCuspSpec, delta) -> DoubleWarpedMetric3D:
    """Deform the cusp e^{-2t}(dx^2+dy^2) into e^{-2t} zeta^2 h beyond 2T."""
    if not 0 < delta < 1:
        raise InvalidParameter("delta must lie in (0, 1)")
    C = conformal_constant(spec)
    T = C / delta
    etas = []
    for name, c in zip(("eta_a", "eta_b"), spec.coefficients):
        pieces = [Piece.exponential(0.0, T, 0.0, 1.0), _transition_piece(T, c),
                  Piece.exponential(2 * T, np.inf, math.log(c), 1.0)]
        etas.append(Profile(pieces, name=name, smoothness="Cinf"))
    meta = dict(kind="conformal", T=T, C=C, delta=delta, coefficients=spec.coefficients,
                M2=BUMP_M2, m2=BUMP_m2, spec=spec)
    return DoubleWarpedMetric3D(etas[0], etas[1], spec.base_area, meta)


def hyperbolic_flatten(m: DoubleWarpedMetric3D, delta) -> DoubleWarpedMetric3D:
    """Cap both warping functions of a conformal-change cusp to constants near 3T."""
    meta = m.meta or {}
    if meta.get("kind") != "conformal":
        raise PreconditionFailure("input must come from conformal_change")
    for eta in m.profiles:
        tail = eta.pieces[-1].tail
        if tail is None or tail[0] != "exp" or tail[2] != 1.0 or eta.pieces[-1].lo > 2 * meta["T"]:
            raise PreconditionFailure("profile tail is not exactly exponential beyond 2T")
    T = meta["T"]
    cap, par = cusp_cap_profile(1.0, delta)
    end = 3 * T + 2 * par.t_delta
    if 3 * T + par.plateau_start >= end:
        raise NoSolution("cap plateau does not fit before 3T + 2 t_delta")
    out = []
    for eta in m.profiles:
        logc = eta.pieces[-1].tail[1]
        capped = cap.shifted(3 * T).log_scaled(logc - 3 * T)
        out.append(eta.spliced(capped, 2.5 * T, name=eta.name + "_flat", smoothness="C2",
                               domain=(0.0, end)))
    m2 = dict(meta)
    log_lp = [e.pieces[-1].tail[1] - 3 * T + math.log(par.ell_prime) for e in m.profiles]
    m2.update(kind="flattened", cap=par, end=end, cap_start=3 * T - par.eps,
              collar=(3 * T + par.plateau_start, end), log_ell_prime=tuple(log_lp))
    return DoubleWarpedMetric3D(out[0], out[1], m.base_area, m2)


@dataclass
class VolumeDefect:
    delta: float
    T: float
    log_defect: float  # log |Vol(modified) - Vol(hyperbolic)|
    log_v1_bound: float
    log_v2_bound: float
    log_cap_bound: float

    @property
    def log_bound(self):
        return float(logsumexp([self.log_v1_bound, self.log_v2_bound, self.log_cap_bound]))

    @property
    def ok(self):
        return self.log_defect <= self.log_bound

    @property
    def log10_defect(self):
        return self.log_defect / math.log(10)


def _log_d1(T, c_a, c_b, A):
    # log of int_T^{2T} e^{-2t} A (1 - g_a g_b); 1-g_a g_b = x(al+be) - x^2 al be, x = 1-bump
    al, be = 1 - c_a, 1 - c_b

    def logf(s):
        s = np.atleast_1d(s)
        _, _, _, lx = _bump_parts(s)
        x = np.exp(lx)
        return -2 * T * s + lx + np.log(al + be - x * al * be)

    s = np.linspace(1e-6, 1.0, 20001)
    lv = logf(s)
    k = int(np.argmax(lv))
    ref = float(lv[k])
    peak = float(s[k])
    val, _ = quad(lambda u: math.exp(float(logf(u)[0]) - ref), 0.0, 1.0, points=[peak],
                  epsabs=0.0, epsrel=1e-11, limit=400)
    return math.log(A * T) - 2 * T + ref + math.log(val)


def volume_defect(m: DoubleWarpedMetric3D) -> VolumeDefect:
    """Compare a flattened cusp with the hyperbolic cusp e^{-2t} A on [0, inf).

    The difference is assembled piece by piece in log form because at
    T ~ 10^3 every term underflows.
    """
    meta = m.meta
    if meta.get("kind") != "flattened":
        raise PreconditionFailure("volume_defect expects hyperbolic_flatten output")
    T, delta, A = meta["T"], meta["delta"], m.base_area
    c_a, c_b = meta["coefficients"]
    par = meta["cap"]
    t_cap = meta["cap_start"]
    log_d1 = _log_d1(T, c_a, c_b, A)
    # e^{-2t} A (1 - c_a c_b) on [2T, t_cap]
    log_d2 = math.log(A * (1 - c_a * c_b) / 2) - 4 * T + math.log(-math.expm1(-2 * (t_cap - 2 * T)))
    log_h3 = math.log(A / 2) - 2 * t_cap
    log_s = float(logsumexp([log_d1, log_d2, log_h3]))
    log_vcap = log_cusp_volume(m, (t_cap, meta["end"]))
    if log_vcap < log_s:
        log_def = log_s + math.log1p(-math.exp(log_vcap - log_s))
    else:
        log_def = log_vcap + math.log1p(-math.exp(log_s - log_vcap))
    v_max = A * c_a * c_b
    lv1 = math.log(A) - T + math.log((1 - math.exp(-T)) / 2)
    lv2 = math.log(v_max / 2) - 4 * T
    lcap = math.log(v_max) - 2 * t_cap + math.log(2 * par.t_delta + par.eps)
    return VolumeDefect(delta, T, log_def, lv1, lv2, lcap)


# -- connected-sum tube ---------------------------------------------------------

def sphere_area(n):
    """Area of the unit sphere S^{n-1} in R^n."""
    return math.exp(math.log(2) + (n / 2) * math.log(math.pi) - gammaln(n / 2))


@dataclass(frozen=True)
class TubeSpec:
    L: float
    r: float
    end_radii: tuple = (1.0, 1.0)
    n: int = 3

    def __post_init__(self):
        if not (self.L > 0 and self.r > 0):
            raise InvalidParameter("L and r must be positive")
        if self.r > 2 / (3 * math.pi):
            raise InvalidParameter(f"r={self.r} exceeds 2/(3 pi)")
        if self.n < 2 or any(not R > 0 for R in self.end_radii):
            raise InvalidParameter("need n >= 2 and positive end radii")


@dataclass(frozen=True)
class TubeMetric:
    """dt^2 + rho(t)^2 g_{S^{n-1}} on [-L-r, L+r]."""
    rho: Profile
    n: int
    spec: TubeSpec

    @property
    def domain(self):
        return self.rho.domain

    @property
    def profiles(self):
        return (self.rho,) * (self.n - 1)

    @property
    def factor(self):
        return sphere_area(self.n)


def _blend_piece(lo, hi, R, r, rising):
    # rho^2 = w R^2 + (1-w) r^2; w runs 1 -> 0 (or 0 -> 1) across [lo, hi]
    w = hi - lo
    d = R * R - r * r

    def parts(t):
        t = np.asarray(t, float)
        s = (t - lo) / w if not rising else (hi - t) / w
        b, b1, b2, _ = _bump_parts(s)
        b, b1, b2 = (x.reshape(np.shape(t)) for x in (b, b1, b2))
        sgn = -1.0 if rising else 1.0
        q = b * R * R + (1 - b) * r * r
        return q, sgn * b1 * d / w, b2 * d / (w * w)

    def f0(t):
        return np.sqrt(parts(t)[0])

    def f1(t):
        q, q1, _ = parts(t)
        return q1 / (2 * np.sqrt(q))

    def f2(t):
        q, q1, q2 = parts(t)
        rho = np.sqrt(q)
        return q2 / (2 * rho) - q1 * q1 / (4 * rho**3)

    return Piece.from_values(lo, hi, f0, f1, f2)


def tube_metric(spec: TubeSpec):
    """Round tube of radius r blended to the end radii on the outer collars."""
    L, r = spec.L, spec.r
    R1, R2 = spec.end_radii
    a, b = -L - r, L + r
    c1, c2 = -L - 2 * r / 3, -L - r / 3
    pieces = [Piece.constant(a, c1, R1), _blend_piece(c1, c2, R1, r, rising=False),
              Piece.constant(c2, -c2, r), _blend_piece(-c2, -c1, R2, r, rising=True),
              Piece.constant(-c1, b, R2)]
    rho = Profile(pieces, name="tube_radius", smoothness="Cinf")
    tm = TubeMetric(rho, spec.n, spec)
    omega = sphere_area(spec.n)
    A = max(omega * R**(spec.n - 1) for R in (R1, R2))
    vol = math.exp(log_cusp_volume(tm, (a, b)))
    mid = np.linspace(-L, L, 101)
    diag = dict(middle_diameter=math.pi * r, volume=vol, omega=omega, end_area_max=A,
                volume_bound=A * 2 * r + omega * r**(spec.n - 1) * (2 * L + 2 * r),
                blend_intervals=((c1, c2), (-c2, -c1)),
                max_abs_drho_middle=float(np.abs(rho.eval1(mid)).max()))
    return tm, diag
