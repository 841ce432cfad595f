"""Algebraic eigenvalue bound, scalar Jacobi fields and the Jacobian chain."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import Degenerate, InvalidParameter

SUM_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumPoint:
    eigenvalues: tuple

    def __post_init__(self):
        h = np.asarray(self.eigenvalues, float)
        if h.ndim != 1 or len(h) < 1:
            raise InvalidParameter("need a list of eigenvalues")
        if np.any(h < 0) or np.any(h > 1):
            raise InvalidParameter("eigenvalues must lie in [0, 1]")
        if abs(h.sum() - 1.0) > SUM_TOL:
            raise InvalidParameter(f"eigenvalues sum to {h.sum():.15g}, not 1")

    @staticmethod
    def of(values):
        return SpectrumPoint(tuple(float(x) for x in values))

    @property
    def n(self):
        return len(self.eigenvalues)


def _log_phi(h):
    # vectorized over the last axis
    h = np.asarray(h, float)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(h).sum(axis=-1) - np.log1p(-h).sum(axis=-1)


def phi_of_spectrum(p: SpectrumPoint) -> float:
    """prod sqrt(h) / prod (1 - h); +inf at the pole h_i = 1."""
    h = np.asarray(p.eigenvalues, float)
    if np.any(h == 1.0):
        return math.inf
    return float(np.prod(np.sqrt(h)) / np.prod(1.0 - h))


def algebraic_bound(n: int) -> float:
    return n ** (n / 2) / (n - 1) ** n


def algebraic_max(n: int, samples: int = 10**5, seed=0, polish=8):
    """Random search over the simplex plus SLSQP polish of the best draws.

    Returns ``(max_found, argmax)``.
    """
    if n < 3:
        raise InvalidParameter("n must be >= 3")
    rng = np.random.default_rng(seed)
    H = rng.dirichlet(np.ones(n), size=samples)
    lv = _log_phi(H)
    order = np.argsort(lv)[::-1][:polish]
    best_v, best_h = -np.inf, None
    f = lambda h: -float(_log_phi(h))
    grad = lambda h: -(0.5 / h + 1.0 / (1.0 - h))
    bounds = [(1e-12, 1 - 1e-12)] * n
    cons = {"type": "eq", "fun": lambda h: h.sum() - 1.0, "jac": lambda h: np.ones(n)}
    for k in order:
        res = minimize(f, H[k], jac=grad, bounds=bounds, constraints=[cons], method="SLSQP",
                       options={"ftol": 1e-15, "maxiter": 500})
        h = res.x / res.x.sum()
        v = float(_log_phi(h))
        if v > best_v:
            best_v, best_h = v, h
    # raw samples can only be smaller than the polished optimum, but keep them honest
    if lv[order[0]] > best_v:
        best_v, best_h = float(lv[order[0]]), H[order[0]]
    return math.exp(best_v), best_h


# -- Jacobi fields ------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureSchedule:
    """Piecewise-constant kappa on [0, ell]; kappa <= 0 before ell-R, -1 after."""
    breaks: tuple  # t_0 = 0 < t_1 < ... < t_m = ell
    values: tuple  # kappa on [t_k, t_{k+1})

    def __post_init__(self):
        b = np.asarray(self.breaks, float)
        if len(b) != len(self.values) + 1 or b[0] != 0 or np.any(np.diff(b) <= 0):
            raise InvalidParameter("breaks must start at 0, increase, and bound every value")
        if any(v > 0 for v in self.values):
            raise InvalidParameter("kappa must be <= 0")
        if self.values[-1] != -1:
            raise InvalidParameter("schedule must end with kappa = -1")

    @staticmethod
    def from_prefix(prefix_breaks: Sequence[float], prefix_values: Sequence[float], R: float):
        """Prefix pieces on [0, t_m] followed by kappa = -1 on [t_m, t_m + R]."""
        if not R > 0:
            raise InvalidParameter("R must be positive")
        br = [0.0] + [float(x) for x in prefix_breaks]
        return CurvatureSchedule(tuple(br + [br[-1] + R]), tuple(float(v) for v in prefix_values) + (-1.0,))

    @property
    def ell(self):
        return float(self.breaks[-1])

    @property
    def R(self):
        # length of the maximal terminal stretch with kappa = -1
        k = len(self.values) - 1
        while k > 0 and self.values[k - 1] == -1:
            k -= 1
        return self.ell - float(self.breaks[k])


def _propagate_closed(kappa, dt, J, Jp):
    if kappa < 0:
        a = math.sqrt(-kappa)
        c, s = math.cosh(a * dt), math.sinh(a * dt)
        return J * c + Jp * s / a, J * a * s + Jp * c
    if kappa == 0:
        return J + Jp * dt, Jp
    a = math.sqrt(kappa)
    c, s = math.cos(a * dt), math.sin(a * dt)
    return J * c + Jp * s / a, -J * a * s + Jp * c


def jacobi_closed_form(schedule: CurvatureSchedule, J0, J0p, t=None):
    """Exact (J, J') at t (default ell) by piecewise cosh/sinh propagation."""
    t = schedule.ell if t is None else t
    J, Jp = float(J0), float(J0p)
    for a, b, k in zip(schedule.breaks, schedule.breaks[1:], schedule.values):
        if t <= a:
            break
        J, Jp = _propagate_closed(k, min(b, t) - a, J, Jp)
    return J, Jp


@dataclass
class JacobiProfile:
    t: np.ndarray
    J: np.ndarray
    Jp: np.ndarray

    @property
    def II(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.Jp / self.J


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = ((),
      (1 / 5,),
      (3 / 40, 9 / 40),
      (44 / 45, -56 / 15, 32 / 9),
      (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
      (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
      (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84))
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def _dopri_linear(kappa, t0, t1, J, Jp, rtol, atol, h0=None):
    """Integrate (J, J')' = (J', -kappa J) on [t0, t1]; returns (J, J', steps, rejected)."""
    t = t0
    h = h0 or min(0.1, t1 - t0)
    steps = rejected = 0
    while t < t1:
        h = min(h, t1 - t)
        kJ, kP = [0.0] * 7, [0.0] * 7
        for i in range(7):
            yj, yp = J, Jp
            for j, a in enumerate(_A[i]):
                yj += h * a * kJ[j]
                yp += h * a * kP[j]
            kJ[i], kP[i] = yp, -kappa * yj
        nJ = J + h * sum(b * k for b, k in zip(_B5, kJ))
        nP = Jp + h * sum(b * k for b, k in zip(_B5, kP))
        eJ = h * sum(e * k for e, k in zip(_E, kJ))
        eP = h * sum(e * k for e, k in zip(_E, kP))
        sJ = atol + rtol * max(abs(J), abs(nJ))
        sP = atol + rtol * max(abs(Jp), abs(nP))
        err = math.sqrt(0.5 * ((eJ / sJ) ** 2 + (eP / sP) ** 2))
        if err <= 1.0:
            t += h
            J, Jp = nJ, nP
            steps += 1
        else:
            rejected += 1
        h *= min(5.0, max(0.2, 0.9 * (err if err > 0 else 1e-10) ** -0.2))
    return J, Jp, steps, rejected


def jacobi_ii(schedule: CurvatureSchedule, J0, J0p, rtol=1e-12, atol=1e-14):
    """Integrate J'' = -kappa J with an adaptive Dormand-Prince 5(4) pair.

    Integration restarts at every breakpoint of kappa.  Returns
    ``(II(ell), JacobiProfile)`` with II = J'/J; the profile holds the values
    at the breakpoints.
    """
    if J0 == 0 and J0p == 0:
        raise Degenerate("J is identically zero")
    J, Jp = float(J0), float(J0p)
    ts, Js, Jps = [0.0], [J], [Jp]
    for a, b, k in zip(schedule.breaks, schedule.breaks[1:], schedule.values):
        J, Jp, _, _ = _dopri_linear(k, a, b, J, Jp, rtol, atol)
        ts.append(b)
        Js.append(J)
        Jps.append(Jp)
    prof = JacobiProfile(np.array(ts), np.array(Js), np.array(Jps))
    if J == 0:
        raise Degenerate("J vanishes at ell")
    return Jp / J, prof


def ii_lower_bound(R) -> float:
    return 1.0 - 2.0 * math.exp(-2.0 * R)


def radius_for_eps(eps) -> float:
    if not 0 < eps < 2:
        raise InvalidParameter("eps must lie in (0, 2)")
    return 0.5 * math.log(2.0 / eps)


def jacobian_bound(c, n: int, eps) -> float:
    if not c > 0 or n < 2:
        raise InvalidParameter("need c > 0 and n >= 2")
    if not 0 <= eps < 1:
        raise InvalidParameter("eps must lie in [0, 1)")
    return (c / (n - 1)) ** n / (1.0 - eps) ** n


def jacobian_chain_value(spectrum: SpectrumPoint, c, n: int, eps) -> float:
    phi = phi_of_spectrum(spectrum)
    if math.isinf(phi):
        raise Degenerate("spectrum sits on the pole h_i = 1")
    return c**n / n ** (n / 2) * phi / (1.0 - eps) ** n


def jacobian_chain_check(spectrum: SpectrumPoint, c, n: int, eps, slack=1e-9) -> bool:
    if spectrum.n != n:
        raise InvalidParameter("spectrum size must equal n")
    return jacobian_chain_value(spectrum, c, n, eps) <= jacobian_bound(c, n, eps) + slack
