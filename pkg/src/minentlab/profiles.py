"""Piecewise warping functions with exact derivatives.

A :class:`Profile` is a list of :class:`Piece` objects glued at breakpoints.
Every piece can report its value, first and second derivatives, and the
log-value together with the ratios ``phi'/phi`` and ``phi''/phi``.  The ratio
form is what the curvature code uses, so profiles that live far out in a cusp
(values like ``exp(-7000)``) still give finite curvatures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import expit

from .errors import InvalidParameter, NoSolution, OutOfRange, PreconditionFailure

SMOOTHNESS = ("C0", "C1", "C2", "Cinf")

# Extremes of bump'' on (0, 1), from a midpoint scan with 10**6 points
# (see bump_second_derivative_extrema, which recomputes them).
BUMP_SCAN_POINTS = 10**6
BUMP_M2 = 9.841042301753522
BUMP_m2 = -9.841042301753514

Fn = Callable[[np.ndarray], np.ndarray]


class Piece:
    """One smooth piece of a profile on ``[lo, hi]``.

    Build with :meth:`from_values`, :meth:`from_log`, :meth:`exponential` or
    :meth:`constant`.  ``tail`` is ``("exp", logc, rate)`` when the piece is
    exactly ``exp(logc - rate*t)`` and ``("const", value)`` when constant; the
    volume code integrates such pieces in closed form.
    """

    def __init__(self, lo, hi, f0, f1, f2, log0, r1, r2, tail=None):
        if not lo < hi:
            raise InvalidParameter(f"empty piece [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)
        self.f0, self.f1, self.f2 = f0, f1, f2
        self.log0, self.r1, self.r2 = log0, r1, r2
        self.tail = tail

    @classmethod
    def from_values(cls, lo, hi, f0: Fn, f1: Fn, f2: Fn, tail=None):
        def log0(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(f0(t))

        def r1(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                return f1(t) / f0(t)

        def r2(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                return f2(t) / f0(t)

        return cls(lo, hi, f0, f1, f2, log0, r1, r2, tail)

    @classmethod
    def from_log(cls, lo, hi, log0: Fn, r1: Fn, r2: Fn, tail=None):
        def f0(t):
            return np.exp(log0(t))

        def f1(t):
            return np.exp(log0(t)) * r1(t)

        def f2(t):
            return np.exp(log0(t)) * r2(t)

        return cls(lo, hi, f0, f1, f2, log0, r1, r2, tail)

    @classmethod
    def exponential(cls, lo, hi, logc, rate):
        """``exp(logc - rate*t)``."""

        def log0(t):
            return logc - rate * np.asarray(t, float)

        def r1(t):
            return np.full(np.shape(t), -float(rate))

        def r2(t):
            return np.full(np.shape(t), float(rate) ** 2)

        return cls.from_log(lo, hi, log0, r1, r2, tail=("exp", float(logc), float(rate)))

    @classmethod
    def constant(cls, lo, hi, value):
        value = float(value)

        def f0(t):
            return np.full(np.shape(t), value)

        def zero(t):
            return np.zeros(np.shape(t))

        def log0(t):
            return np.full(np.shape(t), math.log(value) if value > 0 else -np.inf)

        return cls(lo, hi, f0, zero, zero, log0, zero, zero, tail=("const", value))

    def clipped(self, lo, hi):
        return Piece(max(lo, self.lo), min(hi, self.hi), self.f0, self.f1, self.f2,
                     self.log0, self.r1, self.r2, self.tail)

    def shifted(self, t0):
        """Piece for ``t -> f(t - t0)``."""
        sh = [(lambda f: (lambda t: f(np.asarray(t, float) - t0)))(f)
              for f in (self.f0, self.f1, self.f2, self.log0, self.r1, self.r2)]
        tail = self.tail
        if tail is not None and tail[0] == "exp":
            tail = ("exp", tail[1] + tail[2] * t0, tail[2])
        return Piece(self.lo + t0, self.hi + t0, *sh, tail=tail)

    def scaled(self, log_lam):
        lam = math.exp(log_lam)
        f0, f1, f2, log0 = self.f0, self.f1, self.f2, self.log0
        tail = self.tail
        if tail is not None:
            tail = ("exp", tail[1] + log_lam, tail[2]) if tail[0] == "exp" else ("const", tail[1] * lam)
        return Piece(self.lo, self.hi,
                     lambda t: lam * f0(t), lambda t: lam * f1(t), lambda t: lam * f2(t),
                     lambda t: log0(t) + log_lam, self.r1, self.r2, tail)


class Profile:
    """Immutable piecewise profile.

    ``positive`` marks warping functions; generic helper functions (for
    instance the corner ``|t|`` fed to :func:`c1_interpolate`) may vanish.
    """

    def __init__(self, pieces: Sequence[Piece], name="profile", smoothness="C2",
                 domain=None, positive=True):
        if smoothness not in SMOOTHNESS:
            raise InvalidParameter(f"smoothness must be one of {SMOOTHNESS}")
        pieces = list(pieces)
        if not pieces:
            raise InvalidParameter("profile needs at least one piece")
        for p, q in zip(pieces, pieces[1:]):
            if p.hi != q.lo:
                raise InvalidParameter(f"pieces not contiguous at {p.hi} / {q.lo}")
        self.pieces = tuple(pieces)
        self.name = name
        self.smoothness = smoothness
        lo, hi = (pieces[0].lo, pieces[-1].hi) if domain is None else domain
        if lo < pieces[0].lo or hi > pieces[-1].hi or not lo < hi:
            raise InvalidParameter("domain not covered by pieces")
        self.domain = (float(lo), float(hi))
        self.positive = positive
        self._bps = np.array([p.hi for p in pieces[:-1]], dtype=float)

    def __repr__(self):
        return f"Profile({self.name!r}, domain={self.domain}, pieces={len(self.pieces)}, {self.smoothness})"

    @property
    def breakpoints(self):
        a, b = self.domain
        return [x for x in self._bps.tolist() if a < x < b]

    # -- evaluation -------------------------------------------------------
    def _apply(self, attr, t, side):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a, b = self.domain
        if np.any(t < a) or np.any(t > b) or np.any(np.isnan(t)):
            bad = t[(t < a) | (t > b) | np.isnan(t)][0]
            raise OutOfRange(f"t={bad} outside domain [{a}, {b}] of {self.name}")
        if side not in ("left", "right"):
            raise InvalidParameter("side must be 'left' or 'right'")
        idx = np.searchsorted(self._bps, t, side="right" if side == "right" else "left")
        out = np.empty_like(t)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = getattr(self.pieces[k], attr)(t[mask])
        return float(out[0]) if scalar else out

    def eval0(self, t, side="right"):
        return self._apply("f0", t, side)

    def eval1(self, t, side="right"):
        return self._apply("f1", t, side)

    def eval2(self, t, side="right"):
        return self._apply("f2", t, side)

    def log_eval0(self, t, side="right"):
        return self._apply("log0", t, side)

    def ratio1(self, t, side="right"):
        """phi'/phi."""
        return self._apply("r1", t, side)

    def ratio2(self, t, side="right"):
        """phi''/phi."""
        return self._apply("r2", t, side)

    __call__ = eval0

    # -- structure --------------------------------------------------------
    def piece_intervals(self, lo=None, hi=None):
        """Pieces clipped to ``[lo, hi]`` (defaults to the domain)."""
        a, b = self.domain
        lo = a if lo is None else max(lo, a)
        hi = b if hi is None else min(hi, b)
        out = []
        for p in self.pieces:
            l, h = max(p.lo, lo), min(p.hi, hi)
            if l < h:
                out.append((l, h, p))
        return out

    def breakpoint_jumps(self):
        """Per breakpoint: (t, |jump f|, |jump f'|, |jump f''|), scaled by max(1, |f|)."""
        rows = []
        for x in self.breakpoints:
            scale = max(1.0, abs(self.eval0(x, "left")))
            j = [abs(getattr(self, f"eval{k}")(x, "right") - getattr(self, f"eval{k}")(x, "left")) / scale
                 for k in range(3)]
            rows.append((x, *j))
        return rows

    def check_smoothness(self, tol=1e-10):
        order = SMOOTHNESS.index(self.smoothness)
        for x, j0, j1, j2 in self.breakpoint_jumps():
            for k, j in enumerate((j0, j1, j2)):
                if k <= order and j > tol:
                    return False
        return True

    def _rebuild(self, pieces, name=None, domain=None, smoothness=None):
        return Profile(pieces, name or self.name, smoothness or self.smoothness,
                       domain=domain, positive=self.positive)

    def scaled(self, lam):
        if lam <= 0:
            raise InvalidParameter("scale must be positive")
        lg = math.log(lam)
        return self._rebuild([p.scaled(lg) for p in self.pieces], domain=self.domain)

    def log_scaled(self, log_lam):
        """Scale by ``exp(log_lam)`` without forming the factor."""
        return self._rebuild([p.scaled(log_lam) for p in self.pieces], domain=self.domain)

    def shifted(self, t0):
        a, b = self.domain
        return self._rebuild([p.shifted(t0) for p in self.pieces], domain=(a + t0, b + t0))

    def restricted(self, lo, hi):
        ps = [p.clipped(lo, hi) for _, _, p in self.piece_intervals(lo, hi)]
        return self._rebuild(ps, domain=(max(lo, self.domain[0]), min(hi, self.domain[1])))

    def spliced(self, other: "Profile", at, name=None, smoothness=None, domain=None):
        """``self`` on ``t <= at`` followed by ``other`` on ``t >= at``."""
        left = [p.clipped(-np.inf, at) for _, _, p in self.piece_intervals(None, at)]
        right = [p.clipped(at, np.inf) for _, _, p in other.piece_intervals(at, None)]
        dom = domain or (self.domain[0], other.domain[1])
        return Profile(left + right, name or self.name, smoothness or self.smoothness,
                       domain=dom, positive=self.positive and other.positive)

    # -- serialization ----------------------------------------------------
    def to_table(self, ts, side="right") -> str:
        ts = np.asarray(ts, dtype=float)
        a, b = self.domain
        lines = [f"# profile {self.name} domain {a:.17g} {b:.17g}"]
        v0, v1, v2 = self.eval0(ts, side), self.eval1(ts, side), self.eval2(ts, side)
        for row in zip(ts, v0, v1, v2):
            lines.append(",".join(f"{x:.17g}" for x in row))
        return "\n".join(lines) + "\n"

    def write_table(self, path, ts, side="right"):
        with open(path, "w") as fh:
            fh.write(self.to_table(ts, side))


def read_table(path_or_text):
    """Parse :meth:`Profile.to_table` output into (name, domain, array[N, 4])."""
    text = path_or_text
    if "\n" not in text:
        with open(text) as fh:
            text = fh.read()
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[:2] != ["#", "profile"] or head[3] != "domain":
        raise ValueError(f"bad profile header: {lines[0]!r}")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, 4)
    return head[2], (float(head[4]), float(head[5])), data


# -- catalog ------------------------------------------------------------

def _check_pos(**kw):
    for k, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise InvalidParameter(f"{k} must be a positive real, got {v}")


def exp_profile(ell) -> Profile:
    """``ell * exp(-t)`` on the real line."""
    _check_pos(ell=ell)
    return Profile([Piece.exponential(-np.inf, np.inf, math.log(ell), 1.0)],
                   name="exp", smoothness="Cinf")


def ode_coefficients(ell, delta):
    lam = 1.0 + 2.0 * delta
    return ell * (1.0 + delta) / lam, ell * delta / lam, lam


def ode_profile(ell, delta) -> Profile:
    """Solution of ``phi'' = (1+2delta)^2 phi`` with ``phi(0)=ell, phi'(0)=-ell``."""
    _check_pos(ell=ell, delta=delta)
    A, B, lam = ode_coefficients(ell, delta)
    la, lb = math.log(A), math.log(B)

    def log0(t):
        t = np.asarray(t, float)
        return np.logaddexp(la - lam * t, lb + lam * t)

    def r1(t):
        t = np.asarray(t, float)
        w = np.exp(lb + lam * t - log0(t))
        return lam * (2.0 * w - 1.0)

    def r2(t):
        return np.full(np.shape(t), lam * lam)

    return Profile([Piece.from_log(-np.inf, np.inf, log0, r1, r2)],
                   name=f"ode_delta{delta:g}", smoothness="Cinf")


def ode_profile_minimum(ell, delta):
    """Closed-form (location, value) of the minimum of :func:`ode_profile`."""
    _check_pos(ell=ell, delta=delta)
    A, B, lam = ode_coefficients(ell, delta)
    return math.log(A / B) / (2.0 * lam), 2.0 * math.sqrt(A * B)


def t_delta(delta):
    return math.log1p(1.0 / delta) / (2.0 * (1.0 + 2.0 * delta))


# -- bump -------------------------------------------------------------------

def _bump_parts(t):
    """Return (b, b', b'', log(1-b)) for the smooth step; arrays."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    inside = (t > 0) & (t < 1)
    tc = np.where(inside, t, 0.5)
    g = 1.0 / tc - 1.0 / (1.0 - tc)
    gp = -1.0 / tc**2 - 1.0 / (1.0 - tc) ** 2
    gpp = 2.0 / tc**3 - 2.0 / (1.0 - tc) ** 3
    s = expit(g)
    w = s * expit(-g)
    with np.errstate(over="ignore", invalid="ignore"):
        b1 = np.where(w > 0, w * gp, 0.0)
        b2 = np.where(w > 0, w * (1.0 - 2.0 * s) * gp**2 + w * gpp, 0.0)
    b = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, s))
    b1 = np.where(inside, b1, 0.0)
    b2 = np.where(inside, b2, 0.0)
    log1m = np.where(t <= 0, -np.inf, np.where(t >= 1, 0.0, -np.logaddexp(0.0, g)))
    return b, b1, b2, log1m


def bump(t):
    """Smooth nonincreasing step: 1 for t <= 0, 0 for t >= 1."""
    b = _bump_parts(t)[0]
    return float(b[0]) if np.ndim(t) == 0 else b


def bump_derivatives(t):
    """(bump, bump', bump'') as arrays."""
    b, b1, b2, _ = _bump_parts(t)
    return b, b1, b2


def log_one_minus_bump(t):
    return _bump_parts(t)[3]


@lru_cache(maxsize=4)
def bump_second_derivative_extrema(n=BUMP_SCAN_POINTS):
    """(max bump'', min bump'') on an n-point midpoint grid of (0, 1)."""
    t = (np.arange(n) + 0.5) / n
    b2 = _bump_parts(t)[2]
    return float(b2.max()), float(b2.min())


# -- Hermite-type interpolation ---------------------------------------------

_SC = ((3, 10.0), (4, -15.0), (5, 6.0))  # quintic smoothstep 10x^3 - 15x^4 + 6x^5


def _smoothstep(x):
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _smoothstep_mean(gamma):
    # integral over u in [0, 1] of S(u**gamma)
    return sum(c / (k * gamma + 1.0) for k, c in _SC)


def _solve_gamma(m):
    lo, hi = -30.0, 30.0
    f = lambda lg: _smoothstep_mean(math.exp(lg)) - m
    if not f(hi) < 0 < f(lo):
        raise PreconditionFailure(f"sandwich infeasible: required mean slope fraction {m:.6g} not in (0, 1)")
    return math.exp(brentq(f, lo, hi, xtol=1e-15, rtol=1e-15))


class _Window:
    """Derivative ``a + (b-a) S(u**gamma)`` on ``[-eps, eps]``, u = (t+eps)/(2eps)."""

    def __init__(self, a, b, v_left, delta_v, eps):
        if not a < b:
            raise PreconditionFailure(f"derivative does not jump upward: left {a:.6g}, right {b:.6g}")
        self.a, self.b, self.eps = a, b, eps
        self.v_left = v_left
        m = (delta_v / (2.0 * eps) - a) / (b - a)
        self.gamma = _solve_gamma(m)

    def _u(self, t):
        return np.clip((np.asarray(t, float) + self.eps) / (2.0 * self.eps), 0.0, 1.0)

    def d(self, t):
        return self.a + (self.b - self.a) * _smoothstep(self._u(t) ** self.gamma)

    def dd(self, t):
        u, g = self._u(t), self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            v = 30.0 * g * u ** (3 * g - 1) * (1 - u**g) ** 2
        v = np.where(u > 0, v, 0.0 if g > 1.0 / 3 else np.inf)
        return (self.b - self.a) * v / (2.0 * self.eps)

    def integral(self, t):
        """Antiderivative of d with value v_left at -eps."""
        u, g, w = self._u(t), self.gamma, 2.0 * self.eps
        i1 = sum(c * u ** (k * g + 1) / (k * g + 1) for k, c in _SC)
        return self.v_left + self.a * w * u + (self.b - self.a) * w * i1

    def integral2(self, t, y_left):
        """Second antiderivative: value y_left and slope v_left at -eps."""
        u, g, w = self._u(t), self.gamma, 2.0 * self.eps
        i2 = sum(c * u ** (k * g + 2) / ((k * g + 1) * (k * g + 2)) for k, c in _SC)
        return y_left + self.v_left * w * u + self.a * (w * u) ** 2 / 2.0 + (self.b - self.a) * w * w * i2


def _host_window_grid(eps, n=1001):
    return np.linspace(-eps, eps, n)


def c1_interpolate(phi: Profile, eps, M) -> Profile:
    """Replace a corner of ``phi`` at 0 by a C1 interpolant on ``(-eps, eps)``.

    The interpolant's derivative stays between ``phi'(-eps)`` and ``phi'(eps)``
    and its integral over the window is bounded by ``2*M*eps``.
    """
    _check_pos(eps=eps)
    if M < 0:
        raise InvalidParameter("M must be nonnegative")
    a0, b0 = phi.domain
    if not (a0 < -eps and eps < b0):
        raise PreconditionFailure("window (-eps, eps) not inside the domain")
    dl, dr = phi.eval1(0.0, "left"), phi.eval1(0.0, "right")
    if not dl < dr:
        raise PreconditionFailure(f"no upward derivative jump at 0 (left {dl:.6g}, right {dr:.6g})")
    if abs(phi.eval0(0.0)) > M:
        raise PreconditionFailure(f"|phi(0)| = {abs(phi.eval0(0.0)):.6g} exceeds M = {M:.6g}")
    ym, yp = phi.eval0(-eps), phi.eval0(eps)
    win = _Window(phi.eval1(-eps), phi.eval1(eps), ym, yp - ym, eps)

    def f0(t):
        return win.integral(t)

    piece = Piece.from_values(-eps, eps, f0, win.d, win.dd)
    total = win.integral2(eps, 0.0)
    if abs(total) > 2.0 * M * eps * (1 + 1e-12):
        raise PreconditionFailure(
            f"integral over window {total:.6g} exceeds 2*M*eps = {2 * M * eps:.6g}; eps too large for this M")
    out = phi.spliced(Profile([piece], positive=False), -eps, smoothness="C1")
    out = out.spliced(phi, eps, name=f"{phi.name}_c1", smoothness="C1")
    out.positive = False
    out.window = win
    return out


def c2_flatten(phi: Profile, eps, M) -> Profile:
    """Smooth a second-derivative jump of a convex ``phi`` at 0.

    Returns ``phi_eps`` equal to ``phi`` for t <= -eps and to ``phi + c`` for
    t >= eps.  ``c`` is stored on the result as ``shift``.
    """
    _check_pos(eps=eps, M=M)
    a0, b0 = phi.domain
    if not (a0 < -eps and eps < b0):
        raise PreconditionFailure("window (-eps, eps) not inside the domain")
    grid = _host_window_grid(eps)
    left = grid[grid <= 0]
    right = grid[grid >= 0]
    if (phi.eval2(left, "left") < -1e-12).any() or (phi.eval2(right, "right") < -1e-12).any():
        raise PreconditionFailure("phi is not convex near 0")
    if abs(phi.eval1(0.0)) > M:
        raise PreconditionFailure(f"|phi'(0)| exceeds M = {M:.6g}")
    jl, jr = phi.eval2(0.0, "left"), phi.eval2(0.0, "right")
    if not jl < jr:
        raise PreconditionFailure(f"second derivative does not jump upward at 0 ({jl:.6g} -> {jr:.6g})")
    dm, dp = phi.eval1(-eps), phi.eval1(eps)
    win = _Window(phi.eval2(-eps), phi.eval2(eps), dm, dp - dm, eps)
    y_left = phi.eval0(-eps)
    c = float(win.integral2(eps, y_left) - phi.eval0(eps))
    if abs(c) > 4.0 * M * eps:
        raise PreconditionFailure(f"shift |c| = {abs(c):.6g} exceeds 4*M*eps")

    piece = Piece.from_values(-eps, eps, lambda t: win.integral2(t, y_left), win.integral, win.d)
    host = [p.clipped(eps, np.inf) for _, _, p in phi.piece_intervals(eps, None)]
    shifted = [Piece.from_values(p.lo, p.hi,
                                 (lambda f: (lambda t: f(t) + c))(p.f0), p.f1, p.f2)
               for p in host]
    head = [p.clipped(-np.inf, -eps) for _, _, p in phi.piece_intervals(None, -eps)]
    out = Profile(head + [piece] + shifted, name=f"{phi.name}_c2", smoothness="C2",
                  domain=phi.domain, positive=phi.positive)
    out.shift = c
    out.window = win
    return out


# -- cusp cap ---------------------------------------------------------------

@dataclass(frozen=True)
class CapParameters:
    delta: float
    eps: float
    eps_prime: float  # achieved: plateau start minus t_delta
    t_delta: float
    ell: float
    ell_prime: float
    ramp_width: float = 0.0  # half-width of the terminal curvature ramp
    switch_time: float = 0.0
    plateau_start: float = 0.0
    shrink_steps: int = 0
    extra: dict = field(default_factory=dict, compare=False)


def _ramp_fundamental(kfun, t0, t1):
    """Fundamental solutions of y'' = k(t) y on [t0, t1] (dense)."""
    sols = []
    for y0 in ((1.0, 0.0), (0.0, 1.0)):
        s = solve_ivp(lambda t, y: (y[1], kfun(t) * y[0]), (t0, t1), y0, method="DOP853",
                      rtol=1e-13, atol=1e-15, dense_output=True)
        if not s.success:
            raise NoSolution(f"ramp integration failed: {s.message}")
        sols.append(s.sol)
    return sols


def _ode_piece(lo, hi, kfun, fund, p0, q0):
    s1, s2 = fund

    def state(t):
        t = np.asarray(t, float)
        return p0 * s1(t) + q0 * s2(t)

    return Piece.from_values(lo, hi, lambda t: state(t)[0], lambda t: state(t)[1],
                             lambda t: kfun(np.asarray(t, float)) * state(t)[0])


def _host_piece(lo, hi, p, q, lam):
    # alpha e^{-lam (t-lo)} + beta e^{lam (t-lo)} matching (p, q) at lo
    alpha = 0.5 * (p - q / lam)
    beta = 0.5 * (p + q / lam)

    def f0(t):
        x = np.asarray(t, float) - lo
        return alpha * np.exp(-lam * x) + beta * np.exp(lam * x)

    def f1(t):
        x = np.asarray(t, float) - lo
        return lam * (-alpha * np.exp(-lam * x) + beta * np.exp(lam * x))

    return Piece.from_values(lo, hi, f0, f1, lambda t: lam * lam * f0(t)), alpha, beta


def _build_unit_cap(delta, eps, ramp):
    lam = 1.0 + 2.0 * delta
    K = lam * lam
    k1 = lambda t: 1.0 + (K - 1.0) * (1.0 - _bump_parts((np.asarray(t, float) + eps) / (2 * eps))[0].reshape(np.shape(t)))
    fund1 = _ramp_fundamental(k1, -eps, eps)
    p0, q0 = math.exp(eps), -math.exp(eps)
    ramp1 = _ode_piece(-eps, eps, k1, fund1, p0, q0)
    p1, q1 = float(ramp1.f0(eps)), float(ramp1.f1(eps))
    alpha, beta = 0.5 * (p1 - q1 / lam), 0.5 * (p1 + q1 / lam)
    if not (alpha > 0 and beta > 0):
        raise NoSolution("host after first ramp has no interior minimum")
    t_min = eps + math.log(alpha / beta) / (2 * lam)

    # second ramp in local coordinates x in [0, 2*ramp]; the map is linear
    k2loc = lambda x: K * _bump_parts(np.asarray(x, float) / (2 * ramp))[0].reshape(np.shape(x))
    fund2 = _ramp_fundamental(k2loc, 0.0, 2 * ramp)
    m = np.column_stack([fund2[0](2 * ramp), fund2[1](2 * ramp)])

    def host_state(ts):
        x = ts - eps
        a, b = alpha * math.exp(-lam * x), beta * math.exp(lam * x)
        return a + b, lam * (b - a)

    def end_slope(ts):
        p, q = host_state(ts)
        return m[1, 0] * p + m[1, 1] * q

    if not end_slope(eps) < 0:
        raise NoSolution("terminal ramp too wide: slope already nonnegative")
    ts = brentq(end_slope, eps, t_min, xtol=1e-15, rtol=1e-15, maxiter=200)
    host, _, _ = _host_piece(eps, ts, p1, q1, lam)
    p2, q2 = host_state(ts)
    fund2_shift = [(lambda s: (lambda t: s(np.asarray(t, float) - ts)))(s) for s in fund2]
    k2 = lambda t: k2loc(np.asarray(t, float) - ts)
    plateau = ts + 2 * ramp
    ramp2 = _ode_piece(ts, plateau, k2, fund2_shift, p2, q2)
    ell_prime = float(m[0, 0] * p2 + m[0, 1] * q2)
    pieces = [Piece.exponential(-np.inf, -eps, 0.0, 1.0), ramp1, host, ramp2,
              Piece.constant(plateau, np.inf, ell_prime)]
    return pieces, ts, plateau, ell_prime


def _cap_checks(prof, delta, lo, hi, ell, ell_prime, n_per_unit=10**4):
    K = (1.0 + 2.0 * delta) ** 2
    n = max(10**4, int(n_per_unit * (hi - lo)))
    ts = np.linspace(lo, hi, n)
    ends = np.array([x for l, h, _ in prof.piece_intervals(lo, hi) for x in (l, h)])
    for side in ("left", "right"):
        t = np.concatenate([ts, ends])
        r1, r2 = prof.ratio1(t, side), prof.ratio2(t, side)
        d1, d2 = prof.eval1(t, side), prof.eval2(t, side)
        if (d1 > 1e-12 * ell).any() or (d2 < -1e-12 * ell).any():
            return False
        if (r1**2 > K + 1e-9).any() or (r2 > K + 1e-9).any():
            return False
    s = math.sqrt(delta * (1 + delta)) / (1 + 2 * delta)
    return ell * s <= ell_prime <= 4 * ell * s


def cusp_cap_profile(ell, delta, eps=None, check=True, max_shrink=40):
    """Cap ``ell*exp(-t)`` off to a constant with curvature in [-(1+2delta)^2, 0].

    The profile solves ``phi'' = k(t) phi`` where ``k`` ramps smoothly from 1 to
    ``(1+2delta)^2`` on ``[-eps, eps]`` and back down to 0 just before the
    plateau; the switch time is found by shooting so that ``phi'`` vanishes at
    the plateau.  Returns ``(profile, CapParameters)``.
    """
    _check_pos(ell=ell, delta=delta)
    if delta > 0.5:
        raise InvalidParameter(f"delta must be <= 1/2, got {delta}")
    td = t_delta(delta)
    e0 = min(delta / 10.0, 0.01 * td) if eps is None else float(eps)
    last = None
    for step in range(max_shrink):
        e = e0 * 0.5**step
        try:
            pieces, ts, plateau, lp = _build_unit_cap(delta, e, e)
        except NoSolution as exc:
            last = exc
            continue
        prof = Profile(pieces, name=f"cap_delta{delta:g}", smoothness="C2").scaled(ell)
        lp *= ell
        if not check or _cap_checks(prof, delta, -e - 1.0, plateau + 1.0, ell, lp):
            params = CapParameters(delta=delta, eps=e, eps_prime=plateau - td, t_delta=td, ell=ell,
                                   ell_prime=lp, ramp_width=e, switch_time=ts,
                                   plateau_start=plateau, shrink_steps=step)
            return prof, params
    raise NoSolution(f"no admissible eps after {max_shrink} halvings ({last})")
