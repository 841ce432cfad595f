"""Poincaré series, growth rates and the free-product tube estimate."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import Inconclusive, InvalidParameter, InvalidWord

DEFAULT_BUDGET = 10**6


class LengthOracle:
    """Group elements with lengths.

    Subclasses provide ``enumerate(cutoff)`` (nondecreasing lengths, identity
    first) and may override ``spectrum`` with something faster than explicit
    enumeration.
    """

    discrete = True
    name = "oracle"

    def enumerate(self, cutoff) -> Iterator[tuple]:
        raise NotImplementedError

    def spectrum(self, cutoff):
        """(distinct lengths <= cutoff, multiplicities), identity included."""
        vals = {}
        for _, ln in self.enumerate(cutoff):
            key = round(ln, 12)
            vals[key] = vals.get(key, 0) + 1
        ks = sorted(vals)
        return np.array(ks, float), np.array([vals[k] for k in ks], float)

    def count(self, R) -> float:
        _, mult = self.spectrum(R)
        return float(mult.sum())

    def poincare_star(self, s) -> Optional[float]:
        """Exact identity-free series if known, else None."""
        return None

    def scaled(self, lam) -> "LengthOracle":
        raise NotImplementedError


class TrivialOracle(LengthOracle):
    name = "trivial"

    def enumerate(self, cutoff):
        if cutoff >= 0:
            yield (), 0.0

    def poincare_star(self, s):
        return 0.0

    def scaled(self, lam):
        return self


def _quantum(lengths, max_den=10**4):
    """Common quantum q with every length an integer multiple of q, or None."""
    base = min(lengths)
    fr = [Fraction(x / base).limit_denominator(max_den) for x in lengths]
    if any(abs(float(f) * base - x) > 1e-12 * x for f, x in zip(fr, lengths)):
        return None
    den = 1
    for f in fr:
        den = den * f.denominator // math.gcd(den, f.denominator)
    q = base / den
    return q, [int(round(float(f) * den)) for f in fr]


class FreeGroupOracle(LengthOracle):
    """Free group with per-generator lengths; reduced words in the Cayley tree."""

    def __init__(self, rank, lengths=None):
        if rank < 1:
            raise InvalidParameter("rank must be >= 1")
        lengths = [1.0] * rank if lengths is None else [float(x) for x in lengths]
        if len(lengths) != rank or any(not x > 0 for x in lengths):
            raise InvalidParameter("need one positive length per generator")
        self.rank = rank
        self.lengths = lengths
        self.name = f"free{rank}"
        self.letters = [(i, e) for i in range(rank) for e in (1, -1)]
        self.letter_len = np.array([lengths[i] for i, _ in self.letters])
        n = len(self.letters)
        self.adj = np.ones((n, n))
        for a, (i, e) in enumerate(self.letters):
            self.adj[a, self.letters.index((i, -e))] = 0.0

    def scaled(self, lam):
        return FreeGroupOracle(self.rank, [lam * x for x in self.lengths])

    def enumerate(self, cutoff):
        """Reduced words in nondecreasing length (Dijkstra on the tree)."""
        if cutoff < 0:
            return
        heap = [(0.0, ())]
        while heap:
            ln, w = heapq.heappop(heap)
            yield w, ln
            last = w[-1] if w else None
            for a, (i, e) in enumerate(self.letters):
                if last is not None and last == (i, -e):
                    continue
                nl = ln + self.letter_len[a]
                if nl <= cutoff + 1e-12:
                    heapq.heappush(heap, (nl, w + ((i, e),)))

    def spectrum(self, cutoff):
        qz = _quantum(self.lengths)
        if qz is None:
            return super().spectrum(cutoff)
        q, units = qz
        u = [units[i] for i, _ in self.letters]
        N = int(math.floor(cutoff / q + 1e-9))
        if N < 0:
            return np.array([]), np.array([])
        nl = len(self.letters)
        cnt = [[0] * nl for _ in range(N + 1)]  # exact integers
        for a in range(nl):
            if u[a] <= N:
                cnt[u[a]][a] += 1
        for n in range(N + 1):
            row = cnt[n]
            for a in range(nl):
                c = row[a]
                if not c:
                    continue
                for b in range(nl):
                    if self.adj[a, b] and n + u[b] <= N:
                        cnt[n + u[b]][b] += c
        tot = [sum(r) for r in cnt]
        tot[0] += 1
        ks = [n for n in range(N + 1) if tot[n]]
        return np.array([n * q for n in ks]), np.array([float(tot[n]) for n in ks])

    def _transfer(self, s):
        return np.exp(-s * self.letter_len)[:, None] * self.adj

    def poincare_star(self, s):
        w = np.exp(-s * self.letter_len)
        M = self._transfer(s)
        if max(abs(np.linalg.eigvals(M))) >= 1.0:
            return math.inf
        T = np.linalg.solve(np.eye(len(w)) - M, w)
        return float(T.sum())

    def exact_critical_exponent(self):
        f = lambda s: max(abs(np.linalg.eigvals(self._transfer(s)))) - 1.0
        hi = 1.0
        while f(hi) > 0:
            hi *= 2
        return brentq(f, 0.0, hi, xtol=1e-14) if f(0.0) > 0 else 0.0


class CayleyOracle(LengthOracle):
    """Finitely presented group given by a confluent rewriting system.

    Generators are single lowercase letters; the uppercase letter is the
    inverse.  Free cancellations are added automatically.  Elements are
    explored breadth first (Dijkstra for weighted generators) through their
    normal forms.
    """

    def __init__(self, generators: str, rules=(), lengths=None, max_rewrites=10**5, name="cayley"):
        if not generators or not generators.islower():
            raise InvalidParameter("generators must be lowercase letters")
        self.generators = generators
        self.user_rules = tuple((l, r) for l, r in rules)
        self.rules = [(g + g.upper(), "") for g in generators] + [(g.upper() + g, "") for g in generators]
        self.rules += list(self.user_rules)
        lengths = {} if lengths is None else dict(lengths)
        self.lengths = {g: float(lengths.get(g, 1.0)) for g in generators}
        self.max_rewrites = max_rewrites
        self.name = name

    def scaled(self, lam):
        return CayleyOracle(self.generators, self.user_rules, {g: lam * v for g, v in self.lengths.items()},
                            self.max_rewrites, self.name)

    def normal_form(self, w: str) -> str:
        for _ in range(self.max_rewrites):
            for lhs, rhs in self.rules:
                i = w.find(lhs)
                if i >= 0:
                    w = w[:i] + rhs + w[i + len(lhs):]
                    break
            else:
                return w
        raise InvalidParameter("rewriting did not terminate; system must be terminating and confluent")

    def enumerate(self, cutoff):
        if cutoff < 0:
            return
        letters = [(c, self.lengths[c.lower()]) for g in self.generators for c in (g, g.upper())]
        best = {"": 0.0}
        heap = [(0.0, "")]
        done = set()
        while heap:
            ln, w = heapq.heappop(heap)
            if w in done:
                continue
            done.add(w)
            yield w, ln
            for c, cl in letters:
                v = self.normal_form(w + c)
                nl = ln + cl
                if nl <= cutoff + 1e-12 and nl < best.get(v, math.inf) - 1e-15:
                    best[v] = nl
                    heapq.heappush(heap, (nl, v))


def z2_oracle():
    """Z^2 = <a, b | ab = ba> with sorted normal forms a^i b^j."""
    return CayleyOracle("ab", [("ba", "ab"), ("bA", "Ab"), ("Ba", "aB"), ("BA", "AB")], name="Z2")


class VolumeGrowthOracle(LengthOracle):
    """Continuous stand-in: N(R) is a ball volume, the series an integral."""

    discrete = False

    def __init__(self, volume: Callable[[float], float], log_density: Callable[[float], float],
                 name="volume", scale=1.0):
        self.volume = volume
        self.log_density = log_density
        self.name = name
        self.scale = scale

    def count(self, R):
        return float(self.volume(R / self.scale))

    def scaled(self, lam):
        return VolumeGrowthOracle(self.volume, self.log_density, self.name, self.scale * lam)

    def enumerate(self, cutoff):
        raise InvalidParameter("a volume-growth oracle has no discrete elements")

    def poincare_partial(self, s, cutoff):
        lam = self.scale
        f = lambda R: math.exp(self.log_density(R / lam) - s * R) / lam
        val, _ = quad(f, 0.0, cutoff, limit=500, epsabs=0.0, epsrel=1e-12)
        return val


def hyperbolic3_oracle():
    """Ball volume in H^3: pi (sinh 2R - 2R); density 4 pi sinh^2 R."""

    def vol(R):
        return math.pi * (math.sinh(2 * R) - 2 * R)

    def log_density(R):
        if R == 0:
            return -math.inf
        # log(4 pi sinh^2 R) without overflow
        return math.log(math.pi) + 2 * (R + math.log1p(-math.exp(-2 * R)))

    return VolumeGrowthOracle(vol, log_density, name="H3")


def poincare_partial(oracle: LengthOracle, s, cutoff) -> float:
    """Sum of exp(-s*length) over elements with length <= cutoff."""
    if not np.isfinite(cutoff):
        raise InvalidParameter("cutoff must be finite")
    if not s > 0:
        raise InvalidParameter("s must be positive")
    if not oracle.discrete:
        return oracle.poincare_partial(s, cutoff)
    lens, mult = oracle.spectrum(cutoff)
    return float(np.sum(mult * np.exp(-s * lens)))


@dataclass
class GrowthFit:
    slope: float
    stderr: float
    n_points: int
    window: tuple


def growth_regression(oracle: LengthOracle, R_max, n_grid=257) -> GrowthFit:
    """Least-squares slope of log N(R) over [R_max/2, R_max]."""
    lo, hi = R_max / 2.0, R_max
    if oracle.discrete:
        lens, mult = oracle.spectrum(hi)
        cum = np.cumsum(mult)
        sel = lens >= lo - 1e-12
        R, N = lens[sel], cum[sel]
    else:
        R = np.linspace(lo, hi, n_grid)
        N = np.array([oracle.count(x) for x in R])
    keep = N > 1
    R, N = R[keep], N[keep]
    if len(R) < 3:
        raise Inconclusive(f"only {len(R)} growth samples in [{lo}, {hi}]")
    A = np.vstack([R, np.ones_like(R)]).T
    y = np.log(N)
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(R) - 2, 1)
    sxx = np.sum((R - R.mean()) ** 2)
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if sxx > 0 else math.inf
    return GrowthFit(float(coef[0]), stderr, len(R), (lo, hi))


def critical_exponent(oracle: LengthOracle, tol=1e-3, R_max=20.0) -> float:
    fit = growth_regression(oracle, R_max)
    if fit.stderr > tol:
        raise Inconclusive(f"slope {fit.slope:.6g} has standard error {fit.stderr:.2e} > tol {tol:g}")
    return fit.slope


# -- free products -----------------------------------------------------------

@dataclass(frozen=True)
class Syllable:
    factor: int  # 0 or 1
    length: float
    element: object = None  # None marks an identity padding syllable

    @property
    def is_identity(self):
        return self.element is None and self.length == 0


@dataclass(frozen=True)
class SyllableWord:
    syllables: tuple = ()

    def __post_init__(self):
        sy = self.syllables
        for k, x in enumerate(sy):
            if x.factor not in (0, 1):
                raise InvalidWord("factor tag must be 0 or 1")
            if x.length < 0:
                raise InvalidWord("negative syllable length")
            if x.is_identity and 0 < k < len(sy) - 1:
                raise InvalidWord("identity syllables only allowed at the ends")
        for a, b in zip(sy, sy[1:]):
            if a.factor == b.factor:
                raise InvalidWord("adjacent syllables from the same factor")


def syllable_lower_bound(w: SyllableWord, L) -> float:
    if not L > 0:
        raise InvalidParameter("L must be positive")
    return float(sum(x.length + 2.0 * L for x in w.syllables))


def tube_series_bound(P1_star, P2_star, L, s):
    """(bound or math.inf, threshold_L) for the tube-separated free product."""
    if not (L > 0 and s > 0):
        raise InvalidParameter("L and s must be positive")
    p1 = P1_star(s) if callable(P1_star) else P1_star
    p2 = P2_star(s) if callable(P2_star) else P2_star
    if not (p1 > 0 and p2 > 0):
        raise InvalidParameter("identity-free sums must be positive")
    threshold = math.log(p1 * p2) / (4.0 * s)
    q = math.exp(-4.0 * s * L) * p1 * p2
    if q >= 1.0:
        return math.inf, threshold
    return 1.0 + 4.0 * q / (1.0 - q), threshold


def _nontrivial(oracle, cutoff):
    return [(e, ln) for e, ln in oracle.enumerate(cutoff) if ln > 0 or e not in ((), "")]


def free_product_elements(f1: LengthOracle, f2: LengthOracle, L, cutoff, budget=DEFAULT_BUDGET):
    """Free-product elements as padded SyllableWords with modeled length <= cutoff.

    Normal form: pairs (h', h'') with h' from the first factor and h'' from the
    second; the first h' and last h'' may be the identity.  Order is by pair
    count, then length.  Returns (list of (word, length), truncated, depth).
    """
    per = 4.0 * L
    max_fac = cutoff - per
    E = [_nontrivial(f, max_fac) for f in (f1, f2)]
    out = []
    truncated = False
    n = 0
    while True:
        n += 1
        if n * per > cutoff + 1e-12:
            break
        layer = []
        # slots: 2n syllables alternating factors 0,1,0,1,...; slot 0 and slot 2n-1 may be identity
        def rec(k, acc_len, acc):
            nonlocal truncated
            if truncated:
                return
            if k == 2 * n:
                if all(x.is_identity for x in acc):
                    return
                layer.append((SyllableWord(tuple(acc)), acc_len + n * per))
                if len(out) + len(layer) > budget:
                    truncated = True
                return
            fac = k % 2
            if k in (0, 2 * n - 1):
                rec(k + 1, acc_len, acc + [Syllable(fac, 0.0, None)])
            for e, ln in E[fac]:
                if acc_len + ln + n * per > cutoff + 1e-12:
                    break
                rec(k + 1, acc_len + ln, acc + [Syllable(fac, ln, e)])

        rec(0, 0.0, [])
        layer.sort(key=lambda x: x[1])
        out.extend(layer)
        if truncated:
            break
    return out, truncated, n


def _factor_star(oracle, s, cutoff):
    p = oracle.poincare_star(s)
    if p is not None:
        return p, True
    return poincare_partial(oracle, s, cutoff) - 1.0, False


@dataclass
class FreeProductRow:
    s: float
    partial_sum: float
    cutoff: float
    converged: bool
    bound: float
    threshold_L: float
    applicable: bool
    ok: bool


@dataclass
class FreeProductReport:
    L: float
    rows: list
    truncated: bool
    depth: int
    n_elements: int
    degenerate: bool = False

    @property
    def ok(self):
        return all(r.ok for r in self.rows)

    def to_csv(self):
        lines = ["s,partial_sum,cutoff,converged,bound,threshold_L,applicable,ok"]
        for r in self.rows:
            lines.append(f"{r.s:.17g},{r.partial_sum:.17g},{r.cutoff:.17g},{int(r.converged)},"
                         f"{r.bound:.17g},{r.threshold_L:.17g},{int(r.applicable)},{int(r.ok)}")
        return "\n".join(lines) + "\n"


def free_product_exponent_check(factor1: LengthOracle, factor2: LengthOracle, L, s_grid,
                                cutoff=30.0, budget=DEFAULT_BUDGET, star_cutoff=200.0,
                                factor_exponents=None):
    """Brute-force partial series of the tube model against the closed-form bound.

    A row is checked when s exceeds both factor exponents, L is above the
    threshold and both identity-free factor sums are at least 1 (the bound
    counts identity padding syllables as if they carried a full factor sum).
    If a factor is trivial the product is the other factor and its own series
    is returned.
    """
    if not L > 0:
        raise InvalidParameter("L must be positive")
    triv = [isinstance(f, TrivialOracle) for f in (factor1, factor2)]
    if any(triv):
        other = factor2 if triv[0] else factor1
        rows = []
        for s in s_grid:
            ps = poincare_partial(other, s, cutoff) if not all(triv) else 1.0
            rows.append(FreeProductRow(s, ps, cutoff, True, math.nan, math.nan, False, True))
        n_el = int(other.count(cutoff)) if not all(triv) else 1
        return FreeProductReport(L, rows, False, 1, n_el, degenerate=True)
    elems, truncated, depth = free_product_elements(factor1, factor2, L, cutoff, budget)
    lens = np.array([ln for _, ln in elems])
    if factor_exponents is None:
        factor_exponents = []
        for f in (factor1, factor2):
            ex = getattr(f, "exact_critical_exponent", None)
            factor_exponents.append(ex() if ex else critical_exponent(f, tol=1.0, R_max=cutoff))
    smin = max(factor_exponents)
    rows = []
    for s in s_grid:
        ps = 1.0 + float(np.sum(np.exp(-s * lens)))
        p1, _ = _factor_star(factor1, s, star_cutoff)
        p2, _ = _factor_star(factor2, s, star_cutoff)
        if not (np.isfinite(p1) and np.isfinite(p2)) or s <= smin:
            rows.append(FreeProductRow(s, ps, cutoff, False, math.inf, math.inf, False, True))
            continue
        bound, thr = tube_series_bound(p1, p2, L, s)
        conv = np.isfinite(bound)
        app = conv and L > thr and p1 >= 1.0 and p2 >= 1.0
        rows.append(FreeProductRow(s, ps, cutoff, bool(conv), bound, thr, bool(app),
                                   bool((not app) or ps <= bound)))
    return FreeProductReport(L, rows, truncated, depth, len(elems) + 1)


def ent_upper_bound_bishop(delta, n) -> float:
    if n < 2 or delta < 0:
        raise InvalidParameter("need n >= 2 and delta >= 0")
    return (n - 1) * (1 + 2 * delta)


def minent_target(volumes: Sequence[float]) -> float:
    vols = list(volumes)
    if any(not v > 0 for v in vols):
        raise InvalidParameter("volumes must be positive")
    return 2.0 * sum(vols) ** (1.0 / 3.0) if vols else 0.0
