"""Trees of model leaves glued at hub points, and barycenters on them.

Leaves are Euclidean planes, hyperbolic planes (Poincaré disk chart) or
metric segments/rays.  Gluing leaves along single points in a tree pattern
keeps the space CAT(0), so distances go through the unique chain of hubs.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidParameter, NotConverged

COMPARISON_SLACK = 1e-9


# -- leaves --------------------------------------------------------------------

class Leaf:
    kind = "leaf"
    dim = 2

    def validate(self, p):
        return np.asarray(p, float)

    def distance(self, p, q) -> float:
        raise NotImplementedError

    def log(self, x, y):
        """Tangent vector at x pointing to y with norm d(x, y)."""
        raise NotImplementedError

    def exp(self, x, v):
        raise NotImplementedError

    def geodesic(self, p, q, t):
        return self.exp(p, t * self.log(p, q))

    def random_point(self, rng, scale=1.0):
        raise NotImplementedError

    def spec(self):
        return {"kind": self.kind}


class EuclideanPlane(Leaf):
    kind = "euclidean"

    def validate(self, p):
        p = np.asarray(p, float).reshape(-1)
        if p.shape != (2,) or not np.all(np.isfinite(p)):
            raise InvalidParameter(f"euclidean point needs 2 finite coordinates, got {p}")
        return p

    def distance(self, p, q):
        return float(math.hypot(q[0] - p[0], q[1] - p[1]))

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def exp(self, x, v):
        return np.asarray(x, float) + v

    def random_point(self, rng, scale=1.0):
        return rng.normal(size=2) * scale


class HyperbolicPlane(Leaf):
    """Curvature -1 in the Poincaré disk; tangent vectors use the Riemannian norm."""

    kind = "hyperbolic"

    def validate(self, p):
        p = np.asarray(p, float).reshape(-1)
        if p.shape != (2,) or not np.all(np.isfinite(p)) or p @ p >= 1.0:
            raise InvalidParameter(f"hyperbolic point must lie in the open unit disk, got {p}")
        return p

    @staticmethod
    def _c(p):
        return complex(p[0], p[1])

    def distance(self, p, q):
        u, v = self._c(p), self._c(q)
        den = math.sqrt((1 - abs(u) ** 2) * (1 - abs(v) ** 2))
        return 2.0 * math.asinh(abs(u - v) / den)

    # Moebius map sending x to 0; its derivative at x is real, so directions are kept.
    @staticmethod
    def _to0(x, z):
        return (z - x) / (1 - x.conjugate() * z)

    @staticmethod
    def _from0(x, z):
        return (z + x) / (1 + x.conjugate() * z)

    def log(self, x, y):
        xc, yc = self._c(x), self._c(y)
        w = self._to0(xc, yc)
        r = abs(w)
        if r == 0:
            return np.zeros(2)
        d = 2.0 * math.atanh(min(r, 1 - 1e-16))
        return np.array([w.real, w.imag]) * (d / r)

    def exp(self, x, v):
        xc = self._c(x)
        n = float(np.hypot(v[0], v[1]))
        if n == 0:
            return np.asarray(x, float).copy()
        w = complex(v[0], v[1]) / n * math.tanh(n / 2)
        z = self._from0(xc, w)
        return np.array([z.real, z.imag])

    def random_point(self, rng, scale=1.0):
        v = rng.normal(size=2) * scale
        return self.exp(np.zeros(2), v)


class Segment(Leaf):
    """Metric interval [0, length]; ``length=inf`` gives a ray."""

    kind = "segment"
    dim = 1

    def __init__(self, length=1.0):
        if not length > 0:
            raise InvalidParameter("segment length must be positive")
        self.length = float(length)

    def validate(self, p):
        p = np.asarray(p, float).reshape(-1)
        if p.shape != (1,) or not (0.0 <= p[0] <= self.length):
            raise InvalidParameter(f"segment coordinate must lie in [0, {self.length}], got {p}")
        return p

    def distance(self, p, q):
        return abs(float(q[0]) - float(p[0]))

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def exp(self, x, v):
        return np.clip(np.asarray(x, float) + v, 0.0, self.length)

    def random_point(self, rng, scale=1.0):
        hi = min(self.length, 3.0 * scale)
        return np.array([rng.uniform(0.0, hi)])

    def spec(self):
        return {"kind": self.kind, "length": self.length}


def make_leaf(d: dict) -> Leaf:
    kind = d.get("kind")
    if kind == "euclidean":
        return EuclideanPlane()
    if kind == "hyperbolic":
        return HyperbolicPlane()
    if kind in ("segment", "ray"):
        return Segment(float(d.get("length", math.inf if kind == "ray" else 1.0)))
    raise InvalidParameter(f"unknown leaf kind {kind!r}")


# -- wedge -------------------------------------------------------------------

@dataclass(frozen=True)
class PointRef:
    leaf: int
    coords: tuple

    @staticmethod
    def of(leaf, *coords):
        return PointRef(int(leaf), tuple(float(c) for c in coords))


class WedgeSpace:
    """Leaves glued along hub points; the leaf/hub incidence graph must be a tree.

    ``hubs`` is a list; each hub is a list of (leaf index, coords) marks.
    """

    def __init__(self, leaves: Sequence[Leaf], hubs=()):
        self.leaves = list(leaves)
        if not self.leaves:
            raise InvalidParameter("need at least one leaf")
        self.hubs = []
        for h in hubs:
            marks = {}
            for leaf, coords in h:
                if leaf in marks:
                    raise InvalidParameter("a hub marks each leaf at most once")
                marks[int(leaf)] = self.leaves[leaf].validate(coords)
            if len(marks) < 2:
                raise InvalidParameter("a hub must join at least two leaves")
            self.hubs.append(marks)
        for i, leaf in enumerate(self.leaves):
            pts = [h[i] for h in self.hubs if i in h]
            for a in range(len(pts)):
                for b in range(a + 1, len(pts)):
                    if leaf.distance(pts[a], pts[b]) == 0:
                        raise InvalidParameter(f"leaf {i} has two hubs at the same point")
        self._check_tree()
        self._paths = {}

    def _check_tree(self):
        nl, nh = len(self.leaves), len(self.hubs)
        edges = sum(len(h) for h in self.hubs)
        if edges != nl + nh - 1:
            raise InvalidParameter("gluing graph is not a tree (edge count)")
        seen = {("L", 0)}
        dq = deque([("L", 0)])
        while dq:
            node = dq.popleft()
            for nb in self._neighbors(node):
                if nb not in seen:
                    seen.add(nb)
                    dq.append(nb)
        if len(seen) != nl + nh:
            raise InvalidParameter("gluing graph is not connected")

    def _neighbors(self, node):
        kind, i = node
        if kind == "L":
            return [("H", k) for k, h in enumerate(self.hubs) if i in h]
        return [("L", j) for j in self.hubs[i]]

    def leaf_path(self, i, j):
        """Alternating [leaf i, hub, leaf, ..., leaf j] along the tree."""
        key = (i, j)
        if key not in self._paths:
            prev = {("L", i): None}
            dq = deque([("L", i)])
            while dq:
                node = dq.popleft()
                if node == ("L", j):
                    break
                for nb in self._neighbors(node):
                    if nb not in prev:
                        prev[nb] = node
                        dq.append(nb)
            path, node = [], ("L", j)
            while node is not None:
                path.append(node[1])
                node = prev[node]
            self._paths[key] = path[::-1]
        return self._paths[key]

    def validate(self, p: PointRef):
        if not 0 <= p.leaf < len(self.leaves):
            raise InvalidParameter(f"no leaf {p.leaf}")
        return self.leaves[p.leaf].validate(p.coords)

    def hub_point(self, k, leaf=None) -> PointRef:
        h = self.hubs[k]
        leaf = min(h) if leaf is None else leaf
        return PointRef.of(leaf, *h[leaf])

    def hub_refs(self):
        return [PointRef.of(leaf, *c) for h in self.hubs for leaf, c in h.items()]

    def legs(self, x: PointRef, y: PointRef):
        """Leaf-wise legs (leaf, start, end) of the geodesic from x to y."""
        px, py = self.validate(x), self.validate(y)
        path = self.leaf_path(x.leaf, y.leaf)
        legs, cur = [], px
        for k in range(1, len(path) - 1, 2):
            leaf, hub, nxt = path[k - 1], path[k], path[k + 1]
            legs.append((leaf, cur, self.hubs[hub][leaf]))
            cur = self.hubs[hub][nxt]
        legs.append((path[-1], cur, py))
        return legs

    def entry(self, leaf, z: PointRef):
        """(point in ``leaf`` where the geodesic to z leaves it, remaining distance)."""
        if z.leaf == leaf:
            return self.validate(z), 0.0
        legs = self.legs(PointRef.of(leaf, *self.leaves[leaf].validate(self._any_point(leaf))), z)
        start = legs[0][2]
        rest = sum(self.leaves[l].distance(a, b) for l, a, b in legs[1:])
        return start, rest

    def _any_point(self, leaf):
        for h in self.hubs:
            if leaf in h:
                return h[leaf]
        return np.zeros(self.leaves[leaf].dim)

    def canonical(self, p: PointRef):
        """Map hub points to their lowest-index leaf so equal points compare equal."""
        c = self.validate(p)
        for h in self.hubs:
            if p.leaf in h and self.leaves[p.leaf].distance(h[p.leaf], c) == 0:
                lf = min(h)
                return PointRef.of(lf, *h[lf])
        return p

    def spec(self):
        return {"leaves": [l.spec() for l in self.leaves],
                "hubs": [[[i, list(map(float, c))] for i, c in h.items()] for h in self.hubs]}


def distance(X: WedgeSpace, x: PointRef, y: PointRef) -> float:
    return float(sum(X.leaves[l].distance(a, b) for l, a, b in X.legs(x, y)))


def geodesic(X: WedgeSpace, x: PointRef, y: PointRef, t) -> PointRef:
    if not 0.0 <= t <= 1.0:
        raise InvalidParameter("t must lie in [0, 1]")
    legs = X.legs(x, y)
    ds = [X.leaves[l].distance(a, b) for l, a, b in legs]
    target = t * sum(ds)
    for (l, a, b), d in zip(legs, ds):
        if target <= d or (l, a, b) is legs[-1]:
            frac = 0.0 if d == 0 else min(target / d, 1.0)
            return PointRef.of(l, *X.leaves[l].geodesic(a, b, frac))
        target -= d
    raise AssertionError("unreachable")


def euclid_median_identity(A, B, C, M, tol=1e-9):
    """(AM^2 + BM*CM, AB^2 CM/BC + AC^2 BM/BC) for M on segment BC."""
    A, B, C, M = (np.asarray(p, float) for p in (A, B, C, M))
    bc = float(np.linalg.norm(C - B))
    if bc == 0:
        raise InvalidParameter("degenerate side BC")
    bm, cm = float(np.linalg.norm(M - B)), float(np.linalg.norm(C - M))
    if abs(bm + cm - bc) > tol * bc:
        raise InvalidParameter("M is not on segment BC")
    am, ab, ac = (float(np.linalg.norm(P - Q)) for P, Q in ((A, M), (A, B), (A, C)))
    return am * am + bm * cm, ab * ab * cm / bc + ac * ac * bm / bc


def comparison_gap(X, a, b, c, t):
    """rhs - lhs of the comparison inequality at m = geodesic(b, c, t)."""
    bc = distance(X, b, c)
    if bc == 0:
        return 0.0
    m = geodesic(X, b, c, t)
    am, bm, cm = distance(X, a, m), distance(X, b, m), distance(X, c, m)
    ab, ac = distance(X, a, b), distance(X, a, c)
    return ab * ab * cm / bc + ac * ac * bm / bc - (am * am + bm * cm)


def comparison_check(X, a, b, c, t, slack=COMPARISON_SLACK) -> bool:
    return comparison_gap(X, a, b, c, t) >= -slack


# -- measures and barycenters ------------------------------------------------

@dataclass(frozen=True)
class PointedMeasure:
    atoms: tuple  # ((PointRef, weight), ...)

    def __post_init__(self):
        if not self.atoms:
            raise InvalidParameter("empty measure")
        if any(not w > 0 for _, w in self.atoms):
            raise InvalidParameter("weights must be positive")

    @property
    def mass(self):
        return float(sum(w for _, w in self.atoms))

    @staticmethod
    def of(pairs):
        return PointedMeasure(tuple((p, float(w)) for p, w in pairs))


def leibniz(X: WedgeSpace, mu: PointedMeasure, x: PointRef) -> float:
    return float(sum(w * distance(X, x, z) ** 2 for z, w in mu.atoms))


@dataclass
class BarycenterReport:
    point: PointRef
    value: float
    certificate: float
    iterations: int
    converged: bool
    n_validation: int = 0

    def to_json(self):
        return json.dumps({"leaf": self.point.leaf, "coords": list(self.point.coords), "B": self.value,
                           "certificate": self.certificate, "iterations": self.iterations,
                           "converged": self.converged, "n_validation": self.n_validation},
                          indent=2, sort_keys=True)


class _LeafProblem:
    """B restricted to one leaf: sum w (d(x, e_i) + K_i)^2."""

    def __init__(self, X, leaf, mu):
        self.L = X.leaves[leaf]
        self.leaf = leaf
        ent = [X.entry(leaf, z) for z, _ in mu.atoms]
        self.e = [p for p, _ in ent]
        self.K = np.array([k for _, k in ent])
        self.w = np.array([w for _, w in mu.atoms])

    def value(self, x):
        d = np.array([self.L.distance(x, e) for e in self.e])
        return float(np.sum(self.w * (d + self.K) ** 2))

    def step(self, x):
        """One majorize-minimize (Weiszfeld-type) step; returns (new x, pinned index or None)."""
        logs = [self.L.log(x, e) for e in self.e]
        d = np.array([float(np.linalg.norm(v)) for v in logs])
        pin = [i for i in range(len(d)) if d[i] == 0 and self.K[i] > 0]
        if pin:
            return x, pin[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.w * (1.0 + np.where(d > 0, self.K / np.where(d > 0, d, 1.0), 0.0))
        v = sum(ci * li for ci, li in zip(c, logs)) / c.sum()
        return self.L.exp(x, v), None

    def subgradient_ok(self, x):
        """Is x optimal on this leaf?  Masses entering at x add a ball of subgradients."""
        g = np.zeros(self.L.dim)
        radius = 0.0
        for j, e in enumerate(self.e):
            lg = self.L.log(x, e)
            d = float(np.linalg.norm(lg))
            if d > 0:
                g -= 2 * self.w[j] * (d + self.K[j]) * lg / d
            else:
                radius += 2 * self.w[j] * self.K[j]
        if self.L.dim == 1:
            # on a segment only the inward directions exist
            s = float(x[0])
            dirs = [u for u, ok in ((-1.0, s > 0), (1.0, s < self.L.length)) if ok]
            return all(radius + g[0] * u >= 0 for u in dirs), g
        return float(np.linalg.norm(g)) <= radius, g

    def _point_on(self, x, v, a):
        y = self.L.exp(x, a * v)
        if isinstance(self.L, Segment):
            y = np.clip(y, 0.0, self.L.length)
        return y

    def _line_search(self, x, v):
        nv = float(np.linalg.norm(v))
        if nv == 0:
            return x
        amax = 1.0
        while amax < 1e6 and self.value(self._point_on(x, v, 2 * amax)) < self.value(self._point_on(x, v, amax)):
            amax *= 2
        res = minimize_scalar(lambda a: self.value(self._point_on(x, v, a)), bounds=(0.0, 2 * amax),
                              method="bounded", options={"xatol": 1e-14 / nv})
        y = self._point_on(x, v, res.x)
        return y if self.value(y) <= self.value(self._point_on(x, v, 1.0)) else self._point_on(x, v, 1.0)

    def _inside(self, x):
        if isinstance(self.L, Segment):
            return 0 < x[0] < self.L.length
        if isinstance(self.L, HyperbolicPlane):
            return float(np.dot(x, x)) < 1.0
        return True

    def _newton(self, x, target, iters=30):
        """Newton on the gradient field (chart coordinates, central-difference Jacobian).

        Function values cannot resolve the minimizer below ~sqrt(machine eps);
        the analytic gradient can.
        """
        grad = lambda y: self.subgradient_ok(y)[1]
        g = grad(x)
        for _ in range(iters):
            gn = float(np.linalg.norm(g))
            if gn <= target:
                return x, True
            h = 1e-6 * max(1.0, float(np.linalg.norm(x))) * (1e-2 if isinstance(self.L, HyperbolicPlane) else 1.0)
            J = np.empty((len(x), len(x)))
            for k in range(len(x)):
                e = np.zeros(len(x))
                e[k] = h
                if not (self._inside(x + e) and self._inside(x - e)):
                    return x, False
                J[:, k] = (grad(x + e) - grad(x - e)) / (2 * h)
            try:
                dx = -np.linalg.solve(J, g)
            except np.linalg.LinAlgError:
                return x, False
            a = 1.0
            while a > 1e-6:
                y = x + a * dx
                if self._inside(y):
                    gy = grad(y)
                    if np.linalg.norm(gy) < gn:
                        break
                a *= 0.5
            else:
                return x, False
            x, g = y, gy
        return x, float(np.linalg.norm(g)) <= target

    def kinks(self):
        out = []
        for e, k in zip(self.e, self.K):
            if k > 0 and not any(self.L.distance(e, o) == 0 for o in out):
                out.append(e)
        return out

    def solve(self, x0, tol, max_iter):
        for e in self.kinks():
            if self.subgradient_ok(e)[0]:
                return np.asarray(e, float), self.value(e), 0, True
        x = np.asarray(x0, float)
        fx = self.value(x)
        for it in range(1, max_iter + 1):
            xn, pin = self.step(x)
            if pin is not None:
                ok, g = self.subgradient_ok(x)
                if ok:
                    return x, fx, it, True
                # leave the kink along the descent direction with backtracking
                dirn = -g / np.linalg.norm(g)
                h = 1.0
                while h > 1e-18:
                    y = self.L.exp(x, h * dirn)
                    if self.value(y) < fx:
                        break
                    h *= 0.5
                xn = y
            else:
                # MM converges linearly; a line search along its direction removes most of the lag
                xn = self._line_search(x, self.L.log(x, xn))
            fn = self.value(xn)
            if fn > fx:
                xn, fn = x, fx
            step = self.L.distance(x, xn)
            x, fx = xn, min(fn, fx)
            # strong convexity: d(x, argmin) <= |grad B| / (2 mass)
            target = 0.2 * self.w.sum() * tol
            if self._inside(x):
                gn = float(np.linalg.norm(self.subgradient_ok(x)[1]))
                if gn <= target:
                    return x, fx, it, True
                if gn <= 1e-3 * self.w.sum():
                    y, ok = self._newton(x, target)
                    if ok and self.value(y) <= fx + 1e-12 * max(1.0, abs(fx)):
                        return y, self.value(y), it, True
            if step == 0.0:
                return x, fx, it, bool(self.subgradient_ok(x)[0])
        return x, fx, max_iter, False

    def start(self):
        # mass-weighted mean of entry points in flat charts; a generic seed elsewhere
        if isinstance(self.L, HyperbolicPlane):
            return np.array(self.e[int(np.argmax(self.w))], float)
        return np.sum([w * np.asarray(e, float) for w, e in zip(self.w, self.e)], axis=0) / self.w.sum()


def _validation_points(X, mu, b: PointRef, rng, n=1000, scales=(0.01, 0.1, 1.0)):
    pts = [z for z, _ in mu.atoms] + X.hub_refs()
    cb = X.validate(b)
    leaves = {b.leaf}
    for h in X.hubs:
        if b.leaf in h and X.leaves[b.leaf].distance(h[b.leaf], cb) < 1e-12:
            leaves |= set(h)
    leaves = sorted(leaves)
    for k in range(n):
        s = scales[k % len(scales)]
        lf = leaves[k % len(leaves)]
        leaf = X.leaves[lf]
        base = cb if lf == b.leaf else X.hubs[[i for i, h in enumerate(X.hubs) if lf in h and b.leaf in h][0]][lf]
        v = rng.normal(size=leaf.dim) * s
        pts.append(PointRef.of(lf, *leaf.exp(base, v)))
    return pts


def certificate(X, mu, b, points) -> float:
    Bb = leibniz(X, mu, b)
    m = mu.mass
    return max(distance(X, b, x) ** 2 * m - (leibniz(X, mu, x) - Bb) for x in points)


def barycenter(X: WedgeSpace, mu: PointedMeasure, tol=1e-9, init: Optional[PointRef] = None,
               seed=0, max_iter=20000, n_validation=1000, raise_on_failure=False):
    """Minimize the Leibniz function leaf by leaf; certify with the strong-convexity gap.

    ``init`` seeds the solver in its leaf (other leaves use their default seed).
    Returns ``(PointRef, BarycenterReport)``.
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    best = None
    total_it = 0
    all_conv = True
    for leaf in range(len(X.leaves)):
        prob = _LeafProblem(X, leaf, mu)
        x0 = prob.start() if init is None or init.leaf != leaf else X.validate(init)
        x0 = X.leaves[leaf].validate(x0) if not isinstance(X.leaves[leaf], Segment) else np.clip(x0, 0, X.leaves[leaf].length)
        x, fx, it, conv = prob.solve(x0, tol, max_iter)
        total_it += it
        all_conv &= conv
        if best is None or fx < best[1] - 1e-15 * max(1.0, abs(fx)):
            best = (PointRef.of(leaf, *x), fx)
    b = X.canonical(best[0])
    rng = np.random.default_rng(seed)
    pts = _validation_points(X, mu, b, rng, n_validation)
    cert = certificate(X, mu, b, pts)
    rep = BarycenterReport(b, leibniz(X, mu, b), cert, total_it, bool(all_conv and cert <= tol), len(pts))
    if raise_on_failure and not rep.converged:
        raise NotConverged(f"certificate {cert:.3e} > tol {tol:.1e}", rep)
    return b, rep


# -- fixtures ------------------------------------------------------------------

def single_euclidean():
    return WedgeSpace([EuclideanPlane()])


def single_hyperbolic():
    return WedgeSpace([HyperbolicPlane()])


def two_planes():
    return WedgeSpace([EuclideanPlane(), EuclideanPlane()], [[(0, (0.0, 0.0)), (1, (0.0, 0.0))]])


def tripod(length=1.0):
    """Three segments glued at their 0 endpoints."""
    return WedgeSpace([Segment(length) for _ in range(3)], [[(i, (0.0,)) for i in range(3)]])


def plane_tripod():
    """Euclidean, hyperbolic and Euclidean planes glued at one hub."""
    return WedgeSpace([EuclideanPlane(), HyperbolicPlane(), EuclideanPlane()],
                      [[(0, (0.0, 0.0)), (1, (0.0, 0.0)), (2, (1.0, 0.0))]])


def chain_three():
    """A - hub1 - B - hub2 - C with the hubs at distance 2 inside B."""
    return WedgeSpace([EuclideanPlane(), EuclideanPlane(), EuclideanPlane()],
                      [[(0, (0.0, 0.0)), (1, (-1.0, 0.0))], [(1, (1.0, 0.0)), (2, (0.0, 0.0))]])


FIXTURES = {"euclidean": single_euclidean, "hyperbolic": single_hyperbolic, "two_planes": two_planes,
            "tripod": tripod, "plane_tripod": plane_tripod, "chain": chain_three}


def random_point(X: WedgeSpace, rng, scale=1.0, leaf=None) -> PointRef:
    lf = int(rng.integers(len(X.leaves))) if leaf is None else leaf
    return PointRef.of(lf, *X.leaves[lf].random_point(rng, scale))
