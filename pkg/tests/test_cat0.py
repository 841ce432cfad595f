import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minentlab import cat0 as C
from minentlab.errors import InvalidParameter

pt = C.PointRef.of


def test_distance_examples():
    E = C.single_euclidean()
    assert C.distance(E, pt(0, 0, 0), pt(0, 3, 4)) == 5.0
    assert C.distance(C.two_planes(), pt(0, 1, 0), pt(1, 1, 0)) == 2.0
    assert C.distance(C.chain_three(), pt(0, 1, 0), pt(2, 0, 1)) == pytest.approx(4.0)


def test_hyperbolic_distance_closed_form():
    H = C.HyperbolicPlane()
    # from the origin, d = 2 artanh |z|
    for r in (0.1, 0.5, 0.9, 0.999):
        assert H.distance((0, 0), (r, 0)) == pytest.approx(2 * math.atanh(r), rel=1e-13)


def test_hyperbolic_log_exp_roundtrip():
    H = C.HyperbolicPlane()
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, y = H.random_point(rng), H.random_point(rng)
        v = H.log(x, y)
        assert np.linalg.norm(v) == pytest.approx(H.distance(x, y), rel=1e-10)
        np.testing.assert_allclose(H.exp(x, v), y, atol=1e-10)


def test_geodesic_examples():
    E = C.single_euclidean()
    m = C.geodesic(E, pt(0, -1, 0), pt(0, 1, 0), 0.5)
    assert m.coords == (0.0, 0.0)
    X = C.two_planes()
    assert X.canonical(C.geodesic(X, pt(0, 1, 0), pt(1, 0, 1), 0.5)) == pt(0, 0, 0)
    with pytest.raises(InvalidParameter):
        C.geodesic(E, pt(0, 0, 0), pt(0, 1, 0), 1.5)


@pytest.mark.parametrize("name", sorted(C.FIXTURES))
def test_geodesic_constant_speed(name):
    X = C.FIXTURES[name]()
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, y = C.random_point(X, rng), C.random_point(X, rng)
        d = C.distance(X, x, y)
        for t in rng.uniform(size=10):
            g = C.geodesic(X, x, y, t)
            assert C.distance(X, x, g) == pytest.approx(t * d, abs=1e-9)
            assert C.distance(X, g, y) == pytest.approx((1 - t) * d, abs=1e-9)


@pytest.mark.parametrize("name", sorted(C.FIXTURES))
def test_metric_axioms(name):
    X = C.FIXTURES[name]()
    rng = np.random.default_rng(3)
    for _ in range(10**4 // len(C.FIXTURES)):
        a, b, c = (C.random_point(X, rng) for _ in range(3))
        ab, ba = C.distance(X, a, b), C.distance(X, b, a)
        assert abs(ab - ba) <= 1e-9
        assert ab <= C.distance(X, a, c) + C.distance(X, c, b) + 1e-9


def test_median_identity_examples():
    lhs, rhs = C.euclid_median_identity((0, 1), (-1, 0), (1, 0), (0, 0))
    assert lhs == pytest.approx(2) and rhs == pytest.approx(2)
    lhs, rhs = C.euclid_median_identity((0, 1), (-1, 0), (1, 0), (-1, 0))
    assert lhs == pytest.approx(2) and rhs == pytest.approx(2)
    with pytest.raises(InvalidParameter):
        C.euclid_median_identity((0, 1), (-1, 0), (1, 0), (0, 0.5))


@settings(max_examples=200)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(0, 1))
def test_median_identity_property(xy, t):
    A, B, Cc = np.array(xy[:2]), np.array(xy[2:4]), np.array(xy[4:])
    if np.linalg.norm(Cc - B) < 1e-3:
        return
    M = B + t * (Cc - B)
    lhs, rhs = C.euclid_median_identity(A, B, Cc, M)
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, lhs)


def test_comparison_examples():
    rng = np.random.default_rng(4)
    E, H, T = C.single_euclidean(), C.single_hyperbolic(), C.tripod()
    for _ in range(200):
        a, b, c = (C.random_point(E, rng, 3) for _ in range(3))
        assert abs(C.comparison_gap(E, a, b, c, rng.uniform())) <= 1e-12 * 100
    gaps = [C.comparison_gap(H, *(C.random_point(H, rng) for _ in range(3)), 0.5) for _ in range(200)]
    assert min(gaps) > 0
    assert all(C.comparison_check(T, *(C.random_point(T, rng) for _ in range(3)), rng.uniform())
               for _ in range(200))


@pytest.mark.parametrize("name", sorted(C.FIXTURES))
def test_comparison_all_fixtures(name):
    X = C.FIXTURES[name]()
    rng = np.random.default_rng(5)
    for _ in range(2000):
        a, b, c = (C.random_point(X, rng) for _ in range(3))
        assert C.comparison_check(X, a, b, c, rng.uniform())


def test_leibniz_examples():
    E = C.single_euclidean()
    mu = C.PointedMeasure.of([(pt(0, 1, 0), 1), (pt(0, -1, 0), 1)])
    assert C.leibniz(E, mu, pt(0, 0, 0)) == 2.0
    assert C.leibniz(E, C.PointedMeasure.of([(pt(0, 2, 3), 4.0)]), pt(0, 2, 3)) == 0.0
    with pytest.raises(InvalidParameter):
        C.PointedMeasure.of([(pt(0, 0, 0), -1.0)])


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_leibniz_translation(dx, dy):
    E = C.single_euclidean()
    zs = [(1.0, 2.0), (-3.0, 0.5), (0.0, -1.0)]
    mu = C.PointedMeasure.of([(pt(0, *z), w) for z, w in zip(zs, (1, 2, 3))])
    mu2 = C.PointedMeasure.of([(pt(0, z[0] + dx, z[1] + dy), w) for z, w in zip(zs, (1, 2, 3))])
    assert C.leibniz(E, mu, pt(0, 0.3, 0.4)) == pytest.approx(C.leibniz(E, mu2, pt(0, 0.3 + dx, 0.4 + dy)), rel=1e-10)


def test_barycenter_examples():
    E = C.single_euclidean()
    b, rep = C.barycenter(E, C.PointedMeasure.of([(pt(0, 0, 0), 1), (pt(0, 2, 0), 1)]))
    np.testing.assert_allclose(b.coords, (1.0, 0.0), atol=1e-9)
    assert rep.certificate <= 1e-9
    T = C.tripod()
    b, rep = C.barycenter(T, C.PointedMeasure.of([(pt(i, 1.0), 1) for i in range(3)]))
    assert C.distance(T, b, pt(0, 0.0)) <= 1e-9
    X = C.two_planes()
    b, rep = C.barycenter(X, C.PointedMeasure.of([(pt(0, 1, 0), 1), (pt(1, 0, 1), 1)]))
    assert C.distance(X, b, pt(0, 0, 0)) <= 1e-9
    assert rep.value == pytest.approx(2.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10**6))
def test_euclidean_barycenter_weighted_mean(k, seed):
    rng = np.random.default_rng(seed)
    zs = rng.normal(size=(k, 2)) * 3
    ws = rng.uniform(0.1, 2, k)
    mu = C.PointedMeasure.of([(pt(0, *z), w) for z, w in zip(zs, ws)])
    b, rep = C.barycenter(C.single_euclidean(), mu, n_validation=200)
    np.testing.assert_allclose(b.coords, (ws[:, None] * zs).sum(0) / ws.sum(), atol=1e-9)


@pytest.mark.parametrize("name", sorted(C.FIXTURES))
def test_barycenter_certificate_and_restart(name):
    X = C.FIXTURES[name]()
    rng = np.random.default_rng(6)
    mu = C.PointedMeasure.of([(C.random_point(X, rng), rng.uniform(0.5, 2)) for _ in range(5)])
    tol = 1e-9
    b, rep = C.barycenter(X, mu, tol=tol, seed=1)
    assert rep.certificate <= 1e-7
    b2, _ = C.barycenter(X, mu, tol=tol, seed=2, init=C.random_point(X, rng, leaf=b.leaf))
    assert C.distance(X, b, b2) <= 10 * tol


def test_barycenter_isometry_equivariance():
    X = C.two_planes()
    rng = np.random.default_rng(7)
    ang = 0.7
    Rm = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    atoms = [(C.random_point(X, rng), rng.uniform(0.5, 2)) for _ in range(6)]
    # rotate leaf 0 about its hub point: an isometry of the wedge
    moved = [(pt(p.leaf, *(Rm @ np.array(p.coords) if p.leaf == 0 else p.coords)), w) for p, w in atoms]
    b, _ = C.barycenter(X, C.PointedMeasure.of(atoms))
    b2, _ = C.barycenter(X, C.PointedMeasure.of(moved))
    img = pt(b.leaf, *(Rm @ np.array(b.coords) if b.leaf == 0 else b.coords))
    assert C.distance(X, img, b2) <= 1e-8


def test_wedge_validation():
    with pytest.raises(InvalidParameter):
        C.WedgeSpace([C.EuclideanPlane(), C.EuclideanPlane()])  # disconnected
    with pytest.raises(InvalidParameter):
        C.single_hyperbolic().validate(pt(0, 1.0, 0.0))
    with pytest.raises(InvalidParameter):
        C.tripod().validate(pt(0, 1.5))
