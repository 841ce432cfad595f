import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minentlab import jacobian as J
from minentlab.errors import Degenerate, InvalidParameter


def test_phi_examples():
    assert J.phi_of_spectrum(J.SpectrumPoint.of([1 / 3] * 3)) == pytest.approx(3**1.5 / 8, rel=1e-14)
    assert J.phi_of_spectrum(J.SpectrumPoint.of([1, 0, 0])) == math.inf
    assert J.phi_of_spectrum(J.SpectrumPoint.of([0.5, 0.3, 0.2])) == pytest.approx(math.sqrt(0.03) / 0.28, rel=1e-14)


def test_spectrum_validation():
    with pytest.raises(InvalidParameter):
        J.SpectrumPoint.of([0.5, 0.6])
    with pytest.raises(InvalidParameter):
        J.SpectrumPoint.of([1.2, -0.2])


@settings(max_examples=100)
@given(st.lists(st.floats(0.01, 1), min_size=3, max_size=6))
def test_phi_permutation_invariant(raw):
    h = np.array(raw) / np.sum(raw)
    h[-1] = 1 - h[:-1].sum()
    if h[-1] < 0:
        return
    v = J.phi_of_spectrum(J.SpectrumPoint.of(h))
    for perm in itertools.islice(itertools.permutations(h), 6):
        assert J.phi_of_spectrum(J.SpectrumPoint.of(perm)) == pytest.approx(v, rel=1e-14)


@pytest.mark.parametrize("n,ref", [(3, 0.649519052838329), (4, 16 / 81), (5, 0.0545915)])
def test_algebraic_max(n, ref):
    mx, arg = J.algebraic_max(n, 10**5)
    assert J.algebraic_bound(n) == pytest.approx(ref, abs=1e-7)
    assert mx <= J.algebraic_bound(n) + 1e-9
    np.testing.assert_allclose(arg, 1 / n, atol=1e-6)
    assert J.phi_of_spectrum(J.SpectrumPoint.of([1 / n] * n)) == pytest.approx(J.algebraic_bound(n), abs=1e-12)


def test_coth_closed_form():
    sch = J.CurvatureSchedule((0.0, 3.0), (-1.0,))
    ii, _ = J.jacobi_ii(sch, 0.0, 1.0)
    assert ii == pytest.approx(1 / math.tanh(3), rel=1e-10)
    assert ii >= J.ii_lower_bound(3.0)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 3.0, 7.0, 10.0])
def test_coth_range(t):
    ii, _ = J.jacobi_ii(J.CurvatureSchedule((0.0, t), (-1.0,)), 0.0, 1.0)
    assert abs(ii - 1 / math.tanh(t)) <= 1e-8


def test_flat_then_hyperbolic():
    sch = J.CurvatureSchedule.from_prefix([2.0], [0.0], 3.0)
    assert sch.R == 3.0 and sch.ell == 5.0
    ii, prof = J.jacobi_ii(sch, 0.0, 1.0)
    Jc, Jpc = J.jacobi_closed_form(sch, 0.0, 1.0)
    assert ii == pytest.approx(Jpc / Jc, rel=1e-10)
    assert ii >= J.ii_lower_bound(3.0)
    np.testing.assert_allclose(prof.t, [0, 2, 5])


def test_flat_only_gives_one_over_t():
    # kappa = 0 throughout is not a valid schedule (needs a -1 tail); use the closed-form propagator
    assert J._propagate_closed(0.0, 4.0, 0.0, 1.0) == (4.0, 1.0)


def test_schedule_validation():
    with pytest.raises(InvalidParameter):
        J.CurvatureSchedule((0.0, 1.0, 2.0), (0.5, -1.0))
    with pytest.raises(InvalidParameter):
        J.CurvatureSchedule((0.0, 1.0), (0.0,))
    with pytest.raises(Degenerate):
        J.jacobi_ii(J.CurvatureSchedule((0.0, 1.0), (-1.0,)), 0.0, 0.0)


def test_random_schedules_bound_and_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(0, 4))
        b = np.cumsum(rng.uniform(0.1, 2.0, m))
        v = rng.uniform(-4.0, 0.0, m)
        R = rng.uniform(0.5, 5.0)
        s = J.CurvatureSchedule.from_prefix(b, v, R)
        jp0 = rng.uniform(0.1, 3.0)
        ii, _ = J.jacobi_ii(s, 0.0, jp0)
        Jc, Jpc = J.jacobi_closed_form(s, 0.0, jp0)
        assert ii == pytest.approx(Jpc / Jc, rel=1e-9)
        assert ii >= J.ii_lower_bound(R) - 1e-8


def test_dopri_rejects_steps_and_is_accurate():
    J1, Jp1, steps, rejected = J._dopri_linear(-9.0, 0.0, 2.0, 0.0, 1.0, 1e-12, 1e-14, h0=1.0)
    assert rejected > 0
    assert J1 == pytest.approx(math.sinh(6.0) / 3, rel=1e-10)


def test_radius_for_eps():
    for eps in (0.5, 0.1, 0.02):
        assert abs(2 * math.exp(-2 * J.radius_for_eps(eps)) - eps) <= 1e-14
    assert J.radius_for_eps(0.02) == pytest.approx(math.log(10))
    assert J.radius_for_eps(0.5) == pytest.approx(math.log(2))
    with pytest.raises(InvalidParameter):
        J.radius_for_eps(2.0)


def test_jacobian_bound_examples():
    assert J.jacobian_bound(2, 3, 0) == pytest.approx(1.0)
    assert J.jacobian_bound(2.2, 3, 0) == pytest.approx(1.331)
    assert J.jacobian_bound(2, 3, 0.1) == pytest.approx(1 / 0.729)


def test_chain_examples():
    u = J.SpectrumPoint.of([1 / 3] * 3)
    assert J.jacobian_chain_value(u, 2, 3, 0) == pytest.approx(J.jacobian_bound(2, 3, 0), abs=1e-12)
    assert J.jacobian_chain_check(u, 2, 3, 0)
    near = J.SpectrumPoint.of([0.98, 0.01, 0.01])
    # phi = sqrt(0.98e-4) / (0.02 * 0.99^2) = 0.50505, times 8 / 3^1.5
    assert J.jacobian_chain_value(near, 2, 3, 0) == pytest.approx(0.7775364509, abs=1e-9)
    assert J.jacobian_chain_check(near, 2, 3, 0)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_chain_random_spectra(n):
    rng = np.random.default_rng(n)
    H = rng.dirichlet(np.ones(n), size=10**5)
    lphi = J._log_phi(H)
    for c in (2.0, 2.5, 3.0):
        for eps in (0.0, 0.1):
            lhs = n * math.log(c) - (n / 2) * math.log(n) + lphi - n * math.log1p(-eps)
            assert np.all(np.exp(lhs) <= J.jacobian_bound(c, n, eps) + 1e-9)
    for h in H[:500]:
        assert J.jacobian_chain_check(J.SpectrumPoint.of(h / h.sum()), 2.5, n, 0.1)
