import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from boxbec.elliptic import (
    K_GUARD,
    DomainError,
    complete_E,
    complete_K,
    dK_dk,
    jacobi_cn_sn,
)


def _K_quad(k):
    return quad(lambda t: 1 / math.sqrt(1 - (k * math.sin(t)) ** 2), 0, math.pi / 2,
                epsabs=0, epsrel=2e-14)[0]


def _E_quad(k):
    return quad(lambda t: math.sqrt(1 - (k * math.sin(t)) ** 2), 0, math.pi / 2,
                epsabs=0, epsrel=2e-14)[0]


def test_K_at_zero():
    assert complete_K(0.0) == pytest.approx(math.pi / 2, abs=1e-15)


def test_K_half_matches_quadrature():
    assert abs(complete_K(0.5) - _K_quad(0.5)) <= 1e-12


def test_E_endpoints_and_half():
    assert complete_E(0.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert complete_E(1.0) == 1.0
    assert abs(complete_E(0.5) - _E_quad(0.5)) <= 1e-12


@pytest.mark.parametrize("k", [-0.1, 1.0, 1 - 1e-13, float("nan")])
def test_K_domain(k):
    with pytest.raises(DomainError):
        complete_K(k)


@pytest.mark.parametrize("k", [-0.1, 1.1])
def test_E_domain(k):
    with pytest.raises(DomainError):
        complete_E(k)


def test_K_guard_is_accepted():
    assert complete_K(K_GUARD) > 14.0


def test_K_relative_accuracy_grid():
    for k in np.linspace(0, 0.99, 12):
        assert abs(complete_K(k) / _K_quad(k) - 1) <= 1e-13


def test_monotonicity():
    ks = np.linspace(0, 0.999, 200)
    K = [complete_K(k) for k in ks]
    E = [complete_E(k) for k in ks]
    assert np.all(np.diff(K) > 0)
    assert np.all(np.diff(E) < 0)


@pytest.mark.parametrize("k", [0.1, 0.3, 0.5, 0.8, 0.95])
def test_dK_central_difference(k):
    h = 1e-6
    fd = (complete_K(k + h) - complete_K(k - h)) / (2 * h)
    assert abs(fd - dK_dk(k)) <= 1e-6 * max(1, abs(fd))


def test_jacobi_initial_values_and_degenerate():
    assert np.allclose(jacobi_cn_sn(0.0, 0.6), (1, 0, 1), atol=1e-15)
    x = np.linspace(-4, 4, 17)
    cn, sn, dn = jacobi_cn_sn(x, 0.0)
    assert np.allclose(cn, np.cos(x)) and np.allclose(sn, np.sin(x)) and np.all(dn == 1)


def test_sn_at_K():
    for k in (0.2, 0.8, 0.99):
        assert abs(jacobi_cn_sn(complete_K(k), k)[1] - 1) <= 1e-12


def test_jacobi_against_ode():
    k = 0.8

    def rhs(t, y):
        s, c, d = y
        return [c * d, -s * d, -k * k * s * c]

    sol = solve_ivp(rhs, (0, 0.7), [0, 1, 1], method="DOP853", rtol=1e-13, atol=1e-15)
    cn, sn, dn = jacobi_cn_sn(0.7, k)
    assert np.allclose([sn, cn, dn], sol.y[:, -1], atol=1e-10, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 0.999))
def test_pythagorean_identities(x, k):
    cn, sn, dn = jacobi_cn_sn(x, k)
    assert abs(sn**2 + cn**2 - 1) <= 1e-12
    assert abs(dn**2 + (k * sn) ** 2 - 1) <= 1e-12


def test_extended_precision_path():
    x = np.linspace(-2, 2, 9)
    lo = jacobi_cn_sn(x, 0.7)
    hi = jacobi_cn_sn(x.astype(np.longdouble), 0.7)
    assert hi[0].dtype == np.longdouble
    assert np.allclose(np.array(hi[0], dtype=float), lo[0], atol=1e-15)
