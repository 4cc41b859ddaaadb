import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boxbec.elliptic import DomainError, complete_E, complete_K
from boxbec.groundstate import (
    GroundState,
    Regime,
    build_ground_state,
    bvp_residual,
    elliptic_mass,
    kappa_from_mu,
    mass_and_convexity,
    modulus_from_mu,
    mu_from_kappa,
    mu_from_modulus,
    zero_state,
)

F, D = Regime.FOCUSING, Regime.DEFOCUSING
PI2 = math.pi**2


def test_regime_parse_and_ranges():
    assert Regime.parse("Focusing") is F
    assert F.mu_min == -PI2 and D.mu_min == PI2


@pytest.mark.parametrize("reg", [F, D])
def test_modulus_endpoint(reg):
    assert modulus_from_mu(reg, reg.mu_min + 1e-9) < 1e-4


@pytest.mark.parametrize("reg", [F, D])
def test_modulus_below_range(reg):
    with pytest.raises(DomainError):
        modulus_from_mu(reg, reg.mu_min)
    with pytest.raises(DomainError):
        build_ground_state(reg, reg.mu_min - 1)


@pytest.mark.parametrize("reg,mu", [(F, -5.0), (F, 0.0), (F, 100.0), (D, 12.0), (D, 60.0)])
def test_modulus_roundtrip(reg, mu):
    k = modulus_from_mu(reg, mu)
    assert abs(mu_from_modulus(reg, k) / mu - 1) <= 1e-10 if mu else abs(mu_from_modulus(reg, k)) < 1e-10


def test_modulus_fine_grid_oracle():
    # coarse bracketing on a fine k grid, then plain bisection
    ks = np.linspace(0, 0.999999, 20001)
    vals = np.array([4 * (2 * k * k - 1) * complete_K(k) ** 2 for k in ks])
    i = np.searchsorted(vals, 100.0)
    lo, hi = ks[i - 1], ks[i]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if 4 * (2 * mid * mid - 1) * complete_K(mid) ** 2 < 100.0:
            lo = mid
        else:
            hi = mid
    assert abs(modulus_from_mu(F, 100.0) - 0.5 * (lo + hi)) <= 1e-12


def test_symmetry_and_boundary():
    gs = build_ground_state(F, 7.0, 513)
    assert np.max(np.abs(gs.phi - gs.phi[::-1])) <= 1e-12
    for reg, mu in [(F, 7.0), (D, 30.0)]:
        gs = build_ground_state(reg, mu, 513)
        assert gs.phi[0] == 0.0 and gs.phi[-1] == 0.0
        assert np.all(gs.phi[1:-1] > 0)
        assert gs.dphi1 != 0.0


def test_n_points_guard():
    with pytest.raises(ValueError):
        build_ground_state(F, 0.0, 32)


@pytest.mark.parametrize("reg,mu", [(F, -5.0), (F, 0.0), (F, 10.0), (F, 50.0),
                                    (D, 12.0), (D, 20.0), (D, 60.0)])
def test_bvp_residual(reg, mu):
    assert bvp_residual(build_ground_state(reg, mu)) <= 1e-8


def test_residual_fourth_order():
    gs = build_ground_state(F, 50.0)
    r = [bvp_residual(gs, 257, 1), bvp_residual(gs, 513, 1), bvp_residual(gs, 1025, 1)]
    for a, b in zip(r, r[1:]):
        assert 12 < a / b < 20


def test_endpoint_derivatives_match_differences():
    for reg, mu in [(F, 3.0), (D, 25.0)]:
        gs = build_ground_state(reg, mu)
        h = 1e-5
        fd = (gs.evaluate(1 + h) - gs.evaluate(1 - h)) / (2 * h)
        assert abs(fd - gs.dphi1) <= 1e-6 * abs(gs.dphi1)
        if reg is F:
            assert gs.dphi0 == pytest.approx(-gs.dphi1, rel=1e-12)


@pytest.mark.parametrize("mu", [-5.0, 0.0, 10.0, 50.0])
def test_focusing_mass_identity(mu):
    gs = build_ground_state(F, mu)
    mass, slope = mass_and_convexity(gs)
    K, E = complete_K(gs.k), complete_E(gs.k)
    assert abs(mass / (8 * K * (E - (1 - gs.k**2) * K)) - 1) <= 1e-8
    assert slope > 0


@pytest.mark.parametrize("mu", [12.0, 20.0, 60.0])
def test_defocusing_mass_sign(mu):
    gs = build_ground_state(D, mu)
    mass, slope = mass_and_convexity(gs)
    K, E = complete_K(gs.k), complete_E(gs.k)
    assert abs(mass / (8 * K * (K - E)) - 1) <= 1e-8
    assert 8 * K * (E - K) < 0 < mass
    assert slope > 0
    assert elliptic_mass(D, gs.k) == pytest.approx(mass, rel=1e-8)


def test_slope_matches_mass_derivative():
    h = 1e-3
    for reg, mu in [(F, 4.0), (D, 30.0)]:
        m_p = build_ground_state(reg, mu + h).mass
        m_m = build_ground_state(reg, mu - h).mass
        _, slope = mass_and_convexity(build_ground_state(reg, mu))
        assert abs((m_p - m_m) / (2 * h) - slope) <= 1e-5 * slope


@pytest.mark.parametrize("reg", [F, D])
def test_limit_at_infimum(reg):
    sup = [np.max(build_ground_state(reg, reg.mu_min + 10.0**-j).phi) for j in range(1, 5)]
    assert all(a > b for a, b in zip(sup, sup[1:]))
    assert sup[-1] < 0.05


@settings(max_examples=25, deadline=None)
@given(st.floats(-PI2 + 0.01, 200.0))
def test_slope_positive_focusing(mu):
    assert mass_and_convexity(build_ground_state(F, mu, 257))[1] > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(PI2 + 0.01, 200.0))
def test_slope_positive_defocusing(mu):
    assert mass_and_convexity(build_ground_state(D, mu, 257))[1] > 0


def test_kappa_substitution():
    gs = build_ground_state(F, 0.0)
    stub = GroundState(F, 0.0, gs.k, gs.x, gs.phi * math.sqrt(2 / gs.mass))
    assert kappa_from_mu(stub, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        kappa_from_mu(gs, 0.0, 1.0)


def test_kappa_monotone_and_roundtrip():
    mus = np.linspace(-9, 40, 25)
    kap = [kappa_from_mu(build_ground_state(F, mu, 257), 1.3, 0.7) for mu in mus]
    assert np.all(np.diff(kap) > 0)
    target = 7.5
    mu = mu_from_kappa(F, target, 1.3, 0.7, n_points=257)
    assert abs(kappa_from_mu(build_ground_state(F, mu, 257), 1.3, 0.7) - target) <= 1e-9


def test_zero_state():
    z = zero_state(D, 65)
    assert z.is_zero and z.mass == 0.0 and z.mu == PI2
