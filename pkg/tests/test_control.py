import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boxbec.control import (
    CertificateRequired,
    ContractError,
    SteeringError,
    TargetState,
    iteration_log_text,
    modal_target,
    newton_steer,
    orthogonality_defect,
    propagate_linearized,
    sphere_target,
    synthesize_linear_control,
    target_coefficients,
    target_vector,
)
from boxbec.discretization import SineGrid, StateField, h_norm
from boxbec.groundstate import Regime, build_ground_state
from boxbec.moments import gauss_panels
from boxbec.shooting import certify
from boxbec.spectral import spectrum_at

F, D = Regime.FOCUSING, Regime.DEFOCUSING
PI2 = math.pi**2
MU = -PI2 + 0.5
T = 1.0


@pytest.fixture(scope="module")
def foc():
    return spectrum_at(F, MU, M=128)


@pytest.fixture(scope="module")
def defoc():
    return spectrum_at(D, 15.0, M=128)


def rand_coeffs(seed, n=10):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_zero_target(foc):
    gs, sd = foc
    zero = StateField(SineGrid(sd.M), np.zeros(sd.M, complex))
    d0, d = target_coefficients(zero, sd, T, True)
    assert d0 == 0 and not np.any(d)
    lc = synthesize_linear_control(zero, sd, T, True)
    assert not np.any(lc.U(np.linspace(0, T, 11)))
    assert not np.any(propagate_linearized(lc, sd, gs, T))


def test_single_mode_target(foc):
    _, sd = foc
    c = np.zeros(5, complex)
    c[2] = 0.3 - 0.2j
    d0, d = target_coefficients(modal_target(sd, T, c), sd, T, True)
    others = np.delete(d, 2)
    assert abs(d0) < 1e-10 and np.max(np.abs(others)) < 1e-9 * abs(d[2])


def test_d0_from_null_component(foc):
    _, sd = foc
    d0, _ = target_coefficients(modal_target(sd, T, [], c0_plus=0.7), sd, T, True)
    assert d0 == pytest.approx(F.sign * 0.7 / sd.Gamma0_minus, rel=1e-9)


@pytest.mark.parametrize("which", ["foc", "defoc"])
def test_random_targets_orthogonal(which, request):
    _, sd = request.getfixturevalue(which)
    for seed in range(5):
        psi = modal_target(sd, T, rand_coeffs(seed), c0_plus=0.1 * seed)
        assert abs(orthogonality_defect(psi, sd, T)) < 1e-10
        Zf = target_vector(psi, sd, T)
        # the complex pairing with the null vector carries no imaginary part
        d0c = np.vdot(sd.Psi0_plus.reshape(-1), Zf.reshape(-1).astype(complex))
        assert abs(d0c.imag) <= 1e-8


def test_orthogonality_violation(foc):
    gs, sd = foc
    g = SineGrid(sd.M)
    chi = StateField(g, gs.evaluate(g.x) * np.exp(1j * MU * T))
    with pytest.raises(ContractError):
        target_coefficients(chi, sd, T, True)


def test_certificate_required(foc):
    _, sd = foc
    psi = modal_target(sd, T, [1.0])
    with pytest.raises(CertificateRequired):
        synthesize_linear_control(psi, sd, T)
    bad = certify(F, 3.0, 2)
    with pytest.raises(CertificateRequired, match="different"):
        synthesize_linear_control(psi, sd, T, bad)
    unresolved = certify(F, MU, 2, betas=np.array([40.0, 90.0]))
    with pytest.raises(CertificateRequired, match="status"):
        synthesize_linear_control(psi, sd, T, unresolved)
    good = certify(F, MU, 4)
    assert synthesize_linear_control(psi, sd, T, good).solution is not None


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000), st.floats(-3, 3).filter(lambda a: abs(a) > 1e-3))
def test_linearity(seed, alpha):
    gs, sd = spectrum_at(F, MU, M=64)
    c = rand_coeffs(seed, 6)
    t = np.linspace(0, T, 201)
    u1 = synthesize_linear_control(modal_target(sd, T, c), sd, T, True).U(t)
    u2 = synthesize_linear_control(modal_target(sd, T, alpha * c), sd, T, True).U(t)
    assert np.max(np.abs(u2 - alpha * u1)) <= 1e-9 * (1 + np.max(np.abs(alpha * u1)))


@pytest.mark.parametrize("which", ["foc", "defoc"])
def test_control_constraints(which, request):
    _, sd = request.getfixturevalue(which)
    lc = synthesize_linear_control(modal_target(sd, T, rand_coeffs(1), 0.2), sd, T, True)
    ends = lc.U(np.array([0.0, T]))
    assert np.max(np.abs(ends)) <= 1e-8
    assert abs(lc.int_U(np.array([T]))[0]) <= 1e-8
    assert lc.signal(1000).is_admissible(1e-8)


@pytest.mark.parametrize("which", ["foc", "defoc"])
@pytest.mark.parametrize("method", ["modal", "direct"])
def test_right_inverse(which, method, request):
    gs, sd = request.getfixturevalue(which)
    psi = modal_target(sd, T, rand_coeffs(7), 0.3)
    Zf = target_vector(psi, sd, T)
    lc = synthesize_linear_control(psi, sd, T, True)
    Z = propagate_linearized(lc, sd, gs, T, method=method, n_steps=1000)
    assert np.linalg.norm(Z - Zf) <= 1e-3 * np.linalg.norm(Zf)


def test_modal_duhamel_law(foc):
    gs, sd = foc

    def U(t):
        return np.sin(2 * np.pi * np.asarray(t) / T)

    _, (c0p, c0m, c) = propagate_linearized(U, sd, gs, T, return_modes=True)
    # oracle: a finer Gauss rule with a different layout
    x, w = np.polynomial.legendre.leggauss(40)
    edges = np.linspace(0, T, 3 * int(sd.betas[-1] * T / (2 * np.pi)) + 11)
    h = np.diff(edges)
    t = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1)).ravel()
    wt = (0.5 * h[:, None] * w).ravel()
    ref = np.exp(1j * sd.betas * T) * sd.Gamma_plus * (np.exp(-1j * np.outer(sd.betas, t)) @ (wt * U(t)))
    assert np.max(np.abs(c - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))
    assert abs(c0m) < 1e-13
    assert c0p == pytest.approx(sd.Gamma0_minus * (wt @ ((T - t) * U(t))), abs=1e-12)


def test_modal_vs_direct(foc):
    gs, sd = foc

    def U(t):
        return np.sin(2 * np.pi * np.asarray(t) / T)

    a = propagate_linearized(U, sd, gs, T, "modal")
    b = propagate_linearized(U, sd, gs, T, "direct", n_steps=1000)
    assert np.linalg.norm(a - b) <= 1e-6


def test_propagate_bad_method(foc):
    gs, sd = foc
    with pytest.raises(ValueError):
        propagate_linearized(lambda t: 0 * t, sd, gs, T, "euler")


def test_sphere_target_properties(foc):
    gs, sd = foc
    tgt = sphere_target(sd, gs, T, rand_coeffs(0, 6), 1e-3)
    g = tgt.psi_f.grid
    phi = gs.evaluate(g.x)
    assert abs(np.sum(np.abs(tgt.psi_f.values) ** 2) - np.sum(phi**2)) < 1e-12 * np.sum(phi**2)
    chi = phi * np.exp(1j * MU * T)
    rel = h_norm(tgt.psi_f.values - chi, 3) / h_norm(phi, 3)
    assert 0.5e-3 < rel < 2e-3


def test_newton_fixed_point(foc):
    gs, sd = foc
    g = SineGrid(sd.M)
    chi = gs.evaluate(g.x) * np.exp(1j * MU * T)
    res = newton_steer(TargetState(StateField(g, chi), MU, T), sd, gs, certificate=True,
                       tol=1e-5)
    assert res.converged and len(res.history) == 1
    assert not np.any(res.control.u)


def test_newton_nearby_ground_state(foc):
    gs, sd = foc
    g = SineGrid(sd.M)
    mu2 = MU + 1e-3
    phi2 = build_ground_state(F, mu2).evaluate(g.x)
    phi = gs.evaluate(g.x)
    psi_f = phi2 * math.sqrt(np.sum(phi**2) / np.sum(phi2**2)) * np.exp(1j * mu2 * T)
    res = newton_steer(TargetState(StateField(g, psi_f), MU, T), sd, gs, certificate=True)
    r = res.residuals
    assert res.converged and r[-1] <= 1e-5 and len(r) <= 9
    assert all(b < a for a, b in zip(r, r[1:]))
    assert res.control.is_admissible(1e-8)
    norm_final = math.sqrt(g.h * np.sum(np.abs(res.final_state.values) ** 2))
    assert abs(norm_final - math.sqrt(g.h * np.sum(phi**2))) < 1e-6
    log = iteration_log_text(res.history).splitlines()
    assert log[0].startswith("# iter step residual_h3 control_norm")
    assert len(log) == len(r) + 1


def test_newton_failure_keeps_history(foc):
    gs, sd = foc
    tgt = sphere_target(sd, gs, T, rand_coeffs(3, 6), 1e-3)
    with pytest.raises(SteeringError) as exc:
        newton_steer(tgt, sd, gs, certificate=True, max_iter=0)
    assert len(exc.value.history) == 1 and exc.value.history[0]["residual"] > 1e-5


def test_newton_preconditions(foc):
    gs, sd = foc
    g = SineGrid(sd.M)
    chi = gs.evaluate(g.x) * np.exp(1j * MU * T)
    with pytest.raises(ContractError, match="sphere"):
        newton_steer(TargetState(StateField(g, 1.01 * chi), MU, T), sd, gs, certificate=True)
    far = sphere_target(sd, gs, T, rand_coeffs(3, 6), 5e-2)
    with pytest.raises(ContractError, match="neighbourhood"):
        newton_steer(far, sd, gs, certificate=True)
    with pytest.raises(CertificateRequired):
        newton_steer(far, sd, gs)
