"""Linearized control synthesis and Newton steering of the end-point map.

Around the trajectory ``phi e^{i s mu t}`` the linearized state, written as
``Z = (Re, Im)`` of ``Psi e^{-i s mu t}``, obeys ``Z' = Lop Z + U(t) b`` with
``b = ((x phi)', 0)``.  In the biorthogonal basis::

    c_0^+(T) = s Gamma_0^- int (T - t) U,     c_0^-(T) = Gamma_0^- int U = 0,
    c_n(T)   = e^{i beta_n T} Gamma_n^+ int U e^{-i beta_n t},

so a target is reached by solving a trigonometric moment problem for
``nu = U'`` (see :mod:`boxbec.moments`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .discretization import SineGrid, StateField, dst_forward, h_norm
from .evolve import ControlSignal, solve_psi
from .groundstate import GroundState, Regime
from .linop import assemble_block
from .moments import MomentProblem, MomentSolution, gauss_panels, solve_moments
from .spectral import SpectralData

__all__ = [
    "TargetState",
    "ContractError",
    "CertificateRequired",
    "SteeringError",
    "LinearControl",
    "SteerResult",
    "orthonormal_coefficients",
    "target_vector",
    "orthogonality_defect",
    "target_coefficients",
    "synthesize_linear_control",
    "control_from_solution",
    "source_vector",
    "propagate_linearized",
    "resum",
    "newton_steer",
    "iteration_log_text",
    "modal_target",
    "sphere_target",
    "N_CTRL_MAX",
]

N_CTRL_MAX = 24


class ContractError(ValueError):
    """Target violates the orthogonality (or norm) condition."""


class CertificateRequired(RuntimeError):
    """Synthesis refused: no valid genericity certificate for this mu."""


class SteeringError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class TargetState:
    psi_f: StateField
    mu: float
    T: float


def orthonormal_coefficients(f, M: int) -> np.ndarray:
    """Complex coefficients on ``sqrt 2 sin(n pi x)``, padded/truncated to ``M``."""
    a = f.coefficients() if isinstance(f, StateField) else dst_forward(np.asarray(f))
    c = np.asarray(a) / math.sqrt(2.0)
    out = np.zeros(M, dtype=c.dtype)
    n = min(M, len(c))
    out[:n] = c[:n]
    return out


def target_vector(psi_f, sd: SpectralData, T: float) -> np.ndarray:
    """``Z_f = (Re, Im)`` of ``psi_f e^{-i s mu T}`` as a real ``(2, M)`` array."""
    c = orthonormal_coefficients(psi_f, sd.M) * np.exp(-1j * sd.regime.sign * sd.mu * T)
    return np.stack([c.real, c.imag])


def orthogonality_defect(psi_f, sd: SpectralData, T: float) -> float:
    """``Re int conj(psi_f) phi e^{i s mu T}``, i.e. ``<Z_f, Psi_0^->``."""
    Zf = target_vector(psi_f, sd, T)
    return float(np.sum(Zf * sd.Psi0_minus))


def _check_certificate(sd, certificate):
    if certificate is None:
        raise CertificateRequired("a genericity certificate is required for synthesis")
    if certificate is True:
        return
    if not certificate.certified:
        raise CertificateRequired(f"certificate status is {certificate.status}")
    if certificate.regime is not sd.regime or abs(certificate.mu - sd.mu) > 1e-12 * max(1, abs(sd.mu)):
        raise CertificateRequired("certificate is for a different regime or mu")


def target_coefficients(psi_f, sd: SpectralData, T: float, certificate=None,
                        n_ctrl: int | None = None, ortho_tol: float = 1e-6):
    """Moment targets ``(d0, d_1..d_N)`` for a linearized target ``psi_f``.

    ``d0 = s <Z_f, Psi_0^+> / Gamma_0^-`` and
    ``d_n = i beta_n <Z_f, Psi_n^+> e^{-i beta_n T} / Gamma_n^+``.
    """
    _check_certificate(sd, certificate)
    n_ctrl = min(sd.n_keep, N_CTRL_MAX) if n_ctrl is None else n_ctrl
    Zf = target_vector(psi_f, sd, T)
    scale = max(1.0, float(np.linalg.norm(Zf)))
    defect = float(np.sum(Zf * sd.Psi0_minus))
    if abs(defect) > ortho_tol * scale:
        raise ContractError(f"orthogonality condition violated: {defect:.3e}")
    gam = sd.Gamma_plus[:n_ctrl]
    if np.any(np.abs(gam) == 0):
        raise CertificateRequired("vanishing Gamma_n^+ among controlled modes")
    s = sd.regime.sign
    d0 = s * float(np.sum(Zf * sd.Psi0_plus.real)) / sd.Gamma0_minus
    proj = np.einsum("km,nkm->n", Zf, np.conj(sd.Psi_plus[:n_ctrl]))
    betas = sd.betas[:n_ctrl]
    d = 1j * betas * proj * np.exp(-1j * betas * T) / gam
    return d0, d


@dataclass(frozen=True)
class LinearControl:
    """Synthesized control ``U = int nu`` with its moment solution."""

    solution: MomentSolution | None
    T: float
    d0: float
    d: np.ndarray

    def U(self, t):
        t = np.asarray(t, dtype=float)
        if self.solution is None:
            return np.zeros_like(t)
        return self.solution.U_at(t)

    def dU(self, t):
        t = np.asarray(t, dtype=float)
        if self.solution is None:
            return np.zeros_like(t)
        return self.solution.nu_at(t)

    def int_U(self, t):
        t = np.asarray(t, dtype=float)
        if self.solution is None:
            return np.zeros_like(t)
        return self.solution.int_U_at(t)

    def signal(self, n_steps: int) -> ControlSignal:
        t = np.linspace(0.0, self.T, n_steps + 1)
        return ControlSignal(t, self.U(t), self.dU(t), self.int_U(t))


def control_from_solution(lc: LinearControl, n_steps: int) -> ControlSignal:
    return lc.signal(n_steps)


def synthesize_linear_control(psi_f, sd: SpectralData, T: float, certificate=None,
                              n_ctrl: int | None = None, n_t: int | None = None,
                              ortho_tol: float = 1e-6, window: str = "sin2") -> LinearControl:
    """Right inverse of the linearized end-point map on the controlled modes.

    The default ``sin2`` window makes ``u'`` vanish at both ends, so the
    response of the uncontrolled modes (through the boundary terms of
    ``int U e^{-i beta t}``) is several orders smaller than for the plain
    minimal-norm control.
    """
    d0, d = target_coefficients(psi_f, sd, T, certificate, n_ctrl, ortho_tol)
    n = len(d)
    if d0 == 0.0 and not np.any(d):
        return LinearControl(None, T, 0.0, d)
    sol = solve_moments(MomentProblem(T, sd.betas[:n], d0, d), n_t=n_t, window=window)
    return LinearControl(sol, T, d0, d)


def source_vector(gs: GroundState, M: int) -> np.ndarray:
    """Orthonormal sine coefficients of ``((x phi)', 0)`` (Gauss-Legendre projection)."""
    nodes, weights = np.polynomial.legendre.leggauss(2 * M + 64)
    xq = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    a = gs.evaluate(xq) + xq * gs.evaluate_dx(xq)
    S = math.sqrt(2.0) * np.sin(np.pi * np.outer(np.arange(1, M + 1), xq))
    b = np.zeros((2, M))
    b[0] = S @ (wq * a)
    return b


def _U_callable(U, T):
    if isinstance(U, LinearControl):
        return U.U
    if isinstance(U, ControlSignal):
        return CubicSpline(U.t, U.u)
    if callable(U):
        return U
    raise TypeError("U must be a LinearControl, ControlSignal or callable")


def resum(sd: SpectralData, c0_plus: float, c0_minus: float, c) -> np.ndarray:
    """``Z = (c0+ Phi0+ + c0- Phi0-)/p + sum 2 Re(c_n Phi_n^+)`` as real ``(2, M)``."""
    p = sd.null_pairing
    Z = (c0_plus * sd.Phi0_plus + c0_minus * sd.Phi0_minus) / p
    Z = Z + 2.0 * np.einsum("n,nkm->km", np.asarray(c), sd.Phi_plus).real
    return np.real(Z)


def propagate_linearized(U, sd: SpectralData, gs: GroundState, T: float,
                         method: str = "modal", n_steps: int = 2000, order: int = 4,
                         return_modes: bool = False):
    """Linearized state ``Z(T)`` from ``Z(0) = 0`` as a real ``(2, M)`` array.

    ``method="modal"``: Duhamel formula per mode with Gauss-Legendre quadrature,
    resummed over the retained modes.  ``method="direct"``: exponential
    integrator on the full ``2M`` system with a piecewise polynomial ``U``.
    """
    f = _U_callable(U, T)
    if method == "modal":
        omega = float(sd.betas[-1])
        nodes, weights = gauss_panels(T, omega, order=20)
        Uq = np.asarray(f(nodes), dtype=float)
        intU = float(weights @ Uq)
        c0p = sd.regime.sign * sd.Gamma0_minus * float(weights @ ((T - nodes) * Uq))
        c0m = sd.Gamma0_minus * intU
        E = np.exp(-1j * np.outer(sd.betas, nodes))
        c = np.exp(1j * sd.betas * T) * sd.Gamma_plus * (E @ (weights * Uq))
        Z = resum(sd, c0p, c0m, c)
        return (Z, (c0p, c0m, c)) if return_modes else Z
    if method != "direct":
        raise ValueError("method must be 'modal' or 'direct'")
    M = sd.M
    A = assemble_block(gs.regime, gs, "L", M).matrix
    b = source_vector(gs, M).reshape(-1)
    dt = T / n_steps
    # U is interpolated on each step by a polynomial through ``order`` Gauss
    # nodes; the Duhamel integral of each monomial s^k is exact, taken from one
    # augmented exponential (stiff modes stay bounded for any dt).
    n = 2 * M
    q = order
    aug = np.zeros((n + q, n + q))
    aug[:n, :n] = A * dt
    aug[:n, n + q - 1] = b * dt
    for k in range(1, q):
        aug[n + k, n + k - 1] = 1.0
    Ea = scipy.linalg.expm(aug)
    E = Ea[:n, :n]
    # moments[i] = int_0^1 e^{A dt (1 - s)} b dt s^i ds
    moments = np.stack([math.factorial(i) * Ea[:n, n + q - 1 - i] for i in range(q)])
    s_nodes = 0.5 * (np.polynomial.legendre.leggauss(q)[0] + 1.0)
    lagrange = np.linalg.inv(np.vander(s_nodes, q, increasing=True))  # columns: basis
    kicks = lagrange.T @ moments
    tk = (np.arange(n_steps)[:, None] + s_nodes[None, :]) * dt
    Uq = np.asarray(f(tk.ravel()), dtype=float).reshape(tk.shape)
    Z = np.zeros(n)
    for k in range(n_steps):
        Z = E @ Z + Uq[k] @ kicks
    return Z.reshape(2, M)


def modal_target(sd: SpectralData, T: float, coeffs, c0_plus: float = 0.0,
                 grid: SineGrid | None = None) -> StateField:
    """Admissible linearized target ``psi_f`` with ``Z_f`` on the given modes.

    ``Z_f = c0_plus Phi_0^+ / p + sum_n 2 Re(coeffs[n-1] Phi_n^+)``; this meets
    the orthogonality condition by biorthogonality.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    c = np.zeros(sd.n_keep, dtype=complex)
    c[:len(coeffs)] = coeffs
    Z = resum(sd, c0_plus, 0.0, c)
    vals = (Z[0] + 1j * Z[1]) * np.exp(1j * sd.regime.sign * sd.mu * T)
    grid = grid or SineGrid(sd.M)
    from .linop import points_from_coefficients

    a = np.zeros(grid.M, dtype=complex)
    n = min(grid.M, sd.M)
    a[:n] = vals[:n]
    return StateField(grid, points_from_coefficients(a.real) + 1j * points_from_coefficients(a.imag))


def sphere_target(sd: SpectralData, gs: GroundState, T: float, coeffs, rel_size: float,
                  grid: SineGrid | None = None) -> TargetState:
    """``phi e^{i s mu T}`` plus a modal perturbation, renormalized to the sphere.

    The perturbation uses :func:`modal_target` with ``coeffs`` and is scaled
    so its ``H^3``-type norm is ``rel_size`` times that of ``phi``.
    """
    grid = grid or SineGrid(sd.M)
    phi = gs.evaluate(grid.x)
    chi = phi * np.exp(1j * sd.regime.sign * sd.mu * T)
    eta = modal_target(sd, T, coeffs, 0.0, grid).values
    scale = h_norm(eta, 3)
    if scale > 0:
        eta = eta * (rel_size * h_norm(phi, 3) / scale)
    psi = chi + eta
    psi *= math.sqrt(np.sum(phi**2) / np.sum(np.abs(psi) ** 2))
    return TargetState(StateField(grid, psi), sd.mu, T)


@dataclass
class SteerResult:
    control: ControlSignal
    converged: bool
    history: list = field(default_factory=list)
    final_state: StateField | None = None

    @property
    def residuals(self):
        return [h["residual"] for h in self.history]


def iteration_log_text(history) -> str:
    lines = ["# iter step residual_h3 control_norm tail_h3"]
    for h in history:
        lines.append("{} {:.17g} {:.17g} {:.17g} {:.17g}".format(
            h["iter"], h["step"], h["residual"], h["control_norm"], h.get("tail", 0.0)))
    return "\n".join(lines) + "\n"


def newton_steer(target: TargetState, sd: SpectralData, gs: GroundState, tol: float = 1e-5,
                 max_iter: int = 8, dt: float = 5e-4, certificate=None,
                 n_ctrl: int | None = None, delta_desk: float | None = None,
                 steps=(1.0, 0.5, 0.25, 0.125), armijo: float = 1e-4,
                 scheme: str = "etdrk4", window: str = "sin2") -> SteerResult:
    """Damped Newton iteration ``u <- u + lam R(psi_f - Theta(u))``.

    ``R`` is the linearized right inverse around ``u = 0`` applied to the
    residual after removing its component along ``phi e^{i s mu T}``.
    ``Theta`` is :func:`boxbec.evolve.solve_psi` with time step ``dt``; the
    default exponential scheme keeps the high-mode part of the residual, which
    the ``H^3`` weights amplify, free of splitting resonances.
    """
    _check_certificate(sd, certificate)
    regime = sd.regime
    T = target.T
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * T:
        raise ValueError("T must be a multiple of dt")
    n_samples = 2 * n_steps if scheme == "etdrk4" else n_steps
    grid = target.psi_f.grid
    if grid.M != sd.M:
        raise ValueError("target grid and spectral data must use the same M")
    n_ctrl = min(sd.n_keep, N_CTRL_MAX) if n_ctrl is None else n_ctrl
    phi = StateField(grid, gs.evaluate(grid.x) + 0j)
    chi = phi.values * np.exp(1j * regime.sign * sd.mu * T)
    psi_f = target.psi_f.points()

    norm_phi = math.sqrt(grid.h * np.sum(np.abs(phi.values) ** 2))
    norm_f = math.sqrt(grid.h * np.sum(np.abs(psi_f) ** 2))
    if abs(norm_f - norm_phi) > 1e-8 * max(1.0, norm_phi):
        raise ContractError("target is not on the sphere of the ground-state norm")
    if delta_desk is None:
        delta_desk = 1e-2 * h_norm(phi, 3)
    if h_norm(psi_f - chi, 3) > delta_desk:
        raise ContractError("target outside the desk-scale neighbourhood")

    def theta(u):
        return solve_psi(phi, u, regime, scheme=scheme).final.points()

    def tail(r):
        a = dst_forward(r)
        k = np.pi * np.arange(1, len(a) + 1)
        return float(np.sqrt(0.5 * np.sum(np.abs(k[n_ctrl + 1:] ** 3 * a[n_ctrl + 1:]) ** 2)))

    u = ControlSignal.zero(T, n_samples)
    state = theta(u)
    r = psi_f - state
    res = h_norm(r, 3)
    history = [{"iter": 0, "step": 0.0, "residual": res, "control_norm": 0.0, "tail": tail(r)}]
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SteeringError(f"no convergence in {max_iter} iterations", history)
        it += 1
        # tangent-space projection of the residual
        rp = r - (np.real(np.vdot(chi, r)) / np.real(np.vdot(chi, chi))) * chi
        lc = synthesize_linear_control(StateField(grid, rp), sd, T, True, n_ctrl,
                                       ortho_tol=1e-6, window=window)
        dU = lc.signal(n_samples)
        for lam in steps:
            trial = u + dU.scaled(lam)
            st = theta(trial)
            rt = psi_f - st
            rn = h_norm(rt, 3)
            if rn <= (1.0 - armijo * lam) * res:
                break
        else:
            raise SteeringError("no residual decrease at the smallest step", history)
        u, state, r, res = trial, st, rt, rn
        history.append({"iter": it, "step": lam, "residual": res,
                        "control_norm": u.norm(), "tail": tail(r)})
    return SteerResult(u, True, history, StateField(grid, state))
