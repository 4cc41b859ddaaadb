"""Finite trigonometric moment problem with minimal-norm solution.

Find a real ``nu`` on ``(0, T)`` with::

    int nu = 0,  int (T-t) nu = 0,  int (T-t)^2/2 nu = d0,
    int nu exp(-i beta_n t) = d_n,   n = 1..N.

The minimal-L2 solution lies in the span of the 2N+3 real constraint functions
``{1, T-t, (T-t)^2/2, cos(beta_n t), sin(beta_n t)}``; its coefficients solve the
Gram system.  With ``window="sin2"`` the norm is weighted by ``1/w``,
``w = sin^2(pi t / T)``, and the solution is ``w`` times a span element, so it
vanishes with its first derivative at both ends.  Everything is analytic in
``t``: ``nu``, ``U = int nu`` and ``int U`` are evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "MomentProblem",
    "MomentSolution",
    "IllPosedError",
    "ContractError",
    "basis_values",
    "gauss_panels",
    "solve_moments",
    "antiderivative_U",
    "default_nt",
    "ExpPoly",
    "WINDOWS",
]

COND_LIMIT = 1e14
TIKHONOV = 1e-12
WINDOWS = ("none", "sin2")


class IllPosedError(RuntimeError):
    """Gram matrix too ill-conditioned for the requested frequencies."""


class ContractError(ValueError):
    """A precondition of the moment/antiderivative contract is violated."""


def default_nt(T: float, betas) -> int:
    """Uniform sample count: at least ``20 N`` and 20 points per shortest period."""
    betas = np.asarray(betas, dtype=float)
    N = len(betas)
    per_period = 20 * math.ceil(T * float(np.max(betas, initial=0.0)) / (2 * math.pi))
    return int(max(20 * N, per_period, 64)) + 1


@dataclass(frozen=True)
class MomentProblem:
    T: float
    betas: np.ndarray
    d0: float
    d: np.ndarray
    n_t: int | None = None

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "d", np.asarray(self.d, dtype=complex))
        if self.T <= 0:
            raise ValueError("T must be positive")
        if len(b) != len(self.d):
            raise ValueError("one target per frequency")
        if np.any(b <= 0) or np.any(np.diff(b) <= 0):
            raise ValueError("frequencies must be positive and strictly ascending")
        if self.n_t is not None and self.n_t < 20 * len(b):
            raise ValueError("n_t must be at least 20 N")

    @property
    def N(self) -> int:
        return len(self.betas)

    def gaps_increasing(self) -> bool:
        return bool(np.all(np.diff(np.diff(self.betas)) > 0))

    def rhs(self) -> np.ndarray:
        """Real right side ``(0, 0, d0, Re d_n, -Im d_n)``."""
        return np.concatenate([[0.0, 0.0, float(self.d0)], self.d.real, -self.d.imag])


def basis_values(t, T: float, betas) -> np.ndarray:
    """Constraint functions at ``t``: rows ``1, T-t, (T-t)^2/2, cos, sin``."""
    t = np.asarray(t, dtype=float)
    s = T - t
    bt = np.outer(betas, t)
    return np.vstack([np.ones_like(t), s, 0.5 * s * s, np.cos(bt), np.sin(bt)])


def _basis_integrals(t, T, betas) -> np.ndarray:
    """Antiderivatives from 0 of the constraint functions."""
    t = np.asarray(t, dtype=float)
    b = np.asarray(betas, dtype=float)[:, None]
    bt = b * t
    return np.vstack([
        t,
        T * t - 0.5 * t * t,
        (T**3 - (T - t) ** 3) / 6.0,
        np.sin(bt) / b,
        (1.0 - np.cos(bt)) / b,
    ])


def window_values(t, T: float, window: str):
    if window == "none":
        return np.ones_like(np.asarray(t, dtype=float))
    if window == "sin2":
        return np.sin(np.pi * np.asarray(t, dtype=float) / T) ** 2
    raise ValueError(f"window must be one of {WINDOWS}")


def _monomial_exp_integrals(k_max: int, omega: float, t) -> list:
    """``I_k(t) = int_0^t s^k e^{i omega s} ds`` for ``k = 0..k_max``."""
    t = np.asarray(t, dtype=float)
    tmax = float(np.max(np.abs(t), initial=0.0))
    if omega == 0.0:
        return [t ** (k + 1) / (k + 1) for k in range(k_max + 1)]
    if abs(omega) * tmax < 2.0:
        # power series; the recursion below would cancel badly here
        z = 1j * omega * t
        out = []
        for k in range(k_max + 1):
            term = np.ones_like(z)
            acc = term / (k + 1)
            for j in range(1, 40):
                term = term * z / j
                acc = acc + term / (k + j + 1)
            out.append(acc * t ** (k + 1))
        return out
    e = np.exp(1j * omega * t)
    io = 1j * omega
    out = [(e - 1.0) / io]
    for k in range(1, k_max + 1):
        out.append((t**k * e - k * out[-1]) / io)
    return out


class ExpPoly:
    """Real function ``Re sum_r c_r t^{k_r} e^{i omega_r t}`` with exact integrals."""

    def __init__(self, c, k, omega):
        self.c = np.asarray(c, dtype=complex)
        self.k = np.asarray(k, dtype=int)
        self.omega = np.asarray(omega, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for c, k, w in zip(self.c, self.k, self.omega):
            out += c * t**k * np.exp(1j * w * t)
        return out.real

    def integral(self, t, times: int = 1):
        """``times``-fold integral from 0 (``times`` is 1 or 2)."""
        if times not in (1, 2):
            raise ValueError("times must be 1 or 2")
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for w in np.unique(self.omega):
            sel = self.omega == w
            I = _monomial_exp_integrals(int(self.k[sel].max()) + 1, float(w), t)
            for c, k in zip(self.c[sel], self.k[sel]):
                # int_0^t (t - s) s^k e^{iws} ds = t I_k - I_{k+1}
                out += c * (I[k] if times == 1 else t * I[k] - I[k + 1])
        return out.real

    @classmethod
    def from_coefficients(cls, coef, T: float, betas, window: str = "none") -> "ExpPoly":
        coef = np.asarray(coef, dtype=float)
        betas = np.asarray(betas, dtype=float)
        N = len(betas)
        a0, a1, a2 = coef[:3]
        # 1, T - t, (T - t)^2 / 2 as monomials in t
        c = [a0 + a1 * T + 0.5 * a2 * T * T, -(a1 + a2 * T), 0.5 * a2]
        k = [0, 1, 2]
        om = [0.0, 0.0, 0.0]
        for n in range(N):
            # a cos + b sin = Re((a - i b) e^{i beta t})
            c.append(coef[3 + n] - 1j * coef[3 + N + n])
            k.append(0)
            om.append(betas[n])
        c, k, om = np.array(c, dtype=complex), np.array(k), np.array(om)
        if window == "none":
            return cls(c, k, om)
        if window != "sin2":
            raise ValueError(f"window must be one of {WINDOWS}")
        # sin^2(pi t/T) = 1/2 - cos(2 pi t/T)/2; Re(z) cos(W t) = Re(z e^{iWt} + z e^{-iWt})/2
        W = 2 * np.pi / T
        return cls(np.concatenate([0.5 * c, -0.25 * c, -0.25 * c]),
                   np.concatenate([k, k, k]),
                   np.concatenate([om, om + W, om - W]))


def gauss_panels(T: float, omega_max: float, order: int = 16, per_period: int = 2):
    """Composite Gauss-Legendre nodes/weights on [0, T] resolving ``omega_max``."""
    n_pan = max(4, per_period * math.ceil(T * omega_max / (2 * math.pi)) + 4)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T, n_pan + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class MomentSolution:
    problem: MomentProblem
    coef: np.ndarray
    t: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)
    cond: float = 0.0
    epsilon: float = 0.0
    gram: np.ndarray = field(default=None, repr=False)
    window: str = "none"

    @property
    def expansion(self) -> ExpPoly:
        return ExpPoly.from_coefficients(self.coef, self.problem.T, self.problem.betas,
                                         self.window)

    def nu_at(self, t):
        if self.window == "none":
            return self.coef @ basis_values(t, self.problem.T, self.problem.betas)
        return self.expansion(t)

    def U_at(self, t):
        """``U(t) = int_0^t nu`` in closed form."""
        if self.window == "none":
            return self.coef @ _basis_integrals(t, self.problem.T, self.problem.betas)
        return self.expansion.integral(t)

    def int_U_at(self, t):
        """``int_0^t U`` in closed form."""
        return self.expansion.integral(t, times=2)

    @property
    def U(self) -> np.ndarray:
        return self.U_at(self.t)

    def solution_norm_constant(self) -> float:
        """Largest singular value of ``(d0, Re d, Im d) -> nu`` in discrete L2."""
        return _lambda_from_samples(self.problem, self.t, self.gram_inverse_cols(),
                                    self.window)

    def gram_inverse_cols(self):
        G = self.gram
        rhs = np.zeros((G.shape[0], G.shape[0] - 2))
        rhs[2:, :] = np.diag([1.0] + [1.0] * self.problem.N + [-1.0] * self.problem.N)
        return _refined_solve(G, rhs, self.epsilon)


def _refined_solve(G, rhs, eps, sweeps: int = 3):
    A = G + eps * np.eye(G.shape[0])
    lu = scipy.linalg.lu_factor(A)
    x = scipy.linalg.lu_solve(lu, rhs)
    for _ in range(sweeps):
        x = x + scipy.linalg.lu_solve(lu, rhs - G @ x)
    return x


def _lambda_from_samples(prob: MomentProblem, t, coef_map, window="none") -> float:
    B = (window_values(t, prob.T, window) * basis_values(t, prob.T, prob.betas)).T @ coef_map
    w = np.full(len(t), t[1] - t[0])
    w[0] = w[-1] = 0.5 * (t[1] - t[0])
    return float(np.linalg.norm(np.sqrt(w)[:, None] * B, 2))


def solve_moments(mp: MomentProblem, n_t: int | None = None,
                  tikhonov: float = TIKHONOV, window: str = "none") -> MomentSolution:
    """Minimal-norm real ``nu`` satisfying all 2N+3 moment conditions.

    The Gram matrix is assembled by composite Gauss-Legendre quadrature, shifted
    by ``tikhonov * trace``, and the shifted solve is polished by iterative
    refinement against the unshifted matrix.  ``window="sin2"`` minimizes
    ``int nu^2 / w`` instead, giving ``nu(0) = nu'(0) = nu(T) = nu'(T) = 0``.
    """
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}")
    T, betas = mp.T, mp.betas
    n_t = n_t or mp.n_t or default_nt(T, betas)
    if n_t < 20 * mp.N:
        raise ValueError("n_t must be at least 20 N")
    nodes, weights = gauss_panels(T, 2 * float(np.max(betas, initial=1.0)))
    B = basis_values(nodes, T, betas)
    G = (B * (weights * window_values(nodes, T, window))) @ B.T
    ev = np.linalg.eigvalsh(G)
    cond = float(ev[-1] / max(ev[0], 1e-300))
    if cond > COND_LIMIT:
        i = int(np.argmin(np.diff(betas))) if mp.N > 1 else 0
        near = betas[i:i + 2] if mp.N > 1 else betas
        raise IllPosedError(f"Gram condition {cond:.3e} > {COND_LIMIT:.0e}; "
                            f"closest frequencies {near.tolist()}")
    eps = tikhonov * float(np.trace(G))
    coef = _refined_solve(G, mp.rhs(), eps)
    t = np.linspace(0.0, T, n_t)
    sol = MomentSolution(mp, coef, t, None, cond, eps, G, window)
    object.__setattr__(sol, "nu", sol.nu_at(t))
    return sol


def antiderivative_U(nu, t=None, tol: float = 1e-8):
    """``U(t) = int_0^t nu`` after checking ``int nu = int (T-t) nu = 0``.

    ``nu`` is a :class:`MomentSolution` (closed form) or samples on the uniform
    grid ``t`` (cumulative Simpson rule).
    """
    if isinstance(nu, MomentSolution):
        sol = nu
        T = sol.problem.T
        nodes, weights = gauss_panels(T, 2 * float(np.max(sol.problem.betas, initial=1.0)))
        vals = sol.nu_at(nodes)
        m0 = float(weights @ vals)
        m1 = float(weights @ ((T - nodes) * vals))
        scale = 1.0 + float(np.sqrt(weights @ vals**2))
        if abs(m0) > tol * scale or abs(m1) > tol * scale:
            raise ContractError(f"moment preconditions violated: {m0:.3e}, {m1:.3e}")
        return sol.U_at(sol.t)
    from scipy.integrate import cumulative_simpson

    nu = np.asarray(nu, dtype=float)
    t = np.asarray(t, dtype=float)
    T = t[-1] - t[0]
    U = cumulative_simpson(nu, x=t, initial=0.0)
    m0 = U[-1]
    from scipy.integrate import simpson

    m1 = simpson((T - (t - t[0])) * nu, x=t)
    scale = 1.0 + float(np.sqrt(simpson(nu**2, x=t)))
    if abs(m0) > tol * scale or abs(m1) > tol * scale:
        raise ContractError(f"moment preconditions violated: {m0:.3e}, {m1:.3e}")
    return U
