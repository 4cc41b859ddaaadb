"""Positive ground states of the stationary cubic equation on (0, 1).

In the focusing regime ``phi'' + phi^3 = mu phi`` and the solution is a shifted
``cn``; in the defocusing regime ``phi'' - phi^3 = -mu phi`` and it is an ``sn``.
Both have amplitude ``2 sqrt(2) k K(k)`` where the modulus ``k`` solves::

    focusing:    mu = 4 (2 k^2 - 1) K(k)^2,   mu > -pi^2
    defocusing:  mu = 4 (k^2 + 1) K(k)^2,     mu >  pi^2
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    K_GUARD,
    DomainError,
    _agm_sequence,
    complete_E,
    complete_K,
    jacobi_cn_sn,
)

__all__ = [
    "Regime",
    "GroundState",
    "modulus_from_mu",
    "mu_from_modulus",
    "build_ground_state",
    "zero_state",
    "mass_and_convexity",
    "elliptic_mass",
    "kappa_from_mu",
    "mu_from_kappa",
    "bvp_residual",
]


class Regime(enum.Enum):
    """Sign of the cubic term; ``sign`` is the upper/lower choice in ``+-``."""

    FOCUSING = "focusing"
    DEFOCUSING = "defocusing"

    @property
    def sign(self) -> int:
        return 1 if self is Regime.FOCUSING else -1

    @property
    def mu_min(self) -> float:
        """Infimum of the admissible chemical potentials, ``-+pi^2``."""
        return -self.sign * math.pi**2

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


def mu_from_modulus(regime: Regime, k: float) -> float:
    K = complete_K(k)
    if regime is Regime.FOCUSING:
        return 4.0 * (2.0 * k * k - 1.0) * K * K
    return 4.0 * (k * k + 1.0) * K * K


def modulus_from_mu(regime: Regime, mu: float) -> float:
    """Solve the modulus equation for ``k`` by bisection on ``[0, 1 - 1e-12]``."""
    regime = Regime.parse(regime)
    mu = float(mu)
    if not mu > regime.mu_min:
        raise DomainError(
            f"mu={mu!r} not above the {regime.value} infimum {regime.mu_min!r}"
        )
    if mu > mu_from_modulus(regime, K_GUARD):
        raise DomainError(f"mu={mu!r} needs an elliptic modulus beyond the k guard")
    lo, hi = 0.0, K_GUARD
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if mu_from_modulus(regime, mid) < mu:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _profile(regime: Regime, k: float, x):
    """Closed form ``phi`` and ``phi'`` at points ``x`` for modulus ``k``."""
    K = complete_K(k)
    amp = 2.0 * math.sqrt(2.0) * k * K
    if regime is Regime.FOCUSING:
        cn, sn, dn = jacobi_cn_sn(2.0 * K * (np.asarray(x, dtype=float) - 0.5), k)
        return amp * cn, -2.0 * K * amp * sn * dn
    cn, sn, dn = jacobi_cn_sn(2.0 * K * np.asarray(x, dtype=float), k)
    return amp * sn, 2.0 * K * amp * cn * dn


def _profile_ext(regime: Regime, k: float, x):
    """Extended-precision ``phi`` (used by the residual check)."""
    ld = np.longdouble
    a_list, _ = _agm_sequence(k, ld)
    K = _pi_ld() / (2 * a_list[-1])
    amp = 2 * np.sqrt(ld(2)) * ld(k) * K
    x = np.asarray(x, dtype=ld)
    if regime is Regime.FOCUSING:
        cn, _, _ = jacobi_cn_sn(2 * K * (x - ld(0.5)), k)
        return amp * cn
    _, sn, _ = jacobi_cn_sn(2 * K * x, k)
    return amp * sn


def _pi_ld():
    return 4 * np.arctan(np.longdouble(1))


@dataclass(frozen=True)
class GroundState:
    """Sampled ground state together with its closed-form evaluators.

    ``x`` includes both end points, so ``phi[0] == phi[-1] == 0``.
    """

    regime: Regime
    mu: float
    k: float
    x: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    dphi0: float = 0.0
    dphi1: float = 0.0
    dmu_phi: np.ndarray = field(default=None, repr=False)
    dmu_step: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.k == 0.0

    def evaluate(self, x):
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))
        return _profile(self.regime, self.k, x)[0]

    def evaluate_dx(self, x):
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))
        return _profile(self.regime, self.k, x)[1]

    def evaluate_dmu(self, x):
        """``d phi_mu / d mu`` by a central difference of the closed form."""
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))
        h = self.dmu_step
        kp = modulus_from_mu(self.regime, self.mu + h)
        km = modulus_from_mu(self.regime, self.mu - h)
        return (_profile(self.regime, kp, x)[0] - _profile(self.regime, km, x)[0]) / (2 * h)

    @property
    def mass(self) -> float:
        return _trapezoid(self.phi**2, self.x)


def _trapezoid(f, x):
    return float(np.trapezoid(f, x))


def _dmu_step(regime: Regime, mu: float) -> float:
    h = 1e-5 * max(1.0, abs(mu))
    # stay inside the admissible range near the infimum
    return min(h, 0.5 * (mu - regime.mu_min))


def build_ground_state(regime, mu: float, n_points: int = 1025) -> GroundState:
    """Sample the closed-form ground state on ``n_points`` uniform points of [0, 1]."""
    regime = Regime.parse(regime)
    if n_points < 64:
        raise ValueError("n_points must be at least 64")
    k = modulus_from_mu(regime, mu)
    x = np.linspace(0.0, 1.0, n_points)
    phi, _ = _profile(regime, k, x)
    phi[0] = phi[-1] = 0.0
    _, d_end = _profile(regime, k, np.array([0.0, 1.0]))
    gs = GroundState(
        regime=regime,
        mu=float(mu),
        k=k,
        x=x,
        phi=phi,
        dphi0=float(d_end[0]),
        dphi1=float(d_end[1]),
        dmu_step=_dmu_step(regime, float(mu)),
    )
    dmu = gs.evaluate_dmu(x)
    dmu[0] = dmu[-1] = 0.0
    object.__setattr__(gs, "dmu_phi", dmu)
    return gs


def zero_state(regime, n_points: int = 1025) -> GroundState:
    """The degenerate state ``phi = 0`` at ``mu = -+pi^2`` (end of the branch)."""
    regime = Regime.parse(regime)
    x = np.linspace(0.0, 1.0, n_points)
    z = np.zeros_like(x)
    return GroundState(regime, regime.mu_min, 0.0, x, z, 0.0, 0.0, z.copy(), 0.0)


def mass_and_convexity(gs: GroundState) -> tuple[float, float]:
    """Return ``(int phi^2, 2 <d_mu phi, phi>)``; the slope is ``d/dmu`` of the mass."""
    mass = _trapezoid(gs.phi**2, gs.x)
    slope = 2.0 * _trapezoid(gs.dmu_phi * gs.phi, gs.x)
    return mass, slope


def elliptic_mass(regime, k: float) -> float:
    """Mass from the elliptic identities (cross-check only).

    Focusing: ``8 K F`` with ``F = E - (1-k^2) K``.  Defocusing: ``8 K (K - E)``.
    """
    regime = Regime.parse(regime)
    K, E = complete_K(k), complete_E(k)
    if regime is Regime.FOCUSING:
        return 8.0 * K * (E - (1.0 - k * k) * K)
    return 8.0 * K * (K - E)


def kappa_from_mu(gs: GroundState, hbar: float = 1.0, m: float = 1.0) -> float:
    """Nonlinearity ``kappa = hbar^2 ||phi_mu||^2 / (2 m)``."""
    if hbar <= 0 or m <= 0:
        raise ValueError("hbar and m must be positive")
    return hbar**2 * gs.mass / (2.0 * m)


def mu_from_kappa(
    regime, kappa: float, hbar: float = 1.0, m: float = 1.0, n_points: int = 1025,
    tol: float = 1e-13,
) -> float:
    """Invert :func:`kappa_from_mu` by bisection over the admissible ``mu`` range."""
    regime = Regime.parse(regime)
    if kappa <= 0:
        raise DomainError("kappa must be positive")

    def kap(mu):
        return kappa_from_mu(build_ground_state(regime, mu, n_points), hbar, m)

    lo = regime.mu_min
    hi = lo + 1.0
    mu_cap = mu_from_modulus(regime, K_GUARD)
    while kap(hi) < kappa:
        lo, hi = hi, lo + 2.0 * (hi - lo)
        if hi > mu_cap:
            hi = mu_cap * (1 - 1e-12)
            if kap(hi) < kappa:
                raise DomainError(f"kappa={kappa!r} beyond the reachable range")
            break
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if kap(mid) < kappa:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bvp_residual(gs: GroundState, n_points: int = 1025, refine: int = 8) -> float:
    """Sup-norm of ``phi'' + s phi^3 - s mu phi`` at ``n_points`` uniform points.

    ``phi''`` is the five-point fourth-order difference of the closed form with
    stencil step ``1 / ((n_points - 1) * refine)``, in extended precision so the
    stencil is not swamped by rounding.  ``refine=1`` uses the grid spacing.
    """
    if gs.is_zero:
        return 0.0
    ld = np.longdouble
    x = np.linspace(ld(0), ld(1), n_points)
    h = ld(1) / ld((n_points - 1) * refine)

    def f(y):
        return _profile_ext(gs.regime, gs.k, y)

    d2 = (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h) - f(x + 2 * h)) / (12 * h * h)
    p = f(x)
    s = gs.regime.sign
    r = d2 + s * p**3 - s * ld(gs.mu) * p
    return float(np.max(np.abs(r)))
