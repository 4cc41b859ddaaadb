"""Abstract control ``u(t)`` versus physical box length ``L(tau)``.

Physical time ``tau`` and abstract time ``t = g(tau)`` are linked by::

    g' = (hbar / 2m) exp(-2 int_0^g u),   g(0) = 0,
    L(tau) = exp(int_0^{g(tau)} u),       u(g(tau)) = (2m/hbar) L'(tau) L(tau),

with ``u`` extended by zero past ``T``.  ``tau*`` is where ``g`` reaches ``T``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline, make_interp_spline

from .evolve import ControlSignal, EvolutionResult
from .groundstate import GroundState, kappa_from_mu

__all__ = [
    "LengthTrajectory",
    "PhysicalSnapshot",
    "ContractError",
    "control_to_length",
    "length_to_control",
    "physical_wavefunction",
    "export_physical",
]

G_TOL = 1e-10


class ContractError(ValueError):
    """Inconsistent physical constants (kappa does not match mu)."""


@dataclass(frozen=True)
class LengthTrajectory:
    hbar: float
    m: float
    T: float
    tau_star: float
    tau: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    dg: np.ndarray = field(repr=False)
    _dense: object = field(default=None, repr=False, compare=False)
    _int_u: object = field(default=None, repr=False, compare=False)

    def g_at(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.asarray(self._dense(tau)).reshape(tau.shape)

    def L_at(self, tau):
        return np.exp(self._int_u(np.clip(self.g_at(tau), 0.0, self.T)))

    def tau_of_t(self, t):
        """Invert ``g`` (strictly increasing) by bisection on the dense output."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo = np.zeros_like(t)
        hi = np.full_like(t, self.tau_star)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.g_at(mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def _int_u_interpolant(u: ControlSignal):
    """``int_0^t u`` as a C^1 cubic Hermite interpolant, constant past ``T``."""
    herm = CubicHermiteSpline(u.t, u.int_u, u.u)
    T = float(u.t[-1])
    end = float(u.int_u[-1])

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= T, end, herm(np.clip(t, 0.0, T)))

    return f


def control_to_length(u: ControlSignal, hbar: float = 1.0, m: float = 1.0,
                      n_tau: int = 4001, rtol: float = 1e-12) -> LengthTrajectory:
    """Integrate the ``g`` equation with an adaptive Runge-Kutta method up to ``g = T``.

    ``tau*`` comes from terminal event detection on the dense output (root
    bracketed and refined to ``|g(tau*) - T| <= 1e-10``).
    """
    if hbar <= 0 or m <= 0:
        raise ValueError("hbar and m must be positive")
    T = u.T
    int_u = _int_u_interpolant(u)
    c = hbar / (2.0 * m)

    def rhs(tau, y):
        return [c * math.exp(-2.0 * float(int_u(y[0])))]

    def hit(tau, y):
        return y[0] - T

    hit.terminal = True
    hit.direction = 1
    # g' >= c exp(-2 max|int u|), which bounds tau*
    bound = T / (c * math.exp(-2.0 * float(np.max(np.abs(u.int_u))))) * 1.01 + 1.0
    sol = solve_ivp(rhs, (0.0, bound), [0.0], method="DOP853", rtol=rtol, atol=1e-14,
                    dense_output=True, events=hit)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise RuntimeError("g did not reach T")
    tau_star = float(sol.t_events[0][0])
    dense = sol.sol
    # polish the event root (secant steps on the dense output)
    a, b = tau_star * (1 - 1e-6), tau_star
    fa, fb = float(dense(a)[0]) - T, float(dense(b)[0]) - T
    for _ in range(50):
        if abs(fb) <= G_TOL * 1e-2 or fa == fb:
            break
        a, b, fa = b, b - fb * (b - a) / (fb - fa), fb
        fb = float(dense(b)[0]) - T
    tau_star = b

    def g_dense(tau):
        return dense(np.asarray(tau, dtype=float))[0]

    tau = np.linspace(0.0, tau_star, n_tau)
    g = g_dense(tau)
    g[0], g[-1] = 0.0, T
    L = np.exp(int_u(g))
    dg = c * np.exp(-2.0 * int_u(g))
    return LengthTrajectory(hbar, m, T, tau_star, tau, g, L, dg, g_dense, int_u)


def length_to_control(lt: LengthTrajectory, n_t: int | None = None) -> ControlSignal:
    """``u = (2m/hbar) L' L`` with ``L'`` from a quintic spline through ``L(tau)``.

    The values, located at ``t = g(tau)``, are resampled to a uniform ``t`` grid
    (``n_t`` points, default ``len(lt.tau)``) by a quintic spline in ``g``.
    """
    spl = make_interp_spline(lt.tau, lt.L, k=5)
    dL = spl.derivative()(lt.tau)
    u_g = (2.0 * lt.m / lt.hbar) * dL * lt.L
    n_t = n_t or len(lt.tau)
    t = np.linspace(0.0, lt.T, n_t)
    u = make_interp_spline(lt.g, u_g, k=5)(t)
    return ControlSignal(t, u)


@dataclass(frozen=True)
class PhysicalSnapshot:
    tau: float
    t: float
    L: float
    z: np.ndarray = field(repr=False)
    Phi: np.ndarray = field(repr=False)

    def norm(self) -> float:
        """``int_0^L |Phi|^2 dz`` (sine-grid rule, end values zero)."""
        dz = self.L / (len(self.z) + 1)
        return float(dz * np.sum(np.abs(self.Phi) ** 2))


def physical_wavefunction(res: EvolutionResult, lt: LengthTrajectory, kappa: float,
                          gs: GroundState, rtol: float = 1e-6) -> list[PhysicalSnapshot]:
    """``Phi(tau, z) = hbar / (sqrt(2 kappa m) L) psi(g(tau), z / L)`` per snapshot.

    ``z = L x`` on the sine grid.  ``kappa`` must equal ``hbar^2 ||phi||^2 / (2m)``
    for the ground state the trajectory started from.
    """
    expected = kappa_from_mu(gs, lt.hbar, lt.m)
    if abs(kappa - expected) > rtol * expected:
        raise ContractError(f"kappa={kappa!r} inconsistent with mu={gs.mu!r} "
                            f"(expects {expected!r})")
    out = []
    scale = lt.hbar / math.sqrt(2.0 * kappa * lt.m)
    taus = lt.tau_of_t(res.times)
    for tk, tau, snap in zip(res.times, taus, res.snapshots):
        tau = 0.0 if tk == 0 else (lt.tau_star if abs(tk - lt.T) < 1e-12 else float(tau))
        L = float(lt.L_at(tau))
        x = snap.grid.x
        out.append(PhysicalSnapshot(tau, float(tk), L, L * x, scale / L * snap.points()))
    return out


def export_physical(snaps, lt: LengthTrajectory, kappa: float, outdir: str,
                    prefix: str = "phys") -> str:
    """Per-snapshot files (z, Re, Im, |Phi|^2) plus a JSON manifest; returns its path."""
    os.makedirs(outdir, exist_ok=True)
    entries = []
    for i, s in enumerate(snaps):
        name = f"{prefix}_{i:04d}.txt"
        data = np.column_stack([s.z, s.Phi.real, s.Phi.imag, np.abs(s.Phi) ** 2])
        np.savetxt(os.path.join(outdir, name), data, fmt="%.17g",
                   header=f"tau={s.tau:.17g} L={s.L:.17g}\nz re im abs2")
        entries.append({"file": name, "tau": s.tau, "t": s.t, "L": s.L})
    traj = f"{prefix}_length.txt"
    np.savetxt(os.path.join(outdir, traj), np.column_stack([lt.tau, lt.g, lt.L]),
               fmt="%.17g", header="tau g L")
    manifest = {
        "hbar": lt.hbar, "m": lt.m, "kappa": kappa, "tau_star": lt.tau_star, "T": lt.T,
        "L0": float(lt.L[0]), "L_end": float(lt.L[-1]), "length_file": traj,
        "snapshots": entries,
    }
    path = os.path.join(outdir, f"{prefix}_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path
