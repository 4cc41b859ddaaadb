"""Time propagation of the controlled cubic equation.

Production path: gauge transform to the auxiliary equation::

    i xi_t = -xi_xx - w(t) |xi|^2 xi + v(t) x^2 xi,
    w = s exp(int_0^t u),   v = (u' - u^2) / 4,
    psi = xi exp(i u x^2 / 4 + (1/2) int_0^t u),

integrated by Strang splitting on the sine grid, or by a fourth-order
exponential Runge-Kutta scheme (``scheme="etdrk4"``) that has no step-size
resonances in the high modes.  An independent Crank-Nicolson finite-difference
solver of the original equation serves as an oracle.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.fft import dst

from .discretization import SineGrid, StateField
from .groundstate import Regime

__all__ = [
    "ControlSignal",
    "EvolutionResult",
    "OracleError",
    "controls_to_potentials",
    "gauge_forward",
    "gauge_inverse",
    "split_step_xi",
    "etdrk4_xi",
    "solve_psi",
    "cn_direct_oracle",
    "export_trajectory",
    "l2_norm",
]


class OracleError(RuntimeError):
    """The Crank-Nicolson inner iteration did not converge."""


def _fd4_derivative(y, dt):
    """Fourth-order finite-difference derivative on a uniform grid."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 5:
        return np.gradient(y, dt)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * dt)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * dt)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * dt)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * dt)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * dt)
    return d


@dataclass(frozen=True)
class ControlSignal:
    """Control samples on a uniform time grid with derivative and running integral.

    ``du`` and ``int_u`` default to fourth-order differences and the cumulative
    Simpson rule; callers with closed forms pass them explicitly.
    """

    t: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(default=None, repr=False)
    int_u: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if t.shape != u.shape or t.ndim != 1 or len(t) < 2:
            raise ValueError("t and u must be matching 1-d arrays")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "u", u)
        dt = t[1] - t[0]
        if self.du is None:
            object.__setattr__(self, "du", _fd4_derivative(u, dt))
        if self.int_u is None:
            from scipy.integrate import cumulative_simpson

            object.__setattr__(self, "int_u", cumulative_simpson(u, x=t, initial=0.0))

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @classmethod
    def zero(cls, T: float, n_steps: int) -> "ControlSignal":
        t = np.linspace(0.0, T, n_steps + 1)
        z = np.zeros_like(t)
        return cls(t, z, z.copy(), z.copy())

    @classmethod
    def from_functions(cls, t, u, du=None, int_u=None) -> "ControlSignal":
        t = np.asarray(t, dtype=float)
        return cls(t, u(t), None if du is None else du(t), None if int_u is None else int_u(t))

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        if not np.array_equal(self.t, other.t):
            raise ValueError("time grids differ")
        return ControlSignal(self.t, self.u + other.u, self.du + other.du,
                             self.int_u + other.int_u)

    def scaled(self, a: float) -> "ControlSignal":
        return ControlSignal(self.t, a * self.u, a * self.du, a * self.int_u)

    def admissibility(self) -> dict:
        """Defects of ``u(0) = u(T) = 0`` and ``int u = 0``."""
        return {"u0": abs(self.u[0]), "uT": abs(self.u[-1]), "mean": abs(self.int_u[-1])}

    def is_admissible(self, tol: float = 1e-8) -> bool:
        return max(self.admissibility().values()) <= tol

    def norm(self) -> float:
        return float(math.sqrt(np.trapezoid(self.u**2, self.t)))


def controls_to_potentials(u: ControlSignal, regime):
    """``w = s exp(int u)``, ``v = (u' - u^2)/4`` on the control's time grid."""
    s = Regime.parse(regime).sign
    return s * np.exp(u.int_u), 0.25 * (u.du - u.u**2)


def _field_values(f, grid=None):
    if isinstance(f, StateField):
        return f.grid, np.asarray(f.points(), dtype=complex)
    v = np.asarray(f, dtype=complex)
    return grid or SineGrid(len(v)), v


def gauge_forward(xi, u_t: float, int_u: float) -> StateField:
    """``psi = xi exp(i u_t x^2/4 + int_u/2)``."""
    grid, v = _field_values(xi)
    x = grid.x
    return StateField(grid, v * np.exp(1j * u_t * x * x / 4 + 0.5 * int_u))


def gauge_inverse(psi, u_t: float, int_u: float) -> StateField:
    grid, v = _field_values(psi)
    x = grid.x
    return StateField(grid, v * np.exp(-1j * u_t * x * x / 4 - 0.5 * int_u))


def l2_norm(values, h: float) -> float:
    """Discrete L2 norm on the sine grid (exact for sine polynomials)."""
    return float(math.sqrt(h * np.sum(np.abs(values) ** 2)))


@dataclass
class EvolutionResult:
    times: np.ndarray
    snapshots: list
    norms: np.ndarray
    dt: float
    M: int
    scheme: str
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> StateField:
        return self.snapshots[-1]


def _snapshot_steps(n_steps, dt, snapshot_times):
    if snapshot_times is None:
        return {0: 0.0, n_steps: n_steps * dt}
    out = {}
    for ts in snapshot_times:
        k = int(round(ts / dt))
        if k < 0 or k > n_steps or abs(k * dt - ts) > 1e-9 * max(1.0, abs(ts)):
            raise ValueError(f"snapshot time {ts} not on the time grid")
        out[k] = k * dt
    return out


def split_step_xi(xi0, w, v, dt: float, snapshot_times=None) -> EvolutionResult:
    """Strang splitting: potential half step, exact linear step, potential half step.

    ``w`` and ``v`` are sampled at ``t_k = k dt``; the half steps use the values
    at the two ends of each step.
    """
    grid, xi = _field_values(xi0)
    w = np.broadcast_to(np.asarray(w, dtype=float), np.shape(v)) if np.ndim(w) == 0 else np.asarray(w, float)
    v = np.asarray(v, dtype=float)
    if np.ndim(w) == 0 or w.shape != v.shape:
        raise ValueError("w and v must be sampled on the same time grid")
    n_steps = len(v) - 1
    x2 = grid.x**2
    M = grid.M
    lin = np.exp(-1j * dt * grid.wavenumbers**2) / (M + 1)
    keep = _snapshot_steps(n_steps, dt, snapshot_times)
    h = grid.h
    snaps, times, norms = [], [], []

    def record(k, val):
        snaps.append(StateField(grid, val.copy()))
        times.append(keep[k])
        norms.append(l2_norm(val, h))

    if 0 in keep:
        record(0, xi)
    half = 0.5 * dt
    for k in range(n_steps):
        xi = xi * np.exp(1j * half * (w[k] * np.abs(xi) ** 2 - v[k] * x2))
        a = dst(xi.real, type=1) + 1j * dst(xi.imag, type=1)
        a *= lin
        xi = 0.5 * (dst(a.real, type=1) + 1j * dst(a.imag, type=1))
        xi = xi * np.exp(1j * half * (w[k + 1] * np.abs(xi) ** 2 - v[k + 1] * x2))
        if k + 1 in keep:
            record(k + 1, xi)
    return EvolutionResult(np.array(times), snaps, np.array(norms), dt, M, "strang-sine")


def _phi_functions(z, n_contour: int = 32):
    """ETDRK4 weights for diagonal ``z = L h`` by contour averaging.

    Returns ``(e^z, e^{z/2}, Q, f1, f2, f3)``; the contour (unit circle about
    each ``z``) avoids cancellation for small ``|z|``.
    """
    r = np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    lr = z[:, None] + r[None, :]
    el = np.exp(lr)
    q = np.mean((np.exp(lr / 2) - 1) / lr, axis=1)
    f1 = np.mean((-4 - lr + el * (4 - 3 * lr + lr**2)) / lr**3, axis=1)
    f2 = np.mean((2 + lr + el * (lr - 2)) / lr**3, axis=1)
    f3 = np.mean((-4 - 3 * lr - lr**2 + el * (4 - lr)) / lr**3, axis=1)
    return np.exp(z), np.exp(z / 2), q, f1, f2, f3


def etdrk4_xi(xi0, w, v, dt: float, snapshot_times=None) -> EvolutionResult:
    """Exponential RK4 (Cox-Matthews) for the auxiliary equation in sine space.

    ``w`` and ``v`` are sampled at half steps ``t_j = j dt / 2`` (so
    ``2 n_steps + 1`` values).  The Laplacian is integrated exactly and the
    pointwise terms through the phi-function weights, so modes with
    ``(n pi)^2 dt`` near a multiple of ``2 pi`` are not spuriously excited.
    """
    grid, xi = _field_values(xi0)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if w.shape != v.shape or len(v) % 2 != 1:
        raise ValueError("w and v must share an odd-length half-step grid")
    n_steps = (len(v) - 1) // 2
    x2 = grid.x**2
    M = grid.M
    E, E2, Q, f1, f2, f3 = _phi_functions(-1j * dt * grid.wavenumbers**2)
    keep = _snapshot_steps(n_steps, dt, snapshot_times)
    h = grid.h

    def fwd(f):
        return (dst(f.real, type=1) + 1j * dst(f.imag, type=1)) / (M + 1)

    def inv(a):
        return 0.5 * (dst(a.real, type=1) + 1j * dst(a.imag, type=1))

    def rhs(a, j):
        z = inv(a)
        return fwd(1j * (w[j] * np.abs(z) ** 2 - v[j] * x2) * z)

    snaps, times, norms = [], [], []

    def record(k, val):
        snaps.append(StateField(grid, val.copy()))
        times.append(keep[k])
        norms.append(l2_norm(val, h))

    if 0 in keep:
        record(0, xi)
    a = fwd(xi)
    for k in range(n_steps):
        j = 2 * k
        na = rhs(a, j)
        pa = E2 * a + dt * Q * na
        nb = rhs(pa, j + 1)
        pb = E2 * a + dt * Q * nb
        nc = rhs(pb, j + 1)
        pc = E2 * pa + dt * Q * (2 * nc - na)
        nd = rhs(pc, j + 2)
        a = E * a + dt * (f1 * na + 2 * f2 * (nb + nc) + f3 * nd)
        if k + 1 in keep:
            record(k + 1, inv(a))
    return EvolutionResult(np.array(times), snaps, np.array(norms), dt, M, "etdrk4-sine")


def solve_psi(psi0, u: ControlSignal, regime, snapshot_times=None,
              scheme: str = "strang") -> EvolutionResult:
    """Evolve the controlled equation through the auxiliary system.

    The gauge is applied at ``t = 0`` (inverse) and at every snapshot.  With
    ``scheme="strang"`` the step is ``u.dt``; with ``scheme="etdrk4"`` the
    control grid supplies half steps, so the step is ``2 u.dt``.
    """
    regime = Regime.parse(regime)
    grid, v0 = _field_values(psi0)
    w, v = controls_to_potentials(u, regime)
    xi0 = gauge_inverse(StateField(grid, v0), u.u[0], u.int_u[0])
    if scheme == "strang":
        res = split_step_xi(xi0, w, v, u.dt, snapshot_times)
    elif scheme == "etdrk4":
        if (len(u.t) - 1) % 2:
            raise ValueError("etdrk4 needs an even number of control intervals")
        res = etdrk4_xi(xi0, w, v, 2 * u.dt, snapshot_times)
    else:
        raise ValueError("scheme must be 'strang' or 'etdrk4'")
    snaps, norms = [], []
    for tk, s in zip(res.times, res.snapshots):
        k = int(round(tk / u.dt))
        p = gauge_forward(s, u.u[k], u.int_u[k])
        snaps.append(p)
        norms.append(l2_norm(p.values, grid.h))
    meta = {"xi_norms": res.norms.tolist(), "regime": regime.value}
    return EvolutionResult(res.times, snaps, np.array(norms), res.dt, grid.M,
                           "gauge+" + scheme, meta)


def _cn_run(psi0_func, u_func, s, M, n_steps, T, max_iter, tol):
    h = 1.0 / (M + 1)
    x = np.arange(1, M + 1) * h
    psi = np.asarray(psi0_func(x), dtype=complex)
    dt = T / n_steps
    # banded pieces: -psi_xx, and (x psi)_x by centered differences
    lap_off = -1.0 / h**2
    lap_diag = 2.0 / h**2
    xl = np.concatenate([[0.0], x[:-1]])  # x_{j-1}
    xr = np.concatenate([x[1:], [1.0]])   # x_{j+1}
    adv_lower = -xl / (2 * h)  # coefficient of psi_{j-1}
    adv_upper = xr / (2 * h)   # coefficient of psi_{j+1}

    def H_lin_apply(p, uu):
        out = lap_diag * p
        out[1:] += lap_off * p[:-1] + 1j * uu * adv_lower[1:] * p[:-1]
        out[:-1] += lap_off * p[1:] + 1j * uu * adv_upper[:-1] * p[1:]
        return out

    def banded(uu):
        ab = np.zeros((3, M), dtype=complex)
        ab[0, 1:] = 0.5j * dt * (lap_off + 1j * uu * adv_upper[:-1])
        ab[1, :] = 1.0 + 0.5j * dt * lap_diag
        ab[2, :-1] = 0.5j * dt * (lap_off + 1j * uu * adv_lower[1:])
        return ab

    iters_max = 0
    for k in range(n_steps):
        t0, t1 = k * dt, (k + 1) * dt
        u0, u1 = u_func(t0), u_func(t1)
        rhs0 = psi - 0.5j * dt * (H_lin_apply(psi, u0) - s * np.abs(psi) ** 2 * psi)
        ab = banded(u1)
        new = psi.copy()
        for it in range(max_iter):
            rhs = rhs0 + 0.5j * dt * s * np.abs(new) ** 2 * new
            nxt = scipy.linalg.solve_banded((1, 1), ab, rhs)
            delta = np.max(np.abs(nxt - new))
            new = nxt
            if delta <= tol:
                break
        else:
            raise OracleError(f"fixed-point iteration stalled at step {k} (delta {delta:.2e})")
        iters_max = max(iters_max, it + 1)
        psi = new
    return x, psi, iters_max


def cn_direct_oracle(psi0_func, u_func, regime, T: float, M: int = 1023,
                     n_steps: int = 1000, max_iter: int = 20, tol: float = 1e-12,
                     richardson: str | None = "space") -> EvolutionResult:
    """Crank-Nicolson finite differences for the original controlled equation.

    ``psi0_func(x)`` and ``u_func(t)`` are callables.  ``richardson="space"``
    repeats the run with ``h/2`` (same ``dt``), ``"both"`` with ``h/2`` and
    ``dt/2``; the two results on the coarse points are combined as
    ``(4 fine - coarse) / 3``.
    """
    s = Regime.parse(regime).sign
    x, psi, it = _cn_run(psi0_func, u_func, s, M, n_steps, T, max_iter, tol)
    scheme = "crank-nicolson"
    if richardson not in (None, "space", "both"):
        raise ValueError("richardson must be None, 'space' or 'both'")
    if richardson:
        ns_fine = 2 * n_steps if richardson == "both" else n_steps
        _, fine, it2 = _cn_run(psi0_func, u_func, s, 2 * M + 1, ns_fine, T, max_iter, tol)
        psi = (4.0 * fine[1::2] - psi) / 3.0
        it = max(it, it2)
        scheme += f"+richardson-{richardson}"
    grid = SineGrid(M)
    res = EvolutionResult(np.array([T]), [StateField(grid, psi)],
                          np.array([l2_norm(psi, grid.h)]), T / n_steps, M, scheme,
                          {"max_inner_iterations": it})
    return res


def export_trajectory(res: EvolutionResult, outdir, regime=None, mu=None, prefix="psi"):
    """One text file per snapshot (x, Re, Im, |.|^2) plus ``manifest.json``."""
    os.makedirs(outdir, exist_ok=True)
    files = []
    for i, (t, snap) in enumerate(zip(res.times, res.snapshots)):
        name = f"{prefix}_{i:05d}.txt"
        vals = snap.points()
        x = snap.grid.x
        with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
            fh.write(f"# t = {t:.17g}\n# x re im abs2\n")
            for row in zip(x, vals.real, vals.imag, np.abs(vals) ** 2):
                fh.write("{:.17g} {:.17g} {:.17g} {:.17g}\n".format(*row))
        files.append(name)
    manifest = {
        "times": [float(t) for t in res.times],
        "files": files,
        "dt": res.dt,
        "M": res.M,
        "scheme": res.scheme,
        "regime": None if regime is None else Regime.parse(regime).value,
        "mu": mu,
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest
