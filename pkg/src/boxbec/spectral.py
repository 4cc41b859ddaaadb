"""Eigenstructure of the linearized operator around a ground state.

Eigenpairs are computed from the real matrix ``Mop`` (see :mod:`boxbec.linop`)
and mapped back to the linearized operator ``Lop`` through ``J``.  For a right
eigenvector ``V = (u, v)`` of ``Mop`` at ``+beta`` and a left eigenvector
``W = (w, z)``::

    Phi_n^+ = ((u + v) / 2, i (u - v) / 2)      Lop Phi_n^+ = i beta Phi_n^+
    Psi_n^- = (f, i g),  f = (w + z) / 2,  g = (z - w) / 2
    Phi_n^- = conj(Phi_n^+),  Psi_n^+ = conj(Psi_n^-)

Vectors are stored as orthonormal sine-coefficient arrays of shape ``(2, M)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .groundstate import GroundState, Regime, build_ground_state, zero_state
from .linop import BlockOperator, assemble_block, coefficients_from_points

__all__ = [
    "SpectralData",
    "SpectralError",
    "decompose",
    "estimate_n_star",
    "asymptotic_constant",
    "null_space",
    "gamma_coefficients",
    "pairing_matrix",
    "jordan_residuals",
    "spectrum_report",
    "CurveTrack",
    "track_curves",
    "spectrum_at",
]

ZERO_CUTOFF = 1e-3 * math.pi**2


class SpectralError(RuntimeError):
    """Raised when the retained spectrum is unusable (e.g. unstable ``n*``)."""


def _inner(a, b):
    """``<a, b> = sum a conj(b)`` over the last axes (orthonormal coefficients)."""
    return np.sum(a * np.conj(b), axis=tuple(range(-np.ndim(a) + 1, 0)) or None)


@dataclass(frozen=True)
class SpectralData:
    regime: Regime
    mu: float
    M: int
    betas: np.ndarray
    n_star: int | None = None
    asym_C: float | None = None
    V: np.ndarray = field(default=None, repr=False)
    W: np.ndarray = field(default=None, repr=False)
    Phi_plus: np.ndarray = field(default=None, repr=False)
    Psi_plus: np.ndarray = field(default=None, repr=False)
    unreliable: np.ndarray = field(default=None, repr=False)
    max_imag: float = 0.0
    Gamma_plus: np.ndarray | None = None
    Gamma_boundary: np.ndarray | None = None
    Gamma0_minus: float | None = None
    Gamma0_plus: float | None = None
    Phi0_plus: np.ndarray | None = field(default=None, repr=False)
    Phi0_minus: np.ndarray | None = field(default=None, repr=False)
    Psi0_plus: np.ndarray | None = field(default=None, repr=False)
    Psi0_minus: np.ndarray | None = field(default=None, repr=False)
    null_pairing: float | None = None

    @property
    def n_keep(self) -> int:
        return len(self.betas)

    @property
    def Phi_minus(self):
        return np.conj(self.Phi_plus)

    @property
    def Psi_minus(self):
        return np.conj(self.Psi_plus)

    @property
    def f(self):
        """Real first component of ``Psi_n^-``, shape ``(N, M)``."""
        return self.Psi_plus[:, 0].real

    @property
    def g(self):
        """Real ``g`` with ``Psi_n^- = (f, i g)``."""
        return -self.Psi_plus[:, 1].imag


def _real_vector(vec):
    """Rotate a numerically complex eigenvector of a real eigenvalue to real."""
    i = int(np.argmax(np.abs(vec)))
    return (vec * np.exp(-1j * np.angle(vec[i]))).real


def decompose(op: BlockOperator, n_keep: int, gs: GroundState | None = None,
              vectors: bool = True) -> SpectralData:
    """Retained spectrum ``beta_1 <= ... <= beta_N`` of ``op`` (flavor ``"M"``).

    Right vectors are scaled to ``||V|| = sqrt 2`` with the sine coefficient of
    largest modulus in the first component positive; left vectors are scaled so
    that ``<Phi_n^+, Psi_n^+> = 1``.  With ``gs`` the null-space vectors are
    attached as well.
    """
    if op.flavor != "M":
        raise ValueError("decompose expects the real Mop matrix (flavor 'M')")
    M = op.M
    if n_keep > M // 4:
        raise ValueError("n_keep must not exceed M/4")
    if vectors:
        lam, vl, vr = scipy.linalg.eig(op.matrix, left=True, right=True)
    else:
        lam = scipy.linalg.eigvals(op.matrix)
    order = np.argsort(lam.real)
    pos = [i for i in order if lam[i].real > ZERO_CUTOFF][:n_keep]
    if len(pos) < n_keep:
        raise SpectralError("fewer positive eigenvalues than requested")
    betas = lam[pos].real.copy()
    max_imag = float(np.max(np.abs(lam[pos].imag)))
    gaps = np.diff(betas)
    rel = np.full(n_keep, np.inf)
    if n_keep > 1:
        rel[:-1] = gaps / betas[1:]
        rel[1:] = np.minimum(rel[1:], gaps / betas[1:])
    unreliable = rel < 1e-8

    sd = SpectralData(Regime.parse(op.regime), op.mu, M, betas, max_imag=max_imag,
                      unreliable=unreliable)
    if not vectors:
        return sd

    V = np.empty((n_keep, 2 * M))
    W = np.empty((n_keep, 2 * M))
    for j, i in enumerate(pos):
        v = _real_vector(vr[:, i])
        v *= math.sqrt(2.0) / np.linalg.norm(v)
        u = v[:M]
        if u[np.argmax(np.abs(u))] < 0:
            v = -v
        w = _real_vector(vl[:, i])
        w /= 0.5 * np.dot(v, w)
        V[j], W[j] = v, w
    u, v = V[:, :M], V[:, M:]
    w, z = W[:, :M], W[:, M:]
    Phi = np.stack([0.5 * (u + v), 0.5j * (u - v)], axis=1)
    f, g = 0.5 * (w + z), 0.5 * (z - w)
    Psi = np.stack([f + 0j, -1j * g], axis=1)
    sd = replace(sd, V=V, W=W, Phi_plus=Phi, Psi_plus=Psi)
    if gs is not None:
        sd = null_space(sd, gs)
    return sd


def null_space(sd: SpectralData, gs: GroundState) -> SpectralData:
    """Attach ``Phi_0^+ = (0, phi)``, ``Phi_0^- = (d_mu phi, 0)`` and the adjoint pair.

    Their pairing ``<Phi_0^+, Psi_0^+> = <phi, d_mu phi>`` is stored as
    ``null_pairing``; it is positive (slope condition) but not 1.
    """
    x = np.arange(1, sd.M + 1) / (sd.M + 1)
    phi = coefficients_from_points(gs.evaluate(x))
    dphi = coefficients_from_points(gs.evaluate_dmu(x))
    z = np.zeros_like(phi)
    return replace(
        sd,
        Phi0_plus=np.stack([z, phi]),
        Phi0_minus=np.stack([dphi, z]),
        Psi0_minus=np.stack([phi, z]),
        Psi0_plus=np.stack([z, dphi]),
        null_pairing=float(np.dot(phi, dphi)),
    )


def estimate_n_star(betas, quartile: float = 0.25) -> int:
    """Offset ``n*`` with ``beta_n ~ (n + n*)^2 pi^2`` from the last quartile."""
    betas = np.asarray(betas, dtype=float)
    N = len(betas)
    if N < 16:
        raise SpectralError("need at least 16 retained modes to estimate n*")
    n = np.arange(1, N + 1)
    est = np.rint(np.sqrt(np.maximum(betas, 0.0)) / np.pi - n).astype(int)
    tail = est[int(math.floor((1 - quartile) * N)):]
    if np.any(tail != tail[0]):
        raise SpectralError(f"n* estimate not constant over the last quartile: {tail}")
    return int(tail[0])


def asymptotic_constant(betas, n_star: int) -> float:
    """``C = max_n |beta_n - (n + n*)^2 pi^2|`` over the given modes."""
    n = np.arange(1, len(betas) + 1)
    return float(np.max(np.abs(np.asarray(betas) - ((n + n_star) * np.pi) ** 2)))


def _sine_eval(coeffs, x):
    """Evaluate orthonormal sine series (rows of ``coeffs``) at points ``x``."""
    M = coeffs.shape[-1]
    S = math.sqrt(2.0) * np.sin(np.pi * np.outer(np.arange(1, M + 1), x))
    return coeffs @ S


def gamma_coefficients(sd: SpectralData, gs: GroundState) -> SpectralData:
    """``Gamma_n^+ = int (x phi)' f_n`` by Gauss-Legendre quadrature, plus checks.

    Also fills the boundary-formula values ``phi'(1) g_n'(1) / beta_n`` and
    ``Gamma_0^- = mass / 2``, ``Gamma_0^+ = 0``.
    """
    if sd.Psi_plus is None:
        raise ValueError("decompose with vectors first")
    M = sd.M
    nodes, weights = np.polynomial.legendre.leggauss(2 * M + 64)
    xq = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    a = gs.evaluate(xq) + xq * gs.evaluate_dx(xq)
    fq = _sine_eval(sd.f, xq)
    gamma = fq @ (wq * a)
    k = np.arange(1, M + 1)
    g_prime_1 = sd.g @ (math.sqrt(2.0) * np.pi * k * (-1.0) ** k)
    gamma_b = gs.dphi1 * g_prime_1 / sd.betas
    if sd.Phi0_plus is None:
        sd = null_space(sd, gs)
    return replace(sd, Gamma_plus=gamma.astype(complex), Gamma_boundary=gamma_b,
                   Gamma0_minus=0.5 * gs.mass, Gamma0_plus=0.0)


def pairing_matrix(sd: SpectralData, n_max: int | None = None) -> np.ndarray:
    """``[<Phi_m^sigma, Psi_n^tau>]`` with the ``+`` family first, size ``2N x 2N``."""
    N = sd.n_keep if n_max is None else min(n_max, sd.n_keep)
    Phi = np.concatenate([sd.Phi_plus[:N], sd.Phi_minus[:N]]).reshape(2 * N, -1)
    Psi = np.concatenate([sd.Psi_plus[:N], sd.Psi_minus[:N]]).reshape(2 * N, -1)
    return Phi @ np.conj(Psi).T


def jordan_residuals(op_L: BlockOperator, sd: SpectralData) -> dict:
    """Relative residuals of the generalized null-space relations.

    With ``s = +1/-1`` (focusing/defocusing)::

        Lop Phi_0^+ = 0,          Lop Phi_0^- = s Phi_0^+
        Lop^T Psi_0^- = 0,        Lop^T Psi_0^+ = s Psi_0^-

    ``*_literal`` entries are the unsigned relations for comparison.
    """
    if op_L.flavor != "L":
        raise ValueError("need the Lop matrix (flavor 'L')")
    A = op_L.matrix
    s = sd.regime.sign
    flat = lambda v: v.reshape(-1)  # noqa: E731
    p0p, p0m = flat(sd.Phi0_plus), flat(sd.Phi0_minus)
    q0p, q0m = flat(sd.Psi0_plus), flat(sd.Psi0_minus)
    nrm = np.linalg.norm
    scale = nrm(p0p)
    return {
        "L_Phi0_plus": nrm(A @ p0p) / scale,
        "L_Phi0_minus": nrm(A @ p0m - s * p0p) / scale,
        "Lt_Psi0_minus": nrm(A.T @ q0m) / scale,
        "Lt_Psi0_plus": nrm(A.T @ q0p - s * q0m) / scale,
        "L_Phi0_minus_literal": nrm(A @ p0m - p0p) / scale,
        "Lt_Psi0_plus_literal": nrm(A.T @ q0p - q0m) / scale,
    }


def spectrum_at(regime, mu: float, M: int = 512, n_keep: int | None = None,
                n_points: int = 1025, vectors: bool = True) -> tuple[GroundState, SpectralData]:
    """Ground state plus full spectral data at ``mu`` (``mu`` may be the infimum)."""
    regime = Regime.parse(regime)
    n_keep = M // 4 if n_keep is None else n_keep
    if mu == regime.mu_min:
        gs = zero_state(regime, max(n_points, M + 2))
    else:
        gs = build_ground_state(regime, mu, max(n_points, M + 2))
    op = assemble_block(regime, gs, "M", M)
    sd = decompose(op, n_keep, gs if vectors else None, vectors=vectors)
    if n_keep >= 16:
        try:
            ns = estimate_n_star(sd.betas)
            sd = replace(sd, n_star=ns, asym_C=asymptotic_constant(sd.betas, ns))
        except SpectralError:
            pass
    if vectors:
        sd = gamma_coefficients(sd, gs)
    return gs, sd


def spectrum_report(sd: SpectralData) -> str:
    """One record per mode: ``n beta Gamma_re Gamma_im deviation``."""
    ns = sd.n_star if sd.n_star is not None else 0
    lines = [
        f"# regime {sd.regime.value}",
        f"# mu {sd.mu!r}",
        f"# M {sd.M}",
        f"# n_star {sd.n_star}",
        f"# C {sd.asym_C!r}",
        f"# Gamma0_minus {sd.Gamma0_minus!r}",
        "# n beta Gamma_re Gamma_im deviation",
    ]
    gam = sd.Gamma_plus if sd.Gamma_plus is not None else np.full(sd.n_keep, np.nan)
    for n, (b, gm) in enumerate(zip(sd.betas, gam), start=1):
        dev = b - ((n + ns) * math.pi) ** 2
        lines.append(f"{n} {b:.17g} {gm.real:.17g} {gm.imag:.17g} {dev:.17g}")
    return "\n".join(lines) + "\n"


@dataclass
class CurveTrack:
    regime: Regime
    mus: np.ndarray
    curves: np.ndarray  # shape (len(mus), n_max)
    crossings: list = field(default_factory=list)


def _positive_eigs(regime, mu, M, count):
    _, sd = spectrum_at(regime, mu, M, n_keep=count, vectors=False)
    return sd.betas


def track_curves(regime, mu_start: float, mu_end: float, steps: int, n_max: int,
                 M: int = 128, threads: int = 1, max_refine: int = 10) -> CurveTrack:
    """Continue ``F_n(mu)``, ``n = 1..n_max``, by nearest match with extrapolation.

    A match is ambiguous when the two closest candidates lie within half the
    extrapolation tolerance of each other; the step is then bisected (up to
    ``max_refine`` times) and, failing that, a crossing is recorded.
    """
    regime = Regime.parse(regime)
    count = min(M // 4, n_max + 4)
    if count < n_max:
        raise ValueError("M too small for n_max")
    mus = np.linspace(mu_start, mu_end, steps + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            eigs = list(ex.map(lambda m: _positive_eigs(regime, m, M, count), mus))
    else:
        eigs = [_positive_eigs(regime, m, M, count) for m in mus]

    track = CurveTrack(regime, mus, np.empty((steps + 1, n_max)))
    track.curves[0] = eigs[0][:n_max]
    prev_vel = np.zeros(n_max)

    def match(prev, vel, dmu, cand):
        pred = prev + vel * dmu
        tol = np.abs(vel * dmu) + 1e-8 * np.maximum(np.abs(pred), 1.0)
        out = np.empty_like(prev)
        ambiguous = []
        for n in range(len(prev)):
            d = np.abs(cand - pred[n])
            j = np.argsort(d)
            out[n] = cand[j[0]]
            if len(j) > 1 and d[j[1]] - d[j[0]] < 0.5 * tol[n]:
                ambiguous.append(n)
        return out, ambiguous

    for i in range(1, steps + 1):
        dmu = mus[i] - mus[i - 1]
        new, amb = match(track.curves[i - 1], prev_vel, dmu, eigs[i])
        if amb:
            # bisect the step: march through sub-steps with fresh eigenvalues
            for level in range(1, max_refine + 1):
                sub = 2**level
                cur, vel, ok = track.curves[i - 1].copy(), prev_vel.copy(), True
                for j in range(1, sub + 1):
                    m = mus[i - 1] + dmu * j / sub
                    cand = eigs[i] if j == sub else _positive_eigs(regime, m, M, count)
                    nxt, amb = match(cur, vel, dmu / sub, cand)
                    if amb:
                        ok = False
                        break
                    vel = (nxt - cur) / (dmu / sub)
                    cur = nxt
                if ok:
                    new = cur
                    break
            else:
                track.crossings.append((float(mus[i - 1]), float(mus[i]), amb))
        prev_vel = (new - track.curves[i - 1]) / dmu if dmu else prev_vel
        track.curves[i] = new
    return track
