"""Shooting certificates for eigenvalue simplicity and non-vanishing couplings.

For a trial ``beta`` the coupled system (``s = +1`` focusing, ``-1`` defocusing)::

    f'' + s (phi^2 - mu) f = beta g
    g'' + s (3 phi^2 - mu) g = beta f

is integrated on [0, 1] from ``f = g = 0`` with ``(f', g') = (1, 0)`` (column 1)
or ``(0, 1)`` (column 2).  ``G_n(mu) = f^[1](1)`` at ``beta = beta_n``.

The integrator is classical RK4 with a fixed step.  Because the system is
linear, each step is a 4x4 (or 6x6 for the second compound) matrix; all step
matrices are built at once and multiplied by pairwise reduction.  The
determinant of the endpoint matrix is propagated through the second compound
system, which avoids the cancellation between two exponentially large columns.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .groundstate import GroundState, Regime, build_ground_state, zero_state

__all__ = [
    "ShootResult",
    "GenericityCertificate",
    "step_size",
    "integrate_fg",
    "endpoint_matrix",
    "det_A",
    "G_n",
    "G_at_beta",
    "singularity",
    "certify",
    "scan",
    "bracket_eigenvalue",
    "certificate_text",
    "ground_state_for",
]

_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_PAIR_INDEX = {p: i for i, p in enumerate(_PAIRS)}


def step_size(beta: float) -> float:
    """Largest admissible RK4 step ``min(1e-4, 0.1/sqrt(beta))`` that divides 1."""
    h = min(1e-4, 0.1 / math.sqrt(max(beta, 1e-300)))
    return 1.0 / math.ceil(1.0 / h)


def ground_state_for(regime, mu: float) -> GroundState:
    regime = Regime.parse(regime)
    if mu == regime.mu_min:
        return zero_state(regime, 65)
    return build_ground_state(regime, mu, 65)


def _coefficients(gs: GroundState, x):
    s = gs.regime.sign
    q = gs.evaluate(x) ** 2
    return -s * (q - gs.mu), -s * (3.0 * q - gs.mu)


def _system(a, b, beta):
    """``A(x)`` for ``y = (f, f', g, g')``; ``a, b`` arrays over x, ``beta`` over batch."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    shape = (beta.size,) + np.shape(a) + (4, 4)
    A = np.zeros(shape)
    A[..., 0, 1] = 1.0
    A[..., 2, 3] = 1.0
    A[..., 1, 0] = a
    A[..., 3, 2] = b
    A[..., 1, 2] = beta[:, None]
    A[..., 3, 0] = beta[:, None]
    return A


def _compound(A):
    """Second additive compound: ``m' = A2 m`` for 2x2 minors ``m_ij``."""
    C = np.zeros(A.shape[:-2] + (6, 6))
    for r, (i, j) in enumerate(_PAIRS):
        for k in range(4):
            # d/dx m_ij = sum_k A_ik m_kj + A_jk m_ik
            for (p, q, coef) in ((k, j, A[..., i, k]), (i, k, A[..., j, k])):
                if p == q:
                    continue
                sign = 1.0
                if p > q:
                    p, q, sign = q, p, -1.0
                C[..., r, _PAIR_INDEX[(p, q)]] += sign * coef
    return C


def _rk4_steps(A0, Ah, A1, h):
    """RK4 step matrices for ``y' = A y`` given A at x, x+h/2, x+h."""
    eye = np.eye(A0.shape[-1])
    K1 = A0
    K2 = Ah @ (eye + 0.5 * h * K1)
    K3 = Ah @ (eye + 0.5 * h * K2)
    K4 = A1 @ (eye + h * K3)
    return eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def _chain(R):
    """Ordered product ``R[-1] @ ... @ R[0]`` along axis -3 by pairwise reduction."""
    while R.shape[-3] > 1:
        if R.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(R.shape[-1]), R.shape[:-3] + (1,) + R.shape[-2:])
            R = np.concatenate([R, eye], axis=-3)
        R = R[..., 1::2, :, :] @ R[..., 0::2, :, :]
    return R[..., 0, :, :]


def _propagators(gs: GroundState, betas, n_steps: int, compound: bool):
    h = 1.0 / n_steps
    x = np.arange(n_steps) * h
    a0, b0 = _coefficients(gs, x)
    ah, bh = _coefficients(gs, x + 0.5 * h)
    a1, b1 = _coefficients(gs, x + h)
    A0, Ah, A1 = _system(a0, b0, betas), _system(ah, bh, betas), _system(a1, b1, betas)
    if compound:
        A0, Ah, A1 = _compound(A0), _compound(Ah), _compound(A1)
    return _chain(_rk4_steps(A0, Ah, A1, h))


@dataclass(frozen=True)
class ShootResult:
    """Endpoint values ``(f(1), g(1), f'(1), g'(1))`` plus Richardson error."""

    values: np.ndarray
    error: np.ndarray
    step: float

    @property
    def f1(self):
        return self.values[0]


def _endpoint(gs, beta, ic, n_steps):
    P = _propagators(gs, [beta], n_steps, False)[0]
    y0 = np.zeros(4)
    y0[{"col1": 1, "col2": 3}[ic]] = 1.0
    y = P @ y0
    return np.array([y[0], y[2], y[1], y[3]])


def integrate_fg(gs: GroundState, beta: float, ic: str = "col1",
                 slope: float = 1.0) -> ShootResult:
    """Endpoint values at the finer of steps ``h`` and ``h/2``, with error estimate.

    The estimate is ``|Y_{h/2} - Y_h| / 15`` (fourth-order Richardson).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    n = int(round(1.0 / step_size(beta)))
    coarse = _endpoint(gs, beta, ic, n)
    fine = _endpoint(gs, beta, ic, 2 * n)
    return ShootResult(slope * fine, abs(slope) * np.abs(fine - coarse) / 15.0, 0.5 / n)


def endpoint_matrix(gs: GroundState, beta: float, n_steps: int | None = None):
    """``A = [[f1(1), f2(1)], [g1(1), g2(1)]]``."""
    n = n_steps or int(round(1.0 / step_size(beta)))
    P = _propagators(gs, [beta], n, False)[0]
    return np.array([[P[0, 1], P[0, 3]], [P[2, 1], P[2, 3]]])


def det_A(gs: GroundState, betas, n_steps: int | None = None) -> np.ndarray:
    """``det A(beta)`` via the compound system, vectorized over ``betas``."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    n = n_steps or int(round(1.0 / step_size(float(np.max(betas)))))
    P = _propagators(gs, betas, n, True)
    # initial minors: columns e1 (f') and e3 (g') -> m_13 = 1
    return P[:, _PAIR_INDEX[(0, 2)], _PAIR_INDEX[(1, 3)]]


def singularity(gs: GroundState, beta: float) -> float:
    """Relative singularity ``sigma_min(A) / sigma_max(A) = |det A| / sigma_max^2``."""
    A = endpoint_matrix(gs, beta)
    smax = np.linalg.norm(A, 2)
    if smax == 0:
        return 0.0
    return float(abs(det_A(gs, [beta])[0]) / smax**2)


def G_at_beta(gs: GroundState, beta: float) -> ShootResult:
    return integrate_fg(gs, beta, "col1")


def _betas(regime, mu, n_max, M=None):
    from .spectral import spectrum_at

    if M is None:
        M = max(128, 4 * n_max + 4 * ((4 * n_max) % 2))
        M = max(M, 8 * n_max)
    _, sd = spectrum_at(regime, mu, M, n_keep=n_max, vectors=False)
    return sd.betas


def G_n(regime, mu: float, n: int, beta: float | None = None) -> float:
    """``f^[1](1)`` at the n-th positive eigenvalue (computed if not given)."""
    regime = Regime.parse(regime)
    if beta is None:
        beta = _betas(regime, mu, n)[n - 1]
    return float(G_at_beta(ground_state_for(regime, mu), beta).f1)


def bracket_eigenvalue(gs: GroundState, beta_guess: float, rel_width: float = 1e-3,
                       rtol: float = 1e-10, n_grid: int = 9):
    """Locate a sign change of ``det A`` near ``beta_guess`` and bisect it.

    Returns ``(lo, hi)`` with ``(hi - lo) <= rtol * hi``, or ``None``.
    """
    grid = beta_guess * (1 + rel_width * np.linspace(-1, 1, n_grid))
    n_steps = int(round(1.0 / step_size(grid[-1])))
    d = det_A(gs, grid, n_steps)
    idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) <= 0)[0]
    if len(idx) == 0:
        return None
    i = idx[np.argmin(np.abs(0.5 * (grid[idx] + grid[idx + 1]) - beta_guess))]
    lo, hi, dlo = grid[i], grid[i + 1], d[i]
    while hi - lo > rtol * hi:
        # several interior points per pass keeps the batch vectorized
        pts = np.linspace(lo, hi, 9)[1:-1]
        dp = det_A(gs, pts, n_steps)
        seq_b = np.concatenate([[lo], pts, [hi]])
        seq_d = np.concatenate([[dlo], dp, [np.nan]])
        for j in range(len(seq_b) - 1):
            if j == len(seq_b) - 2 or np.sign(seq_d[j]) != np.sign(seq_d[j + 1]):
                lo, hi, dlo = seq_b[j], seq_b[j + 1], seq_d[j]
                break
    return lo, hi


@dataclass(frozen=True)
class GenericityCertificate:
    regime: Regime
    mu: float
    n_checked: tuple
    betas: tuple = ()
    G_values: tuple = ()
    G_errors: tuple = ()
    margins: tuple = ()
    singularities: tuple = ()
    min_margin: float = math.inf
    status: str = "certified"
    failed_n: int | None = None
    degenerate: bool = False
    margin_threshold: float = 10.0

    @property
    def certified(self) -> bool:
        return self.status == "certified"


SINGULAR_TOL = 1e-5


def certify(regime, mu: float, N_max: int, M: int | None = None,
            margin_threshold: float = 10.0, singular_tol: float = SINGULAR_TOL,
            betas=None) -> GenericityCertificate:
    """Check ``|G_n| > margin_threshold * err_n`` for ``n <= N_max``.

    Each eigenvalue from the matrix solver is first confirmed by the shooting
    matrix being singular (relative ``sigma_min/sigma_max < singular_tol``);
    otherwise the status is ``unresolved(n)``.
    """
    regime = Regime.parse(regime)
    if N_max <= 0:
        return GenericityCertificate(regime, float(mu), (), degenerate=True,
                                     margin_threshold=margin_threshold)
    if betas is None:
        betas = _betas(regime, mu, N_max, M)
    gs = ground_state_for(regime, mu)
    Gs, errs, margins, sings = [], [], [], []
    status, failed = "certified", None
    for n in range(1, N_max + 1):
        beta = float(betas[n - 1])
        res = G_at_beta(gs, beta)
        sig = singularity(gs, beta)
        err = max(float(res.error[0]), 1e-16 * abs(res.f1))
        margin = abs(res.f1) / (margin_threshold * err)
        Gs.append(float(res.f1))
        errs.append(err)
        margins.append(margin)
        sings.append(sig)
        if status == "certified":
            if sig > singular_tol:
                status, failed = f"unresolved({n})", n
            elif margin <= 1.0:
                status, failed = f"failed({n})", n
    return GenericityCertificate(
        regime, float(mu), tuple(range(1, N_max + 1)), tuple(map(float, betas[:N_max])),
        tuple(Gs), tuple(errs), tuple(margins), tuple(sings), float(min(margins)),
        status, failed, False, margin_threshold,
    )


def certificate_text(cert: GenericityCertificate) -> str:
    lines = [
        f"regime {cert.regime.value}",
        f"mu {cert.mu:.17g}",
        f"n_max {len(cert.n_checked)}",
        f"margin_threshold {cert.margin_threshold:.17g}",
        "# n beta G G_error margin singularity",
    ]
    for row in zip(cert.n_checked, cert.betas, cert.G_values, cert.G_errors,
                   cert.margins, cert.singularities):
        lines.append("{} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}".format(*row))
    lines.append(f"min_margin {cert.min_margin:.17g}")
    lines.append(f"status {cert.status}" + (" degenerate" if cert.degenerate else ""))
    return "\n".join(lines) + "\n"


def scan(regime, mu_grid, n_range, M: int = 128, width: float = 1e-6,
         threads: int = 1, G_func=None):
    """Sign-change brackets ``(n, lo, hi)`` of ``G_n`` over ``mu_grid``.

    ``G_func(mu, n)`` overrides the evaluation (test hook for synthetic input).
    """
    regime = Regime.parse(regime)
    mu_grid = np.asarray(mu_grid, dtype=float)
    if np.any(np.diff(mu_grid) <= 0):
        raise ValueError("mu_grid must be ascending")
    n_list = list(n_range)
    n_top = max(n_list)

    if G_func is None:
        def G_func(mu, n, _cache={}):  # noqa: B006 - per-call cache
            key = float(mu)
            if key not in _cache:
                b = _betas(regime, mu, n_top, M)
                gs = ground_state_for(regime, mu)
                _cache[key] = {m: G_at_beta(gs, b[m - 1]).f1 for m in n_list}
            return _cache[key][n]

    def row(mu):
        return [G_func(mu, n) for n in n_list]

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            table = np.array(list(ex.map(row, mu_grid)))
    else:
        table = np.array([row(m) for m in mu_grid])

    out = []
    for j, n in enumerate(n_list):
        s = np.sign(table[:, j])
        for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
            lo, hi, glo = mu_grid[i], mu_grid[i + 1], table[i, j]
            while hi - lo > width:
                mid = 0.5 * (lo + hi)
                gm = G_func(mid, n)
                if np.sign(gm) == np.sign(glo):
                    lo, glo = mid, gm
                else:
                    hi = mid
            out.append((n, float(lo), float(hi)))
    return out
