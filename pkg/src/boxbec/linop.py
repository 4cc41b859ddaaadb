"""Linearized operators around a ground state, as matrices in the sine basis.

Matrices act on coefficient vectors in the orthonormal basis
``e_n(x) = sqrt(2) sin(n pi x)``, ``n = 1..M``.  With ``s = +1`` (focusing) or
``-1`` (defocusing)::

    L-  = -Laplacian + s mu -   s phi^2
    L+  = -Laplacian + s mu - 3 s phi^2
    Lop = [[0, L-], [-L+, 0]]
    Mop = J (i Lop) J^{-1},   J = [[1, i], [1, -i]]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .groundstate import GroundState, Regime

__all__ = [
    "BlockOperator",
    "multiplication_gram",
    "assemble_scalar",
    "assemble_block",
    "J_MATRIX",
    "apply_J",
    "apply_J_inverse",
    "dump_matrix",
    "load_matrix",
    "coefficients_from_points",
    "points_from_coefficients",
]

J_MATRIX = np.array([[1.0, 1.0j], [1.0, -1.0j]])
_MAGIC = b"BXBECOP1"


def multiplication_gram(q_func, M: int, oversample: int = 4) -> np.ndarray:
    """Gram matrix ``G_mn = <q e_n, e_m>`` of multiplication by ``q``.

    ``G_mn = c_|m-n| - c_(m+n)`` with ``c_j = int_0^1 q cos(j pi x) dx``; the
    cosine moments come from a DCT-I (trapezoid rule) on ``oversample * M``
    panels, which is spectrally accurate when ``q`` is even about 0 and 1.
    """
    P = oversample * M
    if P < 2 * M + 2:
        raise ValueError("oversample too small to resolve index 2M")
    xs = np.arange(P + 1) / P
    q = np.asarray(q_func(xs), dtype=float)
    c = dct(q, type=1) / (2.0 * P)
    idx = np.arange(1, M + 1)
    return c[np.abs(idx[:, None] - idx[None, :])] - c[idx[:, None] + idx[None, :]]


def _phi_squared(gs: GroundState):
    return lambda x: gs.evaluate(x) ** 2


def assemble_scalar(regime, gs: GroundState, which: str, M: int) -> np.ndarray:
    """Matrix of ``L-`` (``which="minus"``) or ``L+`` (``"plus"``)."""
    regime = Regime.parse(regime)
    if regime is not gs.regime:
        raise ValueError("regime does not match the ground state")
    if len(gs.phi) < M:
        raise ValueError("ground-state resolution below matrix size")
    factor = {"minus": 1.0, "plus": 3.0}[which]
    s = regime.sign
    n_pi2 = (np.pi * np.arange(1, M + 1)) ** 2
    A = np.diag(n_pi2 + s * gs.mu)
    if not gs.is_zero:
        A -= s * factor * multiplication_gram(_phi_squared(gs), M)
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class BlockOperator:
    matrix: np.ndarray = field(repr=False)
    regime: Regime
    mu: float
    flavor: str
    M: int

    def apply(self, vec):
        return self.matrix @ vec

    def dump(self, path) -> None:
        dump_matrix(path, self.matrix, self.M)


def assemble_block(regime, gs: GroundState, flavor: str, M: int) -> BlockOperator:
    """``flavor="L"``: ``[[0, L-], [-L+, 0]]``; ``flavor="M"``: its real J-conjugate."""
    regime = Regime.parse(regime)
    Lm = assemble_scalar(regime, gs, "minus", M)
    Lp = assemble_scalar(regime, gs, "plus", M)
    if flavor == "L":
        Z = np.zeros_like(Lm)
        mat = np.block([[Z, Lm], [-Lp, Z]])
    elif flavor == "M":
        S, D = 0.5 * (Lm + Lp), 0.5 * (Lp - Lm)
        mat = np.block([[S, D], [-D, -S]])
    else:
        raise ValueError("flavor must be 'L' or 'M'")
    return BlockOperator(mat, regime, float(gs.mu), flavor, M)


def apply_J(vec, M: int):
    """``J (a, b) = (a + i b, a - i b)`` on stacked 2M vectors."""
    a, b = vec[:M], vec[M:]
    return np.concatenate([a + 1j * b, a - 1j * b])


def apply_J_inverse(vec, M: int):
    """``J^{-1} (p, q) = ((p + q) / 2, i (q - p) / 2)``."""
    p, q = vec[:M], vec[M:]
    return np.concatenate([0.5 * (p + q), 0.5j * (q - p)])


def coefficients_from_points(values, axis=-1):
    """Grid values on ``x_j = j/(M+1)`` -> orthonormal-basis coefficients."""
    from .discretization import dst_forward

    return dst_forward(values, axis=axis) / np.sqrt(2.0)


def points_from_coefficients(coeffs, axis=-1):
    from .discretization import dst_inverse

    return dst_inverse(np.sqrt(2.0) * np.asarray(coeffs), axis=axis)


def dump_matrix(path, matrix, M: int) -> None:
    """Binary dump: 8-byte magic, little-endian int64 ``M``, row-major float64."""
    mat = np.ascontiguousarray(matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<q", int(M)))
        fh.write(mat.tobytes(order="C"))


def load_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:8] != _MAGIC:
            raise ValueError("not a boxbec matrix dump")
        (M,) = struct.unpack("<q", head[8:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = int(round(np.sqrt(data.size)))
    return data.reshape(n, n), M
