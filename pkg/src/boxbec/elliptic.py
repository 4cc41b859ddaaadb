"""Complete elliptic integrals and Jacobi elliptic functions.

Everything is parametrised by the modulus ``k`` (not the parameter ``m = k**2``
used by :mod:`scipy.special`).  The integrals use the arithmetic-geometric mean,
the Jacobi functions use the descending Landen (AGM) scheme, so no tables or
series cut-offs are involved.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "K_GUARD",
    "complete_K",
    "complete_E",
    "jacobi_cn_sn",
    "dK_dk",
]

#: Largest modulus accepted by :func:`complete_K`.
K_GUARD = 1.0 - 1e-12

_MAX_AGM = 60


class DomainError(ValueError):
    """Argument outside the domain of a special function or model."""


def _check_modulus(k, upper, inclusive):
    k = float(k)
    if not math.isfinite(k) or k < 0.0 or k > upper or (not inclusive and k == upper):
        raise DomainError(f"elliptic modulus k={k!r} outside admissible range")
    return k


def _agm_sequence(k, dtype=float):
    """AGM sequence started from (1, k'); returns (a_n, c_n) lists.

    With ``dtype=np.longdouble`` the sequence is carried in extended precision.
    """
    one = dtype(1)
    k = dtype(k)
    kp = np.sqrt((one - k) * (one + k))
    a, b, c = one, kp, k
    a_list, c_list = [a], [c]
    tiny = np.finfo(dtype).eps * dtype(0.1)
    for _ in range(_MAX_AGM):
        if abs(c) <= tiny * a:
            break
        a, b, c = (a + b) / 2, np.sqrt(a * b), (a - b) / 2
        a_list.append(a)
        c_list.append(c)
    return a_list, c_list


def complete_K(k: float) -> float:
    """Complete elliptic integral of the first kind ``K(k)``.

    Raises
    ------
    DomainError
        If ``k`` is outside ``[0, 1 - 1e-12]``.
    """
    k = _check_modulus(k, K_GUARD, inclusive=True)
    a_list, _ = _agm_sequence(k)
    return math.pi / (2.0 * float(a_list[-1]))


def complete_E(k: float) -> float:
    """Complete elliptic integral of the second kind ``E(k)``, ``0 <= k <= 1``."""
    k = _check_modulus(k, 1.0, inclusive=True)
    if k == 1.0:
        return 1.0
    a_list, c_list = _agm_sequence(k)
    K = math.pi / (2.0 * float(a_list[-1]))
    s = 0.0
    for n, c in enumerate(c_list):
        s += 2.0 ** (n - 1) * float(c) ** 2
    return K * (1.0 - s)


def dK_dk(k: float) -> float:
    """Analytic derivative ``dK/dk = (E - (1-k^2) K) / (k (1-k^2))``."""
    k = float(k)
    if k == 0.0:
        return 0.0
    K, E = complete_K(k), complete_E(k)
    return (E - (1.0 - k * k) * K) / (k * (1.0 - k * k))


def jacobi_cn_sn(x, k: float):
    """Jacobi elliptic functions ``(cn, sn, dn)`` of argument ``x``, modulus ``k``.

    ``x`` may be a scalar or an array; the outputs have the same shape.  A
    ``longdouble`` argument is evaluated in extended precision throughout.
    """
    k = _check_modulus(k, 1.0, inclusive=False)
    x = np.asarray(x)
    dtype = np.longdouble if x.dtype == np.longdouble else np.float64
    x = x.astype(dtype, copy=False)
    if k == 0.0:
        return np.cos(x), np.sin(x), np.ones_like(x)

    a_list, c_list = _agm_sequence(k, dtype)
    n = len(a_list) - 1
    phi = dtype(2.0**n) * a_list[-1] * x
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c_list[j] / a_list[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    dn = np.sqrt(1.0 - (k * sn) ** 2)
    return cn, sn, dn
