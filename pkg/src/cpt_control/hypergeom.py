"""Gauss hypergeometric function for complex parameters and real z <= 1/2.

Only the pieces the pulse-area integrals need: the defining power series,
Pfaff's transformation for ``-1 <= z < -1/2`` and the ``1/z`` connection
formula for ``z < -1``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gamma as _gamma

_MAX_TERMS = 4000


def _series(a, b, c, z, tol=1e-17):
    """Plain power series, assumed convergent (|z| <= 2/3 in practice)."""
    z = np.asarray(z, dtype=complex)
    term = np.ones_like(z)
    total = np.ones_like(z)
    for n in range(_MAX_TERMS):
        term = term * (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total = total + term
        if np.all(np.abs(term) <= tol * np.maximum(np.abs(total), 1e-300)):
            return total
    raise ArithmeticError("hypergeometric series did not converge")


def _is_integer(x: complex, tol: float = 1e-12) -> bool:
    return abs(x.imag) < tol and abs(x.real - round(x.real)) < tol


def hyp2f1(a, b, c, z):
    """``2F1(a, b; c; z)`` for real ``z <= 0.5`` (array or scalar).

    Parameters may be complex. The connection formula used for ``z < -1``
    requires ``a - b`` to be non-integer.
    """
    z_arr = np.asarray(z, dtype=float)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    if np.any(z_arr > 0.5):
        raise ValueError("hyp2f1 implemented for z <= 0.5 only")
    a, b, c = complex(a), complex(b), complex(c)
    out = np.empty(z_arr.shape, dtype=complex)

    direct = z_arr >= -0.5
    if np.any(direct):
        out[direct] = _series(a, b, c, z_arr[direct])

    pfaff = (z_arr < -0.5) & (z_arr >= -1.0)
    if np.any(pfaff):
        zz = z_arr[pfaff]
        w = zz / (zz - 1.0)
        out[pfaff] = (1.0 - zz) ** (-a) * _series(a, c - b, c, w)

    far = z_arr < -1.0
    if np.any(far):
        if _is_integer(a - b):
            raise ValueError("connection formula needs non-integer a - b")
        zz = z_arr[far]
        inv = 1.0 / zz
        t1 = (
            _gamma(c) * _gamma(b - a) / (_gamma(b) * _gamma(c - a))
            * (-zz) ** (-a)
            * hyp2f1(a, a - c + 1.0, a - b + 1.0, inv)
        )
        t2 = (
            _gamma(c) * _gamma(a - b) / (_gamma(a) * _gamma(c - b))
            * (-zz) ** (-b)
            * hyp2f1(b, b - c + 1.0, b - a + 1.0, inv)
        )
        out[far] = t1 + t2
    return out[0] if scalar else out
