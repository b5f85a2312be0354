"""Real-space stencils for trilinear voxel elements on the periodic node grid.

Node ``I`` sits at ``I/N``; voxel ``I`` spans nodes ``I .. I+1``.  The
gradient of the trilinear interpolant at local point ``g`` of voxel ``I`` is
``N * Dif_m Int_p(g_p) Int_q(g_q) u`` along axis ``m`` (``p, q`` the other two
axes).  All stencils are shift-invariant, so they commute, and their adjoints
(with respect to the plain sum over ``I``) use the opposite roll.
"""

from __future__ import annotations

import numpy as np

from .spectral import GAUSS_SIGNS, gauss_coordinate
from .tensors import VOIGT_PAIRS

_OTHER = ((1, 2), (0, 2), (0, 1))


def _ax(m):
    return m - 3


def dif(phi, m):
    return np.roll(phi, -1, _ax(m)) - phi


def dif_adj(psi, m):
    return np.roll(psi, 1, _ax(m)) - psi


def interp(phi, m, g):
    return phi + g * (np.roll(phi, -1, _ax(m)) - phi)


def interp_adj(psi, m, g):
    return (1.0 - g) * psi + g * np.roll(psi, 1, _ax(m))


def gradient_at(u, g):
    """``grad[m, n] = d u_n / d x_m`` at local point ``g`` (3-vector) of every voxel.

    ``u`` is a nodal ``(3, N, N, N)`` field; returns ``(3, 3, N, N, N)``.
    """
    N = u.shape[-1]
    out = np.empty((3, 3) + u.shape[1:], dtype=u.dtype)
    for m in range(3):
        p, q = _OTHER[m]
        d = dif(u, m)
        out[m] = N * interp(interp(d, p, g[p]), q, g[q])
    return out


def strain_at(u, g):
    """Symmetric gradient (tensorial Voigt, ``(6, N, N, N)``) at local point ``g``."""
    grad = gradient_at(u, g)
    return np.stack([0.5 * (grad[m, n] + grad[n, m]) for m, n in VOIGT_PAIRS])


def center_strain(u):
    """Symmetric gradient at voxel centres, which equals its voxel average."""
    return strain_at(u, (0.5, 0.5, 0.5))


def gauss_points():
    """Local coordinates of the 8 Gauss points, in ``GAUSS_SIGNS`` order."""
    return [tuple(gauss_coordinate(b) for b in signs) for signs in GAUSS_SIGNS]


_G = (gauss_coordinate(-1.0), gauss_coordinate(1.0))


def _both(phi, m):
    """``[Int_m(g-) phi, Int_m(g+) phi]`` sharing one roll."""
    d = np.roll(phi, -1, _ax(m)) - phi
    return [phi + g * d for g in _G]


def _both_adj(s_minus, s_plus, m):
    """``Int_m(g-)^* s_minus + Int_m(g+)^* s_plus`` sharing one roll."""
    r = np.roll(_G[0] * s_minus + _G[1] * s_plus, 1, _ax(m))
    return (1.0 - _G[0]) * s_minus + (1.0 - _G[1]) * s_plus + r


def gauss_gradients(u):
    """Gauss-point gradients of a nodal ``(3, N, N, N)`` field.

    Returns a dict keyed by ``(m, i, j)``: the ``(3, N, N, N)`` field of
    ``d u_n / d x_m`` at Gauss points whose signs along the two other axes
    ``p < q`` have indices ``i, j`` (0 for ``-1``, 1 for ``+1``).  The value
    does not depend on the sign along ``m``.
    """
    N = u.shape[-1]
    out = {}
    for m in range(3):
        p, q = _OTHER[m]
        for i, e in enumerate(_both(N * dif(u, m), p)):
            for j, f in enumerate(_both(e, q)):
                out[m, i, j] = f
    return out


def gradient_key(m, signs):
    p, q = _OTHER[m]
    return m, int(signs[p] > 0), int(signs[q] > 0)


def gauss_divergence(acc, N):
    """Nodal force ``2^-3 sum_b (D^b)^* tau^b``.

    ``acc[m, i, j]`` holds the row ``tau^b[m, :]`` (a ``(3, N, N, N)`` array)
    summed over the two Gauss points sharing key ``(m, i, j)``.
    """
    f = 0.0
    for m in range(3):
        p, q = _OTHER[m]
        sq = [_both_adj(acc[m, i, 0], acc[m, i, 1], q) for i in range(2)]
        f = f + dif_adj(_both_adj(sq[0], sq[1], p), m)
    return f * (N / 8.0)


def prolong(u, factor):
    """Trilinear interpolation of a periodic nodal field onto a grid ``factor`` times finer."""
    if factor == 1:
        return u
    for m in range(3):
        ax = _ax(m)
        nxt = np.roll(u, -1, ax)
        parts = [(1.0 - s / factor) * u + (s / factor) * nxt for s in range(factor)]
        stacked = np.stack(parts, axis=ax % u.ndim + 1)
        shape = list(u.shape)
        shape[ax] *= factor
        u = stacked.reshape(shape)
    return u
