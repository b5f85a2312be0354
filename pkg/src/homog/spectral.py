"""Frequency-domain operators on the periodic voxel grid.

Discrete Fourier coefficients follow ``f[I] = sum_xi fhat[xi] exp(2 pi i xi.I/N)``,
so the forward transform carries the ``1/N^3`` factor and ``fhat[0]`` is the
mean.  Spectral arrays are kept in numpy FFT order: array index ``k`` holds
frequency ``k`` for ``k < N/2`` and ``k - N`` otherwise, which for even ``N``
puts the unpaired frequency ``-N/2`` at index ``N/2``.  "Half" grids are the
``rfftn`` layout whose last axis holds ``0 .. N//2``; the last entry again
stands for ``-N/2`` when ``N`` is even.

All symbol functions taking ``xi`` accept an array of shape ``(..., 3)``.
Grid versions (suffix ``_grid`` or ``apply``) work on broadcastable
per-axis frequency arrays and act on component-first fields.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .tensors import SHEAR_WEIGHTS, VOIGT_INDEX, VOIGT_PAIRS, LameParams

logger = logging.getLogger(__name__)

AXES = (-3, -2, -1)
# sign vectors b of the 2x2x2 Gauss points, fixed order
GAUSS_SIGNS = tuple(itertools.product((-1, 1), repeat=3))
_B_COND_MAX = 1e12


def gauss_coordinate(b):
    """1-D Gauss point on the unit voxel for sign ``b``: ``(1 + b/sqrt(3))/2``."""
    return 0.5 * (1.0 + b / np.sqrt(3.0))


# -- frequency sets -----------------------------------------------------------


def axis_frequencies(N):
    """Integer frequencies along one axis in FFT order (``F_N`` convention)."""
    return np.rint(np.fft.fftfreq(N, 1.0 / N)).astype(int)


def half_axis_frequencies(N):
    k = np.arange(N // 2 + 1)
    if N % 2 == 0:
        k[-1] = -N // 2
    return k


def frequency_grid(N, half=False):
    """Broadcastable ``(xi1, xi2, xi3)`` float arrays over the (half) spectral grid."""
    full = axis_frequencies(N).astype(float)
    last = half_axis_frequencies(N).astype(float) if half else full
    return (full[:, None, None], full[None, :, None], last[None, None, :])


def nyquist_mask(N, half=False):
    """True on frequencies with a component equal to ``-N/2`` (``F_N`` minus ``F_N-``)."""
    shape = (N, N, N // 2 + 1 if half else N)
    if N % 2:
        return np.zeros(shape, dtype=bool)
    x1, x2, x3 = frequency_grid(N, half)
    ny = -N / 2
    return np.broadcast_to((x1 == ny) | (x2 == ny) | (x3 == ny), shape)


@dataclass(frozen=True)
class FrequencySet:
    """``F_N`` (``reduced=False``) or ``F_N-`` (``reduced=True``)."""

    N: int
    reduced: bool = False

    def _axis(self):
        k = np.sort(axis_frequencies(self.N))
        if self.reduced:
            k = k[k > -self.N / 2]
        return k

    def members(self):
        k = self._axis()
        return np.array(list(itertools.product(k, k, k)), dtype=int)

    def __len__(self):
        return len(self._axis()) ** 3

    def __contains__(self, xi):
        xi = np.asarray(xi)
        lo = -self.N / 2
        ok = (xi >= lo) & (xi < self.N / 2)
        if self.reduced:
            ok &= xi > lo
        return bool(np.all(ok))


# -- transforms ---------------------------------------------------------------


def _check_size(f, N=None):
    shape = f.shape[-3:]
    if len(shape) != 3 or len(set(shape)) != 1 or (N is not None and shape[0] != N):
        raise ValueError(f"expected trailing N^3 grid, got shape {f.shape}")
    n = shape[0]
    if n & (n - 1):
        logger.debug("N=%d is not a power of two; FFTs may be slow", n)
    return n


def fft_forward(f):
    """Coefficients over ``F_N`` of a field on the last three axes (mean at index 0)."""
    _check_size(f)
    return scipy.fft.fftn(f, axes=AXES, norm="forward")


def fft_inverse(fhat):
    _check_size(fhat)
    return scipy.fft.ifftn(fhat, axes=AXES, norm="forward")


def rfft_forward(f):
    """Half-grid coefficients of a real field."""
    _check_size(f)
    return scipy.fft.rfftn(f, axes=AXES, norm="forward")


def rfft_inverse(fhat, N):
    return scipy.fft.irfftn(fhat, s=(N, N, N), axes=AXES, norm="forward")


# -- box filter, Q_N, R_N -----------------------------------------------------


def g_hat(xi, N):
    """Fourier coefficients of ``G_N = N^3 1_{cube of side 1/N}``.

    ``prod_m N sin(pi xi_m/N)/(pi xi_m)``, a factor being 1 where ``xi_m = 0``.
    """
    xi = np.asarray(xi, dtype=float)
    return np.prod(np.sinc(xi / N), axis=-1)


def g_hat_grid(N, half=False):
    x1, x2, x3 = frequency_grid(N, half)
    return np.sinc(x1 / N) * np.sinc(x2 / N) * np.sinc(x3 / N)


def apply_QN(fstar):
    """Trigonometric-polynomial coefficients of ``Q_N f`` from cell averages ``f*``.

    Returns ``G^-1[xi] exp(-pi i xi.1/N) fhat*[xi]`` over ``F_N`` (FFT order).
    """
    N = _check_size(fstar)
    x1, x2, x3 = frequency_grid(N)
    shift = np.exp(-1j * np.pi * (x1 + x2 + x3) / N)
    return fft_forward(fstar) * shift / g_hat_grid(N)


def apply_RN(fhat):
    """``R_N f = G_N * G_N * f`` on coefficients over ``F_N``."""
    N = _check_size(fhat)
    return fhat * g_hat_grid(N) ** 2


# -- continuous Green operator --------------------------------------------------


def _as_lame(ref):
    return ref if isinstance(ref, LameParams) else LameParams(*ref)


def gamma0_hat(xi, ref):
    """Green-operator symbol ``[Gamma0]_mnpq[xi]`` for an isotropic reference medium.

    Returns an array of shape ``(..., 3, 3, 3, 3)``; ``xi = 0`` is rejected.
    """
    ref = _as_lame(ref)
    xi = np.asarray(xi, dtype=float)
    q = np.sum(xi * xi, axis=-1)
    if np.any(q == 0):
        raise ValueError("Green operator is undefined at xi = 0")
    d = np.eye(3)
    xx = xi[..., :, None] * xi[..., None, :]
    t1 = (np.einsum("...mq,np->...mnpq", xx, d) + np.einsum("...nq,mp->...mnpq", xx, d)
          + np.einsum("...mp,nq->...mnpq", xx, d) + np.einsum("...np,mq->...mnpq", xx, d))
    t1 = t1 / (4.0 * ref.mu * q[..., None, None, None, None])
    c = (ref.lam + ref.mu) / (ref.mu * (ref.lam + 2.0 * ref.mu))
    t2 = c * np.einsum("...mn,...pq->...mnpq", xx, xx) / (q ** 2)[..., None, None, None, None]
    return t1 - t2


def gamma_action(tau_hat, x, ref):
    """``Gamma0[x] : tau_hat`` for component-first tensorial Voigt ``tau_hat``.

    ``x`` is a triple of broadcastable real wave-vector arrays.  Zero wave
    vectors give zero output.
    """
    ref = _as_lame(ref)
    x1, x2, x3 = x
    t11, t22, t33, t23, t13, t12 = tau_hat
    q = x1 * x1 + x2 * x2 + x3 * x3
    zero = q == 0
    q = np.where(zero, 1.0, q)
    s1 = t11 * x1 + t12 * x2 + t13 * x3
    s2 = t12 * x1 + t22 * x2 + t23 * x3
    s3 = t13 * x1 + t23 * x2 + t33 * x3
    a = 1.0 / (2.0 * ref.mu * q)
    xsx = (x1 * s1 + x2 * s2 + x3 * s3) * (
        (ref.lam + ref.mu) / (ref.mu * (ref.lam + 2.0 * ref.mu)) / (q * q))
    a = np.where(zero, 0.0, a)
    xsx = np.where(zero, 0.0, xsx)
    return np.stack([
        a * 2 * x1 * s1 - xsx * x1 * x1,
        a * 2 * x2 * s2 - xsx * x2 * x2,
        a * 2 * x3 * s3 - xsx * x3 * x3,
        a * (x2 * s3 + x3 * s2) - xsx * x2 * x3,
        a * (x1 * s3 + x3 * s1) - xsx * x1 * x3,
        a * (x1 * s2 + x2 * s1) - xsx * x1 * x2,
    ])


# -- rotated finite-difference gradient ----------------------------------------------


def _reject_nyquist(xi, N):
    if np.any(np.asarray(xi) <= -N / 2):
        raise ValueError("frequency outside F_N-: a component equals -N/2")


def willot_k(xi, N):
    """``k_N[xi] = (iN/4) prod_m (exp(2 pi i xi_m/N) + 1) tan(pi xi/N)`` on ``F_N-``."""
    xi = np.asarray(xi, dtype=float)
    _reject_nyquist(xi, N)
    pref = 0.25j * N * np.prod(np.exp(2j * np.pi * xi / N) + 1.0, axis=-1)
    return pref[..., None] * np.tan(np.pi * xi / N)


def tilde_k(xi, N):
    """Modified frequency ``2iN tan(pi xi_m/N)`` (component-wise) on ``F_N-``."""
    xi = np.asarray(xi, dtype=float)
    _reject_nyquist(xi, N)
    return 2j * N * np.tan(np.pi * xi / N)


def willot_gamma_hat(xi, N, ref):
    """Finite-difference Green symbol built from ``k_N`` and its conjugate, ``(..., 3,3,3,3)`` complex."""
    ref = _as_lame(ref)
    xi = np.asarray(xi, dtype=float)
    if np.any(np.all(xi == 0, axis=-1)):
        raise ValueError("Green operator is undefined at xi = 0")
    k = willot_k(xi, N)
    kb = np.conj(k)
    kk = np.sum(np.abs(k) ** 2, axis=-1)[..., None, None, None, None]
    d = np.eye(3)
    kkb = k[..., :, None] * kb[..., None, :]  # k_a conj(k_b)
    t1 = (np.einsum("...mq,np->...mnpq", kkb, d) + np.einsum("...nq,mp->...mnpq", kkb, d)
          + np.einsum("...mp,nq->...mnpq", kkb, d) + np.einsum("...np,mq->...mnpq", kkb, d))
    c = (ref.lam + ref.mu) / (ref.mu * (ref.lam + 2.0 * ref.mu))
    t2 = c * np.einsum("...mn,...pq->...mnpq", kkb, kkb)
    return t1 / (4.0 * ref.mu * kk) - t2 / kk ** 2


def willot_action(tau_hat, N, ref, half=True):
    """Apply the finite-difference symbol on ``F_N- \\ {0}`` and zero on ``F_N \\ F_N-``.

    Since ``k_N`` is a complex scalar times the real vector ``tan(pi xi/N)``,
    the symbol equals ``Gamma0`` evaluated at that real vector.
    """
    x = frequency_grid(N, half)
    t = tuple(np.tan(np.pi * xm / N) for xm in x)
    out = gamma_action(tau_hat, t, ref)
    out[:, nyquist_mask(N, half)] = 0.0
    return out


# -- full-integration FEM symbols ---------------------------------------------------


def fem_gauss_symbol(xi, N, b):
    """Symbol ``k_N^b`` of the trilinear gradient at the Gauss point with signs ``b``.

    ``[k]_m = N (w_m - 1) prod_{n != m} ((1 - g_n) + g_n w_n)`` with
    ``w_n = exp(2 pi i xi_n/N)`` and ``g_n = (1 + b_n/sqrt(3))/2``.
    """
    xi = np.asarray(xi, dtype=float)
    w = np.exp(2j * np.pi * xi / N)
    g = gauss_coordinate(np.asarray(b, dtype=float))
    interp = (1.0 - g) + g * w
    out = []
    for m in range(3):
        others = [n for n in range(3) if n != m]
        out.append(N * (w[..., m] - 1.0) * interp[..., others[0]] * interp[..., others[1]])
    return np.stack(out, axis=-1)


def _xi_stack(N, half):
    x1, x2, x3 = frequency_grid(N, half)
    shape = (N, N, x3.shape[-1])
    return np.stack(np.broadcast_arrays(x1, x2, x3), axis=-1).reshape(shape + (3,))


def fem_B(xi, N, ref):
    """``B_N = 2^-3 sum_b conj(k^b) . C_ref . k^b``, shape ``(..., 3, 3)`` Hermitian."""
    ref = _as_lame(ref)
    xi = np.asarray(xi, dtype=float)
    B = 0.0
    for b in GAUSS_SIGNS:
        k = fem_gauss_symbol(xi, N, b)
        kb = np.conj(k)
        kk = np.sum(np.abs(k) ** 2, axis=-1)[..., None, None]
        B = B + (ref.lam * kb[..., :, None] * k[..., None, :]
                 + ref.mu * kk * np.eye(3)
                 + ref.mu * k[..., :, None] * kb[..., None, :])
    return B / 8.0


def fem_zeta(tau_hat_b, xi, N):
    """``zeta_N = 2^-3 sum_b tau_hat^b . conj(k^b)``.

    ``tau_hat_b`` has shape ``(8, 6, ...)`` (Gauss points in :data:`GAUSS_SIGNS`
    order, tensorial Voigt components) and ``xi`` shape ``(..., 3)``.
    Returns shape ``(3, ...)``.
    """
    xi = np.asarray(xi, dtype=float)
    out = 0.0
    for ib, b in enumerate(GAUSS_SIGNS):
        kb = np.conj(fem_gauss_symbol(xi, N, b))
        tau = tau_hat_b[ib][VOIGT_INDEX]  # (3, 3, ...)
        out = out + np.einsum("mn...,...m->n...", tau, kb)
    return out / 8.0


def fem_B_inverse_grid(N, ref, half=True):
    """Per-frequency ``B_N^-1`` over the (half) grid, ``(..., 3, 3)``; zero at ``xi = 0``.

    Raises ``FloatingPointError`` naming the frequency if some ``B_N[xi]`` is
    numerically singular.
    """
    xi = _xi_stack(N, half)
    B = fem_B(xi, N, ref)
    B[0, 0, 0] = np.eye(3)
    w = np.linalg.eigvalsh(B)
    cond = w[..., -1] / np.maximum(w[..., 0], 1e-300)
    bad = (w[..., 0] <= 0) | (cond > _B_COND_MAX)
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0])
        raise FloatingPointError(
            f"B_N singular at xi={tuple(int(v) for v in xi[idx])} (N={N}); "
            "the Gauss-point symbols are inconsistent")
    Binv = np.linalg.inv(B)
    Binv[0, 0, 0] = 0.0
    return Binv


# -- precomputed tables -------------------------------------------------------------


def gamma_voigt(x, ref):
    """Voigt matrices ``G[i, j] = Gamma0[pair_i, pair_j]`` over a wave-vector grid, ``(6, 6, ...)``."""
    cols = []
    for j in range(6):
        e = np.zeros((6,) + (1,) * 3)
        e[j] = 1.0 / SHEAR_WEIGHTS[j]
        cols.append(gamma_action(e, x, ref))
    return np.stack(cols, axis=1)


class GreenOperatorTable:
    """Precomputed symbols on the spectral grid, trading ``O(N^3)`` memory for speed.

    ``kind`` is ``"basic"`` (full grid), ``"basic-real"`` / ``"willot"`` (half
    grid) or ``"fem"`` (half grid, stores ``B_N^-1``).
    """

    def __init__(self, kind, N, ref):
        self.kind, self.N, self.ref = kind, N, _as_lame(ref)
        if kind == "basic":
            self.data = gamma_voigt(frequency_grid(N), self.ref)
        elif kind == "basic-real":
            x = frequency_grid(N, half=True)
            self.data = 0.5 * (gamma_voigt(x, self.ref)
                               + gamma_voigt(nyquist_flip(x, N), self.ref))
        elif kind == "willot":
            x = frequency_grid(N, half=True)
            self.data = gamma_voigt(tuple(np.tan(np.pi * xm / N) for xm in x), self.ref)
            self.data[:, :, nyquist_mask(N, True)] = 0.0
        elif kind == "fem":
            self.data = fem_B_inverse_grid(N, self.ref)
        else:
            raise ValueError(f"unknown table kind {kind!r}")

    def apply(self, field_hat):
        if self.kind == "fem":
            return np.einsum("...ij,j...->i...", self.data, field_hat)
        return np.einsum("ij...,j...->i...", self.data, SHEAR_WEIGHTS[:, None, None, None] * field_hat)

    @property
    def nbytes(self):
        return self.data.nbytes


def nyquist_flip(x, N):
    """Wave vectors with every ``-N/2`` component replaced by ``+N/2``."""
    if N % 2:
        return x
    return tuple(np.where(xm == -N / 2, N / 2, xm) for xm in x)


def basic_real_action(tau_hat, N, ref):
    """Half-grid equivalent of applying ``Gamma0`` on ``F_N`` then keeping the real part.

    On unpaired Nyquist frequencies the real part averages the symbol over
    ``xi`` and its wrapped negative, which is ``Gamma0`` at ``xi`` with the
    ``-N/2`` components flipped.
    """
    x = frequency_grid(N, half=True)
    out = gamma_action(tau_hat, x, ref)
    if N % 2 == 0:
        mask = nyquist_mask(N, True)
        flipped = gamma_action(tau_hat, nyquist_flip(x, N), ref)
        out = np.where(mask, 0.5 * (out + flipped), out)
    return out


# -- debug dump ----------------------------------------------------------------------


def dump_spectral_csv(fhat, path):
    """Write ``xi1, xi2, xi3, re_0, im_0, ...`` rows for a component-first full-grid field."""
    fhat = np.asarray(fhat)
    if fhat.ndim == 3:
        fhat = fhat[None]
    N = fhat.shape[-1]
    k = axis_frequencies(N)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["xi1", "xi2", "xi3"]
        for c in range(fhat.shape[0]):
            head += [f"re_{c}", f"im_{c}"]
        w.writerow(head)
        for i, j, l in itertools.product(range(N), repeat=3):
            row = [k[i], k[j], k[l]]
            for c in range(fhat.shape[0]):
                v = fhat[c, i, j, l]
                row += [repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row)


__all__ = [
    "AXES", "GAUSS_SIGNS", "FrequencySet", "GreenOperatorTable", "apply_QN", "apply_RN",
    "axis_frequencies", "basic_real_action", "fem_B", "fem_B_inverse_grid",
    "fem_gauss_symbol", "fem_zeta", "fft_forward", "fft_inverse", "frequency_grid",
    "g_hat", "g_hat_grid", "gamma0_hat", "gamma_action", "gamma_voigt", "nyquist_mask",
    "rfft_forward", "rfft_inverse", "tilde_k", "willot_action", "willot_gamma_hat",
    "willot_k", "VOIGT_PAIRS",
]
