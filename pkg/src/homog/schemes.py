"""Fixed-point solvers for the periodic cell problem and effective tensors.

Three discretizations share one Richardson-type loop around an isotropic
reference medium:

* ``basic``: the classical strain iteration.  Strain iterates are updated with the
  continuous Green operator on all frequencies of ``F_N``.
* ``willot``: the rotated finite-difference Green operator on ``F_N-``,
  with hard zeros on the unpaired Nyquist frequencies.
* ``fem``: trilinear voxel elements with 2x2x2 Gauss integration.  The nodal
  displacement is updated by the FFT-diagonal reference stiffness.

The convergence indicator is the update norm
``||new - old||_2 / (||E|| N^{3/2})`` (strain for basic/willot, ``N`` times the
displacement for fem), which is cheap and identical across schemes.  An
equilibrium residual of the final iterate is reported alongside.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
import scipy.fft

from . import _trilinear as tri
from .microstructure import VoxelGrid, coefficient_contrast
from .spectral import (
    GAUSS_SIGNS,
    GreenOperatorTable,
    basic_real_action,
    fem_B_inverse_grid,
    fft_forward,
    fft_inverse,
    frequency_grid,
    gamma_action,
    nyquist_mask,
    rfft_forward,
    rfft_inverse,
    willot_action,
)
from .tensors import (
    SHEAR_WEIGHTS,
    VOIGT_INDEX,
    VOIGT_PAIRS,
    LameParams,
    StiffnessTensor,
    unit_strain,
)

logger = logging.getLogger(__name__)

SCHEMES = ("basic", "willot", "fem")
_W = SHEAR_WEIGHTS[:, None, None, None]


class UnsupportedSchemeError(ValueError):
    """The scheme cannot be applied to this grid (e.g. a porous grid with basic/willot)."""


@dataclass(frozen=True)
class SchemeConfig:
    """Solver settings.

    ``nyquist`` only affects the basic scheme: ``"complex"`` applies the
    Green operator on every frequency of ``F_N`` with complex fields, as in
    the textbook algorithm; ``"real"`` keeps fields real, which replaces the
    symbol on the unpaired Nyquist frequencies by its conjugate-symmetric
    average.  ``precompute`` tabulates the Green symbol once per solve.
    """

    scheme: str = "fem"
    reference: Union[LameParams, str, tuple] = "auto"
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    strain: tuple = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    nyquist: str = "complex"
    precompute: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        E = np.asarray(self.strain, dtype=float)
        if E.shape != (6,) or not np.all(np.isfinite(E)):
            raise ValueError("macroscopic strain must be 6 finite Voigt components")
        object.__setattr__(self, "strain", tuple(float(e) for e in E))
        if self.nyquist not in ("complex", "real"):
            raise ValueError("nyquist must be 'complex' or 'real'")
        ref = self.reference
        if isinstance(ref, str):
            if ref != "auto":
                raise ValueError(f"reference must be 'auto' or Lame parameters, got {ref!r}")
        elif not isinstance(ref, LameParams):
            object.__setattr__(self, "reference", LameParams(*ref))


@dataclass(frozen=True, eq=False)
class SolveResult:
    scheme: str
    N: int
    strain: np.ndarray
    stress: np.ndarray
    residuals: tuple
    converged: bool
    reference: LameParams
    equilibrium_residual: float
    displacement: Optional[np.ndarray] = None
    imag_norm: float = 0.0
    seconds: float = 0.0

    def __post_init__(self):
        for name in ("strain", "stress", "displacement"):
            a = getattr(self, name)
            if a is not None:
                a.setflags(write=False)

    @property
    def iterations(self):
        return len(self.residuals)


@dataclass(frozen=True, eq=False)
class EffectiveTensor:
    tensor: StiffnessTensor
    scheme: str
    N: int
    asymmetry: float
    converged: bool
    iterations: tuple = ()
    seconds: float = 0.0
    results: tuple = field(default=(), repr=False)


# -- helpers -------------------------------------------------------------------


def resolve_reference(grid, reference):
    """Lame parameters of the reference medium.

    ``"auto"`` takes ``mu0 = lam0 = (lo + hi) / 4`` from the stiffness range.
    With a void phase (``lo = 0``) that choice sits exactly on the stability
    limit ``4 mu0 > hi`` of the displacement iteration, so ``hi / 3`` is used.
    """
    if isinstance(reference, LameParams):
        return reference
    if isinstance(reference, str):
        lo, hi = coefficient_contrast(grid)
        mu0 = 0.25 * (lo + hi) if lo > 0 else hi / 3.0
        return LameParams(mu0, mu0)
    return LameParams(*reference)


def _workers(cfg):
    env = os.environ.get("HOMOG_THREADS")
    if env:
        return max(1, int(env))
    return cfg.workers or os.cpu_count() or 1


def _strain_norm(a):
    return float(np.sqrt(np.sum(_W * np.abs(a) ** 2)))


class _LocalStiffness:
    """``C_N[I] : eps`` or ``(C_N[I] - C_ref) : eps`` on component-first fields."""

    def __init__(self, grid: VoxelGrid, ref: LameParams):
        ids = grid.material_ids
        self.ref = ref
        self.iso = all(m.is_isotropic() for m in grid.materials)
        if self.iso:
            lame = np.array([m.lame_coefficients() for m in grid.materials])
            self.lam = lame[ids, 0]
            self.mu = lame[ids, 1]
        else:
            self.table = np.stack([m.voigt for m in grid.materials])
            flat = ids.ravel()
            self.index = [np.flatnonzero(flat == k) for k in range(len(grid.materials))]

    def apply(self, eps, delta):
        if self.iso:
            lam, mu = self.lam, self.mu
            if delta:
                lam, mu = lam - self.ref.lam, mu - self.ref.mu
            tr = eps[0] + eps[1] + eps[2]
            out = np.empty_like(eps)
            for i in range(6):
                out[i] = 2.0 * mu * eps[i]
                if i < 3:
                    out[i] += lam * tr
            return out
        shape = eps.shape
        e = (_W * eps).reshape(6, -1)
        out = np.empty_like(e)
        ref = np.zeros((6, 6))
        if delta:
            ref[:3, :3] = self.ref.lam
            ref[np.arange(6), np.arange(6)] += np.r_[[2 * self.ref.mu] * 3, [self.ref.mu] * 3]
        for k, idx in enumerate(self.index):
            if idx.size:
                out[:, idx] = (self.table[k] - ref) @ e[:, idx]
        return out.reshape(shape)


def _check_grid(grid, scheme):
    if scheme in ("basic", "willot") and grid.porous:
        raise UnsupportedSchemeError(
            f"the {scheme} scheme needs strictly positive stiffness and is known to "
            "diverge on porous grids; use the fem scheme")


def _equilibrium_fourier(stress, vectors, mask=None):
    """Relative size of the non-equilibrated part of ``stress`` along the given wave vectors."""
    sh = fft_forward(stress)
    s = [sum(sh[VOIGT_INDEX[m, n]] * vectors[m] for m in range(3)) for n in range(3)]
    q = sum(v * v for v in vectors)
    q = np.where(q == 0, 1.0, q)
    r = sum(np.abs(sn) ** 2 for sn in s) / q
    r[0, 0, 0] = 0.0
    if mask is not None:
        r = np.where(mask, 0.0, r)
    scale = _strain_norm(sh[:, 0, 0, 0]) or 1.0
    return float(np.sqrt(np.sum(r)) / scale)


def _loop(step, state, cfg, norm_scale):
    residuals = []
    converged = False
    for it in range(int(cfg.max_iterations)):
        new, diff = step(state)
        ind = diff / norm_scale
        residuals.append(float(ind))
        state = new
        logger.debug("iteration %d: indicator %.3e", it + 1, ind)
        if ind <= cfg.tolerance:
            converged = True
            break
        if not np.isfinite(ind):
            logger.warning("iteration diverged at step %d; the reference medium is likely "
                           "too soft for these materials", it + 1)
            break
    if not converged:
        logger.warning("no convergence after %d iterations (indicator %.3e)",
                       len(residuals), residuals[-1])
    return state, tuple(residuals), converged


# -- strain-based schemes ---------------------------------------------------------


def _run_strain_scheme(grid, cfg, scheme):
    _check_grid(grid, scheme)
    ref = resolve_reference(grid, cfg.reference)
    if not ref.strictly_coercive:
        raise ValueError(f"reference {ref} is not strictly coercive")
    t0 = time.perf_counter()
    N = grid.N
    E = np.asarray(cfg.strain)
    stiff = _LocalStiffness(grid, ref)
    complex_mode = scheme == "basic" and cfg.nyquist == "complex"
    norm_scale = (_strain_norm(E) or 1.0) * N ** 1.5

    if scheme == "basic" and complex_mode:
        forward, inverse = fft_forward, fft_inverse
        table = GreenOperatorTable("basic", N, ref) if cfg.precompute else None
        x = frequency_grid(N)
        green = table.apply if table else (lambda t: gamma_action(t, x, ref))
    else:
        forward = rfft_forward
        inverse = lambda fh: rfft_inverse(fh, N)  # noqa: E731
        if scheme == "basic":
            table = GreenOperatorTable("basic-real", N, ref) if cfg.precompute else None
            green = table.apply if table else (lambda t: basic_real_action(t, N, ref))
        else:
            table = GreenOperatorTable("willot", N, ref) if cfg.precompute else None
            green = table.apply if table else (lambda t: willot_action(t, N, ref))

    def step(eps):
        eh = -green(forward(stiff.apply(eps, delta=True)))
        eh[:, 0, 0, 0] = E
        new = inverse(eh)
        return new, _strain_norm(new - eps)

    dtype = complex if complex_mode else float
    eps0 = np.empty((6, N, N, N), dtype=dtype)
    eps0[...] = E[:, None, None, None]
    with scipy.fft.set_workers(_workers(cfg)):
        eps, residuals, converged = _loop(step, eps0, cfg, norm_scale)
        sigma = stiff.apply(eps, delta=False)
        if scheme == "basic":
            eq = _equilibrium_fourier(sigma, frequency_grid(N))
        else:
            t = tuple(np.tan(np.pi * xm / N) for xm in frequency_grid(N))
            eq = _equilibrium_fourier(sigma, t, mask=nyquist_mask(N))
    mean = sigma.reshape(6, -1).mean(axis=1)
    imag = 0.0
    if complex_mode:
        imag = _strain_norm(eps.imag) / norm_scale
        logger.info("basic scheme: imaginary strain norm %.3e", imag)
    return SolveResult(
        scheme=scheme, N=N, strain=eps, stress=np.real(mean).copy(), residuals=residuals,
        converged=converged, reference=ref, equilibrium_residual=eq, imag_norm=imag,
        seconds=time.perf_counter() - t0)


def run_basic(grid, cfg):
    """Classical strain iteration ``eps <- E - Gamma0 * ((C - C_ref) : eps)``."""
    return _run_strain_scheme(grid, cfg, "basic")


def run_willot(grid, cfg):
    """Iteration with the rotated finite-difference Green operator, zero on ``F_N \\ F_N-``."""
    return _run_strain_scheme(grid, cfg, "willot")


# -- FEM scheme -------------------------------------------------------------------


def _row_slots(m):
    return [VOIGT_INDEX[m, n] for n in range(3)]


def _gauss_force(u, E, stiff, delta):
    """``2^-3 sum_b (D^b)^* [C' : (D^b u + E)]`` with ``C' = C - C_ref`` or ``C``."""
    N = u.shape[-1]
    grads = tri.gauss_gradients(u)
    acc = {}
    for signs in GAUSS_SIGNS:
        keys = [tri.gradient_key(m, signs) for m in range(3)]
        g = [grads[k] for k in keys]  # g[m][n] = d u_n / d x_m
        eps = np.stack([0.5 * (g[m][n] + g[n][m]) + E[i]
                        for i, (m, n) in enumerate(VOIGT_PAIRS)])
        tau = stiff.apply(eps, delta)
        for m, k in enumerate(keys):
            row = tau[_row_slots(m)]
            if k in acc:
                acc[k] += row
            else:
                acc[k] = row
    return tri.gauss_divergence(acc, N)


def run_fem(grid, cfg):
    """Displacement iteration ``u <- -A_ref^-1 sum_b (D^b)^* [(C - C_ref):(D^b u + E)] / 8``.

    ``A_ref`` is the reference stiffness, diagonalized by the DFT with 3x3
    blocks ``B_N[xi]``; the mean displacement is pinned to zero.
    """
    _check_grid(grid, "fem")
    ref = resolve_reference(grid, cfg.reference)
    t0 = time.perf_counter()
    N = grid.N
    E = np.asarray(cfg.strain)
    stiff = _LocalStiffness(grid, ref)
    norm_scale = (_strain_norm(E) or 1.0) * N ** 1.5
    binv = fem_B_inverse_grid(N, ref)

    def step(u):
        fh = rfft_forward(_gauss_force(u, E, stiff, delta=True))
        uh = -np.einsum("...ij,j...->i...", binv, fh)
        uh[:, 0, 0, 0] = 0.0
        new = rfft_inverse(uh, N)
        return new, N * float(np.linalg.norm(new - u))

    with scipy.fft.set_workers(_workers(cfg)):
        u, residuals, converged = _loop(step, np.zeros((3, N, N, N)), cfg, norm_scale)
    del binv
    eps = tri.center_strain(u) + E[:, None, None, None]
    sigma = stiff.apply(eps, delta=False)
    mean = sigma.reshape(6, -1).mean(axis=1)
    force = _gauss_force(u, E, stiff, delta=False)
    scale = (_strain_norm(mean) or 1.0) * N * N ** 1.5
    eq = float(np.linalg.norm(force)) / scale
    return SolveResult(
        scheme="fem", N=N, strain=eps, stress=mean, residuals=residuals, converged=converged,
        reference=ref, equilibrium_residual=eq, displacement=u,
        seconds=time.perf_counter() - t0)


_RUNNERS = {"basic": run_basic, "willot": run_willot, "fem": run_fem}


def run_scheme(grid, cfg):
    return _RUNNERS[cfg.scheme](grid, cfg)


def effective_tensor(grid, cfg):
    """Effective stiffness from the six unit-strain load cases, symmetrized.

    Column ``j`` is ``<sigma>/w_j`` for the tensorial unit strain ``e_j``
    (``w_j = 2`` for shear slots); ``asymmetry`` is the relative Frobenius
    norm of the skew part before symmetrization.
    """
    t0 = time.perf_counter()
    results = []
    cols = []
    for j in range(6):
        res = run_scheme(grid, replace(cfg, strain=tuple(unit_strain(j))))
        results.append(res)
        cols.append(res.stress / SHEAR_WEIGHTS[j])
    V = np.stack(cols, axis=1)
    norm = np.linalg.norm(V) or 1.0
    asym = float(np.linalg.norm(V - V.T) / norm)
    return EffectiveTensor(
        tensor=StiffnessTensor(0.5 * (V + V.T)), scheme=cfg.scheme, N=grid.N, asymmetry=asym,
        converged=all(r.converged for r in results),
        iterations=tuple(r.iterations for r in results),
        seconds=time.perf_counter() - t0, results=tuple(results))
