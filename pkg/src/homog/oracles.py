"""Independent references: laminate closed form, Voigt/Reuss bounds, dense solvers.

The dense solvers assemble the discrete variational problems directly from
plane waves or trilinear shape functions and solve them with dense linear
algebra.  They deliberately do not import the spectral module, so agreement
with the FFT solvers is a real check.  They are meant for ``N <= 8``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .tensors import SHEAR_WEIGHTS, VOIGT_PAIRS, StiffnessTensor, unit_strain

logger = logging.getLogger(__name__)

_DENSE_MAX_N = 8
_SINGULAR_RTOL = 1e-12


# -- laminates ---------------------------------------------------------------------


def laminate_effective(phases, axis=0):
    """Exact effective tensor of a rank-1 laminate with layer normal ``e_axis``.

    ``phases`` is a list of ``(StiffnessTensor, volume fraction)``.  Each layer
    carries the uniform strain ``E + sym(a_l x n)``; traction continuity and
    ``sum f_l a_l = 0`` fix the jumps ``a_l``.
    """
    if not phases:
        raise ValueError("no phases given")
    fr = np.array([f for _, f in phases], dtype=float)
    if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-12:
        raise ValueError("volume fractions must be non-negative and sum to 1")
    for C, _ in phases:
        if not C.is_isotropic():
            raise ValueError("laminate closed form is implemented for isotropic phases only")
    full = [C.full() for C, _ in phases]
    acoustic = [C[axis, :, :, axis] for C in full]
    inv = [np.linalg.inv(A) for A in acoustic]
    cols = []
    for j in range(6):
        E = unit_strain(j)[_sym_index()]
        loads = [np.einsum("ijkl,kl->ij", C, E)[:, axis] for C in full]
        lhs = sum(f * Ai for f, Ai in zip(fr, inv))
        rhs = sum(f * Ai @ b for f, Ai, b in zip(fr, inv, loads))
        t = np.linalg.solve(lhs, rhs)
        sigma = np.zeros((3, 3))
        for f, C, Ai, b in zip(fr, full, inv, loads):
            a = Ai @ (t - b)
            jump = np.zeros((3, 3))
            jump[:, axis] += 0.5 * a
            jump[axis, :] += 0.5 * a
            sigma += f * np.einsum("ijkl,kl->ij", C, E + jump)
        cols.append(np.array([sigma[m, n] for m, n in VOIGT_PAIRS]) / SHEAR_WEIGHTS[j])
    V = np.stack(cols, axis=1)
    return StiffnessTensor(0.5 * (V + V.T))


def _sym_index():
    idx = np.empty((3, 3), dtype=int)
    for i, (m, n) in enumerate(VOIGT_PAIRS):
        idx[m, n] = idx[n, m] = i
    return idx


def laminate_fe_1d(phases, axis=0, cells=10_000):
    """Laminate tensor from a 1-D periodic linear-element solve on ``cells`` cells.

    Layers are assigned to cells by their midpoints, so fractions that are
    multiples of ``1/cells`` are resolved exactly.
    """
    bounds = np.cumsum([f for _, f in phases])[:-1]
    mid = (np.arange(cells) + 0.5) / cells
    layer = np.searchsorted(bounds, mid, side="right")
    full = [C.full() for C, _ in phases]
    h = 1.0 / cells
    n_dof = 3 * cells
    cols = []
    for j in range(6):
        E = unit_strain(j)[_sym_index()]
        rows, cs, vals = [], [], []
        f = np.zeros(n_dof)
        for c in range(cells):
            C = full[layer[c]]
            A = C[axis, :, :, axis]
            b = np.einsum("ijkl,kl->ij", C, E)[:, axis]
            nodes = (c, (c + 1) % cells)
            # gradient along axis: (u[c+1] - u[c]) / h
            for s_a, na in zip((-1.0, 1.0), nodes):
                for s_b, nb in zip((-1.0, 1.0), nodes):
                    for p in range(3):
                        for q in range(3):
                            rows.append(3 * na + p)
                            cs.append(3 * nb + q)
                            vals.append(s_a * s_b * A[p, q] / h)
                for p in range(3):
                    f[3 * na + p] -= s_a * b[p]
        K = scipy.sparse.csr_matrix((vals, (rows, cs)), shape=(n_dof, n_dof))
        K = K[3:, 3:]  # pin node 0
        u = np.zeros(n_dof)
        u[3:] = scipy.sparse.linalg.spsolve(K.tocsc(), f[3:])
        sigma = np.zeros((3, 3))
        for c in range(cells):
            C = full[layer[c]]
            g = (u[3 * ((c + 1) % cells):3 * ((c + 1) % cells) + 3] - u[3 * c:3 * c + 3]) / h
            eps = E.copy()
            eps[:, axis] += 0.5 * g
            eps[axis, :] += 0.5 * g
            sigma += np.einsum("ijkl,kl->ij", C, eps) * h
        cols.append(np.array([sigma[m, n] for m, n in VOIGT_PAIRS]) / SHEAR_WEIGHTS[j])
    V = np.stack(cols, axis=1)
    return StiffnessTensor(0.5 * (V + V.T))


# -- bounds ----------------------------------------------------------------------------


def voigt_reuss_bounds(grid):
    """``(<C_N>, <C_N^-1>^-1)``; the Reuss bound is ``None`` for porous grids."""
    f = grid.phase_fractions()
    voigt = StiffnessTensor(sum(fi * m.voigt for fi, m in zip(f, grid.materials)))
    s = np.sqrt(SHEAR_WEIGHTS)
    compliance = 0.0
    for fi, m in zip(f, grid.materials):
        if fi == 0:
            continue
        M = m.mandel()
        w = np.linalg.eigvalsh(M)
        if w[0] <= _SINGULAR_RTOL * max(w[-1], 1.0):
            logger.info("Reuss bound undefined: a phase has a singular stiffness")
            return voigt, None
        compliance = compliance + fi * np.linalg.inv(M)
    M = np.linalg.inv(compliance)
    return voigt, StiffnessTensor(M / np.outer(s, s))


# -- dense Galerkin systems --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DenseSystem:
    """Hermitian system ``matrix @ x = rhs`` plus the map from ``x`` to a field.

    ``basis`` maps unknowns to the output field (flattened component-first);
    ``offset`` is added afterwards (the macroscopic strain for strain
    formulations).  For ``"fem"`` the unknowns are nodal displacements ordered
    ``(component, I1, I2, I3)`` in C order; otherwise they are Fourier
    coefficients ordered ``(frequency, component)`` over ``frequencies``.
    """

    kind: str
    N: int
    matrix: np.ndarray
    rhs: np.ndarray
    basis: np.ndarray
    offset: np.ndarray
    frequencies: np.ndarray = None

    def field(self, x):
        shape = (3 if self.kind == "fem" else 6,) + (self.N,) * 3
        return (self.basis @ x).reshape(shape) + self.offset

    def solve(self):
        return _solve_checked(self.matrix, self.rhs, self.kind)


def _check_small(grid):
    if grid.N > _DENSE_MAX_N:
        raise ValueError(f"dense solvers are limited to N <= {_DENSE_MAX_N}, got {grid.N}")


def _solve_checked(A, b, what):
    w = scipy.linalg.eigvalsh(A)
    if w[0] <= _SINGULAR_RTOL * max(abs(w[-1]), 1e-300):
        raise np.linalg.LinAlgError(
            f"{what} system is singular beyond its known null space "
            f"(eigenvalue range {w[0]:.3e} .. {w[-1]:.3e})")
    return scipy.linalg.solve(A, b, assume_a="her")


def _voxel_energy_blocks(grid):
    """Per-voxel matrices ``diag(w) V diag(w)`` so that ``eps^H M eps = eps : C : eps``."""
    V = np.stack([m.voigt for m in grid.materials])[grid.material_ids.ravel()]
    return SHEAR_WEIGHTS[None, :, None] * V * SHEAR_WEIGHTS[None, None, :]


def _strain_galerkin(grid, E, grad_cols, freqs, kind):
    """Assemble ``<eps(v)^H : C : (eps(u) + E)> = 0`` from per-frequency gradient fields.

    ``grad_cols[k]`` is the ``(3, N^3)`` complex array of the voxel values of
    ``d/dx_m`` applied to the ``k``-th scalar basis function.
    """
    N = grid.N
    nv = N ** 3
    n_unk = 3 * len(grad_cols)
    D = np.zeros((6, nv, n_unk), dtype=complex)
    for k, g in enumerate(grad_cols):
        for comp in range(3):
            col = 3 * k + comp
            for i, (m, n) in enumerate(VOIGT_PAIRS):
                val = 0.0
                if n == comp:
                    val = val + 0.5 * g[m]
                if m == comp:
                    val = val + 0.5 * g[n]
                D[i, :, col] = val
    M = _voxel_energy_blocks(grid)  # (nv, 6, 6)
    MD = np.einsum("vij,jvk->ivk", M, D)
    A = np.einsum("ivk,ivl->kl", D.conj(), MD) / nv
    ME = np.einsum("vij,j->iv", M, np.asarray(E, dtype=float))
    b = -np.einsum("ivk,iv->k", D.conj(), ME) / nv
    offset = np.broadcast_to(np.asarray(E, dtype=float)[:, None, None, None], (6, N, N, N))
    return DenseSystem(kind, N, 0.5 * (A + A.conj().T), b, D.reshape(6 * nv, n_unk),
                       np.array(offset), np.array(freqs))


def _frequencies(N, reduced):
    lo = -(N // 2) + (1 if reduced and N % 2 == 0 else 0)
    ks = range(lo, (N + 1) // 2)
    return [xi for xi in itertools.product(ks, repeat=3) if any(xi)]


def _phase(N, xi):
    I = np.indices((N, N, N)).reshape(3, -1)
    return np.exp(2j * np.pi * (np.asarray(xi) @ I) / N)


def _cell_average_gradient(N, xi):
    """Exact voxel averages of ``grad exp(2 pi i xi.x)`` from its antiderivative."""
    ph = _phase(N, xi)
    factors = []
    for m in range(3):
        a = 2j * np.pi * xi[m] / N
        # N * integral over one cell of exp(2 pi i xi_m x) relative to its left end
        factors.append(1.0 if xi[m] == 0 else (np.exp(a) - 1.0) / a)
    out = []
    for m in range(3):
        d = N * (np.exp(2j * np.pi * xi[m] / N) - 1.0)
        for n in range(3):
            if n != m:
                d = d * factors[n]
        out.append(d * ph)
    return np.array(out)


def assemble_ms(grid, E):
    """Averaged-gradient Galerkin system over trigonometric polynomials ``S_N``."""
    _check_small(grid)
    freqs = _frequencies(grid.N, reduced=False)
    cols = [_cell_average_gradient(grid.N, xi) for xi in freqs]
    return _strain_galerkin(grid, E, cols, freqs, "ms")


def dense_solve_ms(grid, E):
    """Strain ``E + <grad^s u_N>_voxel`` of the averaged-gradient Galerkin problem."""
    system = assemble_ms(grid, E)
    return system.field(system.solve())


def _corner_gradient_weights(g):
    """``dN_c/dx_m / N`` of the 8 trilinear shape functions at local point ``g``."""
    out = {}
    for c in itertools.product((0, 1), repeat=3):
        w = []
        for m in range(3):
            v = 1.0 if c[m] else -1.0
            for n in range(3):
                if n != m:
                    v *= g[n] if c[n] else 1.0 - g[n]
            w.append(v)
        out[c] = np.array(w)
    return out


def _nodal_gradient(values, g):
    """Gradient of the trilinear interpolant of nodal ``values`` at local point ``g`` of every voxel."""
    N = values.shape[0]
    grad = np.zeros((3,) + values.shape, dtype=values.dtype)
    for c, w in _corner_gradient_weights(g).items():
        shifted = np.roll(values, shift=tuple(-ci for ci in c), axis=(0, 1, 2))
        for m in range(3):
            grad[m] += N * w[m] * shifted
    return grad


def assemble_willot(grid, E):
    """Reduced-integration Galerkin system on ``V_N-`` (nodal plane waves without Nyquist)."""
    _check_small(grid)
    N = grid.N
    freqs = _frequencies(N, reduced=True)
    cols = []
    for xi in freqs:
        nodal = _phase(N, xi).reshape(N, N, N)
        cols.append(_nodal_gradient(nodal, (0.5, 0.5, 0.5)).reshape(3, -1))
    return _strain_galerkin(grid, E, cols, freqs, "willot")


def dense_solve_willot(grid, E):
    """Strain ``E + grad^s u_N(x_I)`` of the reduced-integration problem on ``V_N-``."""
    system = assemble_willot(grid, E)
    return system.field(system.solve())


def _gauss_b_matrices(N):
    """Strain-displacement matrices ``(8, 6, 24)`` at the 2x2x2 Gauss points of one voxel.

    Element dofs are ordered ``(corner, component)`` with corners in
    ``itertools.product((0, 1), repeat=3)`` order.
    """
    gp = [(1 - 1 / np.sqrt(3)) / 2, (1 + 1 / np.sqrt(3)) / 2]
    corners = list(itertools.product((0, 1), repeat=3))
    mats = []
    for g in itertools.product(gp, repeat=3):
        w = _corner_gradient_weights(g)
        Bm = np.zeros((6, 24))
        for a, c in enumerate(corners):
            dn = N * w[c]
            for comp in range(3):
                col = 3 * a + comp
                for i, (m, n) in enumerate(VOIGT_PAIRS):
                    if n == comp:
                        Bm[i, col] += 0.5 * dn[m]
                    if m == comp:
                        Bm[i, col] += 0.5 * dn[n]
        mats.append(Bm)
    return np.array(mats)


def assemble_fem(grid, E):
    """Full-integration trilinear system on nodal displacements, mean fixed by multipliers.

    The returned matrix is the bordered (KKT) matrix of size ``3 N^3 + 3``.
    """
    _check_small(grid)
    N = grid.N
    nv = N ** 3
    Bs = _gauss_b_matrices(N)
    corners = list(itertools.product((0, 1), repeat=3))
    blocks = _voxel_energy_blocks(grid)
    E = np.asarray(E, dtype=float)
    K = np.zeros((3 * nv, 3 * nv))
    f = np.zeros(3 * nv)
    for v, I in enumerate(itertools.product(range(N), repeat=3)):
        dofs = []
        for c in corners:
            node = np.ravel_multi_index(tuple((I[k] + c[k]) % N for k in range(3)), (N,) * 3)
            dofs.extend(comp * nv + node for comp in range(3))
        M = blocks[v]
        Ke = sum(B.T @ M @ B for B in Bs) / (8.0 * nv)
        fe = -sum(B.T @ (M @ E) for B in Bs) / (8.0 * nv)
        idx = np.array(dofs)
        K[np.ix_(idx, idx)] += Ke
        np.add.at(f, idx, fe)
    C = np.zeros((3, 3 * nv))
    for comp in range(3):
        C[comp, comp * nv:(comp + 1) * nv] = 1.0 / nv
    scale = np.abs(K).max() or 1.0
    A = np.block([[K, scale * C.T], [scale * C, np.zeros((3, 3))]])
    rhs = np.concatenate([f, np.zeros(3)])
    basis = np.hstack([np.eye(3 * nv), np.zeros((3 * nv, 3))])
    return DenseSystem("fem", N, A, rhs, basis, np.zeros((3, N, N, N)))


def _fem_null_check(system):
    """Reject grids whose stiffness has zero modes other than rigid translations."""
    n = system.matrix.shape[0] - 3
    K = system.matrix[:n, :n]
    nv = n // 3
    P = np.zeros((n, n))
    for comp in range(3):
        sl = slice(comp * nv, (comp + 1) * nv)
        P[sl, sl] = 1.0 / nv
    w = scipy.linalg.eigvalsh(K + (np.abs(K).max() or 1.0) * P)
    if w[0] <= _SINGULAR_RTOL * w[-1]:
        raise np.linalg.LinAlgError(
            f"fem stiffness is singular beyond translations (eigenvalue {w[0]:.3e})")


def dense_solve_fem(grid, E):
    """Zero-mean nodal displacement ``(3, N, N, N)`` of the full-integration problem."""
    system = assemble_fem(grid, E)
    _fem_null_check(system)
    x = scipy.linalg.solve(system.matrix, system.rhs, assume_a="sym")
    return system.field(x)


def fem_energy(grid, u, E):
    """``<(grad^s u + E) : C_N : (grad^s u + E)>`` with 2x2x2 Gauss quadrature."""
    N = grid.N
    gp = [(1 - 1 / np.sqrt(3)) / 2, (1 + 1 / np.sqrt(3)) / 2]
    blocks = _voxel_energy_blocks(grid)
    total = 0.0
    for g in itertools.product(gp, repeat=3):
        grads = np.stack([_nodal_gradient(u[n], g) for n in range(3)], axis=1)  # [m, n]
        eps = np.stack([0.5 * (grads[m, n] + grads[n, m]) for m, n in VOIGT_PAIRS])
        eps = eps.reshape(6, -1) + np.asarray(E, dtype=float)[:, None]
        total += np.einsum("iv,vij,jv->", eps, blocks, eps)
    return total / (8.0 * N ** 3)
