import numpy as np
import pytest

from homog.microstructure import Laminate, Sphere, VoxelGrid, rasterize
from homog.oracles import (
    assemble_fem,
    assemble_ms,
    assemble_willot,
    dense_solve_fem,
    dense_solve_ms,
    dense_solve_willot,
    fem_energy,
    laminate_effective,
    laminate_fe_1d,
    voigt_reuss_bounds,
)
from homog.tensors import (
    StiffnessTensor,
    ddot2,
    ddot4,
    isotropic_stiffness,
    void_stiffness,
)

A, B = isotropic_stiffness((1.0, 1.0)), isotropic_stiffness((4.0, 3.0))


def test_laminate_identical_phases():
    assert laminate_effective([(A, 0.3), (A, 0.7)]).allclose(A, rtol=1e-14)


def test_laminate_transverse_shear_harmonic():
    mu1, mu2 = 1.0, 3.0
    lam = laminate_effective([(A, 0.5), (B, 0.5)], axis=0)
    assert lam.voigt[5, 5] == pytest.approx(2 * mu1 * mu2 / (mu1 + mu2), rel=1e-14)
    assert lam.voigt[4, 4] == pytest.approx(2 * mu1 * mu2 / (mu1 + mu2), rel=1e-14)
    assert lam.voigt[3, 3] == pytest.approx(0.5 * (mu1 + mu2), rel=1e-14)


@pytest.mark.parametrize("axis, fractions", [(0, (0.5, 0.5)), (2, (0.3, 0.7))])
def test_laminate_matches_1d_fe(axis, fractions):
    phases = list(zip((A, B), fractions))
    exact = laminate_effective(phases, axis)
    fe = laminate_fe_1d(phases, axis, cells=10_000)
    assert np.abs(exact.voigt - fe.voigt).max() < 1e-9


def test_laminate_between_bounds(rng):
    lam = laminate_effective([(A, 0.5), (B, 0.5)])
    grid = rasterize(Laminate(), 4, [A, B])
    voigt, reuss = voigt_reuss_bounds(grid)
    for _ in range(20):
        E = rng.standard_normal(6)
        q = ddot2(E, ddot4(lam, E))
        assert ddot2(E, ddot4(reuss, E)) - 1e-12 <= q <= ddot2(E, ddot4(voigt, E)) + 1e-12
    # diagonal entries lie between harmonic and arithmetic phase means
    for i in range(6):
        a, b = A.voigt[i, i], B.voigt[i, i]
        assert 2 * a * b / (a + b) - 1e-12 <= lam.voigt[i, i] <= 0.5 * (a + b) + 1e-12


def test_laminate_rejects_anisotropic():
    ani = StiffnessTensor(np.diag([3.0, 4, 5, 1, 2, 1.5]))
    with pytest.raises(ValueError):
        laminate_effective([(A, 0.5), (ani, 0.5)])
    with pytest.raises(ValueError):
        laminate_effective([(A, 0.5), (B, 0.6)])


def test_bounds_examples():
    grid = VoxelGrid(np.zeros((2, 2, 2)), [A])
    v, r = voigt_reuss_bounds(grid)
    assert v.allclose(A) and r.allclose(A, rtol=1e-12)
    grid = rasterize(Laminate(), 4, [A, B])
    v, _ = voigt_reuss_bounds(grid)
    assert v.voigt[0, 0] == pytest.approx(0.5 * (A.voigt[0, 0] + B.voigt[0, 0]))
    porous = rasterize(Sphere(), 4, [A, void_stiffness()], porous=True)
    v, r = voigt_reuss_bounds(porous)
    assert r is None and v is not None


@pytest.mark.parametrize("solver", [dense_solve_ms, dense_solve_willot])
def test_homogeneous_zero_fluctuation(solver):
    grid = VoxelGrid(np.zeros((4, 4, 4)), [A])
    E = np.array([1.0, 0, 0, 0, 0.2, 0])
    assert np.allclose(solver(grid, E), E[:, None, None, None], atol=1e-13)


def test_homogeneous_fem_zero():
    grid = VoxelGrid(np.zeros((3, 3, 3)), [A])
    assert np.abs(dense_solve_fem(grid, np.ones(6))).max() < 1e-13


def test_dense_size_limit():
    grid = VoxelGrid(np.zeros((9, 9, 9)), [A])
    with pytest.raises(ValueError):
        dense_solve_ms(grid, np.ones(6))


@pytest.mark.parametrize("assemble", [assemble_ms, assemble_willot])
def test_strain_systems_variational_identity(assemble, random_grid4, rng):
    E = rng.standard_normal(6)
    system = assemble(random_grid4, E)
    assert np.allclose(system.matrix, system.matrix.conj().T, atol=1e-14)
    x = system.solve()
    residual = system.matrix @ x - system.rhs
    scale = np.abs(system.rhs).max()
    for _ in range(50):
        v = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
        assert abs(np.vdot(v, residual)) <= 1e-10 * scale * np.linalg.norm(v) * np.sqrt(x.size)


def test_fem_system_and_minimum(random_grid4, rng):
    E = rng.standard_normal(6)
    system = assemble_fem(random_grid4, E)
    n = system.matrix.shape[0] - 3
    K = system.matrix[:n, :n]
    assert np.allclose(K, K.T, atol=1e-14)
    u = dense_solve_fem(random_grid4, E)
    flat = u.ravel()
    residual = K @ flat - system.rhs[:n]
    for _ in range(50):
        v = rng.standard_normal(n)
        v -= v.reshape(3, -1).mean(axis=1).repeat(n // 3)
        assert abs(v @ residual) <= 1e-10 * np.linalg.norm(v) * np.abs(system.rhs).max() * 10
    e0 = fem_energy(random_grid4, u, E)
    for _ in range(200):
        d = rng.standard_normal(u.shape) * 1e-3
        assert fem_energy(random_grid4, u + d, E) >= e0 - 1e-14


def test_fem_dense_singular_beyond_translations():
    ids = np.ones((3, 3, 3), dtype=int)
    ids[0, 0, 0] = 0
    grid = VoxelGrid(ids, [A, void_stiffness()], porous=True)
    with pytest.raises(np.linalg.LinAlgError):
        dense_solve_fem(grid, np.ones(6))
