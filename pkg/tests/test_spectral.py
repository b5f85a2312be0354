import itertools

import numpy as np
import pytest

from homog import spectral as sp
from homog import _trilinear as tri
from homog.schemes import _LocalStiffness, _gauss_force
from homog.microstructure import VoxelGrid
from homog.tensors import (
    VOIGT_PAIRS,
    LameParams,
    ddot4,
    isotropic_stiffness,
    sym_to_voigt,
    voigt_to_sym,
)

REF = LameParams(0.7, 1.3)


def sym_outer(k, a):
    """Tensorial Voigt vector of ``sym(k x a)``."""
    return np.array([0.5 * (k[m] * a[n] + k[n] * a[m]) for m, n in VOIGT_PAIRS])


def contract(G, F):
    """``G : F`` for a (..., 3,3,3,3) symbol and a Voigt vector."""
    return sym_to_voigt(np.einsum("mnpq,pq->mn", G, voigt_to_sym(F)), check=False)


# -- frequency sets and transforms ---------------------------------------------------


@pytest.mark.parametrize("N", [4, 5, 8])
def test_frequency_sets(N):
    full, red = sp.FrequencySet(N), sp.FrequencySet(N, reduced=True)
    F, R = {tuple(x) for x in full.members()}, {tuple(x) for x in red.members()}
    assert len(F) == len(full) == N ** 3
    assert R <= F and len(R) == len(red)
    rest = F - R
    assert all(any(c == -N / 2 for c in xi) for xi in rest)
    assert all(-N / 2 <= c < N / 2 for xi in F for c in xi)
    assert (N % 2 == 1) == (not rest)


def test_axis_frequency_layout():
    assert sp.axis_frequencies(8).tolist() == [0, 1, 2, 3, -4, -3, -2, -1]
    assert sp.half_axis_frequencies(8).tolist() == [0, 1, 2, 3, -4]


def test_fft_constant_and_mode():
    N = 8
    c = np.full((N, N, N), 2.5)
    ch = sp.fft_forward(c)
    assert ch[0, 0, 0] == pytest.approx(2.5) and np.abs(ch).sum() == pytest.approx(2.5)
    xi0 = (1, -3, -4)
    I = np.indices((N, N, N))
    f = np.exp(2j * np.pi * np.tensordot(xi0, I, 1) / N)
    fh = sp.fft_forward(f)
    idx = tuple(x % N for x in xi0)
    assert fh[idx] == pytest.approx(1.0)
    fh[idx] = 0
    assert np.abs(fh).max() < 1e-13


def test_fft_against_direct_dft(rng):
    N = 4
    f = rng.standard_normal((N, N, N))
    fh = sp.fft_forward(f)
    k = sp.axis_frequencies(N)
    I = np.array(list(itertools.product(range(N), repeat=3)))
    for a, b, c in itertools.product(range(N), repeat=3):
        xi = np.array([k[a], k[b], k[c]])
        direct = np.sum(f.ravel() * np.exp(-2j * np.pi * I @ xi / N)) / N ** 3
        assert abs(direct - fh[a, b, c]) < 1e-14
    assert np.abs(sp.fft_inverse(fh) - f).max() < 1e-13 * np.abs(f).max()
    # conjugate symmetry of a real field
    for a, b, c in itertools.product(range(N), repeat=3):
        assert abs(fh[a, b, c] - np.conj(fh[-a % N, -b % N, -c % N])) < 1e-14
    assert np.allclose(sp.rfft_inverse(sp.rfft_forward(f), N), f, atol=1e-14)


def test_fft_rejects_bad_shape():
    with pytest.raises(ValueError):
        sp.fft_forward(np.zeros((4, 4, 5)))


# -- G_N, Q_N, R_N ---------------------------------------------------------------------


def test_g_hat_examples():
    assert sp.g_hat((0, 0, 0), 8) == 1.0
    assert sp.g_hat((-4, 0, 0), 8) == pytest.approx(2 / np.pi, rel=1e-15)
    assert sp.g_hat((-4, -4, -4), 8) == pytest.approx((2 / np.pi) ** 3, rel=1e-14)


@pytest.mark.parametrize("N", [4, 8, 16, 32])
def test_g_hat_bounds(N):
    g = sp.g_hat_grid(N)
    assert g.min() >= (2 / np.pi) ** 3 * (1 - 1e-14) and g.max() <= 1.0


def cell_averages_of_polynomial(coef, N):
    """Exact voxel averages of ``sum coef[xi] exp(2 pi i xi.x)`` (coef in FFT layout)."""
    k = sp.axis_frequencies(N).astype(float)
    fac = []
    for m in range(3):
        shape = [1, 1, 1]
        shape[m] = N
        a = 2j * np.pi * k / N
        safe = np.where(k == 0, 1.0, a)
        fac.append(np.where(k == 0, 1.0, (np.exp(a) - 1) / safe).reshape(shape))
    return sp.fft_inverse(coef * fac[0] * fac[1] * fac[2])


def test_QN_reproduces_polynomials(rng):
    N = 8
    for _ in range(20):
        coef = rng.standard_normal((N,) * 3) + 1j * rng.standard_normal((N,) * 3)
        back = sp.apply_QN(cell_averages_of_polynomial(coef, N))
        assert np.abs(back - coef).max() <= 1e-12 * np.abs(coef).max()


def test_QN_constant():
    out = sp.apply_QN(np.full((4, 4, 4), 3.0))
    assert out[0, 0, 0] == pytest.approx(3.0) and np.abs(out).sum() == pytest.approx(3.0)


def test_QN_norm_bound(rng):
    N = 8
    for _ in range(100):
        f = rng.standard_normal((N,) * 3)
        # Parseval: ||Q f||^2 = sum |coef|^2, ||f||^2 = mean f^2
        q = np.sqrt(np.sum(np.abs(sp.apply_QN(f)) ** 2))
        assert q <= (np.pi / 2) ** 3 * np.sqrt(np.mean(f ** 2))


def test_RN_scaling_and_contraction(rng):
    N = 8
    f = rng.standard_normal((N,) * 3) + 1j * rng.standard_normal((N,) * 3)
    r = sp.apply_RN(f)
    assert r[0, 0, 0] == f[0, 0, 0]
    assert r[4, 0, 0] == pytest.approx(f[4, 0, 0] * (2 / np.pi) ** 2)
    assert np.linalg.norm(r) <= np.linalg.norm(f)


# -- continuous Green operator -------------------------------------------------------------


def test_gamma0_examples():
    ref = LameParams(0.0, 0.5)
    G = sp.gamma0_hat(np.array([1.0, 0, 0]), ref)
    C = isotropic_stiffness(ref)
    k, a = np.array([1.0, 0, 0]), np.array([1.0, 2.0, 3.0])
    F = sym_outer(k, a)
    assert np.allclose(contract(G, ddot4(C, F)), F, atol=1e-15)
    lam, mu = REF.lam, REF.mu
    G1 = sp.gamma0_hat(np.array([1.0, 0, 0]), REF)
    assert G1[0, 0, 0, 0] == pytest.approx(1 / mu - (lam + mu) / (mu * (lam + 2 * mu)))
    xi = np.array([1.0, -2.0, 3.0])
    assert np.allclose(sp.gamma0_hat(2 * xi, REF), sp.gamma0_hat(xi, REF), atol=1e-15)


def test_gamma0_symmetries_and_zero():
    G = sp.gamma0_hat(np.array([1.0, 2.0, -1.0]), REF)
    assert np.allclose(G, G.transpose(1, 0, 2, 3)) and np.allclose(G, G.transpose(0, 1, 3, 2))
    assert np.allclose(G, G.transpose(2, 3, 0, 1))
    with pytest.raises(ValueError):
        sp.gamma0_hat(np.zeros(3), REF)


def test_gamma_action_matches_tensor(rng):
    xi = rng.standard_normal((5, 3))
    tau = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    got = sp.gamma_action(tau, tuple(xi.T), REF)
    G = sp.gamma0_hat(xi, REF)
    for j in range(5):
        assert np.allclose(got[:, j], contract(G[j], tau[:, j]), atol=1e-13)


def test_green_table_matches_action(rng):
    N = 4
    tau = rng.standard_normal((6, N, N, N)) + 1j * rng.standard_normal((6, N, N, N))
    table = sp.GreenOperatorTable("basic", N, REF)
    assert np.allclose(table.apply(tau), sp.gamma_action(tau, sp.frequency_grid(N), REF))
    th = sp.rfft_forward(tau.real)
    for kind, fn in (("willot", sp.willot_action), ("basic-real", sp.basic_real_action)):
        t = sp.GreenOperatorTable(kind, N, REF)
        assert np.allclose(t.apply(th), fn(th, N, REF), atol=1e-14)
    assert table.nbytes == 36 * N ** 3 * 8


# -- Willot ------------------------------------------------------------------------------


def test_willot_k_basics():
    assert np.all(sp.willot_k(np.zeros(3), 8) == 0)
    errs = [np.abs(sp.willot_k(np.array([1.0, 0, 0]), N) - 2j * np.pi * np.eye(3)[0]).max()
            for N in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    with pytest.raises(ValueError):
        sp.willot_k(np.array([-4.0, 0, 0]), 8)


def test_willot_k_modulus_identity():
    N = 8
    for xi in sp.FrequencySet(N, reduced=True).members():
        k = sp.willot_k(xi, N)
        lhs = np.sum(np.abs(k) ** 2)
        rhs = np.prod(np.cos(np.pi * xi / N) ** 2) * np.sum(np.abs(2 * N * np.tan(np.pi * xi / N)) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("N", [4, 8, 16, 32])
def test_tilde_k_lower_bound(N):
    xi = sp.FrequencySet(N, reduced=True).members()
    tk = sp.tilde_k(xi, N)
    assert np.all(np.linalg.norm(tk, axis=-1) >= 2 * np.pi * np.linalg.norm(xi, axis=-1) * (1 - 1e-14))
    assert tk[..., 1].imag.tolist() == (2 * N * np.tan(np.pi * xi[:, 1] / N)).tolist()


def test_tilde_k_limit():
    xi = np.array([1.0, -2.0, 3.0])
    assert np.abs(sp.tilde_k(xi, 4096) - 2j * np.pi * xi).max() < 1e-3


def test_willot_gamma_symmetry_and_limit():
    xi = np.array([1.0, 2.0, -1.0])
    G = sp.willot_gamma_hat(xi, 8, REF)
    assert np.allclose(G, G.transpose(1, 0, 2, 3)) and np.allclose(G, G.transpose(0, 1, 3, 2))
    gaps = [np.abs(sp.willot_gamma_hat(xi, N, REF) - sp.gamma0_hat(xi, REF)).max()
            for N in (8, 16, 32, 64, 128)]
    assert all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 1e-3


def test_willot_symbol_is_gamma0_of_tangent():
    N = 8
    xi = sp.FrequencySet(N, reduced=True).members()
    xi = xi[np.any(xi != 0, axis=1)]
    G = sp.willot_gamma_hat(xi, N, REF)
    assert np.abs(G.imag).max() < 1e-13
    assert np.allclose(G.real, sp.gamma0_hat(np.tan(np.pi * xi / N), REF), atol=1e-13)


def test_willot_action_zeroes_nyquist(rng):
    N = 8
    th = sp.rfft_forward(rng.standard_normal((6, N, N, N)))
    out = sp.willot_action(th, N, REF)
    assert np.all(out[:, sp.nyquist_mask(N, True)] == 0)


def test_symbols_preserve_real_fields(rng):
    N = 8
    tau = rng.standard_normal((6, N, N, N))
    th = sp.fft_forward(tau)
    x = sp.frequency_grid(N)
    t = tuple(np.tan(np.pi * xm / N) for xm in x)
    w = sp.gamma_action(th, t, REF)
    w[:, sp.nyquist_mask(N)] = 0
    back = sp.fft_inverse(w)
    assert np.abs(back.imag).max() <= 1e-12 * np.abs(back.real).max()
    # the continuous symbol keeps fields real on paired frequencies only
    g = sp.gamma_action(th, x, REF)
    g[:, sp.nyquist_mask(N)] = 0
    back = sp.fft_inverse(g)
    assert np.abs(back.imag).max() <= 1e-12 * np.abs(back.real).max()


# -- FEM symbols ----------------------------------------------------------------------------


def trilinear_gauss_gradient(values, signs):
    """Gradient at Gauss point ``signs`` of each voxel by explicit shape functions."""
    N = values.shape[0]
    g = [(1 + s / np.sqrt(3)) / 2 for s in signs]
    grad = np.zeros((3,) + values.shape, dtype=values.dtype)
    for c in itertools.product((0, 1), repeat=3):
        shifted = np.roll(values, tuple(-ci for ci in c), axis=(0, 1, 2))
        for m in range(3):
            w = N * (1.0 if c[m] else -1.0)
            for n in range(3):
                if n != m:
                    w *= g[n] if c[n] else 1 - g[n]
            grad[m] += w * shifted
    return grad


def test_fem_symbol_plane_waves():
    N = 4
    I = np.indices((N, N, N))
    for xi in sp.FrequencySet(N).members():
        wave = np.exp(2j * np.pi * np.tensordot(xi, I, 1) / N)
        for b in sp.GAUSS_SIGNS:
            k = sp.fem_gauss_symbol(xi, N, b)
            got = trilinear_gauss_gradient(wave, b)
            assert np.abs(got - k[:, None, None, None] * wave).max() < 1e-12


def test_fem_symbol_zero_and_limit():
    for b in sp.GAUSS_SIGNS:
        assert np.all(sp.fem_gauss_symbol(np.zeros(3), 8, b) == 0)
    xi = np.array([1.0, -1.0, 2.0])
    errs = [np.abs(np.mean([sp.fem_gauss_symbol(xi, N, b) for b in sp.GAUSS_SIGNS], axis=0)
                   - 2j * np.pi * xi).max() for N in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_fem_B_hermitian_positive(rng):
    N = 8
    xi = sp.FrequencySet(N).members()
    xi = xi[np.any(xi != 0, axis=1)]
    B = sp.fem_B(xi, N, LameParams(1.0, 1.0))
    assert np.abs(B - np.conj(np.swapaxes(B, -1, -2))).max() <= 1e-12 * np.abs(B).max()
    assert np.linalg.eigvalsh(B).min() > 0


def test_fem_B_inverse_grid_zero_mode():
    binv = sp.fem_B_inverse_grid(4, REF)
    assert np.all(binv[0, 0, 0] == 0)
    xi = np.array([1.0, 2.0, -2.0])
    B = sp.fem_B(xi, 4, REF)
    assert np.allclose(binv[1, 2, 2] @ B, np.eye(3), atol=1e-13)


def test_fem_manufactured_mode(rng):
    """Reference stress generated by a single mode ``a`` is mapped back to ``a``."""
    N = 4
    C = isotropic_stiffness(REF)
    for xi in ([1, 0, 0], [1, -2, 1], [-2, -2, -2]):
        xi = np.array(xi, dtype=float)
        a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        taus = np.array([ddot4(C, sym_outer(sp.fem_gauss_symbol(xi, N, b), a))
                         for b in sp.GAUSS_SIGNS])
        zeta = sp.fem_zeta(taus, xi, N)
        assert np.allclose(np.linalg.solve(sp.fem_B(xi, N, REF), zeta), a, atol=1e-12)


def test_stencil_force_matches_fem_zeta(rng):
    N = 4
    u = rng.standard_normal((3, N, N, N))
    mats = [isotropic_stiffness((1.0, 1.0)), isotropic_stiffness((3.0, 5.0))]
    grid = VoxelGrid(rng.integers(0, 2, (N, N, N)), mats)
    stiff = _LocalStiffness(grid, REF)
    E = np.array([1.0, 0.2, 0, 0.1, 0, 0.3])
    taus = [stiff.apply(tri.strain_at(u, [sp.gauss_coordinate(s) for s in b])
                        + E[:, None, None, None], True) for b in sp.GAUSS_SIGNS]
    zeta = sp.fem_zeta(sp.fft_forward(np.array(taus)), sp._xi_stack(N, False), N)
    force = _gauss_force(u, E, stiff, delta=True)
    assert np.abs(zeta - sp.fft_forward(force)).max() < 1e-13


def test_dump_csv(tmp_path, rng):
    N = 2
    fh = sp.fft_forward(rng.standard_normal((2, N, N, N)))
    path = tmp_path / "f.csv"
    sp.dump_spectral_csv(fh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "xi1,xi2,xi3,re_0,im_0,re_1,im_1"
    assert len(lines) == 1 + N ** 3
    first = lines[1].split(",")
    assert first[:3] == ["0", "0", "0"] and float(first[3]) == fh[0, 0, 0, 0].real

