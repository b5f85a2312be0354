"""Small symmetric tensor algebra in three dimensions.

Symmetric matrices are stored as 6-vectors in the order (11, 22, 33, 23, 13, 12)
holding the *tensorial* components, i.e. no engineering factor of 2 on the
shear entries.  Fourth-order stiffness tensors are stored as the symmetric 6x6
Voigt matrix ``V[i, j] = C[pair_i, pair_j]``.  The factor 2 for the shear
entries only appears inside the contractions (:func:`ddot2`, :func:`ddot4`),
through :data:`SHEAR_WEIGHTS`.

Fields use the same convention with the component axis first, e.g. a strain
field on an ``N^3`` grid has shape ``(6, N, N, N)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
SHEAR_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
_MANDEL = np.sqrt(SHEAR_WEIGHTS)

# (m, n) -> Voigt slot
VOIGT_INDEX = np.empty((3, 3), dtype=int)
for _i, (_m, _n) in enumerate(VOIGT_PAIRS):
    VOIGT_INDEX[_m, _n] = VOIGT_INDEX[_n, _m] = _i

UNIT_STRAIN_LABELS = ("e11", "e22", "e33", "e23", "e13", "e12")


def voigt_to_sym(v):
    """``(..., 6)`` tensorial Voigt vector to ``(..., 3, 3)`` symmetric matrix."""
    v = np.asarray(v)
    return v[..., VOIGT_INDEX]


def sym_to_voigt(F, check=True):
    """``(..., 3, 3)`` matrix to its ``(..., 6)`` tensorial Voigt vector.

    With ``check`` a non-symmetric input raises ``ValueError``.
    """
    F = np.asarray(F)
    if F.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing shape (3, 3), got {F.shape}")
    if check and not np.allclose(F, np.swapaxes(F, -1, -2), rtol=1e-12, atol=1e-14):
        raise ValueError("matrix is not symmetric")
    return np.stack([F[..., m, n] for m, n in VOIGT_PAIRS], axis=-1)


def unit_strain(j):
    """The j-th tensorial unit strain (1 in Voigt slot ``j``)."""
    e = np.zeros(6)
    e[j] = 1.0
    return e


def ddot2(a, b):
    """``A : B`` for 6-vectors on the last axis (bilinear, no conjugation)."""
    return np.sum(SHEAR_WEIGHTS * np.asarray(a) * np.asarray(b), axis=-1)


@dataclass(frozen=True)
class LameParams:
    """Isotropic Lame coefficients ``(lam, mu)`` with ``mu > 0`` and ``lam + 2 mu > 0``."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.mu)):
            raise ValueError("Lame coefficients must be finite")
        if self.mu <= 0.0:
            raise ValueError(f"shear modulus must be positive, got mu={self.mu}")
        if self.lam + 2.0 * self.mu <= 0.0:
            raise ValueError("lam + 2 mu must be positive")

    @property
    def strictly_coercive(self):
        return 3.0 * self.lam + 2.0 * self.mu > 0.0


@dataclass(frozen=True, eq=False)
class StiffnessTensor:
    """Fourth-order tensor with minor and major symmetries.

    ``voigt`` is the 6x6 Voigt matrix in the tensorial convention described in
    the module docstring.  ``lame`` is set for tensors built from Lame
    coefficients and is only used for compact serialization.
    """

    voigt: np.ndarray
    lame: Optional[tuple] = field(default=None)

    def __post_init__(self):
        V = np.array(self.voigt, dtype=float)
        if V.shape != (6, 6):
            raise ValueError(f"Voigt matrix must be 6x6, got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("stiffness entries must be finite")
        scale = max(np.abs(V).max(), 1.0)
        if np.abs(V - V.T).max() > 1e-12 * scale:
            raise ValueError("Voigt matrix is not symmetric (major symmetry violated)")
        V = 0.5 * (V + V.T)
        V.setflags(write=False)
        object.__setattr__(self, "voigt", V)

    @classmethod
    def from_full(cls, C):
        """Build from a ``(3, 3, 3, 3)`` array; the symmetries are checked."""
        C = np.asarray(C, dtype=float)
        if C.shape != (3, 3, 3, 3):
            raise ValueError(f"expected shape (3, 3, 3, 3), got {C.shape}")
        scale = max(np.abs(C).max(), 1.0)
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.abs(C - C.transpose(perm)).max() > 1e-12 * scale:
                raise ValueError("tensor lacks minor/major symmetry")
        V = np.empty((6, 6))
        for i, (m, n) in enumerate(VOIGT_PAIRS):
            for j, (p, q) in enumerate(VOIGT_PAIRS):
                V[i, j] = C[m, n, p, q]
        return cls(V)

    @classmethod
    def from_upper(cls, entries):
        """Build from the 21 upper-triangle Voigt entries in row-major order."""
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (21,):
            raise ValueError(f"expected 21 Voigt entries, got {entries.size}")
        V = np.zeros((6, 6))
        V[np.triu_indices(6)] = entries
        V = V + np.triu(V, 1).T
        return cls(V)

    def upper(self):
        return self.voigt[np.triu_indices(6)].copy()

    def full(self):
        """The ``(3, 3, 3, 3)`` component array."""
        return self.voigt[VOIGT_INDEX[:, :, None, None], VOIGT_INDEX[None, None, :, :]]

    def mandel(self):
        """Matrix of ``F -> C:F`` in an orthonormal basis of symmetric matrices."""
        return _MANDEL[:, None] * self.voigt * _MANDEL[None, :]

    def eigen_range(self):
        """Smallest and largest eigenvalue of ``C`` acting on symmetric matrices."""
        w = np.linalg.eigvalsh(self.mandel())
        return float(w[0]), float(w[-1])

    def is_isotropic(self, rtol=1e-12):
        lam = self.voigt[0, 1]
        mu = self.voigt[3, 3]
        iso = _isotropic_voigt(lam, mu)
        scale = max(np.abs(self.voigt).max(), 1e-300)
        return bool(np.abs(self.voigt - iso).max() <= rtol * scale)

    def lame_coefficients(self):
        """``(lam, mu)`` of an isotropic tensor; raises for anisotropic ones."""
        if not self.is_isotropic():
            raise ValueError("tensor is not isotropic")
        return float(self.voigt[0, 1]), float(self.voigt[3, 3])

    def __sub__(self, other):
        return StiffnessTensor(self.voigt - other.voigt)

    def __add__(self, other):
        return StiffnessTensor(self.voigt + other.voigt)

    def allclose(self, other, rtol=1e-12, atol=0.0):
        return bool(np.allclose(self.voigt, other.voigt, rtol=rtol, atol=atol))

    def to_json(self, material_id):
        if self.lame is not None:
            return {"id": material_id, "type": "isotropic",
                    "lambda": float(self.lame[0]), "mu": float(self.lame[1])}
        return {"id": material_id, "type": "anisotropic",
                "voigt": [float(x) for x in self.upper()]}

    @classmethod
    def from_json(cls, obj):
        kind = obj.get("type")
        if kind == "isotropic":
            lam, mu = float(obj["lambda"]), float(obj["mu"])
            if not (math.isfinite(lam) and math.isfinite(mu)):
                raise ValueError(f"non-finite moduli in material {obj.get('id')}")
            return cls(_isotropic_voigt(lam, mu), lame=(lam, mu))
        if kind == "anisotropic":
            return cls.from_upper(obj["voigt"])
        raise ValueError(f"unknown material type {kind!r}")


def _isotropic_voigt(lam, mu):
    V = np.zeros((6, 6))
    V[:3, :3] = lam
    V[np.arange(3), np.arange(3)] += 2.0 * mu
    V[np.arange(3, 6), np.arange(3, 6)] = mu
    return V


def isotropic_stiffness(p):
    """``[C]_mnpq = lam d_mn d_pq + mu (d_mp d_nq + d_mq d_np)`` for Lame parameters ``p``."""
    if not isinstance(p, LameParams):
        p = LameParams(*p)
    return StiffnessTensor(_isotropic_voigt(p.lam, p.mu), lame=(p.lam, p.mu))


def void_stiffness():
    """The zero tensor, used for pores."""
    return StiffnessTensor(np.zeros((6, 6)), lame=(0.0, 0.0))


def ddot4(C, F):
    """``C : F`` for a stiffness tensor and 6-vector(s) on the last axis."""
    V = C.voigt if isinstance(C, StiffnessTensor) else np.asarray(C)
    F = np.asarray(F)
    return np.einsum("ij,...j->...i", V, SHEAR_WEIGHTS * F)


def quadratic_form(C, F):
    """``F : C : F``."""
    return ddot2(F, ddot4(C, F))


def ddot4_naive(C4, F):
    """Reference 4-loop contraction on full ``(3,3,3,3)`` / ``(3,3)`` arrays."""
    out = np.zeros((3, 3), dtype=np.result_type(C4, F))
    for m, n, p, q in itertools.product(range(3), repeat=4):
        out[m, n] += C4[m, n, p, q] * F[p, q]
    return out
