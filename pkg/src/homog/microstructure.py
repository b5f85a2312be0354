"""Voxel microstructures: geometry, rasterization and the ``.vox`` file format.

Voxel ``I = (I1, I2, I3)`` covers the cell ``prod_m (I_m/N, (I_m+1)/N)`` of the
unit cube and has centre ``(I + 1/2)/N``.  Material ids are stored in an
``(N, N, N)`` uint16 array in C order (I3 fastest).  Voxels cut by an
interface take the material of the subdomain containing their centre.

File format: one UTF-8 JSON header line ``{"N": ..., "porous": ..., "materials":
[...]}`` terminated by a newline, followed by ``N**3`` little-endian uint16
material ids in C order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensors import StiffnessTensor

logger = logging.getLogger(__name__)

# eigenvalues below this (relative to the largest) count as zero
_ZERO_EIG = 1e-12


class VoxelFormatError(ValueError):
    pass


# -- geometry ---------------------------------------------------------------


@dataclass(frozen=True)
class Laminate:
    """Layers normal to ``axis`` (0-based) with the given volume fractions."""

    axis: int = 0
    fractions: tuple = (0.5, 0.5)
    ids: tuple = (0, 1)

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("laminate axis must be 0, 1 or 2")
        if len(self.fractions) != len(self.ids) or len(self.ids) == 0:
            raise ValueError("need one material id per layer fraction")
        if any(f < 0 for f in self.fractions) or abs(sum(self.fractions) - 1.0) > 1e-12:
            raise ValueError("laminate fractions must be non-negative and sum to 1")

    def label(self, x):
        bounds = np.cumsum(self.fractions)[:-1]
        layer = np.searchsorted(bounds, x[self.axis], side="right")
        return np.asarray(self.ids)[layer]

    def volume_fractions(self):
        out = {}
        for i, f in zip(self.ids, self.fractions):
            out[i] = out.get(i, 0.0) + f
        return out


@dataclass(frozen=True)
class Sphere:
    """Ball of material ``inclusion_id`` in a matrix of ``matrix_id`` (periodic distance)."""

    radius: float = 0.25
    center: tuple = (0.5, 0.5, 0.5)
    inclusion_id: int = 1
    matrix_id: int = 0

    def __post_init__(self):
        if not 0.0 < self.radius <= 0.5:
            raise ValueError("sphere radius must lie in (0, 1/2]")

    def label(self, x):
        r2 = 0.0
        for m in range(3):
            d = x[m] - self.center[m]
            d = d - np.round(d)
            r2 = r2 + d * d
        return np.where(r2 <= self.radius ** 2, self.inclusion_id, self.matrix_id)

    def volume_fractions(self):
        f = 4.0 * np.pi * self.radius ** 3 / 3.0
        return {self.matrix_id: 1.0 - f, self.inclusion_id: f}


@dataclass(frozen=True)
class Checkerboard:
    """3-D checkerboard with ``period`` cells per unit length along each axis."""

    period: int = 2
    ids: tuple = (0, 1)

    def __post_init__(self):
        if self.period < 1 or len(self.ids) != 2:
            raise ValueError("checkerboard needs period >= 1 and two ids")

    def label(self, x):
        parity = sum(np.floor(x[m] * self.period).astype(int) for m in range(3)) % 2
        return np.asarray(self.ids)[parity]

    def volume_fractions(self):
        if self.period % 2:
            raise ValueError("odd periods do not tile the unit cell evenly")
        return {self.ids[0]: 0.5, self.ids[1]: 0.5}


@dataclass(frozen=True, eq=False)
class Raw:
    """An explicit ``(N, N, N)`` id array; only rasterizable at its own resolution."""

    ids: np.ndarray


def voxel_centers(N):
    c = (np.arange(N) + 0.5) / N
    return np.meshgrid(c, c, c, indexing="ij", sparse=True)


def rasterize_ids(geometry, N):
    if N < 2:
        raise ValueError("resolution N must be at least 2")
    if isinstance(geometry, Raw):
        ids = np.asarray(geometry.ids)
        if ids.shape != (N, N, N):
            raise ValueError(f"raw geometry has shape {ids.shape}, not {(N, N, N)}")
        return ids.astype(np.uint16)
    x = voxel_centers(N)
    return np.broadcast_to(geometry.label(x), (N, N, N)).astype(np.uint16)


# -- voxel grid -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Image-like stiffness field: material ids on ``N^3`` voxels plus a material table."""

    material_ids: np.ndarray
    materials: tuple
    porous: bool = False

    def __post_init__(self):
        ids = np.ascontiguousarray(self.material_ids, dtype=np.uint16)
        if ids.ndim != 3 or len(set(ids.shape)) != 1:
            raise ValueError(f"material ids must form an N^3 cube, got shape {ids.shape}")
        mats = tuple(self.materials)
        if not mats:
            raise ValueError("material table is empty")
        if ids.size and int(ids.max()) >= len(mats):
            raise ValueError(
                f"material id {int(ids.max())} out of range for {len(mats)} materials")
        for i, m in enumerate(mats):
            lo, hi = m.eigen_range()
            if lo <= _ZERO_EIG * max(hi, 1.0):
                if lo < -_ZERO_EIG * max(hi, 1.0):
                    raise ValueError(f"material {i} is not positive semi-definite")
                if not self.porous:
                    raise ValueError(
                        f"material {i} has zero stiffness; flag the grid as porous")
        ids.setflags(write=False)
        object.__setattr__(self, "material_ids", ids)
        object.__setattr__(self, "materials", mats)

    @property
    def N(self):
        return self.material_ids.shape[0]

    def phase_fractions(self):
        counts = np.bincount(self.material_ids.ravel(), minlength=len(self.materials))
        return counts / self.material_ids.size

    def mean_stiffness(self):
        """Voxel average of the stiffness (Voigt average)."""
        f = self.phase_fractions()
        return StiffnessTensor(sum(fi * m.voigt for fi, m in zip(f, self.materials)))

    def is_homogeneous(self):
        used = np.unique(self.material_ids)
        first = self.materials[used[0]].voigt
        return all(np.array_equal(self.materials[u].voigt, first) for u in used)

    def equals(self, other):
        return (self.porous == other.porous
                and np.array_equal(self.material_ids, other.material_ids)
                and len(self.materials) == len(other.materials)
                and all(np.array_equal(a.voigt, b.voigt)
                        for a, b in zip(self.materials, other.materials)))


def rasterize(geometry, N, materials: Sequence[StiffnessTensor], porous=False):
    """Sample ``geometry`` at voxel centres on an ``N^3`` grid."""
    if not materials:
        raise ValueError("material table is empty")
    return VoxelGrid(rasterize_ids(geometry, N), tuple(materials), porous=porous)


def coefficient_contrast(grid):
    """``(lower, upper)``: extreme Voigt-matrix eigenvalues over the material table."""
    ranges = [m.eigen_range() for m in grid.materials]
    lo = min(r[0] for r in ranges)
    hi = max(r[1] for r in ranges)
    if abs(lo) <= _ZERO_EIG * max(hi, 1.0):
        lo = 0.0
    return lo, hi


# -- file I/O ---------------------------------------------------------------


def save_voxels(grid, path):
    header = {
        "N": grid.N,
        "porous": bool(grid.porous),
        "materials": [m.to_json(i) for i, m in enumerate(grid.materials)],
    }
    payload = grid.material_ids.astype("<u2").tobytes(order="C")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode("utf-8") + b"\n")
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write voxel file {path}: {exc}") from exc


def load_voxels(path):
    path = Path(path)
    data = path.read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise VoxelFormatError(f"{path}: missing header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
        N = int(header["N"])
        porous = bool(header.get("porous", False))
        entries = header["materials"]
    except (ValueError, KeyError, TypeError) as exc:
        raise VoxelFormatError(f"{path}: bad header: {exc}") from exc
    payload = data[nl + 1:]
    if N < 1 or len(payload) != 2 * N ** 3:
        raise VoxelFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {2 * N ** 3} for N={N}")
    entries = sorted(entries, key=lambda e: int(e["id"]))
    if [int(e["id"]) for e in entries] != list(range(len(entries))):
        raise VoxelFormatError(f"{path}: material ids must be 0..M without gaps")
    try:
        materials = tuple(StiffnessTensor.from_json(e) for e in entries)
    except (ValueError, KeyError) as exc:
        raise VoxelFormatError(f"{path}: {exc}") from exc
    ids = np.frombuffer(payload, dtype="<u2").reshape(N, N, N)
    try:
        return VoxelGrid(ids.astype(np.uint16), materials, porous=porous)
    except ValueError as exc:
        raise VoxelFormatError(f"{path}: {exc}") from exc
