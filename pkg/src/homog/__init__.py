"""FFT-accelerated periodic homogenization of linear elastic voxel microstructures."""

from .microstructure import (
    Checkerboard,
    Laminate,
    Raw,
    Sphere,
    VoxelFormatError,
    VoxelGrid,
    load_voxels,
    rasterize,
    save_voxels,
)
from .schemes import (
    EffectiveTensor,
    SchemeConfig,
    SolveResult,
    UnsupportedSchemeError,
    effective_tensor,
    run_basic,
    run_fem,
    run_scheme,
    run_willot,
)
from .tensors import LameParams, StiffnessTensor, isotropic_stiffness, void_stiffness

__version__ = "0.1.0"

__all__ = [
    "Checkerboard", "EffectiveTensor", "LameParams", "Laminate", "Raw", "SchemeConfig",
    "SolveResult", "Sphere", "StiffnessTensor", "UnsupportedSchemeError", "VoxelFormatError",
    "VoxelGrid", "effective_tensor", "isotropic_stiffness", "load_voxels", "rasterize",
    "run_basic", "run_fem", "run_scheme", "run_willot", "save_voxels", "void_stiffness",
]
