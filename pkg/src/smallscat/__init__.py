"""Acoustic scattering by many small sound-soft obstacles and its effective medium."""
__version__ = "0.1.0"

from ._backend import NAME as KERNEL_BACKEND
from .capacitance import capacitance_sphere, refinement_table, solve_density
from .farfield import FarFieldTable, symmetric_grid
from .foldylax import assemble, check_invertibility, far_field, scattered_field, solve
from .geometry import (DensityField, Domain, ObstacleSet, partition_domain, place_obstacles,
                       validate_set)
from .medium import build_potential, born_series, ls_far_field, solve_ls
from .mesh import SurfaceMesh, cube_mesh, icosphere

__all__ = [
    "KERNEL_BACKEND", "DensityField", "Domain", "FarFieldTable", "ObstacleSet", "SurfaceMesh",
    "assemble", "born_series", "build_potential", "capacitance_sphere",
    "check_invertibility", "cube_mesh", "far_field", "icosphere", "ls_far_field",
    "partition_domain", "place_obstacles", "refinement_table", "scattered_field", "solve",
    "solve_density", "solve_ls", "symmetric_grid", "validate_set",
]
