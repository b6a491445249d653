"""Finite elements for the integral fractional Laplacian on the unit disk."""
from .analytic import GetoorSolution, c_ds, getoor_eval, getoor_l2_quantities, nodal_interpolant
from .mesh import GradedFamilyConfig, TriMesh, build_aux_band, build_disk_mesh, validate_mesh
from .quadrature import KernelParams, QuadConfig, pair_interaction, tail_integral

__version__ = "0.1.0"
