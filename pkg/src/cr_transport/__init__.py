"""Bound-preserving explicit Crouzeix-Raviart schemes for linear transport."""
from .assembly import VelocityField, assemble_system
from .benchmarks import case_library, convergence_study, dmp_audit, get_case
from .cr_space import CRFunction, cr_interpolate, error_norms, mass_vector
from .mesh import TriMesh, build_uniform_mesh, read_mesh, refine_half, write_mesh
from .reconstruction import global_bound_check, reconstruct, wachspress
from .time_integration import SchemeConfig, run

__version__ = "0.1.0"

__all__ = [
    "VelocityField",
    "assemble_system",
    "case_library",
    "convergence_study",
    "dmp_audit",
    "get_case",
    "CRFunction",
    "cr_interpolate",
    "error_norms",
    "mass_vector",
    "TriMesh",
    "build_uniform_mesh",
    "read_mesh",
    "refine_half",
    "write_mesh",
    "global_bound_check",
    "reconstruct",
    "wachspress",
    "SchemeConfig",
    "run",
]
