"""Discontinuous Galerkin solvers for 2D Riemann-Liouville fractional elliptic problems."""
from __future__ import annotations

from .assembly import (Discretization, FluxScheme, GlobalSystem, PenaltyConfig, apply_bilinear,
                       assemble_gradient_op, assemble_lifting, assemble_system)
from .basis import ElementMap, ReferenceBasis, build_reference_basis, evaluate_field, project
from .fracint import (BrokenField, FracCoupling, FracParams, assemble_frac_coupling,
                      forcing_example1, rl_integral_point, rl_power_rule)
from .mesh import Mesh, MeshError, generate_structured, generate_unstructured, load_mesh
from .quadrature import QuadRule, gauss_jacobi, gauss_legendre
from .solver import Factorization, condition_number, solve_dense
from .verify import ConvergenceReport, ManufacturedCase, energy_error, eoc, l2_error

__version__ = "0.1.0"

__all__ = [
    "BrokenField", "ConvergenceReport", "Discretization", "ElementMap", "Factorization",
    "FluxScheme", "FracCoupling", "FracParams", "GlobalSystem", "ManufacturedCase", "Mesh",
    "MeshError", "PenaltyConfig", "QuadRule", "ReferenceBasis", "apply_bilinear",
    "assemble_frac_coupling", "assemble_gradient_op", "assemble_lifting", "assemble_system",
    "build_reference_basis", "condition_number", "energy_error", "eoc", "evaluate_field",
    "forcing_example1", "gauss_jacobi", "gauss_legendre", "generate_structured",
    "generate_unstructured", "l2_error", "load_mesh", "project", "rl_integral_point",
    "rl_power_rule", "solve_dense",
]
