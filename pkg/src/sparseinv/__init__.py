"""Outer approximations of ROA, MPI and attractor sets for sparse polynomial systems."""

from .decompose import (GluedSet, SolveOptions, decouple, error_bound, glue,
                        intersect_with_sparse_improvement, membership)
from .graph import build_graph, condense, leafs, minimal_factorization, omega, past
from .poly import Polynomial, PolyVector, lie_derivative, parse_polynomial
from .sos import (OuterApprox, SparseImprovementSet, build_ga_program, build_mpi_program,
                  build_roa_program, build_sparse_roa_program, extract_certificate,
                  lebesgue_moments)
from .sysmodel import Partition, SemialgebraicBlock, Subsystem, SystemDef, project_subsystem

__version__ = "0.1.0"

__all__ = [
    "GluedSet", "OuterApprox", "Partition", "PolyVector", "Polynomial", "SemialgebraicBlock",
    "SolveOptions", "SparseImprovementSet", "Subsystem", "SystemDef", "build_ga_program",
    "build_graph", "build_mpi_program", "build_roa_program", "build_sparse_roa_program",
    "condense", "decouple", "error_bound", "extract_certificate", "glue",
    "intersect_with_sparse_improvement", "lebesgue_moments", "leafs", "lie_derivative",
    "membership", "minimal_factorization", "omega", "parse_polynomial", "past",
    "project_subsystem",
]
