"""Certified lower bounds for forms on the unit sphere.

Three nested hierarchies: DSOS (linear programs over diagonally dominant Gram
matrices), SDSOS (second-order cone programs over scaled diagonally dominant
Gram matrices) and SOS (semidefinite, or an eigenvalue for quadratics).
"""
from .cones import (Certificate, ConeKind, SddBlock, encode_dd, encode_psd, encode_sdd, is_dd,
                    is_psd, is_sdd, verify_certificate)
from .conic_ir import ConicProgram, ProgramBuilder, Solution, presolve, solve
from .gram import GramSystem, gram_system, reconstruct
from .hierarchy import (BoundResult, LevelSpec, Membership, build_level, count_constraints,
                        count_sequence, is_r_member, run_table, solve_level)
from .polynomial import (Polynomial, evaluate, monomial_basis, multiply, parse_polynomial,
                         sphere_power)

__version__ = "0.1.0"

__all__ = [
    "BoundResult", "Certificate", "ConeKind", "ConicProgram", "GramSystem", "LevelSpec",
    "Membership", "Polynomial", "ProgramBuilder", "SddBlock", "Solution",
    "build_level", "count_constraints", "count_sequence", "encode_dd", "encode_psd",
    "encode_sdd", "evaluate", "gram_system", "is_dd", "is_psd", "is_r_member", "is_sdd",
    "monomial_basis", "multiply", "parse_polynomial", "presolve", "reconstruct", "run_table",
    "solve", "solve_level", "sphere_power", "verify_certificate",
]
