"""Lagrangian contact structures, their Fefferman spaces, chains and null-chains."""

from . import expr, model
from .curves import (
    IntegratorConfig,
    Trajectory,
    chain,
    k_flow,
    kropina_geodesic_dim3,
    kropina_two_point,
    kropina_value,
    null_chain,
    project_to_paths,
)
from .expr import parse
from .fefferman import build_fefferman, build_fefferman_projective, build_patterson_walker
from .kernels import BACKEND
from .lc_core import LCStructure, classify_point_vector, example_structure, flat_structure, is_integrable
from .projective import ChristoffelField, christoffels_from_fij, fij_from_christoffels

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChristoffelField",
    "IntegratorConfig",
    "LCStructure",
    "Trajectory",
    "build_fefferman",
    "build_fefferman_projective",
    "build_patterson_walker",
    "chain",
    "christoffels_from_fij",
    "classify_point_vector",
    "example_structure",
    "expr",
    "fij_from_christoffels",
    "flat_structure",
    "is_integrable",
    "k_flow",
    "kropina_geodesic_dim3",
    "kropina_two_point",
    "kropina_value",
    "model",
    "null_chain",
    "parse",
    "project_to_paths",
]
