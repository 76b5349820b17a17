"""Minimal surfaces in 3D contact sub-Riemannian manifolds by the method of characteristics."""

__version__ = "0.1.0"

from .frame import ContactStructure, builtin_e2, builtin_heisenberg, get_structure, validate_structure
from .lift import integrate_characteristic, lifted_field, transport_xi
from .surface import GeneratingCurve, SurfaceMesh, solve_cauchy
from .presets import PRESETS, get_preset

__all__ = [
    "ContactStructure", "builtin_e2", "builtin_heisenberg", "get_structure", "validate_structure",
    "integrate_characteristic", "lifted_field", "transport_xi",
    "GeneratingCurve", "SurfaceMesh", "solve_cauchy", "PRESETS", "get_preset",
]
