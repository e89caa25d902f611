"""Polytopal meshes: storage, file format, geometry, regularity and sub-tessellation."""

from .core import TOL_PLANAR, MeshError, MeshParseError, MeshValidationError, PolytopalMesh, validate_mesh
from .families import FAMILIES, FamilyError, FamilySpec, generate_family
from .geometry import (
    ElementGeometry,
    FaceGeometry,
    PolygonGeometry,
    PolyhedronGeometry,
    geometry,
    polygon_from_points,
)
from .io import format_mesh, load_mesh, parse_mesh, save_mesh
from .regularity import RegularityMetrics, element_gamma, regularity_report
from .submesh import SimplexSubmesh, StarShapeError, refine, submesh_for, subtessellate

__all__ = [
    "TOL_PLANAR",
    "MeshError",
    "MeshParseError",
    "MeshValidationError",
    "PolytopalMesh",
    "validate_mesh",
    "FAMILIES",
    "FamilyError",
    "FamilySpec",
    "generate_family",
    "ElementGeometry",
    "FaceGeometry",
    "PolygonGeometry",
    "PolyhedronGeometry",
    "geometry",
    "polygon_from_points",
    "format_mesh",
    "load_mesh",
    "parse_mesh",
    "save_mesh",
    "RegularityMetrics",
    "element_gamma",
    "regularity_report",
    "SimplexSubmesh",
    "StarShapeError",
    "refine",
    "submesh_for",
    "subtessellate",
]
