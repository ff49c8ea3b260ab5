"""Torsion solver and rigidity/stability diagnostics on cone-intersected planar domains."""

from .geometry import (
    GeometryError,
    GeometryReport,
    PolarDomain,
    SectorCone,
    corner_conormal_sum,
    curvature,
    geometry_report,
    measures,
    normal_span_dim,
    reference_radius,
    relative_sphere_radii,
)

__version__ = "0.1.0"

__all__ = [
    "GeometryError",
    "GeometryReport",
    "PolarDomain",
    "SectorCone",
    "corner_conormal_sum",
    "curvature",
    "geometry_report",
    "measures",
    "normal_span_dim",
    "reference_radius",
    "relative_sphere_radii",
    "__version__",
]
