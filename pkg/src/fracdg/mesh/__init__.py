"""Polygonal meshes, generators and the staggered simplicial submesh."""

from .generate import (
    generate_uniform,
    generate_voronoi,
    map_anisotropic,
    perturb_small_edges,
    split_unfitted,
    tag_neumann,
)
from .polygonal import AlignmentError, MeshError, PolygonalMesh
from .quality import MeshQuality, quality
from .staggered import EdgeClass, StaggeredMesh, build_staggered

__all__ = [
    "AlignmentError",
    "EdgeClass",
    "MeshError",
    "MeshQuality",
    "PolygonalMesh",
    "StaggeredMesh",
    "build_staggered",
    "generate_uniform",
    "generate_voronoi",
    "map_anisotropic",
    "perturb_small_edges",
    "quality",
    "split_unfitted",
    "tag_neumann",
]
