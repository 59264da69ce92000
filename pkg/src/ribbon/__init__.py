"""Normal-constrained diffeomorphic flows between nested surfaces and column thickness."""

__version__ = "0.1.0"

from .mesh import MeshError, TriMesh, face_areas, face_normals, vertex_normals
from .solver import SolverParams, Trajectory, solve
from .synth import SurfacePair, make_cap_pair, make_fold_pair, make_plate_pair
from .thickness import build_report, column_lengths, freesurfer_distance

__all__ = [
    "MeshError",
    "SolverParams",
    "SurfacePair",
    "Trajectory",
    "TriMesh",
    "build_report",
    "column_lengths",
    "face_areas",
    "face_normals",
    "freesurfer_distance",
    "make_cap_pair",
    "make_fold_pair",
    "make_plate_pair",
    "solve",
    "vertex_normals",
]
