"""Environment primitives, pair distances, GJK and the BVH."""
from .bvh import Bvh, build_bvh
from .distance import (
    OverlapError,
    PairDistance,
    gjk_distance,
    hull_env_distance,
    primitive_distance,
    swept_hull_safe,
)
from .environment import POINT_CLOUD, TRIANGLE_MESH, Environment

__all__ = [
    "Bvh",
    "Environment",
    "OverlapError",
    "POINT_CLOUD",
    "PairDistance",
    "TRIANGLE_MESH",
    "build_bvh",
    "gjk_distance",
    "hull_env_distance",
    "primitive_distance",
    "swept_hull_safe",
]
