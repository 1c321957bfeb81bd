"""Macbeath DAG - approximate polytope membership, ray shooting and nearest neighbors."""

from .ann import AnnIndex, build_ann, build_cell_structure, load_points, nn_query, save_points
from .canonical import AffineMap, CanonicalBody, canonicalize
from .config import AnnConfig, BenchConfig, HierarchyConfig
from .exceptions import (
    ConstructionError,
    DegenerateInputError,
    InputError,
    InvariantViolation,
    MacbeathError,
    PreconditionError,
    VerificationError,
)
from .geom_core import Ellipsoid, Halfspace, HPolytope, Ray, load_polytope, save_polytope
from .hierarchy import LayeredDag, build
from .index import PolytopeIndex
from .logging_config import get_logger, setup_logging
from .query import Membership, classify, membership, ray_shoot

__version__ = "0.1.0"
__author__ = "Macbeath DAG"

__all__ = [
    "AffineMap",
    "AnnConfig",
    "AnnIndex",
    "BenchConfig",
    "CanonicalBody",
    "ConstructionError",
    "DegenerateInputError",
    "Ellipsoid",
    "HPolytope",
    "Halfspace",
    "HierarchyConfig",
    "InputError",
    "InvariantViolation",
    "LayeredDag",
    "MacbeathError",
    "Membership",
    "PolytopeIndex",
    "PreconditionError",
    "Ray",
    "VerificationError",
    "build",
    "build_ann",
    "build_cell_structure",
    "canonicalize",
    "classify",
    "get_logger",
    "load_points",
    "load_polytope",
    "membership",
    "nn_query",
    "ray_shoot",
    "save_points",
    "save_polytope",
    "setup_logging",
]
