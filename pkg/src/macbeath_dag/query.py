"""ε-approximate central ray shooting and membership by DAG descent."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np

from .canonical import CanonicalBody
from .exceptions import InputError, InvariantViolation, PreconditionError
from .geom_core import ABS_TOL, Halfspace, ellipsoids_hit
from .hierarchy import LayeredDag
from .utils import as_float_list


class Membership(Enum):
    """Answer of an approximate membership query."""

    INSIDE = "inside"
    OUTSIDE = "outside"


@dataclass(frozen=True, eq=False)
class RayShootAnswer:
    """Point p on the ray Oq lying on a supporting hyperplane of K within ε of K."""

    point: np.ndarray
    witness: Halfspace
    witness_index: int
    path_length: int
    fanout_checked: int
    leaf_index: int

    @property
    def residual(self) -> float:
        """Distance of the point from the witness hyperplane."""
        return abs(self.witness.value(self.point))

    def to_dict(self) -> dict[str, Any]:
        return {
            "point": as_float_list(self.point),
            "witness": self.witness.to_dict(),
            "witness_index": self.witness_index,
            "path_length": self.path_length,
            "fanout_checked": self.fanout_checked,
            "leaf_index": self.leaf_index,
        }


def ray_shoot(dag: LayeredDag, K: CanonicalBody, q: Any) -> RayShootAnswer:
    """Descend one node per level along the ray from O through q.

    At each level the lowest-id child whose ellipsoid meets the ray is taken.
    At the leaf the ray is intersected with the witness hyperplanes and the
    intersection closest to O is returned.

    Raises:
        PreconditionError: If q is the origin
        InvariantViolation: If no child ellipsoid meets the ray
    """
    q = np.asarray(q, dtype=float).ravel()
    if q.size != K.dim:
        raise InputError(f"Query has dimension {q.size}, expected {K.dim}")
    norm = float(np.linalg.norm(q))
    if norm <= ABS_TOL:
        raise PreconditionError("Ray direction is undefined for q = O")
    u = q / norm
    origin = np.zeros(K.dim)
    ray = u[None, :]

    candidates = dag.root_children
    fanout = 0
    node = None
    for level in range(len(dag.levels)):
        centers, shapes = dag.level_arrays(level)
        ids = np.asarray(candidates, dtype=int)
        hits = ellipsoids_hit(centers[ids], shapes[ids], origin, ray)[:, 0]
        fanout += len(ids)
        if not hits.any():
            raise InvariantViolation(
                f"No ellipsoid at level {level} meets the query ray",
                details={"level": level, "direction": as_float_list(u)},
            )
        node = dag.levels[level][int(ids[np.argmax(hits)])]
        candidates = node.children

    assert node is not None
    normals = np.array([h.normal for h in node.witnesses])
    offsets = np.array([h.offset for h in node.witnesses])
    denom = normals @ u
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > ABS_TOL, offsets / denom, np.inf)
    k = int(np.argmin(t))
    if not np.isfinite(t[k]):
        raise InvariantViolation(
            f"Query ray misses every witness of leaf {node.index}",
            details={"direction": as_float_list(u)},
        )
    return RayShootAnswer(
        point=t[k] * u,
        witness=node.witnesses[k],
        witness_index=node.witness_indices[k],
        path_length=len(dag.levels),
        fanout_checked=fanout,
        leaf_index=node.index,
    )


def classify(
    dag: LayeredDag, K: CanonicalBody, q: Any
) -> tuple[Membership, Optional[RayShootAnswer]]:
    """Membership of q together with the ray-shooting answer that decided it.

    The answer is None for q = O, which is always INSIDE.
    """
    q = np.asarray(q, dtype=float).ravel()
    if float(np.linalg.norm(q)) <= ABS_TOL:
        return Membership.INSIDE, None
    answer = ray_shoot(dag, K, q)
    inside = np.linalg.norm(q) <= np.linalg.norm(answer.point)
    return (Membership.INSIDE if inside else Membership.OUTSIDE), answer


def membership(dag: LayeredDag, K: CanonicalBody, q: Any) -> Membership:
    """INSIDE when q lies on the segment from O to the ray-shooting answer.

    Points of K always get INSIDE and points farther than ε from K always get
    OUTSIDE; points in between may get either.
    """
    return classify(dag, K, q)[0]
