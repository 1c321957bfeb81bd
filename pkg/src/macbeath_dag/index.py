"""Polytope index service: relative-ε ray shooting and membership in the input frame."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .canonical import CanonicalBody, canonicalize, map_point, unmap_point
from .config import HierarchyConfig
from .exceptions import InputError, MacbeathError
from .geom_core import Halfspace, HPolytope
from .hierarchy import LayeredDag, build
from .logging_config import get_logger
from .query import Membership, RayShootAnswer, classify, ray_shoot
from .utils import read_json, write_json

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class IndexAnswer:
    """Ray-shooting answer mapped back to the input frame."""

    point: np.ndarray
    witness: Halfspace
    witness_index: int
    path_length: int
    fanout_checked: int

    @property
    def residual(self) -> float:
        return abs(self.witness.value(self.point))


class PolytopeIndex:
    """Approximate membership structure over an arbitrary bounded polytope.

    ``eps`` is relative to the diameter of the input polytope. Queries and
    answers live in the input frame; rays start at the point that the
    canonical map sends to the origin.
    """

    def __init__(self, source: HPolytope, canonical: CanonicalBody, dag: LayeredDag, eps: float):
        self.source = source
        self.canonical = canonical
        self.dag = dag
        self.eps = eps
        self.logger = get_logger(__name__)

    @classmethod
    def build(
        cls, polytope: HPolytope, eps: float, config: Optional[HierarchyConfig] = None
    ) -> "PolytopeIndex":
        """Canonicalize, convert ε to the canonical frame and build the DAG."""
        if not 0 < eps <= 1:
            raise InputError(f"eps must lie in (0, 1], got {eps}")
        logger = get_logger(__name__)
        try:
            canonical = canonicalize(polytope)
            eps_canonical = min(eps / canonical.scale_bound, 1.0)
            logger.info(f"Relative eps {eps} is {eps_canonical:.4g} in the canonical frame")
            dag = build(canonical, eps_canonical, config)
        except MacbeathError as e:
            logger.error(f"Failed to build index: {e}")
            raise
        return cls(polytope, canonical, dag, eps)

    @property
    def center(self) -> np.ndarray:
        """Point of the input frame that rays emanate from."""
        return unmap_point(self.canonical.map, np.zeros(self.canonical.dim))

    def _answer(self, answer: RayShootAnswer) -> IndexAnswer:
        return IndexAnswer(
            point=unmap_point(self.canonical.map, answer.point),
            witness=self.canonical.map.unmap_halfspace(answer.witness),
            witness_index=answer.witness_index,
            path_length=answer.path_length,
            fanout_checked=answer.fanout_checked,
        )

    def ray_shoot(self, q: Any) -> IndexAnswer:
        """Shoot the ray from ``center`` through q."""
        q_canonical = map_point(self.canonical.map, np.asarray(q, dtype=float))
        return self._answer(ray_shoot(self.dag, self.canonical, q_canonical))

    def ray_shoot_direction(self, direction: Any) -> IndexAnswer:
        """Shoot the ray from ``center`` along ``direction``."""
        return self.ray_shoot(self.center + np.asarray(direction, dtype=float))

    def membership(self, q: Any) -> Membership:
        return self.classify(q)[0]

    def classify(self, q: Any) -> tuple[Membership, Optional[IndexAnswer]]:
        """Membership of q with the descent answer behind it (None when q is the center)."""
        q_canonical = map_point(self.canonical.map, np.asarray(q, dtype=float))
        result, answer = classify(self.dag, self.canonical, q_canonical)
        return result, (self._answer(answer) if answer is not None else None)

    def stats(self) -> dict[str, Any]:
        return {
            "dim": self.canonical.dim,
            "eps": self.eps,
            "eps_canonical": self.dag.params.eps,
            **self.dag.stats(),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "eps": float(self.eps),
            "source": self.source.to_dict(),
            "canonical": self.canonical.to_dict(),
            "dag": self.dag.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolytopeIndex":
        try:
            return cls(
                source=HPolytope.from_dict(data["source"]),
                canonical=CanonicalBody.from_dict(data["canonical"]),
                dag=LayeredDag.from_dict(data["dag"]),
                eps=float(data["eps"]),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed index document: {e}")

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolytopeIndex":
        data = read_json(path)
        if not isinstance(data, dict):
            raise InputError(f"Index file {path} must contain a JSON object")
        return cls.from_dict(data)
