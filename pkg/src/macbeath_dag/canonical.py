"""Affine normalization of polytopes into canonical form.

A body is canonical when the ball of radius gamma/2 about the origin lies
inside it and the body lies inside the ball of radius 1/2.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import InputError, UnboundedError
from .geom_core import (
    MAX_VERTEX_DIM,
    Halfspace,
    HPolytope,
    ray_exit_many,
    support,
    support_many,
)
from .logging_config import get_logger
from .utils import as_float_list, measure_execution_time

logger = get_logger(__name__)

# eigenvalue ratio of the boundary inertia below which the body is left unrotated
ISOTROPY_RATIO = 2.25
BOUNDARY_SAMPLES_PER_DIM = 256
CANONICAL_SEED = 7


@dataclass(frozen=True, eq=False)
class AffineMap:
    """y = matrix·x + translation, with the inverse cached."""

    matrix: np.ndarray
    translation: np.ndarray
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (self.translation.size, self.translation.size):
            raise InputError("Affine map matrix does not match translation dimension")
        try:
            inverse = np.linalg.inv(matrix)
        except np.linalg.LinAlgError:
            raise InputError("Affine map matrix is singular")
        object.__setattr__(self, "_inverse", inverse)

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(matrix=np.eye(dim), translation=np.zeros(dim))

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self._inverse

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """The map x ↦ self(inner(x))."""
        return AffineMap(
            matrix=self.matrix @ inner.matrix,
            translation=self.matrix @ inner.translation + self.translation,
        )

    def apply_to_polytope(self, P: HPolytope) -> HPolytope:
        """Image of P under the map."""
        # a·x ≤ b with x = M⁻¹(y − t)  ⇔  (aM⁻¹)·y ≤ b + (aM⁻¹)·t
        normals = P.A @ self._inverse
        offsets = P.b + normals @ self.translation
        return HPolytope(normals, offsets)

    def unmap_halfspace(self, h: Halfspace) -> Halfspace:
        """Pre-image of a halfspace given in the target frame."""
        return Halfspace.create(self.matrix.T @ h.normal, h.offset - h.normal @ self.translation)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "matrix": [as_float_list(row) for row in self.matrix],
            "translation": as_float_list(self.translation),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AffineMap":
        try:
            return cls(
                matrix=np.asarray(data["matrix"], dtype=float),
                translation=np.asarray(data["translation"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed affine map: {e}")


def map_point(m: AffineMap, q: Any) -> np.ndarray:
    """Forward application; accepts a point or an (n, d) array of points."""
    q = np.asarray(q, dtype=float)
    return q @ m.matrix.T + m.translation


def unmap_point(m: AffineMap, q: Any) -> np.ndarray:
    """Inverse application; accepts a point or an (n, d) array of points."""
    q = np.asarray(q, dtype=float)
    return (q - m.translation) @ m.inverse_matrix.T


@dataclass(frozen=True, eq=False)
class CanonicalBody:
    """A polytope in canonical form together with the map that produced it.

    ``scale_bound`` converts relative distances in the source frame into
    absolute ones here: a point farther than ε·diam(P) from P maps to a point
    farther than ε/scale_bound from ``body``.
    """

    body: HPolytope
    gamma: float
    map: AffineMap
    scale_bound: float = 1.0

    @property
    def dim(self) -> int:
        return self.body.dim

    @classmethod
    def from_body(cls, body: HPolytope) -> "CanonicalBody":
        """Wrap a body already placed about the origin, measuring its gamma."""
        gamma = 2.0 * float(body.b.min())
        if gamma <= 0:
            raise InputError("Origin is not interior to the body", details={"min_offset": gamma / 2})
        return cls(body=body, gamma=gamma, map=AffineMap.identity(body.dim))

    def check(self, n_directions: int = 64, seed: int = CANONICAL_SEED) -> list[str]:
        """Return the canonical-form invariants that fail (empty when all hold)."""
        problems = []
        if float(self.body.b.min()) < self.gamma / 2 - 1e-9:
            problems.append("inner ball of radius gamma/2 not contained")
        d = self.dim
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_directions, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = np.vstack([np.eye(d), -np.eye(d), dirs])
        if np.any(support_many(self.body, dirs) > 0.5 + 1e-9):
            problems.append("body exceeds the ball of radius 1/2")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "body": self.body.to_dict(),
            "gamma": float(self.gamma),
            "map": self.map.to_dict(),
            "scale_bound": float(self.scale_bound),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CanonicalBody":
        try:
            return cls(
                body=HPolytope.from_dict(data["body"]),
                gamma=float(data["gamma"]),
                map=AffineMap.from_dict(data["map"]),
                scale_bound=float(data.get("scale_bound", 1.0)),
            )
        except KeyError as e:
            raise InputError(f"Malformed canonical body: missing {e}")


def _sphere_directions(d: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([np.eye(d), -np.eye(d), dirs])


def outer_radius(P: HPolytope) -> float:
    """Upper bound on max ‖y‖ over P: exact from vertices for d ≤ 3, box bound otherwise."""
    if P.dim <= MAX_VERTEX_DIM:
        return float(np.linalg.norm(P.vertices(), axis=1).max())
    d = P.dim
    extents = np.maximum(support_many(P, np.eye(d)), support_many(P, -np.eye(d)))
    return float(np.linalg.norm(extents))


@measure_execution_time
def canonicalize(P: HPolytope) -> CanonicalBody:
    """Map P affinely into canonical form and measure the gamma achieved.

    The map centers P at its Chebyshev center, aligns and rescales it along
    the principal axes of its boundary inertia when P is noticeably
    anisotropic, re-centers, then scales uniformly so that P fits in the ball
    of radius 1/2.

    Args:
        P: Bounded polytope with nonempty interior

    Returns:
        CanonicalBody with certified gamma

    Raises:
        InputError: If P is unbounded or has empty interior
    """
    d = P.dim
    c0, r0 = P.chebyshev_ball()
    dirs = _sphere_directions(d, BOUNDARY_SAMPLES_PER_DIM * d, CANONICAL_SEED)
    try:
        t, _ = ray_exit_many(P, c0, dirs)
        widths = support_many(P, np.eye(d)) + support_many(P, -np.eye(d))
    except UnboundedError:
        raise InputError("Polytope is unbounded")

    offsets = t[:, None] * dirs
    inertia = offsets.T @ offsets / len(offsets)
    eigvals, eigvecs = np.linalg.eigh(inertia)
    ratio = float(eigvals.max() / eigvals.min())

    if ratio <= ISOTROPY_RATIO:
        linear = np.eye(d)
    else:
        axis_widths = np.array(
            [support(P, v) + support(P, -v) for v in eigvecs.T],
        )
        linear = np.diag(1.0 / axis_widths) @ eigvecs.T
        logger.debug(f"Anisotropic body (inertia ratio {ratio:.2f}), rescaling principal axes")

    first = AffineMap(matrix=linear, translation=-linear @ c0)
    stage = first.apply_to_polytope(P)
    c1, _ = stage.chebyshev_ball()
    centered = AffineMap(matrix=np.eye(d), translation=-c1).compose(first)
    stage = centered.apply_to_polytope(P)

    scale = 1.0 / (2.0 * outer_radius(stage))
    final = AffineMap(matrix=scale * np.eye(d), translation=np.zeros(d)).compose(centered)
    body = final.apply_to_polytope(P)
    gamma = 2.0 * float(body.b.min())

    diam_lower = float(widths.max())
    sigma_min = float(final.singular_values().min())
    scale_bound = 1.0 / (sigma_min * diam_lower)

    logger.info(f"Canonicalized d={d} polytope with {P.n_facets} facets: gamma={gamma:.4f}")
    return CanonicalBody(body=body, gamma=gamma, map=final, scale_bound=scale_bound)
