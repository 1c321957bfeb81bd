"""Geometric primitives: halfspaces, H-polytopes, rays, ellipsoids, caps and LPs."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection, QhullError

from .exceptions import (
    ErosionTooLargeError,
    InfeasibleError,
    InputError,
    NumericError,
    PreconditionError,
    UnboundedError,
)
from .logging_config import get_logger
from .utils import as_float_list, read_json, write_json

logger = get_logger(__name__)

ABS_TOL = 1e-12
REL_TOL = 1e-9
MAX_VERTEX_DIM = 3


def _as_vector(values: Any, name: str = "vector") -> np.ndarray:
    vector = np.asarray(values, dtype=float).ravel()
    if vector.size == 0 or not np.all(np.isfinite(vector)):
        raise InputError(f"Non-finite or empty {name}")
    return vector


def _unit_rows(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale rows to unit length, leaving rows that are already unit untouched."""
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms <= ABS_TOL):
        raise InputError("Halfspace with zero normal")
    scale = np.where(np.abs(norms - 1.0) <= 4 * np.finfo(float).eps, 1.0, norms)
    return normals / scale[:, None], scale


@dataclass(frozen=True, eq=False)
class Halfspace:
    """The set {y : normal·y ≤ offset} with a unit normal."""

    normal: np.ndarray
    offset: float

    @classmethod
    def create(cls, normal: Any, offset: float) -> "Halfspace":
        """Build a halfspace, normalizing the normal and the offset together."""
        vec = _as_vector(normal, "normal")
        unit, scale = _unit_rows(vec[None, :])
        return cls(normal=unit[0], offset=float(offset) / float(scale[0]))

    def value(self, q: np.ndarray) -> float:
        """Signed violation normal·q − offset (positive outside)."""
        return float(self.normal @ q - self.offset)

    def contains(self, q: np.ndarray, tol: float = ABS_TOL) -> bool:
        return self.value(q) <= tol

    def to_dict(self) -> dict[str, Any]:
        return {"normal": as_float_list(self.normal), "offset": float(self.offset)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Halfspace":
        try:
            return cls.create(data["normal"], data["offset"])
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed halfspace: {e}")


class HPolytope:
    """Convex polytope given as an intersection of halfspaces.

    Normals are normalized once on construction and the arrays are frozen.
    Redundant or duplicate halfspaces are kept. Vertices are enumerated on
    demand for d ≤ 3 only.
    """

    def __init__(
        self,
        normals: Any,
        offsets: Any,
        *,
        normalized: bool = False,
        chebyshev: Optional[tuple[np.ndarray, float]] = None,
    ):
        A = np.array(normals, dtype=float, ndmin=2)
        b = np.array(offsets, dtype=float).ravel()
        if A.shape[0] != b.shape[0] or A.shape[0] == 0:
            raise InputError(
                "Normals and offsets disagree in count",
                details={"normals": A.shape[0], "offsets": b.shape[0]},
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InputError("Non-finite halfspace coefficients")
        if not normalized:
            A, scale = _unit_rows(A)
            b = b / scale
        A.setflags(write=False)
        b.setflags(write=False)
        self._A = A
        self._b = b
        self._chebyshev = chebyshev
        self._vertices: Optional[np.ndarray] = None

    @classmethod
    def from_halfspaces(cls, halfspaces: Sequence[Halfspace]) -> "HPolytope":
        if not halfspaces:
            raise InputError("Polytope needs at least one halfspace")
        return cls(
            np.vstack([h.normal for h in halfspaces]),
            [h.offset for h in halfspaces],
            normalized=True,
        )

    @classmethod
    def box(cls, lower: Any, upper: Any) -> "HPolytope":
        """Axis-aligned box [lower, upper]."""
        lo = _as_vector(lower, "lower")
        hi = _as_vector(upper, "upper")
        d = lo.size
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]), normalized=True)

    @property
    def A(self) -> np.ndarray:
        return self._A

    @property
    def b(self) -> np.ndarray:
        return self._b

    @property
    def dim(self) -> int:
        return int(self._A.shape[1])

    @property
    def n_facets(self) -> int:
        return int(self._A.shape[0])

    @property
    def halfspaces(self) -> list[Halfspace]:
        return [Halfspace(normal=a, offset=float(c)) for a, c in zip(self._A, self._b)]

    def halfspace(self, index: int) -> Halfspace:
        return Halfspace(normal=self._A[index], offset=float(self._b[index]))

    def slack(self, q: np.ndarray) -> np.ndarray:
        """Offsets minus normal·q, one entry per halfspace."""
        return self._b - self._A @ q

    def with_halfspaces(self, extra: Sequence[Halfspace]) -> "HPolytope":
        """Intersection of this polytope with additional halfspaces."""
        if not extra:
            return self
        return HPolytope(
            np.vstack([self._A] + [h.normal[None, :] for h in extra]),
            np.concatenate([self._b, [h.offset for h in extra]]),
            normalized=True,
        )

    def chebyshev_ball(self) -> tuple[np.ndarray, float]:
        """Center and radius of a largest inscribed ball (cached)."""
        if self._chebyshev is None:
            self._chebyshev = chebyshev_ball(self)
        return self._chebyshev

    def vertices(self) -> np.ndarray:
        """Vertex array for d ≤ 3 (cached)."""
        if self._vertices is None:
            self._vertices = _enumerate_vertices(self)
        return self._vertices

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "halfspaces": [
                {"normal": as_float_list(a), "offset": float(c)} for a, c in zip(self._A, self._b)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HPolytope":
        try:
            dim = int(data["dim"])
            entries = data["halfspaces"]
            normals = [entry["normal"] for entry in entries]
            offsets = [entry["offset"] for entry in entries]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed polytope document: {e}")
        if not entries:
            raise InputError("Polytope document has no halfspaces")
        if any(len(n) != dim for n in normals):
            raise InputError("Halfspace normal dimension does not match 'dim'", details={"dim": dim})
        return cls(normals, offsets)

    def __repr__(self) -> str:
        return f"HPolytope(dim={self.dim}, n_facets={self.n_facets})"


@dataclass(frozen=True, eq=False)
class Ray:
    """Ray origin + t·direction, t ≥ 0, with a unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    @classmethod
    def create(cls, origin: Any, direction: Any) -> "Ray":
        o = _as_vector(origin, "ray origin")
        u = _as_vector(direction, "ray direction")
        norm = float(np.linalg.norm(u))
        if norm <= ABS_TOL:
            raise PreconditionError("Ray direction is zero")
        return cls(origin=o, direction=u / norm)

    @classmethod
    def central(cls, q: Any) -> "Ray":
        """Ray from the origin through q."""
        q = _as_vector(q, "point")
        return cls.create(np.zeros_like(q), q)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """The set {y : (y − center)ᵀ shape (y − center) ≤ 1}."""

    center: np.ndarray
    shape: np.ndarray
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        shape = np.asarray(self.shape, dtype=float)
        if shape.shape != (self.center.size, self.center.size):
            raise InputError("Ellipsoid shape does not match center dimension")
        if not np.allclose(shape, shape.T, atol=1e-10, rtol=0.0):
            raise InputError("Ellipsoid shape is not symmetric")
        if np.linalg.eigvalsh(shape).min() <= 0:
            raise InputError("Ellipsoid shape is not positive definite")
        object.__setattr__(self, "_inverse", np.linalg.inv(shape))

    @classmethod
    def ball(cls, center: Any, radius: float) -> "Ellipsoid":
        c = _as_vector(center, "center")
        return cls(center=c, shape=np.eye(c.size) / radius**2)

    @property
    def dim(self) -> int:
        return int(self.center.size)

    @property
    def inverse_shape(self) -> np.ndarray:
        return self._inverse

    def radii(self) -> np.ndarray:
        """Semi-axis lengths, ascending."""
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.shape)[::-1])

    def bounding_radius(self) -> float:
        return float(1.0 / np.sqrt(np.linalg.eigvalsh(self.shape).min()))

    def gauge(self, y: np.ndarray) -> np.ndarray:
        """sqrt((y−c)ᵀA(y−c)), for one point or a row array of points."""
        diff = np.atleast_2d(y) - self.center
        values = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", diff, self.shape, diff), 0.0))
        return values if np.ndim(y) > 1 else values[0]

    def contains(self, y: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(self.gauge(y) <= 1.0 + tol)

    def support(self, u: np.ndarray) -> float:
        """max of u·y over the ellipsoid."""
        return float(u @ self.center + np.sqrt(u @ self._inverse @ u))

    def support_point(self, u: np.ndarray) -> np.ndarray:
        w = self._inverse @ u
        return self.center + w / np.sqrt(u @ w)

    def scaled(self, factor: float) -> "Ellipsoid":
        """Dilation about the center by ``factor``."""
        return Ellipsoid(center=self.center, shape=self.shape / factor**2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": as_float_list(self.center),
            "shape": [as_float_list(row) for row in self.shape],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Ellipsoid":
        try:
            return cls(
                center=np.asarray(data["center"], dtype=float),
                shape=np.asarray(data["shape"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed ellipsoid: {e}")


@dataclass(frozen=True, eq=False)
class Cap:
    """Intersection of ``body`` with the halfspace ``cut``.

    The cap points away from the cut normal: its apex maximizes
    ``direction = −cut.normal`` over the body and ``width`` is the distance
    between the cut hyperplane and the parallel supporting hyperplane at the apex.
    """

    body: HPolytope
    cut: Halfspace
    width: float
    apex: np.ndarray

    @classmethod
    def from_direction(cls, body: HPolytope, direction: np.ndarray, level: float) -> "Cap":
        """Cap {y ∈ body : direction·y ≥ level}."""
        u = direction / np.linalg.norm(direction)
        apex, top = solve_lp(u, body)
        if level > top + ABS_TOL:
            raise PreconditionError(
                "Cap cut misses the body", details={"level": level, "support": top}
            )
        return cls(
            body=body,
            cut=Halfspace(normal=-u, offset=-float(level)),
            width=max(float(top - level), 0.0),
            apex=apex,
        )

    @property
    def direction(self) -> np.ndarray:
        return -self.cut.normal

    @property
    def level(self) -> float:
        return -self.cut.offset

    @property
    def support_value(self) -> float:
        return self.level + self.width

    def as_polytope(self) -> HPolytope:
        return self.body.with_halfspaces([self.cut])

    def contains(self, y: np.ndarray, tol: float = ABS_TOL) -> bool:
        return self.cut.contains(y, tol) and contains(self.body, y)


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------


def _constraint_arrays(
    constraints: Union[HPolytope, Sequence[Halfspace]],
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(constraints, HPolytope):
        return constraints.A, constraints.b
    if not constraints:
        raise InputError("LP needs at least one constraint")
    return (
        np.vstack([h.normal for h in constraints]),
        np.array([h.offset for h in constraints], dtype=float),
    )


def _linprog_max(
    objective: np.ndarray, A: np.ndarray, b: np.ndarray, bounds: Any = None
) -> tuple[np.ndarray, float]:
    n = objective.size
    bounds = bounds if bounds is not None else [(None, None)] * n
    result = linprog(-objective, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if result.status == 4 and "unbounded" in str(result.message).lower():
        # presolve can stop at "unbounded or infeasible"; a zero objective settles it
        feasibility = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if feasibility.status == 0:
            raise UnboundedError("Linear program is unbounded", details={"objective": list(objective)})
        raise InfeasibleError("Linear program is infeasible")
    if result.status == 2:
        raise InfeasibleError("Linear program is infeasible")
    if result.status == 3:
        raise UnboundedError("Linear program is unbounded", details={"objective": list(objective)})
    if result.status != 0:
        raise NumericError(f"Linear program failed: {result.message}")
    return np.asarray(result.x, dtype=float), float(-result.fun)


def solve_lp(
    objective: Any, constraints: Union[HPolytope, Sequence[Halfspace]]
) -> tuple[np.ndarray, float]:
    """Maximize objective·y subject to the given halfspaces.

    Args:
        objective: Objective vector
        constraints: A polytope or a sequence of halfspaces

    Returns:
        (maximizer, optimal value)

    Raises:
        InfeasibleError: If the constraints have no common point
        UnboundedError: If the objective is unbounded above
    """
    c = _as_vector(objective, "objective")
    A, b = _constraint_arrays(constraints)
    if A.shape[1] != c.size:
        raise InputError("Objective dimension does not match constraints")
    return _linprog_max(c, A, b)


def support(P: HPolytope, direction: Any) -> float:
    """Support value h_P(u) = max u·y over P."""
    return solve_lp(direction, P)[1]


def support_many(P: HPolytope, directions: np.ndarray) -> np.ndarray:
    """Support values for each row of ``directions``."""
    directions = np.atleast_2d(directions)
    if P.dim <= MAX_VERTEX_DIM:
        return (directions @ P.vertices().T).max(axis=1)
    return np.array([support(P, u) for u in directions])


def chebyshev_ball(P: HPolytope) -> tuple[np.ndarray, float]:
    """Center and radius of a largest ball inside P.

    Raises:
        InputError: If P is unbounded or has empty interior
    """
    d = P.dim
    objective = np.zeros(d + 1)
    objective[-1] = 1.0
    A = np.hstack([P.A, np.ones((P.n_facets, 1))])
    bounds = [(None, None)] * d + [(0.0, None)]
    try:
        x, radius = _linprog_max(objective, A, P.b, bounds=bounds)
    except InfeasibleError:
        raise InputError("Polytope is empty: empty interior")
    except UnboundedError:
        raise InputError("Polytope is unbounded")
    if radius <= ABS_TOL:
        raise InputError("Polytope has empty interior", details={"radius": radius})
    return x[:d], radius


def common_slack(P: HPolytope, Q: HPolytope) -> float:
    """Largest s ≤ 1 such that some y has slack ≥ s in every halfspace of P and Q."""
    d = P.dim
    A = np.vstack([P.A, Q.A])
    b = np.concatenate([P.b, Q.b])
    objective = np.zeros(d + 1)
    objective[-1] = 1.0
    A_aug = np.hstack([A, np.ones((A.shape[0], 1))])
    bounds = [(None, None)] * d + [(None, 1.0)]
    try:
        _, s = _linprog_max(objective, A_aug, b, bounds=bounds)
    except InfeasibleError:
        return -np.inf
    return s


def interiors_intersect(P: HPolytope, Q: HPolytope) -> bool:
    """True when the interiors of P and Q share a point."""
    return common_slack(P, Q) > ABS_TOL


# ---------------------------------------------------------------------------
# Membership, rays and erosion
# ---------------------------------------------------------------------------


def _check_dim(P: HPolytope, q: np.ndarray) -> None:
    if q.size != P.dim:
        raise InputError(
            f"Point dimension {q.size} does not match polytope dimension {P.dim}",
            details={"point_dim": q.size, "dim": P.dim},
        )


def contains(P: HPolytope, q: Any) -> bool:
    """Exact membership with absolute tolerance 1e-12."""
    q = _as_vector(q, "point")
    _check_dim(P, q)
    return bool(np.all(P.A @ q <= P.b + ABS_TOL))


def contains_many(P: HPolytope, points: np.ndarray, tol: float = ABS_TOL) -> np.ndarray:
    return np.all(points @ P.A.T <= P.b + tol, axis=1)


def ray_exit(P: HPolytope, r: Ray) -> tuple[float, int]:
    """Exit parameter and facet of a ray leaving P from an interior origin.

    Ties between facets are broken by the lowest facet index.
    """
    _check_dim(P, r.origin)
    slack = P.slack(r.origin)
    if np.any(slack <= ABS_TOL):
        raise PreconditionError("Ray origin is not interior", details={"min_slack": float(slack.min())})
    denom = P.A @ r.direction
    forward = denom > ABS_TOL
    if not np.any(forward):
        raise UnboundedError("Ray never leaves the polytope")
    t = np.full(P.n_facets, np.inf)
    t[forward] = slack[forward] / denom[forward]
    t_min = float(t.min())
    facet = int(np.flatnonzero(t <= t_min + ABS_TOL * max(1.0, t_min))[0])
    return t_min, facet


def ray_exit_many(
    P: HPolytope, origin: np.ndarray, directions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ray_exit for unit directions sharing one interior origin."""
    slack = P.slack(origin)
    if np.any(slack <= ABS_TOL):
        raise PreconditionError("Ray origin is not interior", details={"min_slack": float(slack.min())})
    denom = directions @ P.A.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > ABS_TOL, slack[None, :] / denom, np.inf)
    t_min = t.min(axis=1)
    if not np.all(np.isfinite(t_min)):
        raise UnboundedError("Some ray never leaves the polytope")
    facets = np.argmax(t <= (t_min + ABS_TOL * np.maximum(1.0, t_min))[:, None], axis=1)
    return t_min, facets


def erode(P: HPolytope, delta: float) -> HPolytope:
    """K(δ): every halfspace moved inward by δ.

    Raises:
        ErosionTooLargeError: If nothing with positive radius is left
    """
    if delta < 0:
        raise PreconditionError("Erosion depth must be non-negative", details={"delta": delta})
    if delta == 0:
        return P
    center, radius = P.chebyshev_ball()
    if radius - delta <= ABS_TOL:
        raise ErosionTooLargeError(
            f"Erosion by {delta} empties the polytope (inradius {radius})", delta=delta
        )
    return HPolytope(P.A, P.b - delta, normalized=True, chebyshev=(center, radius - delta))


def depth(P: HPolytope, q: np.ndarray) -> float:
    """Distance from an interior point q to the boundary: min facet slack."""
    return float(P.slack(q).min())


def orthonormal_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to unit u, as rows."""
    d = u.size
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(d)]))
    return q[:, 1:d].T


# ---------------------------------------------------------------------------
# Ellipsoid / ray tests
# ---------------------------------------------------------------------------


def ellipsoid_ray_intersect(E: Ellipsoid, r: Ray) -> bool:
    """True iff some t ≥ 0 puts origin + t·direction inside E."""
    diff = r.origin - E.center
    a = float(r.direction @ E.shape @ r.direction)
    half_b = float(r.direction @ E.shape @ diff)
    c = float(diff @ E.shape @ diff) - 1.0
    if c <= 0.0:
        return True
    # both roots share a sign when c > 0; the sum −2·half_b/a decides it
    return half_b <= 0.0 and half_b * half_b - a * c >= 0.0


def ellipsoids_hit(
    centers: np.ndarray, shapes: np.ndarray, origin: np.ndarray, directions: np.ndarray
) -> np.ndarray:
    """Boolean matrix hits[i, j]: ray j from ``origin`` meets ellipsoid i."""
    diff = origin[None, :] - centers
    a = np.einsum("jk,ikl,jl->ij", directions, shapes, directions)
    half_b = np.einsum("jk,ikl,il->ij", directions, shapes, diff)
    c = np.einsum("ik,ikl,il->i", diff, shapes, diff)[:, None] - 1.0
    inside = c <= 0.0
    return inside | ((half_b <= 0.0) & (half_b * half_b - a * c >= 0.0))


# ---------------------------------------------------------------------------
# Vertex enumeration (d ≤ 3)
# ---------------------------------------------------------------------------


def _enumerate_vertices(P: HPolytope) -> np.ndarray:
    d = P.dim
    if d > MAX_VERTEX_DIM:
        raise PreconditionError(f"Vertex enumeration is limited to d ≤ {MAX_VERTEX_DIM}")
    center, _ = P.chebyshev_ball()
    if d == 1:
        lo = -support(P, np.array([-1.0]))
        hi = support(P, np.array([1.0]))
        return np.array([[lo], [hi]])
    stacked = np.hstack([P.A, -P.b[:, None]])
    try:
        hs = HalfspaceIntersection(stacked, center)
    except QhullError:
        logger.debug("Qhull failed on halfspace intersection, retrying with joggle")
        hs = HalfspaceIntersection(stacked, center, qhull_options="QJ")
    points = hs.intersections
    points = points[np.all(np.isfinite(points), axis=1)]
    return np.unique(np.round(points, 13), axis=0)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def load_polytope(path: Union[str, Path]) -> HPolytope:
    """Read a polytope JSON file ({"dim", "halfspaces": [{"normal", "offset"}]})."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"Polytope file {path} must contain a JSON object")
    return HPolytope.from_dict(data)


def save_polytope(P: HPolytope, path: Union[str, Path]) -> Path:
    return write_json(path, P.to_dict())
