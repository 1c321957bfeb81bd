"""Layered DAG of Macbeath ellipsoids over eroded copies of a canonical body."""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull
from scipy.stats import norm, qmc

from .canonical import CanonicalBody
from .config import HierarchyConfig
from .exceptions import ConstructionError, InputError, InvariantViolation, PreconditionError
from .geom_core import (
    ABS_TOL,
    MAX_VERTEX_DIM,
    Ellipsoid,
    Halfspace,
    HPolytope,
    Ray,
    ellipsoids_hit,
    erode,
    interiors_intersect,
    orthonormal_complement,
    ray_exit,
    ray_exit_many,
)
from .logging_config import get_logger, log_context
from .macbeath import (
    SandwichedEllipsoid,
    approx_min_cap,
    default_lambda0,
    macbeath_region,
    sandwich_bound,
    sandwiched_ellipsoid,
)
from .utils import as_float_list, batch_items, map_ordered, read_json, write_json

logger = get_logger(__name__)

MAX_LEVEL_NODES = 50_000
RAY_BATCH = 1000
TIGHT_TOL = 1e-7
NO_FACET = -1
PARALLEL_TOL = 1e-6
ESTIMATE_SAMPLES = 128


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def strict_delta0(gamma: float, dim: int) -> float:
    return 0.5 * (gamma**2 / (4.0 * dim)) ** dim


def practical_delta0(gamma: float) -> float:
    return min(gamma / 12.0, 0.05)


def leaf_target(gamma: float, eps: float, dim: int) -> float:
    """Erosion depth the leaf level has to reach: γ²ε/(8(3d+1))."""
    return gamma**2 * eps / (8.0 * (3 * dim + 1))


@dataclass(frozen=True)
class DagParams:
    """Constants shared by every level of the DAG."""

    dim: int
    gamma: float
    delta0: float
    lambda0: float
    eps: float
    ell: int
    strict_constants: bool = False

    @classmethod
    def compute(
        cls,
        gamma: float,
        eps: float,
        dim: int,
        strict: bool = False,
        lambda0: Optional[float] = None,
    ) -> "DagParams":
        delta0 = strict_delta0(gamma, dim) if strict else practical_delta0(gamma)
        target = leaf_target(gamma, eps, dim)
        ell = 0
        while delta0 / 2.0**ell > target:
            ell += 1
        return cls(
            dim=dim,
            gamma=gamma,
            delta0=delta0,
            lambda0=default_lambda0(dim) if lambda0 is None else lambda0,
            eps=eps,
            ell=ell,
            strict_constants=strict,
        )

    def delta(self, level: int) -> float:
        return self.delta0 / 2.0**level

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "gamma": float(self.gamma),
            "delta0": float(self.delta0),
            "lambda0": float(self.lambda0),
            "eps": float(self.eps),
            "ell": self.ell,
            "strict_constants": self.strict_constants,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DagParams":
        try:
            return cls(
                dim=int(data["dim"]),
                gamma=float(data["gamma"]),
                delta0=float(data["delta0"]),
                lambda0=float(data["lambda0"]),
                eps=float(data["eps"]),
                ell=int(data["ell"]),
                strict_constants=bool(data.get("strict_constants", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed DAG parameters: {e}")


# ---------------------------------------------------------------------------
# Nodes and the DAG
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DagNode:
    """One Macbeath ellipsoid of the structure.

    ``witness_indices`` holds the index in K of each witness halfspace, or -1
    for a supporting halfspace that is not one of K's own.
    """

    level: int
    index: int
    center: np.ndarray
    ellipsoid: Ellipsoid
    children: list[int] = field(default_factory=list)
    witnesses: list[Halfspace] = field(default_factory=list)
    witness_indices: list[int] = field(default_factory=list)
    sandwich_factor: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return bool(self.witnesses)

    @property
    def certified(self) -> bool:
        """False when the ellipsoid reaches past M^{4λ₀√d} of its center.

        Nodes loaded without a recorded factor count as certified.
        """
        if self.sandwich_factor is None:
            return True
        return self.sandwich_factor <= sandwich_bound(self.center.size)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "center": as_float_list(self.center),
            "shape": [as_float_list(row) for row in self.ellipsoid.shape],
            "children": list(self.children),
        }
        if self.sandwich_factor is not None:
            data["sandwich_factor"] = float(self.sandwich_factor)
        if self.witnesses:
            data["witnesses"] = [
                {**h.to_dict(), "index": int(i)}
                for h, i in zip(self.witnesses, self.witness_indices)
            ]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any], level: int, index: int) -> "DagNode":
        try:
            center = np.asarray(data["center"], dtype=float)
            ellipsoid = Ellipsoid(center=center, shape=np.asarray(data["shape"], dtype=float))
            witnesses = data.get("witnesses", [])
            return cls(
                level=level,
                index=index,
                center=center,
                ellipsoid=ellipsoid,
                children=[int(c) for c in data.get("children", [])],
                witnesses=[
                    Halfspace(normal=np.asarray(w["normal"], dtype=float), offset=float(w["offset"]))
                    for w in witnesses
                ],
                witness_indices=[int(w.get("index", NO_FACET)) for w in witnesses],
                sandwich_factor=(
                    float(data["sandwich_factor"]) if "sandwich_factor" in data else None
                ),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed DAG node: {e}")


@dataclass(eq=False)
class LayeredDag:
    """Levels of nodes; the virtual root's children are all level-0 nodes."""

    params: DagParams
    levels: list[list[DagNode]]
    build_seconds: float = 0.0
    _arrays: dict[int, tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, init=False, repr=False
    )

    @property
    def root_children(self) -> list[int]:
        return list(range(len(self.levels[0])))

    @property
    def leaves(self) -> list[DagNode]:
        return self.levels[-1]

    @property
    def level_sizes(self) -> list[int]:
        return [len(level) for level in self.levels]

    @property
    def node_count(self) -> int:
        return sum(self.level_sizes)

    @property
    def leaf_count(self) -> int:
        return len(self.levels[-1])

    @property
    def max_fanout(self) -> int:
        """Largest child count of a real node (the virtual root is excluded)."""
        return max((len(n.children) for level in self.levels[:-1] for n in level), default=0)

    @property
    def uncertified(self) -> list[tuple[int, int]]:
        """(level, index) of nodes whose ellipsoid failed the outer sandwich check."""
        return [(n.level, n.index) for level in self.levels for n in level if not n.certified]

    def level_arrays(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (centers, shapes) of one level (cached)."""
        if level not in self._arrays:
            nodes = self.levels[level]
            self._arrays[level] = (
                np.array([n.center for n in nodes]),
                np.array([n.ellipsoid.shape for n in nodes]),
            )
        return self._arrays[level]

    def stats(self) -> dict[str, Any]:
        return {
            "ell": self.params.ell,
            "gamma": self.params.gamma,
            "delta0": self.params.delta0,
            "level_sizes": self.level_sizes,
            "node_count": self.node_count,
            "leaf_count": self.leaf_count,
            "max_fanout": self.max_fanout,
            "uncertified_nodes": len(self.uncertified),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "levels": [[node.to_dict() for node in level] for level in self.levels],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LayeredDag":
        try:
            params = DagParams.from_dict(data["params"])
            levels = [
                [DagNode.from_dict(node, level=i, index=j) for j, node in enumerate(level)]
                for i, level in enumerate(data["levels"])
            ]
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed DAG document: {e}")
        if len(levels) != params.ell + 1 or any(not level for level in levels):
            raise InputError("DAG document does not have ell + 1 nonempty levels")
        return cls(params=params, levels=levels)


def dump_dag(dag: LayeredDag, path: Union[str, Path]) -> Path:
    return write_json(path, dag.to_dict())


def load_dag(path: Union[str, Path]) -> LayeredDag:
    return LayeredDag.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Level packing
# ---------------------------------------------------------------------------


def _sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in ℝ^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def estimate_level_size(dim: int, delta: float, lambda0: float) -> int:
    """Rough count of disjoint M^λ₀ regions along ∂K(Δ) for a body like B(O, 1/2)."""
    sphere_area = _sphere_area(dim) * 0.5 ** (dim - 1)
    patch = math.pi ** ((dim - 1) / 2) / math.gamma((dim + 1) / 2)
    patch *= (lambda0 * math.sqrt(delta)) ** (dim - 1)
    return max(1, math.ceil(sphere_area / patch))


def _cut_area(K: HPolytope, x: np.ndarray, facet: int, lambda0: float) -> float:
    """(d−1)-volume of M^λ₀(x) cut by the hyperplane through x parallel to ``facet``."""
    basis = orthonormal_complement(K.A[facet])
    C = K.A @ basis.T
    norms = np.linalg.norm(C, axis=1)
    keep = norms > PARALLEL_TOL
    reach = lambda0 * K.slack(x)[keep]
    C, norms = C[keep], norms[keep]
    half_widths = reach / norms
    if C.shape[1] == 1:
        return float(2.0 * half_widths.min())
    cut = HPolytope(
        np.vstack([C, -C]),
        np.concatenate([reach, reach]),
        chebyshev=(np.zeros(C.shape[1]), float(half_widths.min())),
    )
    return float(ConvexHull(cut.vertices()).volume)


def estimate_level_count(
    K: HPolytope, delta: float, lambda0: float, samples: int = ESTIMATE_SAMPLES, seed: Any = 0
) -> int:
    """Rough count of disjoint M^λ₀ regions centered on ∂K(Δ).

    In d = 2 and d = 3 the boundary of K(Δ) is sampled along a direction
    stream and each sample contributes its share of the boundary area over
    the cut area of its own region. Other dimensions use the ball formula
    of ``estimate_level_size``.
    """
    d = K.dim
    if not 2 <= d <= MAX_VERTEX_DIM:
        return estimate_level_size(d, delta, lambda0)
    Kd = erode(K, delta)
    dirs = direction_stream(d, samples, seed)
    t, facets = ray_exit_many(Kd, np.zeros(d), dirs)
    cosines = np.einsum("ij,ij->i", K.A[facets], dirs)
    cuts = np.array(
        [_cut_area(K, ti * u, int(f), lambda0) for ti, u, f in zip(t, dirs, facets)]
    )
    share = t ** (d - 1) / cosines / cuts
    return max(1, math.ceil(_sphere_area(d) * float(share.mean())))


def estimate_dag_nodes(
    K: HPolytope, params: DagParams, samples: int = ESTIMATE_SAMPLES // 2
) -> list[int]:
    """Estimated node count of every level of a DAG built with ``params``."""
    return [
        estimate_level_count(K, params.delta(i), params.lambda0, samples)
        for i in range(params.ell + 1)
    ]


def direction_stream(dim: int, count: int, seed: Any) -> np.ndarray:
    """Unit directions from a scrambled Halton sequence pushed through the normal quantile."""
    sampler = qmc.Halton(d=dim, scramble=True, seed=np.random.default_rng(seed))
    uniform = np.clip(sampler.random(count), 1e-12, 1.0 - 1e-12)
    gaussian = norm.ppf(uniform)
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


def random_directions(dim: int, count: int, seed: Any) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def edge_directions(A: np.ndarray, offsets: np.ndarray, reach: np.ndarray) -> np.ndarray:
    """Unit edge directions of a 3-D Macbeath region from its vertex offsets.

    The faces are the two sides of each slab |a·(y − x)| ≤ reach; two faces
    meet in an edge when at least two vertices lie on both. Near-ties may add
    directions that are not edges.
    """
    proj = offsets @ A.T
    tol = TIGHT_TOL * reach + ABS_TOL
    on_face = np.hstack([proj >= reach - tol, proj <= -reach + tol]).astype(int)
    shared = on_face.T @ on_face
    normals = np.vstack([A, -A])
    i, j = np.nonzero(np.triu(shared >= 2, k=1))
    dirs = np.cross(normals[i], normals[j])
    lengths = np.linalg.norm(dirs, axis=1)
    keep = lengths > PARALLEL_TOL
    return dirs[keep] / lengths[keep, None]


def separated_along(axes: np.ndarray, P: np.ndarray, Q: np.ndarray) -> bool:
    """True when the projections of point sets P and Q on some axis overlap in at most a point."""
    if axes.size == 0:
        return False
    p = P @ axes.T
    q = Q @ axes.T
    apart = (p.max(axis=0) <= q.min(axis=0) + ABS_TOL) | (q.max(axis=0) <= p.min(axis=0) + ABS_TOL)
    return bool(np.any(apart))


@dataclass(frozen=True, eq=False)
class _Region:
    """What the packer keeps about M^λ₀(x): slab half-widths, a bounding
    radius, projection intervals on K's normals and, in d = 3, vertices and
    edge directions."""

    center: np.ndarray
    reach: np.ndarray
    radius: float
    lo: np.ndarray
    hi: np.ndarray
    vertices: Optional[np.ndarray] = None
    edges: Optional[np.ndarray] = None


class _Rows:
    """Append-only 2-D array with amortized doubling."""

    def __init__(self, width: int):
        self._data = np.empty((64, width))
        self._size = 0

    def append(self, row: Any) -> None:
        if self._size == len(self._data):
            self._data = np.vstack([self._data, np.empty_like(self._data)])
        self._data[self._size] = row
        self._size += 1

    @property
    def view(self) -> np.ndarray:
        return self._data[: self._size]


class LevelPacker:
    """Greedy set of points on ∂K(Δ) with pairwise interior-disjoint M^λ₀ regions.

    A candidate is compared with the kept regions whose bounding balls meet
    its own. Projection intervals on K's normals separate most pairs and
    decide every pair in d ≤ 2. In d = 3 a midpoint inside both regions
    proves an overlap and the rest are settled by separating axes made of
    edge direction pairs. From d = 4 on the rest go to an LP.
    """

    def __init__(self, K: HPolytope, lambda0: float):
        self.K = K
        self.lambda0 = lambda0
        self._regions: list[_Region] = []
        m, d = K.A.shape
        self._centers = _Rows(d)
        self._radii = _Rows(1)
        self._reach = _Rows(m)
        self._lo = _Rows(m)
        self._hi = _Rows(m)
        self.exact_checks = 0

    def __len__(self) -> int:
        return len(self._regions)

    @property
    def centers(self) -> list[np.ndarray]:
        return [r.center for r in self._regions]

    def _describe(self, x: np.ndarray) -> _Region:
        x = np.asarray(x, dtype=float)
        A = self.K.A
        d = self.K.dim
        reach = self.lambda0 * self.K.slack(x)
        ax = A @ x
        if d == 1:
            r = float(reach.min())
            return _Region(x, reach, r, ax - r, ax + r)
        if d > MAX_VERTEX_DIM:
            radius = self.lambda0 * (float(np.linalg.norm(x)) + 0.5)
            return _Region(x, reach, radius, ax - reach, ax + reach)
        vertices = macbeath_region(self.K, x, self.lambda0).region.vertices()
        proj = vertices @ A.T
        radius = float(np.linalg.norm(vertices - x, axis=1).max())
        edges = edge_directions(A, vertices - x, reach) if d == 3 else None
        return _Region(x, reach, radius, proj.min(axis=0), proj.max(axis=0), vertices, edges)

    def is_disjoint(self, x: np.ndarray) -> bool:
        return self._test(self._describe(x))

    def _test(self, region: _Region) -> bool:
        if not self._regions:
            return True
        x = region.center
        stack = self._centers.view
        dist = np.linalg.norm(stack - x, axis=1)
        near = np.flatnonzero(dist < region.radius + self._radii.view[:, 0] - ABS_TOL)
        if near.size == 0:
            return True
        near = near[np.argsort(dist[near], kind="stable")]
        separated = np.any(
            (region.hi <= self._lo.view[near] + ABS_TOL)
            | (self._hi.view[near] <= region.lo + ABS_TOL),
            axis=1,
        )
        near = near[~separated]
        if near.size == 0 or self.K.dim <= 2:
            return near.size == 0

        # the midpoint of two centers lies inside both regions
        half = 0.5 * np.abs((stack[near] - x) @ self.K.A.T)
        limit = (1.0 - TIGHT_TOL) * np.minimum(self._reach.view[near], region.reach)
        if np.any(np.all(half < limit, axis=1)):
            return False
        for j in near:
            self.exact_checks += 1
            if self._overlaps(region, self._regions[j]):
                return False
        return True

    def _overlaps(self, a: _Region, b: _Region) -> bool:
        if a.edges is None or b.edges is None:
            P = macbeath_region(self.K, a.center, self.lambda0).region
            Q = macbeath_region(self.K, b.center, self.lambda0).region
            return interiors_intersect(P, Q)
        axes = np.cross(a.edges[:, None, :], b.edges[None, :, :]).reshape(-1, 3)
        lengths = np.linalg.norm(axes, axis=1)
        keep = lengths > PARALLEL_TOL
        return not separated_along(axes[keep] / lengths[keep, None], a.vertices, b.vertices)

    def offer(self, x: np.ndarray) -> bool:
        """Keep x when its region is disjoint from every kept region."""
        region = self._describe(x)
        if not self._test(region):
            return False
        self._regions.append(region)
        self._centers.append(region.center)
        self._radii.append([region.radius])
        self._reach.append(region.reach)
        self._lo.append(region.lo)
        self._hi.append(region.hi)
        return True


def _boundary_points(Kd: HPolytope, dirs: np.ndarray) -> np.ndarray:
    t, _ = ray_exit_many(Kd, np.zeros(Kd.dim), dirs)
    return t[:, None] * dirs


def _level_packer(
    K: HPolytope, delta: float, lambda0: float, seed: Any, config: HierarchyConfig
) -> tuple[LevelPacker, HPolytope]:
    Kd = erode(K, delta)
    estimate = estimate_level_count(K, delta, lambda0)
    if estimate > MAX_LEVEL_NODES:
        raise ConstructionError(
            f"Level at depth {delta:.3g} would need about {estimate} nodes",
            details={"delta": delta, "estimate": estimate},
        )
    n_candidates = max(config.min_candidates, config.candidate_factor * estimate)
    packer = LevelPacker(K, lambda0)
    for point in _boundary_points(Kd, direction_stream(K.dim, n_candidates, seed)):
        packer.offer(point)
    logger.debug(
        f"Packed {len(packer)} of {n_candidates} candidates at depth {delta:.4g} "
        f"(estimate {estimate}, {packer.exact_checks} exact checks)"
    )
    return packer, Kd


def pack_level(
    K: Union[CanonicalBody, HPolytope],
    delta: float,
    lambda0: float,
    seed: Any = 0,
    config: Optional[HierarchyConfig] = None,
) -> list[np.ndarray]:
    """Greedy maximal set of centers on ∂K(Δ) w.r.t. a low-discrepancy candidate stream.

    Raises:
        ErosionTooLargeError: If K(Δ) is empty
    """
    P = K.body if isinstance(K, CanonicalBody) else K
    packer, _ = _level_packer(P, delta, lambda0, seed, config or HierarchyConfig())
    return list(packer.centers)


def _uncovered(
    centers: np.ndarray, shapes: np.ndarray, dirs: np.ndarray
) -> np.ndarray:
    """Indices of directions whose ray from O misses every ellipsoid."""
    origin = np.zeros(centers.shape[1])
    missed = []
    for start, batch in zip(range(0, len(dirs), RAY_BATCH), batch_items(dirs, RAY_BATCH)):
        hits = ellipsoids_hit(centers, shapes, origin, np.asarray(batch))
        missed.extend(start + np.flatnonzero(~hits.any(axis=0)))
    return np.asarray(missed, dtype=int)


def _ellipsoid_for(
    K: HPolytope, lambda0: float, tol: float
) -> Callable[[np.ndarray], SandwichedEllipsoid]:
    def compute(x: np.ndarray) -> SandwichedEllipsoid:
        return sandwiched_ellipsoid(K, x, lambda0=lambda0, tol=tol)

    return compute


def _build_level(
    K: HPolytope, params: DagParams, level: int, config: HierarchyConfig
) -> tuple[list[np.ndarray], list[SandwichedEllipsoid]]:
    delta = params.delta(level)
    packer, Kd = _level_packer(K, delta, params.lambda0, [config.seed, level], config)
    compute = _ellipsoid_for(K, params.lambda0, config.mvee_tol)
    ellipsoids = map_ordered(compute, packer.centers, config.workers)

    for round_no in range(config.max_repair_rounds):
        dirs = random_directions(K.dim, config.coverage_rays, [config.seed, level, round_no + 1])
        missed = _uncovered(
            np.array([s.ellipsoid.center for s in ellipsoids]),
            np.array([s.ellipsoid.shape for s in ellipsoids]),
            dirs,
        )
        if missed.size == 0:
            logger.debug(f"Level {level} covered after {round_no} repair rounds")
            return packer.centers, ellipsoids
        inserted = 0
        for point in _boundary_points(Kd, dirs[missed]):
            if packer.offer(point):
                ellipsoids.append(compute(point))
                inserted += 1
        logger.debug(f"Level {level} repair round {round_no + 1}: {missed.size} misses, {inserted} inserted")
        if inserted == 0:
            logger.warning(
                f"Level {level}: {missed.size} of {len(dirs)} rays miss every ellipsoid "
                "but overlap a kept region; accepting"
            )
            return packer.centers, ellipsoids

    raise ConstructionError(
        f"Coverage repair did not converge in {config.max_repair_rounds} rounds at level {level}",
        uncovered_direction=as_float_list(dirs[missed[0]]),
        details={"level": level, "misses": int(missed.size)},
    )


# ---------------------------------------------------------------------------
# Linking
# ---------------------------------------------------------------------------


def _cone_half_angles(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    dist = np.linalg.norm(centers, axis=1)
    ratio = np.clip(radii / np.maximum(dist, ABS_TOL), 0.0, 1.0)
    return np.where(radii < dist, np.arcsin(ratio), math.pi)


def cone_overlap(E1: Ellipsoid, E2: Ellipsoid, slack: float = 1e-3) -> bool:
    """Conservative test for a ray from O meeting both ellipsoids.

    Each ellipsoid is replaced by the circular cone around its bounding ball,
    so a true overlap always returns True; near misses within ``slack``
    radians may also return True.

    Raises:
        PreconditionError: If O lies inside either ellipsoid
    """
    origin = np.zeros(E1.dim)
    for E in (E1, E2):
        if E.gauge(origin) <= 1.0:
            raise PreconditionError("Origin lies inside an ellipsoid")
    centers = np.array([E1.center, E2.center])
    radii = np.array([E1.bounding_radius(), E2.bounding_radius()])
    alpha = _cone_half_angles(centers, radii)
    units = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    angle = math.acos(float(np.clip(units[0] @ units[1], -1.0, 1.0)))
    return angle <= alpha[0] + alpha[1] + slack


def _link(parents: list[DagNode], children: list[DagNode], slack: float) -> None:
    def cones(nodes: list[DagNode]) -> tuple[np.ndarray, np.ndarray]:
        centers = np.array([n.center for n in nodes])
        radii = np.array([n.ellipsoid.bounding_radius() for n in nodes])
        units = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        return units, _cone_half_angles(centers, radii)

    for node in parents + children:
        if node.ellipsoid.gauge(np.zeros_like(node.center)) <= 1.0:
            raise PreconditionError(
                "Origin lies inside a Macbeath ellipsoid", details={"level": node.level}
            )
    pu, pa = cones(parents)
    cu, ca = cones(children)
    angles = np.arccos(np.clip(pu @ cu.T, -1.0, 1.0))
    linked = angles <= pa[:, None] + ca[None, :] + slack
    for i, node in enumerate(parents):
        node.children = [int(j) for j in np.flatnonzero(linked[i])]
        if not node.children:
            nearest = int(np.argmin(angles[i]))
            logger.warning(
                f"Node {node.level}/{node.index} has no overlapping child; "
                f"linking nearest by angle ({nearest})"
            )
            node.children = [nearest]


# ---------------------------------------------------------------------------
# Leaf witnesses
# ---------------------------------------------------------------------------


def _conic_support(
    K: HPolytope, u: np.ndarray, candidates: np.ndarray
) -> Optional[np.ndarray]:
    """Indices of at most d candidate facets whose normals' conic hull holds u."""
    if candidates.size == 0:
        return None
    A = K.A[candidates]
    result = linprog(
        np.ones(len(candidates)),
        A_eq=A.T,
        b_eq=u,
        bounds=[(0.0, None)] * len(candidates),
        method="highs-ds",
    )
    if result.status != 0:
        return None
    weights = np.asarray(result.x)
    chosen = candidates[weights > 1e-10]
    if chosen.size == 0 or chosen.size > K.dim:
        return None
    return chosen


def _ray_answer_error(K: HPolytope, witnesses: list[Halfspace], directions: np.ndarray) -> float:
    """Largest distance between the witness answer and K's exit point over the probe rays."""
    normals = np.array([h.normal for h in witnesses])
    offsets = np.array([h.offset for h in witnesses])
    t_exit, _ = ray_exit_many(K, np.zeros(K.dim), directions)
    denom = directions @ normals.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > ABS_TOL, offsets[None, :] / denom, np.inf)
    return float(np.max(t.min(axis=1) - t_exit))


def _probe_directions(E: Ellipsoid) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(E.shape)
    radii = 1.0 / np.sqrt(eigvals)
    points = [E.center]
    for r, v in zip(radii, eigvecs.T):
        points.extend([E.center + r * v, E.center - r * v])
    points = np.array(points)
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def leaf_witnesses(
    K: Union[CanonicalBody, HPolytope],
    leaf: DagNode,
    *,
    mode: str = "facets",
    samples: int = 2000,
    n_random: int = 50,
    seed: int = 0,
    eps: Optional[float] = None,
    eligible: Optional[np.ndarray] = None,
    delta0: Optional[float] = None,
) -> tuple[list[Halfspace], list[int]]:
    """Witness halfspaces for a leaf and their indices in K (-1 for non-facets).

    In ``facets`` mode, at most d of K's halfspaces whose normal cone holds
    the minimal-cap direction at the cap apex; otherwise the single facet
    where the ray O→x leaves K. In ``supporting`` mode, the supporting
    halfspace at the apex. With ``eps`` the answer is probed along 2d+1 rays
    through the leaf ellipsoid and the supporting halfspace replaces the
    facets when it answers better.

    Raises:
        OutOfRegimeError: If ``delta0`` is given and the leaf center is deeper than it
    """
    P = K.body if isinstance(K, CanonicalBody) else K
    x = leaf.center
    cap = approx_min_cap(P, x, samples=samples, n_random=n_random, seed=seed, delta0=delta0)
    u = cap.direction
    supporting = Halfspace(normal=u, offset=float(cap.support_value))
    if mode == "supporting":
        return [supporting], [NO_FACET]

    slack_at_apex = P.slack(cap.apex)
    tight = np.flatnonzero(slack_at_apex <= TIGHT_TOL * max(1.0, float(np.abs(P.b).max())))
    if eligible is not None:
        tight = tight[eligible[tight]]
    chosen = _conic_support(P, u, tight)
    if chosen is None:
        _, facet = ray_exit(P, Ray(origin=np.zeros(P.dim), direction=x / np.linalg.norm(x)))
        logger.warning(
            f"Leaf {leaf.index}: cap direction is not in a facet normal cone; "
            f"using exit facet {facet}"
        )
        chosen = np.array([facet])
    witnesses = [P.halfspace(int(i)) for i in chosen]
    indices = [int(i) for i in chosen]

    if eps is not None:
        probes = _probe_directions(leaf.ellipsoid)
        error = _ray_answer_error(P, witnesses, probes)
        if error > eps:
            fallback_error = _ray_answer_error(P, [supporting], probes)
            logger.warning(
                f"Leaf {leaf.index}: facet witnesses miss by {error:.3g} > eps; "
                f"supporting halfspace misses by {fallback_error:.3g}"
            )
            if fallback_error < error and eligible is None:
                return [supporting], [NO_FACET]
    return witnesses, indices


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------


def build(
    K: CanonicalBody,
    eps: float,
    config: Optional[HierarchyConfig] = None,
    *,
    eligible: Optional[np.ndarray] = None,
) -> LayeredDag:
    """Build the layered DAG for ε-approximate ray shooting on K.

    Args:
        K: Canonical body
        eps: Absolute approximation parameter, 0 < eps ≤ 1
        config: Construction settings
        eligible: Optional mask of K's halfspaces allowed as leaf witnesses

    Raises:
        InputError: If eps is out of range
        ConstructionError: If a level cannot be built or covered
        InvariantViolation: If ``require_certified`` is set and an ellipsoid fails the
            outer sandwich check
    """
    if not 0 < eps <= 1:
        raise InputError(f"eps must lie in (0, 1], got {eps}")
    config = config or HierarchyConfig()
    P = K.body
    d = P.dim
    params = DagParams.compute(K.gamma, eps, d, config.strict_constants, config.lambda0)
    if 4.0 * params.lambda0 * math.sqrt(d) > 1.0:
        raise InputError(f"lambda0={params.lambda0} puts Macbeath ellipsoids outside the body")
    if params.strict_constants:
        if d >= 4:
            logger.warning(
                f"Strict constants in d={d}: delta0={params.delta0:.3g}, ell={params.ell}"
            )
        if params.ell > config.max_strict_levels:
            raise ConstructionError(
                f"Strict constants need {params.ell} levels (limit {config.max_strict_levels})",
                details={"ell": params.ell},
            )
    if params.delta0 >= K.gamma / 2:
        raise ConstructionError(
            "Top level depth leaves the origin outside the eroded body",
            details={"delta0": params.delta0, "gamma": K.gamma},
        )

    start = time.perf_counter()
    levels: list[list[DagNode]] = []
    for i in range(params.ell + 1):
        with log_context(logger, dag_level=i):
            centers, ellipsoids = _build_level(P, params, i, config)
        nodes = [
            DagNode(level=i, index=j, center=c, ellipsoid=s.ellipsoid, sandwich_factor=s.factor)
            for j, (c, s) in enumerate(zip(centers, ellipsoids))
        ]
        logger.info(f"Level {i} (depth {params.delta(i):.4g}): {len(nodes)} nodes")
        if levels:
            _link(levels[-1], nodes, config.cone_slack)
        levels.append(nodes)

    def witnesses_for(leaf: DagNode) -> tuple[list[Halfspace], list[int]]:
        return leaf_witnesses(
            P,
            leaf,
            mode=config.witness_mode,
            samples=config.cap_samples,
            n_random=config.cap_random_directions,
            seed=config.seed + leaf.index,
            eps=eps,
            eligible=eligible,
            delta0=params.delta0,
        )

    for leaf, (hs, idx) in zip(levels[-1], map_ordered(witnesses_for, levels[-1], config.workers)):
        leaf.witnesses, leaf.witness_indices = hs, idx

    dag = LayeredDag(params=params, levels=levels, build_seconds=time.perf_counter() - start)
    uncertified = dag.uncertified
    if uncertified:
        message = f"{len(uncertified)} Macbeath ellipsoids fail the outer sandwich check"
        if config.require_certified:
            raise InvariantViolation(message, details={"nodes": uncertified[:10]})
        logger.warning(message)
    logger.info(
        f"Built DAG: ell={params.ell}, {dag.node_count} nodes, {dag.leaf_count} leaves, "
        f"max fanout {dag.max_fanout} in {dag.build_seconds:.2f}s"
    )
    return dag
