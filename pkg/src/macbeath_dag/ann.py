"""Approximate nearest neighbors by central ray shooting over a quadtree AVD.

Sites of a cell are lifted to hyperplanes tangent to the paraboloid
x_{d+1} = ‖x‖², the upper envelope of those hyperplanes is clipped to a
fixed frustum and pushed through a projective map that turns vertical lines
into lines through p₀ = (0, …, 0, 2). The result, with its top facet raised
and p₀ moved to the origin, is a canonical body whose facet hit by the ray
towards a query names the query's nearest site.
"""

import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .canonical import AffineMap, CanonicalBody, map_point
from .config import AnnConfig, HierarchyConfig
from .exceptions import (
    ConstructionError,
    DegenerateInputError,
    InputError,
    MacbeathError,
    PreconditionError,
    ProjectiveDegenerateError,
)
from .geom_core import ABS_TOL, HPolytope, Ray, ray_exit
from .hierarchy import DagParams, LayeredDag, build, estimate_level_count
from .logging_config import get_logger
from .macbeath import practical_lambda0
from .query import ray_shoot
from .utils import as_float_list, map_ordered, read_json, write_json

logger = get_logger(__name__)

FORMAT_VERSION = 1
NO_SITE = -1

# f⁻ at x_{d+1} = -1 and f⁺ at x_{d+1} = +1
LOWER_HALF_SIDE = 0.5
UPPER_HALF_SIDE = 5.0 / 6.0
RAISED_TOP = 8.0 / 3.0
CELL_RADIUS = 0.5
# T(F) is the box [-2/3, 2/3]^d x [-2/3, 2/5]
BOX_HALF_SIDE = 2.0 / 3.0
BOX_BOTTOM = -2.0 / 3.0
CELL_ESTIMATE_SAMPLES = 48


# ---------------------------------------------------------------------------
# Lifting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiftedHyperplane:
    """The hyperplane x_{d+1} = Σ 2pᵢxᵢ − ‖p‖² tangent to the paraboloid at p↑.

    Stored as normal·x = offset with normal = (2p, −1) and offset = ‖p‖²,
    so the region above the hyperplane is normal·x ≤ offset.
    """

    site: np.ndarray
    normal: np.ndarray
    offset: float

    @property
    def dim(self) -> int:
        return self.site.size

    def height(self, x: Any) -> Union[float, np.ndarray]:
        """Value of x_{d+1} on the hyperplane above x ∈ ℝ^d."""
        x = np.asarray(x, dtype=float)
        return 2.0 * (x @ self.site) - self.offset

    def residual(self, point: Any) -> float:
        """normal·point − offset for a point of ℝ^{d+1}."""
        return float(self.normal @ np.asarray(point, dtype=float) - self.offset)


def lift(p: Any) -> LiftedHyperplane:
    site = np.asarray(p, dtype=float).ravel()
    return LiftedHyperplane(
        site=site,
        normal=np.append(2.0 * site, -1.0),
        offset=float(site @ site),
    )


def lifted_point(p: Any) -> np.ndarray:
    """p↑ = (p, ‖p‖²) on the paraboloid."""
    p = np.asarray(p, dtype=float).ravel()
    return np.append(p, p @ p)


# ---------------------------------------------------------------------------
# Frustum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frustum:
    """Convex hull of the cube of half-side 1/2 at height −1 and of half-side 5/6 at height +1."""

    site_dim: int

    @property
    def dim(self) -> int:
        return self.site_dim + 1

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Raw (normals, offsets): bottom, top, then ±xᵢ − x_{d+1}/6 ≤ 2/3 for each axis."""
        d = self.site_dim
        slope = (UPPER_HALF_SIDE - LOWER_HALF_SIDE) / 2.0
        mid = (UPPER_HALF_SIDE + LOWER_HALF_SIDE) / 2.0
        rows = [np.append(np.zeros(d), -1.0), np.append(np.zeros(d), 1.0)]
        offsets = [1.0, 1.0]
        for i in range(d):
            for sign in (1.0, -1.0):
                row = np.zeros(d + 1)
                row[i] = sign
                row[d] = -slope
                rows.append(row)
                offsets.append(mid)
        return np.array(rows), np.array(offsets)

    def polytope(self) -> HPolytope:
        return HPolytope(*self.halfspaces())

    def corners(self) -> np.ndarray:
        """The 2^{d+1} vertices, lower face first."""
        d = self.site_dim
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
        lower = np.hstack([LOWER_HALF_SIDE * signs, -np.ones((len(signs), 1))])
        upper = np.hstack([UPPER_HALF_SIDE * signs, np.ones((len(signs), 1))])
        return np.vstack([lower, upper])


# ---------------------------------------------------------------------------
# Projective map
# ---------------------------------------------------------------------------


def apex(site_dim: int) -> np.ndarray:
    """p₀, the image of the point at vertical infinity."""
    p0 = np.zeros(site_dim + 1)
    p0[-1] = 2.0
    return p0


def projective_matrix(dim: int) -> np.ndarray:
    """Homogeneous matrix of T on [x₀, x₁, …, x_dim]."""
    M = np.zeros((dim + 1, dim + 1))
    M[0, 0] = 4.0
    M[0, dim] = 1.0
    M[1:dim, 1:dim] = 4.0 * np.eye(dim - 1)
    M[dim, dim] = 2.0
    return M


def inverse_projective_matrix(dim: int) -> np.ndarray:
    """Homogeneous matrix of T⁻¹."""
    M = np.zeros((dim + 1, dim + 1))
    M[0, 0] = 2.0
    M[0, dim] = -1.0
    M[1:dim, 1:dim] = 2.0 * np.eye(dim - 1)
    M[dim, dim] = 4.0
    return M / 8.0


def _projective_apply(M: np.ndarray, p: Any) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    points = np.atleast_2d(p)
    homogeneous = np.hstack([np.ones((len(points), 1)), points]) @ M.T
    w = homogeneous[:, 0]
    if np.any(np.abs(w) <= ABS_TOL):
        raise ProjectiveDegenerateError(
            "Projective denominator vanishes",
            details={"point": as_float_list(points[np.argmin(np.abs(w))])},
        )
    result = homogeneous[:, 1:] / w[:, None]
    return result if p.ndim == 2 else result[0]


def apply_T(p: Any) -> np.ndarray:
    """T(x) = (4x₁, …, 4x_d, 2x_{d+1}) / (4 + x_{d+1}); accepts a point or an array of points.

    Raises:
        ProjectiveDegenerateError: If x_{d+1} = −4
    """
    dim = np.asarray(p).shape[-1]
    return _projective_apply(projective_matrix(dim), p)


def apply_T_inv(p: Any) -> np.ndarray:
    """T⁻¹(y) = (2y₁, …, 2y_d, 4y_{d+1}) / (2 − y_{d+1}).

    Raises:
        ProjectiveDegenerateError: If y_{d+1} = 2
    """
    dim = np.asarray(p).shape[-1]
    return _projective_apply(inverse_projective_matrix(dim), p)


def transform_halfspaces(normals: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Images under T of halfspaces a·x ≤ b, valid on x_{d+1} > −4.

    Substituting x = T⁻¹(y) and clearing the positive denominator 2 − y_{d+1}
    gives 2a'·y' + (4a_{d+1} + b)·y_{d+1} ≤ 2b.
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    offsets = np.asarray(offsets, dtype=float).ravel()
    mapped = 2.0 * normals.copy()
    mapped[:, -1] = 4.0 * normals[:, -1] + offsets
    return mapped, 2.0 * offsets


def sphere_residual(y: Any) -> Union[float, np.ndarray]:
    """φ(y) = Σ yᵢ² + (y_{d+1} − 1)² − 1, zero on the unit sphere centered at height 1."""
    y = np.asarray(y, dtype=float)
    return np.sum(y[..., :-1] ** 2, axis=-1) + (y[..., -1] - 1.0) ** 2 - 1.0


def distortion_constant(site_dim: int) -> float:
    """Lipschitz factor of T⁻¹ on pairs of T(F) at distance ≤ 1/4."""
    return 8.0 * (site_dim + 1)


# ---------------------------------------------------------------------------
# Per-cell structure
# ---------------------------------------------------------------------------


def modified_polytope(R: Any) -> tuple[HPolytope, np.ndarray]:
    """T(E(R) ∩ F) with its top facet raised to height 8/3, in the T frame.

    Returns:
        (polytope, site_of_facet) where site_of_facet[i] is the position in R
        of the site behind facet i, or -1 for frustum facets
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.size == 0:
        raise InputError("Cell has no representatives")
    d = R.shape[1]
    lifted = [lift(p) for p in R]
    site_normals = np.array([h.normal for h in lifted])
    site_offsets = np.array([h.offset for h in lifted])
    frame_normals, frame_offsets = Frustum(d).halfspaces()

    normals, offsets = transform_halfspaces(
        np.vstack([site_normals, frame_normals]), np.concatenate([site_offsets, frame_offsets])
    )
    # frustum top x_{d+1} ≤ 1 maps to y_{d+1} ≤ 2/5; raise it
    top = len(R) + 1
    normals[top] = np.append(np.zeros(d), 1.0)
    offsets[top] = RAISED_TOP

    site_of_facet = np.concatenate([np.arange(len(R)), np.full(len(frame_offsets), NO_SITE)])
    return HPolytope(normals, offsets), site_of_facet


def cell_map(site_dim: int) -> AffineMap:
    """Translation of p₀ to the origin followed by the scaling into the ball of radius 1/2."""
    # farthest points from p₀ are the bottom corners of T(F)
    outer = math.sqrt(site_dim * BOX_HALF_SIDE**2 + (2.0 - BOX_BOTTOM) ** 2)
    scale = 1.0 / (2.0 * outer)
    dim = site_dim + 1
    return AffineMap(matrix=scale * np.eye(dim), translation=-scale * apex(site_dim))


def cell_eps(eps: float, site_dim: int, reduction_c: float) -> float:
    """Absolute ray-shooting accuracy in the cell's canonical frame for ε-NN answers."""
    scale = float(cell_map(site_dim).matrix[0, 0])
    return min(1.0, eps / (reduction_c * distortion_constant(site_dim)) * scale)


def cell_hierarchy(config: HierarchyConfig, site_dim: int) -> HierarchyConfig:
    """Hierarchy settings for a cell body: facet witnesses and, unless set, the practical λ₀."""
    lambda0 = config.lambda0 if config.lambda0 is not None else practical_lambda0(site_dim + 1)
    return replace(config, witness_mode="facets", lambda0=lambda0)


def estimate_cell_nodes(
    canonical: CanonicalBody, eps: float, config: HierarchyConfig, budget: float = math.inf
) -> int:
    """Estimated DAG size for a cell body, counted from the leaf level up.

    Counting stops once ``budget`` is exceeded.
    """
    params = DagParams.compute(
        canonical.gamma, eps, canonical.dim, config.strict_constants, config.lambda0
    )
    total = 0
    for level in range(params.ell, -1, -1):
        total += estimate_level_count(
            canonical.body, params.delta(level), params.lambda0, CELL_ESTIMATE_SAMPLES
        )
        if total > budget:
            break
    return total


def build_cell_structure(
    R: Any, eps: float, config: Optional[AnnConfig] = None
) -> tuple[CanonicalBody, LayeredDag, dict[int, int]]:
    """Ray-shooting structure whose leaf witnesses name nearest sites of R.

    Args:
        R: Sites normalized to lie within distance 1/2 of the origin
        eps: Nearest-neighbor approximation parameter
        config: ANN settings; ``reduction_c``, ``cell_node_budget`` and ``hierarchy`` are used

    Returns:
        (canonical body, DAG, rep_of_witness) where rep_of_witness maps a
        facet index of the body to the position of its site in R. Frustum
        facets are absent from the map and never used as witnesses.

    Raises:
        InputError: If R is empty
        PreconditionError: If a site is farther than 1/2 from the origin
        ConstructionError: If the estimated DAG exceeds ``cell_node_budget`` nodes or a
            level cannot be built
    """
    config = config or AnnConfig()
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.size == 0:
        raise InputError("Cell has no representatives")
    if np.linalg.norm(R, axis=1).max() > CELL_RADIUS + 1e-9:
        raise PreconditionError("Cell sites must lie within distance 1/2 of the origin")
    d = R.shape[1]

    P, site_of_facet = modified_polytope(R)
    m = cell_map(d)
    body = m.apply_to_polytope(P)
    gamma = 2.0 * float(body.b.min())
    canonical = CanonicalBody(body=body, gamma=gamma, map=m, scale_bound=1.0 / float(m.matrix[0, 0]))

    eps_dag = cell_eps(eps, d, config.reduction_c)
    logger.debug(f"Cell with {len(R)} sites: gamma={gamma:.4f}, eps'={eps_dag:.4g}")
    hierarchy = cell_hierarchy(config.hierarchy, d)
    estimate = estimate_cell_nodes(canonical, eps_dag, hierarchy, config.cell_node_budget)
    if estimate > config.cell_node_budget:
        raise ConstructionError(
            f"Cell DAG would need more than {config.cell_node_budget} nodes",
            details={"estimate": estimate, "eps": eps_dag, "sites": len(R)},
        )
    dag = build(canonical, eps_dag, hierarchy, eligible=site_of_facet >= 0)
    rep_of_witness = {int(i): int(s) for i, s in enumerate(site_of_facet) if s >= 0}
    return canonical, dag, rep_of_witness


def vertical_site(R: Any, y: Any) -> int:
    """Site whose lifted hyperplane the vertical line through y meets first from above."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    heights = 2.0 * (R @ np.asarray(y, dtype=float)) - np.sum(R * R, axis=1)
    return int(np.argmax(heights))


def central_site(R: Any, y: Any) -> int:
    """Site of the facet of the transformed envelope hit by the line from p₀ through (y, 0)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P, site_of_facet = modified_polytope(R)
    body = cell_map(R.shape[1]).apply_to_polytope(P)
    direction = np.append(np.asarray(y, dtype=float), -2.0)
    _, facet = ray_exit(body, Ray.create(np.zeros(body.dim), direction))
    return int(site_of_facet[facet])


@dataclass(eq=False)
class CellStructure:
    """DAG for one quadtree leaf; sites are the leaf's reps after normalization."""

    center: np.ndarray
    scale: float
    canonical: CanonicalBody
    dag: LayeredDag
    rep_of_witness: dict[int, int]

    def normalize(self, q: np.ndarray) -> np.ndarray:
        return (q - self.center) / self.scale

    def candidate_sites(self, q: np.ndarray) -> list[int]:
        """Positions among the cell's reps named by the witnesses of the leaf hit by q."""
        y = self.normalize(q)
        z = map_point(self.canonical.map, np.append(y, 0.0))
        answer = ray_shoot(self.dag, self.canonical, z)
        leaf = self.dag.leaves[answer.leaf_index]
        sites = {self.rep_of_witness[i] for i in leaf.witness_indices if i in self.rep_of_witness}
        return sorted(sites)

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": as_float_list(self.center),
            "scale": float(self.scale),
            "canonical": self.canonical.to_dict(),
            "dag": self.dag.to_dict(),
            "rep_of_witness": [[k, v] for k, v in sorted(self.rep_of_witness.items())],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CellStructure":
        try:
            return cls(
                center=np.asarray(data["center"], dtype=float),
                scale=float(data["scale"]),
                canonical=CanonicalBody.from_dict(data["canonical"]),
                dag=LayeredDag.from_dict(data["dag"]),
                rep_of_witness={int(k): int(v) for k, v in data["rep_of_witness"]},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed cell structure: {e}")


# ---------------------------------------------------------------------------
# Quadtree
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class QuadCell:
    """Axis-aligned cube [center − half, center + half]^d of the subdivision.

    ``fallback`` marks a leaf that should have had a ray-shooting structure but
    is answered by brute force because its DAG could not be built.
    """

    center: np.ndarray
    half: float
    depth: int
    children: list[int] = field(default_factory=list)
    reps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    structure: Optional[CellStructure] = None
    fallback: bool = False

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def child_slot(self, q: np.ndarray) -> int:
        """Bit i of the slot is set when q lies in the upper half along axis i."""
        bits = (q >= self.center).astype(int)
        return int(bits @ (1 << np.arange(bits.size)))

    def split(self) -> list["QuadCell"]:
        d = self.center.size
        quarter = self.half / 2.0
        cells = []
        for slot in range(1 << d):
            signs = np.array([1.0 if slot >> i & 1 else -1.0 for i in range(d)])
            cells.append(QuadCell(self.center + quarter * signs, quarter, self.depth + 1))
        return cells

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "center": as_float_list(self.center),
            "half": float(self.half),
            "depth": self.depth,
        }
        if self.children:
            data["children"] = list(self.children)
        else:
            data["reps"] = [int(i) for i in self.reps]
        if self.structure is not None:
            data["structure"] = self.structure.to_dict()
        if self.fallback:
            data["fallback"] = True
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuadCell":
        try:
            structure = data.get("structure")
            return cls(
                center=np.asarray(data["center"], dtype=float),
                half=float(data["half"]),
                depth=int(data["depth"]),
                children=[int(c) for c in data.get("children", [])],
                reps=np.asarray(data.get("reps", []), dtype=int),
                structure=CellStructure.from_dict(structure) if structure else None,
                fallback=bool(data.get("fallback", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed quadtree cell: {e}")


def m_range(eps: float, dim: int) -> tuple[float, float]:
    """Admissible range log(1/ε) ≤ m ≤ 1/(ε^{d/2}·log(1/ε)) of the trade-off parameter."""
    low = math.log(1.0 / eps)
    high = math.inf if low <= 0 else 1.0 / (eps ** (dim / 2.0) * low)
    return low, high


def clamp_m(m: int, eps: float, dim: int) -> int:
    if m < 1:
        raise InputError(f"m must be a positive integer, got {m}")
    low, high = m_range(eps, dim)
    lowest = max(1, math.ceil(low))
    highest = max(lowest, math.floor(high)) if math.isfinite(high) else None
    clamped = max(m, lowest)
    if highest is not None:
        clamped = min(clamped, highest)
    if clamped != m:
        logger.warning(f"m={m} is outside [{low:.3g}, {high:.3g}] for eps={eps}, d={dim}; using {clamped}")
    return clamped


def query_time_target(eps: float, m: int, dim: int) -> float:
    """t = 1/(m·ε^{d/2}), the number of reps a leaf may keep."""
    return 1.0 / (m * eps ** (dim / 2.0))


def _box_distance(points: np.ndarray, center: np.ndarray, half: float) -> np.ndarray:
    gap = np.maximum(np.abs(points - center) - half, 0.0)
    return np.linalg.norm(gap, axis=1)


def _greedy_cover(cover: np.ndarray, preselected: np.ndarray) -> np.ndarray:
    """Column indices covering every row of the boolean matrix, starting from preselected."""
    chosen = list(preselected)
    uncovered = ~cover[:, chosen].any(axis=1) if chosen else np.ones(len(cover), dtype=bool)
    while uncovered.any():
        gains = cover[uncovered].sum(axis=0)
        best = int(np.argmax(gains))
        if gains[best] == 0:
            break
        chosen.append(best)
        uncovered &= ~cover[:, best]
    return np.array(sorted(set(chosen)), dtype=int)


class _RepCertifier:
    """Representatives of a cell good for every query in it.

    A point q of the cell whose nearest site is closer than ρ = (4/ε + 1)·η,
    η the covering radius of the sample grid, has that site among the points
    within ρ of the cell; those are always kept. Every other q is within η of
    a grid point g, and a site within (1 + ε/2)·d(g) of g is then an ε-NN of q.
    """

    def __init__(self, X: np.ndarray, eps: float, grid_cap: int):
        self.X = X
        self.tree = cKDTree(X)
        self.eps = eps
        self.d = X.shape[1]
        self.k = max(2, min(math.ceil(4.0 / eps) + 1, math.floor(grid_cap ** (1.0 / self.d))))

    def near_set(self, cell: QuadCell, rho: float) -> np.ndarray:
        radius = cell.half * math.sqrt(self.d) + rho
        candidates = np.asarray(self.tree.query_ball_point(cell.center, radius), dtype=int)
        if candidates.size == 0:
            return candidates
        keep = _box_distance(self.X[candidates], cell.center, cell.half) <= rho
        return np.sort(candidates[keep])

    def certify(self, cell: QuadCell, cap: float) -> np.ndarray:
        d, eps = self.d, self.eps
        diameter = 2.0 * cell.half * math.sqrt(d)
        r, nearest = self.tree.query(cell.center)
        if r * eps >= 0.5 * diameter * (2.0 + eps):
            return np.array([int(nearest)])

        spacing = 2.0 * cell.half / (self.k - 1)
        eta = 0.5 * spacing * math.sqrt(d)
        rho = (4.0 / eps + 1.0) * eta
        near = self.near_set(cell, rho)
        if near.size > cap:
            return near

        axes = [np.linspace(c - cell.half, c + cell.half, self.k) for c in cell.center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        dists, nn = self.tree.query(grid)
        candidates = np.union1d(np.unique(nn), near)
        cover = cdist(grid, self.X[candidates]) <= (1.0 + eps / 2.0) * dists[:, None] + ABS_TOL
        preselected = np.searchsorted(candidates, near)
        return candidates[_greedy_cover(cover, preselected)]


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------


class AnnIndex:
    """ε-approximate nearest-neighbor index over a fixed point set."""

    def __init__(
        self,
        points: np.ndarray,
        eps: float,
        m: int,
        cells: list[QuadCell],
        reduction_c: float = 4.0,
        build_seconds: float = 0.0,
    ):
        self.points = points
        self.eps = eps
        self.m = m
        self.cells = cells
        self.reduction_c = reduction_c
        self.build_seconds = build_seconds
        self.logger = get_logger(__name__)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def t(self) -> float:
        return query_time_target(self.eps, self.m, self.dim)

    @property
    def leaves(self) -> list[QuadCell]:
        return [c for c in self.cells if c.is_leaf]

    @property
    def domain(self) -> tuple[np.ndarray, np.ndarray]:
        root = self.cells[0]
        return root.center - root.half, root.center + root.half

    def locate(self, q: np.ndarray) -> QuadCell:
        cell = self.cells[0]
        while not cell.is_leaf:
            cell = self.cells[cell.children[cell.child_slot(q)]]
        return cell

    def _clamp(self, q: np.ndarray) -> np.ndarray:
        lower, upper = self.domain
        if np.any(q < lower) or np.any(q > upper):
            self.logger.warning(f"Query {as_float_list(q)} is outside the domain box; clamping")
            return np.clip(q, lower, upper)
        return q

    def _nearest_of(self, q: np.ndarray, indices: np.ndarray) -> int:
        dists = np.linalg.norm(self.points[indices] - q, axis=1)
        return int(indices[int(np.argmin(dists))])

    def query(self, q: Any) -> int:
        q = np.asarray(q, dtype=float).ravel()
        if q.size != self.dim:
            raise InputError(f"Query has dimension {q.size}, expected {self.dim}")
        located = self._clamp(q)
        cell = self.locate(located)
        if cell.structure is None:
            return self._nearest_of(q, cell.reps)
        positions = cell.structure.candidate_sites(located)
        if not positions:
            self.logger.debug("Leaf witnesses name no site; answering by brute force over reps")
            return self._nearest_of(q, cell.reps)
        return self._nearest_of(q, cell.reps[positions])

    def stats(self) -> dict[str, Any]:
        leaves = self.leaves
        sizes = [len(c.reps) for c in leaves]
        histogram: dict[str, int] = {}
        for size in sorted(sizes):
            histogram[str(size)] = histogram.get(str(size), 0) + 1
        dag_cells = sum(1 for c in leaves if c.structure is not None)
        n = len(self.points)
        _, high = m_range(self.eps, self.dim)
        return {
            "n": n,
            "dim": self.dim,
            "eps": self.eps,
            "m": self.m,
            "t": self.t,
            "cells": len(self.cells),
            "leaves": len(leaves),
            "max_depth": max(c.depth for c in self.cells),
            "rep_total": int(sum(sizes)),
            "rep_trend": n * max(math.log(1.0 / self.eps), 1.0),
            "rep_histogram": histogram,
            "dag_cells": dag_cells,
            "brute_cells": len(leaves) - dag_cells,
            "fallback_cells": sum(1 for c in leaves if c.fallback),
            "dag_nodes": sum(c.structure.dag.node_count for c in leaves if c.structure is not None),
            "upper_regime": math.isfinite(high) and self.m >= math.floor(high),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "eps": float(self.eps),
            "m": self.m,
            "reduction_c": float(self.reduction_c),
            "points": save_points_dict(self.points),
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnnIndex":
        try:
            return cls(
                points=load_points_dict(data["points"]),
                eps=float(data["eps"]),
                m=int(data["m"]),
                cells=[QuadCell.from_dict(c) for c in data["cells"]],
                reduction_c=float(data.get("reduction_c", 4.0)),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed ANN index document: {e}")

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AnnIndex":
        data = read_json(path)
        if not isinstance(data, dict):
            raise InputError(f"ANN index file {path} must contain a JSON object")
        return cls.from_dict(data)


def _validate_points(X: Any) -> np.ndarray:
    try:
        points = np.atleast_2d(np.asarray(X, dtype=float))
    except (TypeError, ValueError):
        raise InputError("Points must be a rectangular array of numbers")
    if points.size == 0 or points.ndim != 2:
        raise InputError("Point set is empty")
    if not np.all(np.isfinite(points)):
        raise InputError("Point set has non-finite coordinates")
    return points


def _attach_structure(
    cell: QuadCell, X: np.ndarray, eps: float, config: AnnConfig
) -> Optional[CellStructure]:
    sites = X[cell.reps]
    reach = float(np.linalg.norm(sites - cell.center, axis=1).max())
    scale = 2.0 * max(cell.half * math.sqrt(X.shape[1]), reach)
    try:
        canonical, dag, rep_of_witness = build_cell_structure(
            (sites - cell.center) / scale, eps, config
        )
    except ConstructionError as e:
        logger.warning(
            f"Cell at {as_float_list(cell.center)} with {len(sites)} reps falls back to "
            f"brute force: {e}"
        )
        cell.fallback = True
        return None
    return CellStructure(cell.center, scale, canonical, dag, rep_of_witness)


def build_ann(X: Any, eps: float, m: int, config: Optional[AnnConfig] = None) -> AnnIndex:
    """Subdivide a padded bounding cube of X until every leaf keeps at most max(t, 1) reps.

    Leaves with more than ``brute_threshold`` reps get a ray-shooting
    structure over their reps; the others are answered by brute force, as are
    leaves whose structure would exceed ``cell_node_budget`` nodes or fails
    to build.
    Exact duplicates are collapsed onto their lowest index.

    Raises:
        InputError: If X is empty, non-finite, or eps is not positive
        DegenerateInputError: If subdivision exceeds the depth limit (points
            distinct but coincident at the scale of the depth limit)
    """
    config = config or AnnConfig()
    X = _validate_points(X)
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    n, d = X.shape
    start = time.perf_counter()
    m = clamp_m(m, eps, d)
    cap = max(query_time_target(eps, m, d), 1.0)

    lower, upper = X.min(axis=0), X.max(axis=0)
    span = float((upper - lower).max()) or 1.0
    root = QuadCell(center=(lower + upper) / 2.0, half=span * (0.5 + config.domain_padding), depth=0)
    cells = [root]
    # identical points answer every query alike; the lowest index stands for the group
    _, first = np.unique(X, axis=0, return_index=True)
    distinct = np.sort(first)
    if len(distinct) < n:
        logger.warning(f"Ignoring {n - len(distinct)} duplicate points; answers use the lowest index")
    certifier = _RepCertifier(X[distinct], eps, config.grid_cap)

    queue = deque([0])
    while queue:
        cell = cells[queue.popleft()]
        if len(distinct) <= cap:
            reps = distinct
        else:
            reps = distinct[certifier.certify(cell, cap)]
        if len(reps) <= cap:
            cell.reps = reps
            continue
        if cell.depth >= config.max_depth:
            raise DegenerateInputError(
                f"Quadtree depth exceeds {config.max_depth}; points coincide at this scale",
                details={"center": as_float_list(cell.center), "reps": len(reps)},
            )
        for child in cell.split():
            cell.children.append(len(cells))
            queue.append(len(cells))
            cells.append(child)

    heavy = [c for c in cells if c.is_leaf and len(c.reps) > config.brute_threshold]
    try:
        structures = map_ordered(lambda c: _attach_structure(c, X, eps, config), heavy, config.workers)
    except MacbeathError as e:
        logger.error(f"Failed to build cell structures: {e}")
        raise
    for cell, structure in zip(heavy, structures):
        cell.structure = structure

    index = AnnIndex(X, eps, m, cells, config.reduction_c, time.perf_counter() - start)
    summary = index.stats()
    logger.info(
        f"Built ANN index: n={n}, d={d}, eps={eps}, m={m}, t={summary['t']:.3g}, "
        f"{summary['leaves']} leaves, {summary['rep_total']} reps, "
        f"{summary['dag_cells']} DAG cells ({summary['fallback_cells']} fallbacks) "
        f"in {index.build_seconds:.2f}s"
    )
    return index


def nn_query(index: AnnIndex, q: Any) -> int:
    """Index of a point within (1 + ε) of the nearest distance from q."""
    return index.query(q)


# ---------------------------------------------------------------------------
# Point-set files
# ---------------------------------------------------------------------------


def save_points_dict(points: np.ndarray) -> dict[str, Any]:
    return {"dim": int(points.shape[1]), "points": [as_float_list(p) for p in points]}


def load_points_dict(data: Any) -> np.ndarray:
    if not isinstance(data, dict) or "points" not in data:
        raise InputError("Point-set document needs a 'points' list")
    points = _validate_points(data["points"])
    if "dim" in data and int(data["dim"]) != points.shape[1]:
        raise InputError(
            f"Point-set declares dim {data['dim']} but points have dimension {points.shape[1]}"
        )
    return points


def load_points(path: Union[str, Path]) -> np.ndarray:
    return load_points_dict(read_json(path))


def save_points(points: Any, path: Union[str, Path]) -> Path:
    return write_json(path, save_points_dict(_validate_points(points)))
