"""Brute-force reference computations used by tests, benchmarks and --verify."""

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np
from scipy.optimize import minimize

from .exceptions import DegenerateInputError, InputError, NumericError
from .geom_core import MAX_VERTEX_DIM, Ellipsoid, HPolytope, solve_lp, support_many
from .logging_config import get_logger
from .macbeath import khachiyan_centered

logger = get_logger(__name__)

CONTAINMENT_TOL = 1e-8
SAMPLED_DIRECTIONS = 1000
DISTANCE_MAX_ITER = 100_000

Convex = Union[HPolytope, Ellipsoid]


def exact_nn(X: np.ndarray, q: Any) -> tuple[int, float]:
    """Linear-scan nearest neighbor; ties go to the lowest index."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise InputError("Point set is empty")
    dists = np.linalg.norm(X - np.asarray(q, dtype=float), axis=1)
    index = int(np.argmin(dists))
    return index, float(dists[index])


def _polish(P: HPolytope, q: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact projection of q onto the face spanned by the constraints active at y."""
    active = P.slack(y) <= 1e-6
    if not np.any(active):
        return y
    A = P.A[active]
    b = P.b[active]
    mu = np.linalg.pinv(A @ A.T) @ (A @ q - b)
    candidate = q - A.T @ mu
    if np.all(mu >= -1e-9) and np.all(P.A @ candidate <= P.b + 1e-10):
        return candidate
    return y


def dist_to_polytope(P: HPolytope, q: Any) -> float:
    """Euclidean distance from q to P (0 inside).

    Raises:
        NumericError: If the projection does not converge
    """
    q = np.asarray(q, dtype=float)
    if np.all(P.A @ q <= P.b + 1e-12):
        return 0.0
    x0, _ = P.chebyshev_ball()
    result = minimize(
        lambda y: float((y - q) @ (y - q)),
        x0,
        jac=lambda y: 2.0 * (y - q),
        method="SLSQP",
        constraints=[
            {"type": "ineq", "fun": lambda y: P.b - P.A @ y, "jac": lambda y: -P.A},
        ],
        options={"maxiter": DISTANCE_MAX_ITER, "ftol": 1e-15},
    )
    y = _polish(P, q, np.asarray(result.x, dtype=float))
    feasible = np.all(P.A @ y <= P.b + 1e-9)
    if not result.success and not feasible:
        raise NumericError(f"Distance computation failed: {result.message}")
    return float(np.linalg.norm(y - q))


@dataclass(frozen=True)
class ContainmentResult:
    """Outcome of a containment test; ``sampled`` marks a non-exhaustive check."""

    contained: bool
    sampled: bool = False

    def __bool__(self) -> bool:
        return self.contained


def _sphere(d: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n, d))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _support(B: Convex, dirs: np.ndarray) -> np.ndarray:
    if isinstance(B, Ellipsoid):
        return dirs @ B.center + np.sqrt(np.einsum("ij,jk,ik->i", dirs, B.inverse_shape, dirs))
    return support_many(B, dirs)


def poly_contains_poly(outer: Convex, inner: Convex, seed: int = 0) -> ContainmentResult:
    """Decide inner ⊆ outer.

    Exact for a polytope ``outer`` (one support computation per halfspace) and
    for an ellipsoid ``outer`` around a polytope with d ≤ 3 (vertex gauges).
    Otherwise support points in 10³ random directions are checked and the
    result is flagged as sampled.
    """
    if isinstance(outer, HPolytope):
        values = _support(inner, outer.A)
        return ContainmentResult(bool(np.all(values <= outer.b + CONTAINMENT_TOL)))

    d = outer.dim
    if isinstance(inner, HPolytope) and d <= MAX_VERTEX_DIM:
        gauges = outer.gauge(inner.vertices())
        return ContainmentResult(bool(np.all(gauges <= 1.0 + CONTAINMENT_TOL)))

    dirs = _sphere(d, SAMPLED_DIRECTIONS, seed)
    if isinstance(inner, Ellipsoid):
        points = np.array([inner.support_point(u) for u in dirs])
    else:
        points = np.array([solve_lp(u, inner)[0] for u in dirs])
    gauges = outer.gauge(points)
    return ContainmentResult(bool(np.all(gauges <= 1.0 + CONTAINMENT_TOL)), sampled=True)


def bounding_box(P: HPolytope) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box from 2d support values."""
    d = P.dim
    upper = support_many(P, np.eye(d))
    lower = -support_many(P, -np.eye(d))
    return lower, upper


def mc_volume(P: HPolytope, samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Rejection-sampling volume estimate inside the bounding box.

    Returns:
        (estimate, binomial standard error)
    """
    lower, upper = bounding_box(P)
    rng = np.random.default_rng(seed)
    points = rng.uniform(lower, upper, size=(samples, P.dim))
    hits = np.all(points @ P.A.T <= P.b, axis=1)
    box_volume = float(np.prod(upper - lower))
    p_hat = float(hits.mean())
    if p_hat == 0.0 and samples > 100_000:
        logger.warning(f"No Monte-Carlo hits in {samples} samples; reporting zero volume")
    return box_volume * p_hat, box_volume * math.sqrt(p_hat * (1.0 - p_hat) / samples)


def mvee(points: Any, tol: float = 1e-7) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid of a point set.

    Runs the origin-centered iteration on the lifted points (p, 1) and reads
    the ellipsoid off the slice at height 1, then dilates it so that every
    point is inside.

    Raises:
        DegenerateInputError: If the points do not span the space
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = P.shape
    if n <= d or np.linalg.matrix_rank(P - P.mean(axis=0)) < d:
        raise DegenerateInputError("Points do not span the space", details={"n": n, "dim": d})
    lifted = np.hstack([P, np.ones((n, 1))])
    G = khachiyan_centered(lifted, tol=tol)
    G11, g, corner = G[:d, :d], G[:d, d], G[d, d]
    center = -np.linalg.solve(G11, g)
    level = 1.0 - corner + center @ G11 @ center
    shape = G11 / level
    diff = P - center
    gauge = float(np.sqrt(np.einsum("ij,jk,ik->i", diff, shape, diff).max()))
    if gauge > 1.0:
        shape = shape / gauge**2
    return Ellipsoid(center=center, shape=0.5 * (shape + shape.T))
