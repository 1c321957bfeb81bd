"""Macbeath regions, Macbeath ellipsoids, caps and approximate minimal caps."""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Union

import numpy as np

from .canonical import CanonicalBody, outer_radius
from .exceptions import NumericError, OutOfRegimeError, PreconditionError
from .geom_core import (
    ABS_TOL,
    MAX_VERTEX_DIM,
    Cap,
    Ellipsoid,
    Halfspace,
    HPolytope,
    Ray,
    orthonormal_complement,
    ray_exit,
    solve_lp,
    support_many,
)
from .logging_config import get_logger

logger = get_logger(__name__)

Body = Union[CanonicalBody, HPolytope]

NET_ANGLES = 8
KHACHIYAN_MAX_ITER = 10_000
OUTER_SLACK = 1e-3
PRACTICAL_LAMBDA_FRACTION = 0.9


def _polytope(K: Body) -> HPolytope:
    return K.body if isinstance(K, CanonicalBody) else K


def default_lambda0(dim: int) -> float:
    return 1.0 / (20.0 * math.sqrt(dim))


def practical_lambda0(dim: int) -> float:
    """λ₀ just below the largest value keeping M^{4λ₀√d}(x) inside K.

    Level sizes grow like 1/λ₀^{d−1}, so this keeps d = 3 builds in the
    thousands of nodes per level where the default needs tens of thousands.
    """
    return PRACTICAL_LAMBDA_FRACTION / (4.0 * math.sqrt(dim))


def _interior_slack(P: HPolytope, x: np.ndarray) -> np.ndarray:
    slack = P.slack(x)
    if np.any(slack <= ABS_TOL):
        raise PreconditionError(
            "Point is not interior to the body", details={"min_slack": float(slack.min())}
        )
    return slack


@dataclass(frozen=True, eq=False)
class MacbeathRegion:
    """M^λ(x) = x + λ((K − x) ∩ (x − K))."""

    center: np.ndarray
    lam: float
    region: HPolytope

    def contains(self, y: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.region.A @ y <= self.region.b + tol))


@dataclass(frozen=True)
class DistanceProfile:
    delta: float
    ray_dist: float
    width: float
    cap_volume_estimate: float
    cap_volume_error: float = 0.0


def sandwich_bound(dim: int) -> float:
    """Largest accepted outer/inner ratio: √d up to the measurement slack."""
    return math.sqrt(dim) * (1.0 + OUTER_SLACK)


@dataclass(frozen=True, eq=False)
class SandwichedEllipsoid:
    """Ellipsoid E with M^inner(x) ⊆ E ⊆ M^outer(x).

    ``sampled`` is set when the inner containment was checked on sampled
    support points rather than on the full vertex set.
    """

    ellipsoid: Ellipsoid
    inner_lambda: float
    outer_lambda: float
    sampled: bool

    @property
    def factor(self) -> float:
        return self.outer_lambda / self.inner_lambda

    @property
    def certified(self) -> bool:
        """True when E ⊆ M^{inner·√d}(x) holds as measured."""
        return self.factor <= sandwich_bound(self.ellipsoid.dim)


def macbeath_region(K: Body, x: np.ndarray, lam: float) -> MacbeathRegion:
    """Macbeath region of K at x scaled by λ.

    Every halfspace a·y ≤ b of K with slack s = b − a·x contributes the pair
    a·y ≤ a·x + λs and −a·y ≤ −a·x + λs.
    """
    if lam <= 0:
        raise PreconditionError("Macbeath scaling factor must be positive", details={"lambda": lam})
    P = _polytope(K)
    x = np.asarray(x, dtype=float)
    slack = _interior_slack(P, x)
    ax = P.A @ x
    normals = np.vstack([P.A, -P.A])
    offsets = np.concatenate([ax + lam * slack, -ax + lam * slack])
    region = HPolytope(normals, offsets, normalized=True, chebyshev=(x, float(lam * slack.min())))
    return MacbeathRegion(center=x, lam=float(lam), region=region)


def khachiyan_centered(
    points: np.ndarray, tol: float = 1e-7, max_iter: int = KHACHIYAN_MAX_ITER
) -> np.ndarray:
    """Shape matrix of the minimum-volume origin-centered ellipsoid around ``points``.

    Khachiyan's coordinate ascent with Todd–Yildirim away steps. Stops when
    every point has gauge² ≤ d(1 + tol) relative to the dual weights.

    Raises:
        NumericError: If the iteration does not converge in ``max_iter`` steps
    """
    Q = np.asarray(points, dtype=float)
    n, d = Q.shape
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        X = (Q.T * u) @ Q
        try:
            X_inv = np.linalg.inv(X)
        except np.linalg.LinAlgError:
            raise NumericError("Point set does not span the space")
        M = np.einsum("ij,jk,ik->i", Q, X_inv, Q)
        j = int(np.argmax(M))
        active = np.flatnonzero(u > 0)
        k = int(active[np.argmin(M[active])])
        gain_up = M[j] - d
        gain_down = d - M[k]
        if gain_up <= d * tol and gain_down <= d * tol:
            return X_inv / d
        if gain_up >= gain_down:
            step = gain_up / (d * (M[j] - 1.0))
            u *= 1.0 - step
            u[j] += step
        else:
            floor = -u[k] / (1.0 - u[k]) if u[k] < 1.0 else -1.0
            step = floor if M[k] <= 1.0 else max((M[k] - d) / (d * (M[k] - 1.0)), floor)
            u *= 1.0 - step
            u[k] += step
            u[u < 0] = 0.0
    raise NumericError(
        f"Ellipsoid iteration did not converge in {max_iter} steps", details={"points": n}
    )


def _direction_net(d: int) -> np.ndarray:
    """Half of a symmetric direction net: coordinate axes plus k angles per coordinate plane."""
    dirs = list(np.eye(d))
    for i, j in combinations(range(d), 2):
        for m in range(1, NET_ANGLES):
            theta = math.pi * m / NET_ANGLES
            u = np.zeros(d)
            u[i], u[j] = math.cos(theta), math.sin(theta)
            dirs.append(u)
    return np.array(dirs)


def _region_points(mr: MacbeathRegion, P: HPolytope, slack: np.ndarray) -> tuple[np.ndarray, bool]:
    """Offsets from the center of points whose hull is (or approximates) the region."""
    d = P.dim
    if d <= MAX_VERTEX_DIM:
        return mr.region.vertices() - mr.center, False
    tight = np.argsort(slack, kind="stable")[: 2 * d]
    dirs = np.vstack([_direction_net(d), P.A[tight]])
    half = np.array([solve_lp(u, mr.region)[0] - mr.center for u in dirs])
    return np.vstack([half, -half]), True


def sandwiched_ellipsoid(
    K: Body, x: np.ndarray, lambda0: Optional[float] = None, tol: float = 1e-7
) -> SandwichedEllipsoid:
    """Macbeath ellipsoid of x with its measured sandwich factors.

    The ellipsoid is the origin-centered minimum enclosing ellipsoid of the
    vertices (d ≤ 3) or of sampled support points (d ≥ 4) of M^{4λ₀}(x),
    translated to x and dilated until every such point is inside.
    """
    P = _polytope(K)
    x = np.asarray(x, dtype=float)
    d = P.dim
    lambda0 = default_lambda0(d) if lambda0 is None else lambda0
    inner = 4.0 * lambda0
    slack = _interior_slack(P, x)

    mr = macbeath_region(P, x, inner)
    offsets, sampled = _region_points(mr, P, slack)
    shape = khachiyan_centered(offsets, tol=tol)
    shape = 0.5 * (shape + shape.T)

    gauge = np.sqrt(np.einsum("ij,jk,ik->i", offsets, shape, offsets).max())
    if gauge > 1.0:
        shape = shape / (gauge * (1.0 + 1e-12)) ** 2
    ellipsoid = Ellipsoid(center=x.copy(), shape=shape)

    # E ⊆ M^μ(x) iff sqrt(aᵀA⁻¹a) ≤ μ·s for every facet a
    reach = np.sqrt(np.einsum("ij,jk,ik->i", P.A, ellipsoid.inverse_shape, P.A))
    outer = float((reach / slack).max())
    result = SandwichedEllipsoid(
        ellipsoid=ellipsoid, inner_lambda=inner, outer_lambda=outer, sampled=sampled
    )
    if not result.certified:
        logger.warning(
            f"Macbeath ellipsoid at {np.round(x, 6)} exceeds the sqrt(d) sandwich: "
            f"outer factor {result.factor:.4f}"
        )
    return result


def macbeath_ellipsoid(
    K: Body, x: np.ndarray, lambda0: Optional[float] = None, tol: float = 1e-7
) -> Ellipsoid:
    """Ellipsoid centered at x with M^{4λ₀}(x) ⊆ E ⊆ M^{4λ₀√d}(x)."""
    return sandwiched_ellipsoid(K, x, lambda0=lambda0, tol=tol).ellipsoid


# ---------------------------------------------------------------------------
# Caps
# ---------------------------------------------------------------------------


def _slab_volume(
    P: HPolytope,
    u: np.ndarray,
    level: float,
    width: float,
    samples: int,
    seed: int,
    radius: float,
) -> tuple[float, float]:
    d = P.dim
    if width <= 0:
        return 0.0, 0.0
    half = math.sqrt(max(radius**2 - level**2, 0.0)) if level >= 0 else radius
    if half <= 0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    heights = level + width * rng.random(samples)
    lateral = rng.uniform(-half, half, size=(samples, d - 1))
    points = heights[:, None] * u + lateral @ orthonormal_complement(u)
    inside = np.all(points @ P.A.T <= P.b, axis=1)
    box_volume = width * (2.0 * half) ** (d - 1)
    p_hat = float(inside.mean())
    return box_volume * p_hat, box_volume * math.sqrt(p_hat * (1.0 - p_hat) / samples)


def cap_volume(
    cap: Cap, samples: int = 10_000, seed: int = 0, radius: Optional[float] = None
) -> tuple[float, float]:
    """Monte-Carlo volume of a cap.

    Samples a box aligned with the cap direction: the slab between the cut
    and the apex hyperplane times a cube bounding the slab's cross-section
    inside the ball of ``radius`` (by default the body's outer radius).

    Returns:
        (estimate, binomial standard error)
    """
    radius = outer_radius(cap.body) if radius is None else radius
    return _slab_volume(
        cap.body, cap.direction, cap.level, cap.width, samples, seed, radius
    )


def _candidate_directions(P: HPolytope, x: np.ndarray, n_random: int, seed: int) -> np.ndarray:
    d = P.dim
    slack = P.slack(x)
    order = np.argsort(slack, kind="stable")[: 3 * d]
    dirs = [P.A[i] for i in order]
    norm = float(np.linalg.norm(x))
    if norm > ABS_TOL:
        dirs.append(x / norm)
    rng = np.random.default_rng(seed)
    random_dirs = rng.standard_normal((n_random, d))
    random_dirs /= np.linalg.norm(random_dirs, axis=1, keepdims=True)
    return np.vstack([np.array(dirs), random_dirs]) if n_random else np.array(dirs)


def approx_min_cap(
    K: Body,
    x: np.ndarray,
    *,
    samples: int = 10_000,
    n_random: int = 50,
    seed: int = 0,
    delta0: Optional[float] = None,
) -> Cap:
    """Approximate minimum-volume cap whose base passes through x.

    Candidates are the normals of the 3d facets closest to x, the radial
    direction and ``n_random`` random directions. Among candidates whose width
    is within a factor 4 of the narrowest, the smallest Monte-Carlo volume
    wins; the first one wins ties.

    Raises:
        OutOfRegimeError: If ``delta0`` is given and x is deeper than it
    """
    P = _polytope(K)
    x = np.asarray(x, dtype=float)
    slack = _interior_slack(P, x)
    if delta0 is not None and float(slack.min()) > delta0:
        raise OutOfRegimeError(
            "Point is too deep for minimal-cap guarantees",
            details={"delta": float(slack.min()), "delta0": delta0},
        )
    dirs = _candidate_directions(P, x, n_random, seed)
    levels = dirs @ x
    tops = support_many(P, dirs)
    widths = np.maximum(tops - levels, 0.0)
    eligible = np.flatnonzero(widths <= 4.0 * widths.min() + ABS_TOL)

    radius = outer_radius(P)
    best: Optional[int] = None
    best_volume = math.inf
    for i in eligible:
        volume, _ = _slab_volume(
            P, dirs[i], float(levels[i]), float(widths[i]), samples, seed, radius
        )
        if volume < best_volume:
            best, best_volume = int(i), volume
    assert best is not None
    return Cap.from_direction(P, dirs[best], float(levels[best]))


def cap_expand(C: Cap, rho: float) -> Cap:
    """C^ρ: the cut moved to distance ρ·width from the apex hyperplane, clamped to K."""
    if rho < 0:
        raise PreconditionError("Expansion factor must be non-negative", details={"rho": rho})
    u = C.direction
    top = C.support_value
    body_width = top + float(support_many(C.body, -u[None, :])[0])
    width = min(rho * C.width, body_width)
    return Cap(
        body=C.body,
        cut=Halfspace(normal=C.cut.normal, offset=-(top - width)),
        width=width,
        apex=C.apex,
    )


def distance_profile(
    K: Body, x: np.ndarray, *, samples: int = 10_000, n_random: int = 50, seed: int = 0
) -> DistanceProfile:
    """δ(x), ray(x), an approximate width(x) and v(x) for an interior x ≠ O."""
    P = _polytope(K)
    x = np.asarray(x, dtype=float)
    slack = _interior_slack(P, x)
    norm = float(np.linalg.norm(x))
    if norm <= ABS_TOL:
        raise PreconditionError("Ray distance is undefined at the origin")
    ray_dist, _ = ray_exit(P, Ray(origin=x, direction=x / norm))
    cap = approx_min_cap(P, x, samples=samples, n_random=n_random, seed=seed)
    volume, error = cap_volume(cap, samples=samples, seed=seed)
    return DistanceProfile(
        delta=float(slack.min()),
        ray_dist=float(ray_dist),
        width=float(cap.width),
        cap_volume_estimate=volume,
        cap_volume_error=error,
    )
