"""Catalog of test bodies and point sets used by benchmarks, tests and the CLI."""

import math
import re

import numpy as np

from .exceptions import InputError
from .geom_core import HPolytope

BALL_RADIUS = 0.5


def _unit(vectors: np.ndarray) -> np.ndarray:
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def _fibonacci_sphere(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    z = 1.0 - 2.0 * i / k
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def ball_like(d: int, k: int = 64, seed: int = 0) -> HPolytope:
    """k halfspaces tangent to the ball of radius 1/2 about the origin.

    Normals are evenly spaced on the circle for d = 2, on a Fibonacci sphere
    for d = 3 and random (plus ±eᵢ, which keeps the body bounded) otherwise.
    """
    if d < 2:
        raise InputError(f"Ball-like bodies need d >= 2, got {d}")
    if d == 2:
        angles = 2.0 * math.pi * np.arange(k) / k
        normals = np.column_stack([np.cos(angles), np.sin(angles)])
    elif d == 3:
        normals = _fibonacci_sphere(k)
    else:
        rng = np.random.default_rng(seed)
        extra = max(k - 2 * d, 0)
        normals = np.vstack([np.eye(d), -np.eye(d), _unit(rng.standard_normal((extra, d)))])
    return HPolytope(normals, np.full(len(normals), BALL_RADIUS))


def hypercube(d: int) -> HPolytope:
    return HPolytope.box(-0.5 * np.ones(d), 0.5 * np.ones(d))


def random_halfspaces(d: int, k: int = 32, seed: int = 0) -> HPolytope:
    """Random tangent-ish halfspaces at offsets in [0.3, 0.5], closed off by the cube."""
    rng = np.random.default_rng(seed)
    normals = _unit(rng.standard_normal((k, d)))
    offsets = rng.uniform(0.3, 0.5, size=k)
    return HPolytope(
        np.vstack([normals, np.eye(d), -np.eye(d)]),
        np.concatenate([offsets, np.full(2 * d, 0.5)]),
    )


def skewed(d: int, seed: int = 0) -> HPolytope:
    """A box stretched 4:1 along a random direction and shifted off the origin."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    scales = np.ones(d)
    scales[0] = 4.0
    linear = Q @ np.diag(scales)
    shift = rng.uniform(-1.0, 1.0, size=d)
    cube = hypercube(d)
    # a·x ≤ b with x = L⁻¹(y − s)
    normals = cube.A @ np.linalg.inv(linear)
    return HPolytope(normals, cube.b + normals @ shift)


_BALL_ID = re.compile(r"ball(\d+)$")


def make_body(body_id: str, d: int, seed: int = 0) -> HPolytope:
    """Body by catalog id: ``ball<k>``, ``cube``, ``random`` or ``skewed``."""
    match = _BALL_ID.match(body_id)
    if match:
        return ball_like(d, int(match.group(1)), seed)
    if body_id == "cube":
        return hypercube(d)
    if body_id == "random":
        return random_halfspaces(d, seed=seed)
    if body_id == "skewed":
        return skewed(d, seed)
    raise InputError(f"Unknown body id: {body_id}")


def uniform_points(n: int, d: int, seed: int = 0) -> np.ndarray:
    """n points uniform in the unit cube."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, d))


def clustered_points(n: int, d: int, seed: int = 0, clusters: int = 10, spread: float = 0.02) -> np.ndarray:
    """n points in Gaussian clusters around uniform centers of the unit cube."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(clusters, d))
    labels = rng.integers(0, clusters, size=n)
    return centers[labels] + spread * rng.standard_normal((n, d))


def make_points(distribution: str, n: int, d: int, seed: int = 0) -> np.ndarray:
    if distribution == "uniform":
        return uniform_points(n, d, seed)
    if distribution == "clustered":
        return clustered_points(n, d, seed)
    raise InputError(f"Unknown point distribution: {distribution}")
