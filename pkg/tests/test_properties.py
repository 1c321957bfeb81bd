"""Randomized tests of the cap, Macbeath region and distance relations the DAG relies on."""

import numpy as np
import pytest

from src.macbeath_dag.bodies import random_halfspaces
from src.macbeath_dag.canonical import canonicalize
from src.macbeath_dag.geom_core import (
    Cap,
    HPolytope,
    erode,
    interiors_intersect,
    ray_exit_many,
    support,
)
from src.macbeath_dag.hierarchy import strict_delta0
from src.macbeath_dag.macbeath import (
    approx_min_cap,
    cap_expand,
    cap_volume,
    macbeath_region,
    sandwich_bound,
)
from src.macbeath_dag.oracle import poly_contains_poly

SHRUNKEN = 0.2


@pytest.fixture(scope="module")
def solid_body():
    """Canonical form of a random 3-D polytope."""
    return canonicalize(random_halfspaces(3, k=16, seed=2))


def _interior_points(P: HPolytope, n: int, rng) -> np.ndarray:
    points: list[np.ndarray] = []
    while len(points) < n:
        batch = rng.uniform(-0.5, 0.5, size=(4 * n, P.dim))
        keep = np.all(batch @ P.A.T < P.b - 1e-6, axis=1) & (np.linalg.norm(batch, axis=1) > 1e-3)
        points.extend(batch[keep])
    return np.array(points[:n])


def _point_in(region: HPolytope, rng) -> np.ndarray:
    vertices = region.vertices()
    return rng.dirichlet(np.ones(len(vertices))) @ vertices


def _unit(rng, dim: int) -> np.ndarray:
    u = rng.standard_normal(dim)
    return u / np.linalg.norm(u)


def _cap_of_width(P: HPolytope, u: np.ndarray, width: float) -> Cap:
    return Cap.from_direction(P, u, support(P, u) - width)


def _random_cap(P: HPolytope, rng, low: float = 0.05, high: float = 0.3) -> Cap:
    u = _unit(rng, P.dim)
    extent = support(P, u) + support(P, -u)
    return _cap_of_width(P, u, rng.uniform(low, high) * extent)


def _delta(P: HPolytope, x: np.ndarray) -> float:
    return float(P.slack(x).min())


class TestRegionOverlap:
    """Test cases for overlapping shrunken Macbeath regions."""

    @pytest.mark.parametrize("body", ["polygon_body", "solid_body"])
    def test_overlap_implies_containment(self, body, request):
        """Test that overlapping M^{1/5}(x), M^{1/5}(y) give M^{1/5}(y) ⊆ M^{4/5}(x)."""
        P = request.getfixturevalue(body).body
        rng = np.random.default_rng(31)
        checked = 0
        for x in _interior_points(P, 150, rng):
            y = _point_in(macbeath_region(P, x, 2 * SHRUNKEN).region, rng)
            small_x = macbeath_region(P, x, SHRUNKEN).region
            small_y = macbeath_region(P, y, SHRUNKEN).region
            if not interiors_intersect(small_x, small_y):
                continue
            checked += 1

            assert poly_contains_poly(macbeath_region(P, x, 4 * SHRUNKEN).region, small_y)

        assert checked >= 50

    def test_shrunken_region_is_mutual(self, polygon_body):
        """Test that x′ ∈ M^{1/5}(x) gives x ∈ M^{1/4}(x′)."""
        P = polygon_body.body
        rng = np.random.default_rng(32)
        for x in _interior_points(P, 100, rng):
            x_prime = _point_in(macbeath_region(P, x, SHRUNKEN).region, rng)

            assert macbeath_region(P, x_prime, 0.25).contains(x)

    @pytest.mark.parametrize("body", ["polygon_body", "solid_body"])
    def test_depth_within_shrunken_region(self, body, request):
        """Test 4δ(x)/5 ≤ δ(x′) ≤ 4δ(x)/3 for x′ ∈ M^{1/5}(x)."""
        P = request.getfixturevalue(body).body
        rng = np.random.default_rng(33)
        for x in _interior_points(P, 100, rng):
            x_prime = _point_in(macbeath_region(P, x, SHRUNKEN).region, rng)
            delta, delta_prime = _delta(P, x), _delta(P, x_prime)

            assert 0.8 * delta - 1e-12 <= delta_prime <= 4.0 * delta / 3.0 + 1e-12


class TestCapRegions:
    """Test cases for Macbeath regions against caps."""

    @pytest.mark.parametrize("lam", [0.2, 0.5, 1.0])
    def test_region_of_cap_point_in_expansion(self, polygon_body, lam):
        """Test that x ∈ C gives M^λ(x) ⊆ C^{1+λ} for λ ≤ 1."""
        P = polygon_body.body
        rng = np.random.default_rng(41)
        for _ in range(100):
            cap = _random_cap(P, rng)
            x = _point_in(cap.as_polytope(), rng)

            expanded = cap_expand(cap, 1.0 + lam).as_polytope()
            assert poly_contains_poly(expanded, macbeath_region(P, x, lam).region)

    def test_large_region_clipped_to_body(self, polygon_body):
        """Test that x ∈ C gives M^λ(x) ∩ K ⊆ C^{1+λ} for λ = 3."""
        P = polygon_body.body
        rng = np.random.default_rng(42)
        for _ in range(100):
            cap = _random_cap(P, rng, high=0.15)
            x = _point_in(cap.as_polytope(), rng)
            clipped = macbeath_region(P, x, 3.0).region.with_halfspaces(P.halfspaces)

            assert poly_contains_poly(cap_expand(cap, 4.0).as_polytope(), clipped)

    @pytest.mark.parametrize("body", ["polygon_body", "solid_body"])
    def test_touching_shrunken_region_in_doubled_cap(self, body, request):
        """Test that C ∩ M^{1/5}(x) ≠ ∅ gives M^{1/5}(x) ⊆ C²."""
        P = request.getfixturevalue(body).body
        rng = np.random.default_rng(43)
        checked = 0
        for x in _interior_points(P, 200, rng):
            cap = _random_cap(P, rng)
            region = macbeath_region(P, x, SHRUNKEN).region
            if not interiors_intersect(cap.as_polytope(), region):
                continue
            checked += 1

            assert poly_contains_poly(cap_expand(cap, 2.0).as_polytope(), region)

        assert checked >= 30


class TestDistances:
    """Test cases for δ, ray distance and cap width."""

    @pytest.mark.parametrize("body", ["polygon_body", "solid_body"])
    def test_ray_distance_bounds(self, body, request):
        """Test δ(x) ≤ ray(x) ≤ δ(x)/γ on 1000 random points."""
        K = request.getfixturevalue(body)
        P = K.body
        points = _interior_points(P, 1000, np.random.default_rng(51))
        norms = np.linalg.norm(points, axis=1)
        exits, _ = ray_exit_many(P, np.zeros(P.dim), points / norms[:, None])
        ray = exits - norms
        delta = np.min(P.b[None, :] - points @ P.A.T, axis=1)

        assert np.all(delta <= ray + 1e-9)
        assert np.all(ray <= delta / K.gamma + 1e-9)

    def test_width_near_boundary(self, polygon_body):
        """Test δ(x) ≤ width(x) ≤ (2/γ)(3d+1)δ(x), with the factor 4 of the cap search."""
        K = polygon_body
        P = K.body
        d = P.dim
        delta0 = strict_delta0(K.gamma, d)
        rng = np.random.default_rng(52)
        for i in range(40):
            delta = rng.uniform(0.1, 1.0) * delta0
            u = _unit(rng, d)
            t, _ = ray_exit_many(erode(P, delta), np.zeros(d), u[None, :])
            x = t[0] * u

            cap = approx_min_cap(P, x, samples=1000, n_random=10, seed=i)

            assert cap.width >= delta - 1e-9
            assert cap.width <= 4.0 * (2.0 / K.gamma) * (3 * d + 1) * delta

    def test_depth_falls_along_rays(self, polygon_body):
        """Test that δ strictly decreases from ∂K(γ/2) outwards along rays from O."""
        K = polygon_body
        P = K.body
        rng = np.random.default_rng(53)
        inner = erode(P, 0.45 * K.gamma)
        for _ in range(100):
            u = _unit(rng, P.dim)
            start, _ = ray_exit_many(inner, np.zeros(P.dim), u[None, :])
            end, _ = ray_exit_many(P, np.zeros(P.dim), u[None, :])
            ts = np.linspace(start[0], end[0], 50)
            depths = np.min(P.b[None, :] - np.outer(ts, u) @ P.A.T, axis=1)

            assert np.all(np.diff(depths) < 0)

    def test_nested_cap_widths(self, polygon_body):
        """Test width(C₁) ≤ 2·width(C₂)/γ, and ≤ width(C₂)/γ when O ∉ C₁, for C₁ ⊆ C₂."""
        K = polygon_body
        P = K.body
        rng = np.random.default_rng(54)
        checked = 0
        for _ in range(100):
            inner = _random_cap(P, rng, high=0.2)
            v = inner.direction + 0.6 * _unit(rng, P.dim)
            v /= np.linalg.norm(v)
            level = float((inner.as_polytope().vertices() @ v).min()) - rng.uniform(0.0, 0.05)
            if level <= -support(P, -v):
                continue
            outer = Cap.from_direction(P, v, level)
            checked += 1

            assert inner.width <= 2.0 * outer.width / K.gamma + 1e-9
            if inner.level > 0:
                assert inner.width <= outer.width / K.gamma + 1e-9

        assert checked >= 50

    def test_projection_to_apex_hyperplane(self, polygon_body):
        """Test ‖yy′‖ ≤ 2·width(C)/γ for y in a thin cap and y′ on Oy in the apex hyperplane."""
        K = polygon_body
        P = K.body
        delta0 = strict_delta0(K.gamma, P.dim)
        rng = np.random.default_rng(55)
        for _ in range(100):
            cap = _cap_of_width(P, _unit(rng, P.dim), rng.uniform(0.1, 1.0) * delta0)
            y = _point_in(cap.as_polytope(), rng)
            y_prime = cap.support_value / float(cap.direction @ y) * y

            assert np.linalg.norm(y_prime - y) <= 2.0 * cap.width / K.gamma + 1e-12


@pytest.mark.slow
class TestCapVolumes:
    """Test cases for Monte-Carlo cap volume relations."""

    @pytest.mark.parametrize("rho", [1.5, 2.0, 4.0])
    def test_expansion_volume(self, polygon_body, rho):
        """Test vol(C^ρ) ≤ ρ^d·vol(C) within three standard errors."""
        P = polygon_body.body
        d = P.dim
        rng = np.random.default_rng(61)
        for i in range(100):
            cap = _random_cap(P, rng)
            volume, error = cap_volume(cap, samples=4000, seed=i)
            expanded, expanded_error = cap_volume(cap_expand(cap, rho), samples=4000, seed=i)

            assert expanded <= rho**d * volume + 3.0 * (expanded_error + rho**d * error)

    def test_min_cap_volume_within_shrunken_region(self, polygon_body):
        """Test v(x)/2^d ≤ v(x′) ≤ 2^d·v(x) for x′ ∈ M^{1/5}(x), within three standard errors."""
        P = polygon_body.body
        factor = 2.0**P.dim
        rng = np.random.default_rng(62)
        for i in range(20):
            u = _unit(rng, P.dim)
            t, _ = ray_exit_many(erode(P, rng.uniform(0.005, 0.05)), np.zeros(P.dim), u[None, :])
            x = t[0] * u
            x_prime = _point_in(macbeath_region(P, x, SHRUNKEN).region, rng)

            v, v_err = cap_volume(approx_min_cap(P, x, samples=4000, seed=i), samples=8000, seed=i)
            w, w_err = cap_volume(
                approx_min_cap(P, x_prime, samples=4000, seed=i), samples=8000, seed=i
            )

            assert w <= factor * v + 3.0 * (w_err + factor * v_err)
            assert v <= factor * w + 3.0 * (v_err + factor * w_err)


class TestNodeSandwich:
    """Test cases for the ellipsoid of every DAG node."""

    def test_every_node_sandwiched(self, polygon_dag, polygon_body):
        """Test M^{4λ₀}(x) ⊆ E ⊆ M^{4λ₀√d}(x) on every node, up to the measurement slack."""
        P = polygon_body.body
        inner = 4.0 * polygon_dag.params.lambda0
        outer = inner * sandwich_bound(P.dim)
        for level in polygon_dag.levels:
            for node in level:
                small = macbeath_region(P, node.center, inner).region
                large = macbeath_region(P, node.center, outer).region

                assert node.certified
                assert poly_contains_poly(node.ellipsoid, small)
                assert poly_contains_poly(large, node.ellipsoid)
