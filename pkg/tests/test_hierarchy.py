"""Tests for the layered DAG construction."""

import itertools
from dataclasses import replace

import numpy as np
import pytest

from src.macbeath_dag import hierarchy
from src.macbeath_dag.config import HierarchyConfig
from src.macbeath_dag.exceptions import (
    InputError,
    InvariantViolation,
    OutOfRegimeError,
    PreconditionError,
)
from src.macbeath_dag.bodies import hypercube, random_halfspaces
from src.macbeath_dag.canonical import canonicalize
from src.macbeath_dag.geom_core import (
    Ellipsoid,
    HPolytope,
    ellipsoids_hit,
    erode,
    interiors_intersect,
    ray_exit_many,
)
from src.macbeath_dag.hierarchy import (
    NO_FACET,
    DagNode,
    DagParams,
    LayeredDag,
    LevelPacker,
    build,
    cone_overlap,
    direction_stream,
    dump_dag,
    edge_directions,
    estimate_dag_nodes,
    estimate_level_count,
    estimate_level_size,
    leaf_target,
    leaf_witnesses,
    load_dag,
    pack_level,
    practical_delta0,
    random_directions,
    strict_delta0,
)
from src.macbeath_dag.macbeath import macbeath_region, practical_lambda0


class TestDagParams:
    """Test cases for level parameters."""

    def test_constants(self):
        """Test the depth formulas."""
        assert strict_delta0(0.5, 2) == pytest.approx(0.5 * (0.25 / 8.0) ** 2)
        assert practical_delta0(0.6) == pytest.approx(0.05)
        assert practical_delta0(0.24) == pytest.approx(0.02)
        assert leaf_target(0.6, 0.25, 2) == pytest.approx(0.36 * 0.25 / 56.0)

    def test_level_count(self):
        """Test ℓ for the square with eps = 0.25."""
        params = DagParams.compute(0.6, 0.25, 2)

        assert params.delta0 == pytest.approx(0.05)
        assert params.ell == 5
        assert params.delta(params.ell) <= leaf_target(0.6, 0.25, 2)
        assert params.delta(params.ell - 1) > leaf_target(0.6, 0.25, 2)

    def test_halving_eps_adds_one_level(self):
        """Test that each halving of eps adds exactly one level."""
        ells = [DagParams.compute(0.6, eps, 2).ell for eps in (0.4, 0.2, 0.1, 0.05)]

        assert [b - a for a, b in zip(ells, ells[1:])] == [1, 1, 1]

    def test_lambda0_override(self):
        """Test that an explicit lambda0 replaces the default."""
        assert DagParams.compute(0.6, 0.25, 2, lambda0=0.1).lambda0 == 0.1
        assert DagParams.compute(0.6, 0.25, 4).lambda0 == pytest.approx(0.025)

    def test_dict_round_trip(self):
        """Test serialization of parameters."""
        params = DagParams.compute(0.6, 0.25, 2, strict=True)

        assert DagParams.from_dict(params.to_dict()) == params

    def test_from_dict_malformed(self):
        """Test that missing fields are an input error."""
        with pytest.raises(InputError):
            DagParams.from_dict({"dim": 2})


class TestPacking:
    """Test cases for candidate streams and level packing."""

    def test_direction_stream(self):
        """Test that streams are unit length and reproducible."""
        a = direction_stream(3, 100, 7)
        b = direction_stream(3, 100, 7)

        assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
        assert np.array_equal(a, b)

    def test_random_directions(self):
        """Test that random directions are unit length."""
        assert np.allclose(np.linalg.norm(random_directions(2, 50, [1, 2]), axis=1), 1.0)

    def test_estimate_grows_as_depth_shrinks(self):
        """Test the level size estimate."""
        assert estimate_level_size(2, 0.01, 0.05) > estimate_level_size(2, 0.04, 0.05)

    def test_packer_rejects_overlap(self, square):
        """Test that a point whose region overlaps a kept one is refused."""
        packer = LevelPacker(square, 0.1)

        assert packer.offer(np.array([0.25, 0.0]))
        assert not packer.offer(np.array([0.25, 0.001]))
        assert packer.offer(np.array([-0.25, 0.0]))
        assert len(packer) == 2

    def test_pack_level_on_eroded_boundary(self, square_body, small_config):
        """Test that centers lie on ∂K(Δ) with pairwise disjoint regions."""
        delta = 0.05
        centers = pack_level(square_body, delta, 0.15, seed=3, config=small_config)

        assert len(centers) > 4
        for c in centers:
            assert float(square_body.body.slack(c).min()) == pytest.approx(delta, abs=1e-9)
        regions = [macbeath_region(square_body, c, 0.15).region for c in centers]
        for a, b in itertools.combinations(regions, 2):
            assert not interiors_intersect(a, b)


def _eroded_boundary(K, delta, dirs):
    t, _ = ray_exit_many(erode(K, delta), np.zeros(K.dim), dirs)
    return t[:, None] * dirs


class TestLevelEstimates:
    """Test cases for level size estimates on polytopes."""

    def test_square_matches_edge_integral(self, square):
        """Test the square against 4·ln(0.3/Δ)/λ regions."""
        expected = 4.0 * np.log(0.3 / 0.05) / 0.1

        estimate = estimate_level_count(square, 0.05, 0.1)

        assert 0.8 * expected <= estimate <= 1.25 * expected

    def test_cube_matches_facet_integral(self):
        """Test the cube against 6·ln²(0.3/Δ)/λ² regions."""
        cube = HPolytope.box(-0.3 * np.ones(3), 0.3 * np.ones(3))
        expected = 6.0 * np.log(0.3 / 0.03) ** 2 / 0.13**2

        estimate = estimate_level_count(cube, 0.03, 0.13)

        assert 0.5 * expected <= estimate <= 2.0 * expected

    def test_cube_far_below_ball_formula_when_deep(self):
        """Test that flat facets need far fewer regions than a ball at small depth."""
        cube = HPolytope.box(-0.3 * np.ones(3), 0.3 * np.ones(3))

        estimate = estimate_level_count(cube, 1e-4, 0.13)

        assert estimate < estimate_level_size(3, 1e-4, 0.13) / 5

    def test_high_dimension_uses_ball_formula(self):
        """Test that d = 4 falls back to the ball formula."""
        cube = HPolytope.box(-0.25 * np.ones(4), 0.25 * np.ones(4))

        assert estimate_level_count(cube, 0.01, 0.05) == estimate_level_size(4, 0.01, 0.05)

    def test_dag_estimate_per_level(self, square_body):
        """Test one estimate per level, growing with depth."""
        params = DagParams.compute(square_body.gamma, 0.25, 2, lambda0=0.15)

        counts = estimate_dag_nodes(square_body.body, params)

        assert len(counts) == params.ell + 1
        assert counts[-1] > counts[0]

    def test_practical_lambda0_shrinks_three_dimensional_levels(self):
        """Test that d = 3 levels at the practical λ₀ are a fraction of the default ones."""
        cube = HPolytope.box(-0.3 * np.ones(3), 0.3 * np.ones(3))

        default = estimate_level_count(cube, 0.01, DagParams.compute(0.6, 0.5, 3).lambda0)
        practical = estimate_level_count(cube, 0.01, practical_lambda0(3))

        assert practical < default / 10


class TestThreeDimensionalPacking:
    """Test cases for the separating-axis packer in d = 3."""

    def setup_method(self):
        """Set up test fixtures."""
        self.cube = HPolytope.box(-0.3 * np.ones(3), 0.3 * np.ones(3))

    def test_edge_directions_of_central_region(self):
        """Test that the region about the center of a cube has the three axes as edges."""
        x = np.zeros(3)
        region = macbeath_region(self.cube, x, 0.2).region
        reach = 0.2 * self.cube.slack(x)

        dirs = edge_directions(self.cube.A, region.vertices() - x, reach)

        axes = np.unique(np.round(np.abs(dirs), 9), axis=0)
        assert np.array_equal(axes, np.eye(3)[::-1])

    def test_decisions_match_lp(self):
        """Test packer decisions against the LP on random nearby pairs."""
        K = random_halfspaces(3, k=24, seed=5)
        lam = practical_lambda0(3)
        rng = np.random.default_rng(11)
        u = random_directions(3, 60, 21)
        v = u + 0.12 * rng.standard_normal(u.shape)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        xs = _eroded_boundary(K, 0.02, u)
        ys = _eroded_boundary(K, 0.02, v)

        outcomes = []
        for x, y in zip(xs, ys):
            packer = LevelPacker(K, lam)
            packer.offer(x)
            expected = not interiors_intersect(
                macbeath_region(K, x, lam).region, macbeath_region(K, y, lam).region
            )
            assert packer.is_disjoint(y) == expected
            outcomes.append(expected)

        assert any(outcomes) and not all(outcomes)

    def test_midpoint_rejects_without_exact_check(self):
        """Test that a nearby point on the same facet is refused by the midpoint test."""
        packer = LevelPacker(self.cube, 0.13)

        assert packer.offer(np.array([0.27, 0.0, 0.0]))
        assert not packer.offer(np.array([0.27, 0.01, 0.0]))
        assert packer.exact_checks == 0

    @pytest.mark.slow
    def test_top_level_of_canonical_cube(self):
        """Test a packed top level of the canonical cube at the practical λ₀."""
        K = canonicalize(hypercube(3))
        params = DagParams.compute(K.gamma, 0.5, 3, lambda0=practical_lambda0(3))
        delta = params.delta0

        centers = pack_level(K, delta, params.lambda0, seed=2)

        assert len(centers) > 20
        for c in centers:
            assert float(K.body.slack(c).min()) == pytest.approx(delta, abs=1e-9)
        stack = np.array(centers)
        for i, c in enumerate(stack[:200]):
            nearest = np.argsort(np.linalg.norm(stack - c, axis=1))[1:4]
            for j in nearest:
                assert not interiors_intersect(
                    macbeath_region(K.body, c, params.lambda0).region,
                    macbeath_region(K.body, stack[j], params.lambda0).region,
                )
        estimate = estimate_level_count(K.body, delta, params.lambda0)
        assert 0.3 * estimate <= len(centers) <= 3.0 * estimate


class TestLinking:
    """Test cases for cone overlap."""

    def test_same_direction(self):
        """Test two ellipsoids on one ray."""
        assert cone_overlap(Ellipsoid.ball([1.0, 0.0], 0.1), Ellipsoid.ball([2.0, 0.0], 0.1))

    def test_opposite_directions(self):
        """Test ellipsoids on opposite sides of the origin."""
        assert not cone_overlap(Ellipsoid.ball([1.0, 0.0], 0.1), Ellipsoid.ball([-1.0, 0.0], 0.1))

    def test_origin_inside(self):
        """Test that an ellipsoid around the origin is refused."""
        with pytest.raises(PreconditionError):
            cone_overlap(Ellipsoid.ball([0.0, 0.0], 0.5), Ellipsoid.ball([1.0, 0.0], 0.1))


class TestLeafWitnesses:
    """Test cases for leaf witness selection."""

    def setup_method(self):
        """Set up test fixtures."""
        center = np.array([0.28, 0.0])
        self.leaf = DagNode(
            level=0, index=0, center=center, ellipsoid=Ellipsoid.ball(center, 0.005)
        )

    def test_facets_mode(self, square):
        """Test that the near facet is among the witnesses."""
        witnesses, indices = leaf_witnesses(square, self.leaf, samples=500, n_random=10)

        assert 0 in indices
        assert len(witnesses) == len(indices) <= 2

    def test_supporting_mode(self, square):
        """Test that supporting mode returns one non-facet halfspace."""
        witnesses, indices = leaf_witnesses(square, self.leaf, mode="supporting", samples=5000)

        assert indices == [NO_FACET]
        assert witnesses[0].normal @ np.array([1.0, 0.0]) > 0.99

    def test_eligible_mask(self, square):
        """Test that facets outside the mask are never chosen when an eligible one is tight."""
        eligible = np.array([True, False, False, False])

        _, indices = leaf_witnesses(square, self.leaf, samples=500, n_random=0, eligible=eligible)

        assert indices == [0]

    def test_delta0_accepts_shallow_leaf(self, square):
        """Test that a leaf shallower than delta0 gets its witnesses."""
        _, indices = leaf_witnesses(square, self.leaf, samples=500, n_random=0, delta0=0.05)

        assert indices == [0]

    def test_delta0_refuses_deep_leaf(self, square):
        """Test that a leaf deeper than delta0 has no minimal-cap guarantee."""
        center = np.array([0.1, 0.0])
        deep = DagNode(level=0, index=0, center=center, ellipsoid=Ellipsoid.ball(center, 0.01))

        with pytest.raises(OutOfRegimeError):
            leaf_witnesses(square, deep, samples=500, n_random=0, delta0=0.05)


class TestBuild:
    """Test cases for building the DAG."""

    def test_level_structure(self, polygon_dag):
        """Test ℓ + 1 nonempty levels with children and leaf witnesses."""
        dag = polygon_dag

        assert len(dag.levels) == dag.params.ell + 1
        assert all(dag.level_sizes)
        for level in dag.levels[:-1]:
            for node in level:
                assert node.children
                assert max(node.children) < len(dag.levels[node.level + 1])
        for leaf in dag.leaves:
            assert leaf.is_leaf
            assert all(-1 <= i < 16 for i in leaf.witness_indices)

    def test_nodes_lie_on_eroded_boundaries(self, polygon_dag, polygon_body):
        """Test that every level-i center is at depth Δ_i."""
        for i, level in enumerate(polygon_dag.levels):
            depths = [float(polygon_body.body.slack(n.center).min()) for n in level]
            assert np.allclose(depths, polygon_dag.params.delta(i), atol=1e-9)

    def test_levels_cover_directions(self, polygon_dag):
        """Test that every sampled ray from O meets some ellipsoid at every level."""
        dirs = random_directions(2, 500, 99)

        for i in range(len(polygon_dag.levels)):
            centers, shapes = polygon_dag.level_arrays(i)
            hits = ellipsoids_hit(centers, shapes, np.zeros(2), dirs)
            assert hits.any(axis=0).all()

    def test_origin_outside_every_ellipsoid(self, polygon_dag):
        """Test that no ellipsoid contains the origin."""
        for level in polygon_dag.levels:
            for node in level:
                assert node.ellipsoid.gauge(np.zeros(2)) > 1.0

    def test_stats(self, polygon_dag):
        """Test summary statistics."""
        stats = polygon_dag.stats()

        assert stats["node_count"] == sum(stats["level_sizes"])
        assert stats["leaf_count"] == stats["level_sizes"][-1]
        assert stats["max_fanout"] >= 1

    def test_dict_round_trip(self, polygon_dag):
        """Test that serialization keeps nodes, children and witnesses."""
        restored = LayeredDag.from_dict(polygon_dag.to_dict())

        assert restored.level_sizes == polygon_dag.level_sizes
        assert restored.params == polygon_dag.params
        for a, b in zip(restored.levels[0], polygon_dag.levels[0]):
            assert a.children == b.children
        for a, b in zip(restored.leaves, polygon_dag.leaves):
            assert a.witness_indices == b.witness_indices
            assert np.allclose(a.ellipsoid.shape, b.ellipsoid.shape)

    def test_dump_and_load(self, polygon_dag, tmp_path):
        """Test writing and reading a DAG file."""
        path = dump_dag(polygon_dag, tmp_path / "dag.json")

        assert load_dag(path).node_count == polygon_dag.node_count

    def test_from_dict_wrong_level_count(self, polygon_dag):
        """Test that a document with missing levels is refused."""
        data = polygon_dag.to_dict()
        data["levels"] = data["levels"][:-1]

        with pytest.raises(InputError):
            LayeredDag.from_dict(data)

    def test_eps_out_of_range(self, square_body):
        """Test that eps must lie in (0, 1]."""
        with pytest.raises(InputError):
            build(square_body, 0.0)
        with pytest.raises(InputError):
            build(square_body, 1.5)

    def test_lambda0_too_large_for_dimension(self, square_body):
        """Test that 4·λ₀·√d must not exceed 1."""
        with pytest.raises(InputError):
            build(square_body, 0.5, HierarchyConfig(lambda0=0.2))

    def test_invalid_config(self):
        """Test config validation."""
        with pytest.raises(ValueError):
            HierarchyConfig(witness_mode="vertices")
        with pytest.raises(ValueError):
            HierarchyConfig(lambda0=0.5)

    def test_supporting_witnesses(self, square_body, small_config):
        """Test that supporting mode stores only non-facet witnesses."""
        dag = build(square_body, 1.0, replace(small_config, witness_mode="supporting"))

        assert all(leaf.witness_indices == [NO_FACET] for leaf in dag.leaves)

    def test_every_node_certifies(self, polygon_dag):
        """Test that each recorded ellipsoid sits inside M^{4λ₀√d} of its center."""
        for level in polygon_dag.levels:
            for node in level:
                assert node.sandwich_factor is not None
                assert node.certified
        assert polygon_dag.uncertified == []
        assert polygon_dag.stats()["uncertified_nodes"] == 0

    def test_sandwich_factor_round_trip(self, polygon_dag):
        """Test that the recorded factor survives serialization."""
        restored = LayeredDag.from_dict(polygon_dag.to_dict())

        for a, b in zip(restored.levels[0], polygon_dag.levels[0]):
            assert a.sandwich_factor == pytest.approx(b.sandwich_factor)

    def test_require_certified(self, square_body, small_config, monkeypatch):
        """Test that a failed certificate stops the build when required."""
        monkeypatch.setattr(hierarchy, "sandwich_bound", lambda dim: 0.5)

        with pytest.raises(InvariantViolation):
            build(square_body, 1.0, replace(small_config, require_certified=True))

    def test_failed_certificate_is_recorded(self, square_body, small_config, monkeypatch):
        """Test that without the requirement failed nodes are listed, not raised."""
        monkeypatch.setattr(hierarchy, "sandwich_bound", lambda dim: 0.5)

        dag = build(square_body, 1.0, small_config)

        assert len(dag.uncertified) == dag.node_count


class TestDagNode:
    """Test cases for node certificates."""

    def test_factor_above_bound(self):
        """Test that a factor past √d marks the node uncertified."""
        center = np.array([0.2, 0.0])
        node = DagNode(
            level=0,
            index=0,
            center=center,
            ellipsoid=Ellipsoid.ball(center, 0.01),
            sandwich_factor=2.0,
        )

        assert not node.certified

    def test_unknown_factor(self):
        """Test that nodes without a recorded factor count as certified."""
        center = np.array([0.2, 0.0])
        node = DagNode(level=0, index=0, center=center, ellipsoid=Ellipsoid.ball(center, 0.01))

        assert node.certified
        assert "sandwich_factor" not in node.to_dict()
