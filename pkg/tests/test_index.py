"""Tests for the polytope index in the input frame."""

import numpy as np
import pytest

from src.macbeath_dag.bodies import ball_like
from src.macbeath_dag.exceptions import InputError
from src.macbeath_dag.geom_core import HPolytope
from src.macbeath_dag.hierarchy import random_directions
from src.macbeath_dag.index import PolytopeIndex
from src.macbeath_dag.oracle import dist_to_polytope
from src.macbeath_dag.query import Membership

SHIFT = np.array([3.0, -1.0])
EPS = 0.25


@pytest.fixture(scope="module")
def shifted_polygon():
    """16-gon of inradius 2 centered at (3, -1)."""
    base = ball_like(2, k=16)
    return HPolytope(base.A, 4.0 * base.b + base.A @ SHIFT)


@pytest.fixture(scope="module")
def index(shifted_polygon, small_config):
    """Index over the shifted polygon."""
    return PolytopeIndex.build(shifted_polygon, EPS, small_config)


class TestPolytopeIndex:
    """Test cases for PolytopeIndex."""

    def test_center(self, index):
        """Test that rays start at the polygon's center."""
        assert np.allclose(index.center, SHIFT, atol=1e-3)

    def test_ray_shoot_in_input_frame(self, index, shifted_polygon):
        """Test residual and relative distance of answers."""
        diameter = 2.0 * 2.0 / np.cos(np.pi / 16)

        for u in random_directions(2, 50, 11):
            answer = index.ray_shoot_direction(u)

            assert answer.residual <= 1e-8
            assert dist_to_polytope(shifted_polygon, answer.point) <= EPS * diameter + 1e-6
            assert (answer.point - index.center) @ u > 0

    def test_membership(self, index):
        """Test an interior and a far point."""
        assert index.membership(SHIFT) == Membership.INSIDE
        assert index.membership(SHIFT + np.array([1.0, 0.5])) == Membership.INSIDE
        assert index.membership(SHIFT + np.array([10.0, 0.0])) == Membership.OUTSIDE

    def test_classify_carries_path_length(self, index):
        """Test that classify answers in the input frame with the descent length."""
        result, answer = index.classify(SHIFT + np.array([10.0, 0.0]))

        assert result == Membership.OUTSIDE
        assert answer.path_length == len(index.dag.levels)
        assert index.classify(index.center) == (Membership.INSIDE, None)

    def test_stats(self, index):
        """Test that stats carry both eps values and the DAG summary."""
        stats = index.stats()

        assert stats["dim"] == 2
        assert stats["eps"] == EPS
        assert 0 < stats["eps_canonical"] <= 1.0
        assert stats["node_count"] == sum(stats["level_sizes"])

    def test_save_and_load(self, index, tmp_path):
        """Test that a reloaded index gives the same answers."""
        path = index.save(tmp_path / "index.json")

        restored = PolytopeIndex.load(path)

        for u in random_directions(2, 10, 4):
            assert np.allclose(
                restored.ray_shoot_direction(u).point, index.ray_shoot_direction(u).point
            )

    @pytest.mark.parametrize("eps", [0.0, 1.5])
    def test_eps_out_of_range(self, shifted_polygon, eps):
        """Test that eps must lie in (0, 1]."""
        with pytest.raises(InputError):
            PolytopeIndex.build(shifted_polygon, eps)

    def test_from_dict_malformed(self):
        """Test that a malformed document is an input error."""
        with pytest.raises(InputError):
            PolytopeIndex.from_dict({"eps": 0.1})

    def test_load_non_object(self, tmp_path):
        """Test that a JSON file without an object is refused."""
        path = tmp_path / "index.json"
        path.write_text("[1, 2, 3]")

        with pytest.raises(InputError):
            PolytopeIndex.load(path)
