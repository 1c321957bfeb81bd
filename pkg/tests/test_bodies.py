"""Tests for the catalog of bodies and point sets."""

import numpy as np
import pytest

from src.macbeath_dag.bodies import (
    ball_like,
    clustered_points,
    hypercube,
    make_body,
    make_points,
    random_halfspaces,
    skewed,
    uniform_points,
)
from src.macbeath_dag.exceptions import InputError
from src.macbeath_dag.geom_core import chebyshev_ball, contains


class TestBodies:
    """Test cases for body generators."""

    @pytest.mark.parametrize("d,k,expected", [(2, 16, 16), (3, 40, 40), (4, 20, 20)])
    def test_ball_like_is_tangent_to_half_ball(self, d, k, expected):
        """Test facet count and offsets."""
        P = ball_like(d, k=k)

        assert P.n_facets == expected
        assert np.allclose(P.b, 0.5)
        assert np.allclose(np.linalg.norm(P.A, axis=1), 1.0)

    def test_ball_like_needs_two_dimensions(self):
        """Test that d = 1 is refused."""
        with pytest.raises(InputError):
            ball_like(1)

    def test_hypercube(self):
        """Test the unit cube about the origin."""
        P = hypercube(3)

        assert P.n_facets == 6
        assert contains(P, np.full(3, 0.49))
        assert not contains(P, np.full(3, 0.51))

    def test_random_halfspaces_contain_origin(self):
        """Test that random bodies keep the origin interior."""
        P = random_halfspaces(2, k=10, seed=3)

        assert P.n_facets == 14
        assert np.all(P.b > 0)

    def test_skewed_is_bounded(self):
        """Test that the skewed box has an inscribed ball."""
        _, radius = chebyshev_ball(skewed(2, seed=1))

        assert radius == pytest.approx(0.5)

    @pytest.mark.parametrize("body_id,facets", [("ball32", 32), ("cube", 4), ("random", 36)])
    def test_make_body(self, body_id, facets):
        """Test catalog ids."""
        assert make_body(body_id, 2).n_facets == facets

    def test_unknown_body(self):
        """Test that an unknown id is an input error."""
        with pytest.raises(InputError):
            make_body("blob", 2)


class TestPointSets:
    """Test cases for point generators."""

    def test_uniform(self):
        """Test shape, range and reproducibility."""
        X = uniform_points(50, 3, seed=2)

        assert X.shape == (50, 3)
        assert X.min() >= 0.0 and X.max() <= 1.0
        assert np.array_equal(X, uniform_points(50, 3, seed=2))

    def test_clustered(self):
        """Test the clustered generator's shape."""
        assert clustered_points(80, 2, seed=1).shape == (80, 2)

    def test_make_points(self):
        """Test distribution names."""
        assert make_points("clustered", 10, 2).shape == (10, 2)
        with pytest.raises(InputError):
            make_points("gaussian", 10, 2)
