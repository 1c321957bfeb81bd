"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from src.macbeath_dag import HierarchyConfig, HPolytope, build, canonicalize
from src.macbeath_dag.bodies import ball_like
from src.macbeath_dag.canonical import CanonicalBody


@pytest.fixture
def square():
    """Axis-aligned square [-0.3, 0.3]², canonical as given."""
    return HPolytope.box([-0.3, -0.3], [0.3, 0.3])


@pytest.fixture
def square_body(square):
    """The square wrapped as a canonical body with the identity map."""
    return CanonicalBody.from_body(square)


@pytest.fixture(scope="session")
def small_config():
    """Coarse construction settings that keep planar builds under a few seconds."""
    return HierarchyConfig(
        lambda0=0.15,
        min_candidates=256,
        coverage_rays=2000,
        cap_samples=500,
        cap_random_directions=10,
    )


@pytest.fixture(scope="session")
def polygon():
    """Regular 16-gon tangent to the circle of radius 1/2."""
    return ball_like(2, k=16)


@pytest.fixture(scope="session")
def polygon_body(polygon):
    """Canonical form of the 16-gon."""
    return canonicalize(polygon)


@pytest.fixture(scope="session")
def polygon_dag(polygon_body, small_config):
    """DAG over the 16-gon for eps = 0.25."""
    return build(polygon_body, 0.25, small_config)


@pytest.fixture
def rng():
    """Seeded generator for sampling queries."""
    return np.random.default_rng(1234)
