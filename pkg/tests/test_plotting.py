"""Tests for the SVG figure of a planar DAG."""

import numpy as np
import pytest

from src.macbeath_dag.canonical import CanonicalBody
from src.macbeath_dag.exceptions import InputError
from src.macbeath_dag.geom_core import Ellipsoid, HPolytope
from src.macbeath_dag.plotting import ellipse_patch, plot_dag


class TestPlotDag:
    """Test cases for plot_dag."""

    def test_one_element_per_node(self, polygon_body, polygon_dag, tmp_path):
        """Test that every node and every erosion has its own id."""
        path = plot_dag(polygon_body, polygon_dag, tmp_path / "fig.svg")

        svg = path.read_text()
        assert svg.count('id="node-') == polygon_dag.node_count
        assert svg.count('id="erosion-') == len(polygon_dag.levels)
        assert 'id="node-0-0"' in svg

    def test_repeatable_output(self, polygon_body, polygon_dag, tmp_path):
        """Test that two renderings are byte-identical."""
        a = plot_dag(polygon_body, polygon_dag, tmp_path / "a.svg")
        b = plot_dag(polygon_body, polygon_dag, tmp_path / "b.svg")

        assert a.read_bytes() == b.read_bytes()

    def test_non_planar_body(self, polygon_dag, tmp_path):
        """Test that only planar bodies can be drawn."""
        cube = CanonicalBody.from_body(HPolytope.box(-0.3 * np.ones(3), 0.3 * np.ones(3)))

        with pytest.raises(InputError):
            plot_dag(cube, polygon_dag, tmp_path / "fig.svg")


class TestEllipsePatch:
    """Test cases for ellipse_patch."""

    def test_axes_of_axis_aligned_ellipse(self):
        """Test widths from the shape matrix eigenvalues."""
        E = Ellipsoid(center=np.array([0.1, 0.2]), shape=np.diag([1.0 / 0.04, 1.0 / 0.01]))

        patch = ellipse_patch(E, "node-0-0", "black")

        assert patch.get_gid() == "node-0-0"
        assert sorted([patch.width, patch.height]) == pytest.approx([0.2, 0.4])
        assert patch.center == pytest.approx((0.1, 0.2))
