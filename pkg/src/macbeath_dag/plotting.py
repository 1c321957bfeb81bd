"""SVG figure of a planar DAG: the body, its eroded copies and every level's ellipses."""

import math
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse, Polygon  # noqa: E402

from .canonical import CanonicalBody  # noqa: E402
from .exceptions import InputError  # noqa: E402
from .geom_core import Ellipsoid, HPolytope, erode  # noqa: E402
from .hierarchy import LayeredDag  # noqa: E402
from .logging_config import get_logger  # noqa: E402

logger = get_logger(__name__)

SVG_SALT = "macbeath-dag"
FIGURE_SIZE = (6.0, 6.0)


def _polygon(P: HPolytope) -> np.ndarray:
    """Vertices of a planar polytope in counter-clockwise order about its Chebyshev center."""
    vertices = P.vertices()
    center, _ = P.chebyshev_ball()
    angles = np.arctan2(vertices[:, 1] - center[1], vertices[:, 0] - center[0])
    return vertices[np.argsort(angles)]


def ellipse_patch(E: Ellipsoid, gid: str, color) -> Ellipse:
    eigvals, eigvecs = np.linalg.eigh(E.shape)
    major = eigvecs[:, 0]
    return Ellipse(
        xy=tuple(E.center),
        width=2.0 / math.sqrt(eigvals[0]),
        height=2.0 / math.sqrt(eigvals[1]),
        angle=math.degrees(math.atan2(major[1], major[0])),
        fill=False,
        linewidth=0.4,
        edgecolor=color,
        gid=gid,
    )


def plot_dag(K: CanonicalBody, dag: LayeredDag, out: Union[str, Path]) -> Path:
    """Write the figure for a planar DAG as SVG.

    Ellipse elements carry ids ``node-<level>-<index>``, one per DAG node.

    Raises:
        InputError: If the body is not planar
    """
    if K.dim != 2:
        raise InputError(f"Plotting needs a planar body, got d={K.dim}")

    matplotlib.rcParams["svg.hashsalt"] = SVG_SALT
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    try:
        ax.add_patch(Polygon(_polygon(K.body), closed=True, fill=False, edgecolor="black", linewidth=1.0))
        cmap = plt.get_cmap("viridis")
        n_levels = len(dag.levels)
        for level, nodes in enumerate(dag.levels):
            color = cmap(level / max(n_levels - 1, 1))
            eroded = erode(K.body, dag.params.delta(level))
            ax.add_patch(
                Polygon(
                    _polygon(eroded),
                    closed=True,
                    fill=False,
                    edgecolor=color,
                    linewidth=0.5,
                    linestyle="--",
                    gid=f"erosion-{level}",
                )
            )
            for node in nodes:
                ax.add_patch(ellipse_patch(node.ellipsoid, f"node-{level}-{node.index}", color))
        ax.plot([0.0], [0.0], marker="+", color="black")
        ax.set_xlim(-0.55, 0.55)
        ax.set_ylim(-0.55, 0.55)
        ax.set_aspect("equal")
        ax.set_title(f"ell = {dag.params.ell}, {dag.node_count} nodes")

        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.info(f"Wrote {dag.node_count} ellipses to {path}")
    return path
