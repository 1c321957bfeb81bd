"""Example usage of the Macbeath DAG library."""

import numpy as np

from macbeath_dag import (
    HierarchyConfig,
    Membership,
    PolytopeIndex,
    build_ann,
    nn_query,
    setup_logging,
)
from macbeath_dag.bodies import ball_like, uniform_points


def main():
    """Demonstrate basic library usage."""
    # Set up logging
    setup_logging(level="INFO")

    print("=== Macbeath DAG Demo ===")

    # Build an index over a 64-gon
    print("\n1. Building a ray-shooting index over a 64-gon (eps = 0.1)...")
    polygon = ball_like(2, k=64)
    config = HierarchyConfig(coverage_rays=4000)
    try:
        index = PolytopeIndex.build(polygon, eps=0.1, config=config)
    except Exception as e:
        print(f"Error building index: {e}")
        return

    stats = index.stats()
    print(f"Levels: {stats['ell'] + 1}, nodes per level: {stats['level_sizes']}")
    print(f"Leaves: {stats['leaf_count']}, max fanout: {stats['max_fanout']}")

    # Shoot a few rays
    print("\n2. Shooting rays from the center...")
    for angle in (0.0, 0.7, 2.0, 4.5):
        direction = np.array([np.cos(angle), np.sin(angle)])
        answer = index.ray_shoot_direction(direction)
        point = ", ".join(f"{v:.4f}" for v in answer.point)
        print(f"  angle {angle:.1f}: hit ({point}) on facet {answer.witness_index}")

    # Approximate membership
    print("\n3. Approximate membership...")
    for q in ([0.1, 0.2], [0.45, 0.0], [0.8, 0.8]):
        result = index.membership(q)
        label = "Inside" if result is Membership.INSIDE else "Outside"
        print(f"  {q}: {label}")

    # Nearest neighbors
    print("\n4. Approximate nearest neighbors over 500 random points...")
    points = uniform_points(500, 2, seed=1)
    ann = build_ann(points, eps=0.1, m=3)
    ann_stats = ann.stats()
    print(f"Quadtree leaves: {ann_stats['leaves']}, reps stored: {ann_stats['rep_total']}")

    query = np.array([0.5, 0.5])
    i = nn_query(ann, query)
    print(f"  nearest to {query.tolist()}: point {i} at distance {np.linalg.norm(points[i] - query):.4f}")

    print("\n=== Demo Complete ===")


if __name__ == "__main__":
    main()
