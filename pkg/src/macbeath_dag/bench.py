"""Scaling and contract experiments with machine-readable reports.

Reports hold only values determined by the configuration and seed; wall
clock measurements go to a ``.timings.json`` sidecar so that repeated runs
produce identical report files.
"""

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from .ann import build_ann
from .bodies import make_body, make_points
from .canonical import CanonicalBody, canonicalize
from .config import AnnConfig, HierarchyConfig
from .geom_core import HPolytope, ray_exit_many
from .hierarchy import LayeredDag, build, random_directions
from .macbeath import practical_lambda0
from .logging_config import get_logger
from .oracle import dist_to_polytope, exact_nn
from .query import Membership, membership, ray_shoot
from .utils import config_hash, ensure_directory, map_ordered, write_json

logger = get_logger(__name__)

RESIDUAL_TOL = 1e-9
DISTANCE_TOL = 1e-6
INTERIOR_TOL = 1e-9

Body = Union[str, HPolytope]


@dataclass
class BenchReport:
    """Rows of one experiment plus a summary; ``timings`` is kept out of the report body."""

    name: str
    config: dict[str, Any]
    rows: list[dict[str, Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, Any] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return int(sum(row.get("violations", 0) for row in self.rows))

    @property
    def passed(self) -> bool:
        return self.violations == 0 and bool(self.summary.get("passed", True))

    @property
    def stem(self) -> str:
        return f"{self.name}-{config_hash(self.config, length=8)}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "config": self.config,
            "rows": self.rows,
            "summary": self.summary,
            "violations": self.violations,
        }

    def write(self, output_dir: Union[str, Path], formats: Sequence[str] = ("json", "csv")) -> list[Path]:
        """Write the report in each format and the timings sidecar; returns the paths."""
        out = ensure_directory(output_dir)
        written = []
        if "json" in formats:
            written.append(write_json(out / f"{self.stem}.json", self.to_dict(), indent=2))
        if "csv" in formats:
            path = out / f"{self.stem}.csv"
            columns: list[str] = []
            for row in self.rows:
                columns.extend(k for k in row if k not in columns)
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=columns)
                writer.writeheader()
                writer.writerows(self.rows)
            written.append(path)
        written.append(write_json(out / f"{self.stem}.timings.json", self.timings, indent=2))
        logger.info(f"Wrote {self.name} report to {out / self.stem}.*")
        return written


def _canonical(body: Body, d: int, seed: int) -> tuple[str, CanonicalBody]:
    if isinstance(body, str):
        return body, canonicalize(make_body(body, d, seed))
    return "custom", canonicalize(body)


def _config(config: Optional[HierarchyConfig], seed: int, dim: int) -> HierarchyConfig:
    """Seeded copy of ``config``; from d = 3 on an unset λ₀ becomes the practical one."""
    cfg = replace(config or HierarchyConfig(), seed=seed)
    if cfg.lambda0 is None and dim >= 3:
        cfg = replace(cfg, lambda0=practical_lambda0(dim))
    return cfg


def fit_slope(eps_list: Sequence[float], counts: Sequence[int]) -> float:
    """Least-squares slope of log(count) against log(1/ε)."""
    x = np.log(1.0 / np.asarray(eps_list, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def scaling_summary(
    rows: Sequence[dict[str, Any]],
    dim: int,
    slope_tolerance: float = 0.25,
    max_fanout_ratio: float = 2.0,
    min_leaf_fraction: float = 0.4,
    leaf_fraction_eps: float = 0.05,
) -> dict[str, Any]:
    """Judge a run of space-scaling rows sorted by decreasing ε.

    Checks the leaf growth slope against (d−1)/2, one extra level per halving
    of ε, a maximum fanout that changes by less than ``max_fanout_ratio``
    across ε and a leaf share of at least ``min_leaf_fraction`` once
    ε ≤ ``leaf_fraction_eps``.
    """
    target = (dim - 1) / 2.0
    summary: dict[str, Any] = {"target_slope": target}
    if not rows:
        return summary
    fanouts = [max(r["max_fanout"], 1) for r in rows]
    fanout_ratio = max(fanouts) / min(fanouts)
    small = [r for r in rows if r["eps"] <= leaf_fraction_eps]
    summary.update(
        {
            "fanout_ratio": fanout_ratio,
            "fanout_ok": fanout_ratio < max_fanout_ratio,
            "min_leaf_fraction": min((r["leaf_fraction"] for r in small), default=None),
            "leaf_fraction_ok": all(r["leaf_fraction"] >= min_leaf_fraction for r in small),
        }
    )
    summary["passed"] = summary["fanout_ok"] and summary["leaf_fraction_ok"]
    if len(rows) >= 2:
        slope = fit_slope([r["eps"] for r in rows], [r["leaf_count"] for r in rows])
        halvings = [math.isclose(a["eps"] / b["eps"], 2.0) for a, b in zip(rows, rows[1:])]
        steps = [b["ell"] - a["ell"] for a, b in zip(rows, rows[1:])]
        summary.update(
            {
                "slope": slope,
                "slope_ok": abs(slope - target) <= slope_tolerance,
                "level_steps": steps,
                "level_steps_ok": all(s == 1 for s, h in zip(steps, halvings) if h),
            }
        )
        summary["passed"] = all(
            summary[key] for key in ("slope_ok", "level_steps_ok", "fanout_ok", "leaf_fraction_ok")
        )
    return summary


def run_space_scaling(
    body: Body,
    d: int,
    eps_list: Sequence[float],
    seed: int = 42,
    config: Optional[HierarchyConfig] = None,
    n_queries: int = 1000,
    slope_tolerance: float = 0.25,
) -> BenchReport:
    """Build one DAG per ε and fit the growth of the leaf count.

    The leaf level should grow like (1/ε)^{(d−1)/2}, every halving of ε
    should add exactly one level, the maximum fanout should stay put and the
    leaves should dominate the node count. See ``scaling_summary``.
    """
    body_id, K = _canonical(body, d, seed)
    cfg = _config(config, seed, K.dim)
    eps_list = sorted(eps_list, reverse=True)
    directions = random_directions(K.dim, n_queries, [seed, 1])

    rows = []
    timings: dict[str, Any] = {"build_seconds": {}, "mean_query_seconds": {}}
    for eps in eps_list:
        dag = build(K, eps, cfg)
        start = time.perf_counter()
        paths = [ray_shoot(dag, K, u).path_length for u in directions]
        elapsed = time.perf_counter() - start
        rows.append(
            {
                "eps": eps,
                "ell": dag.params.ell,
                "node_count": dag.node_count,
                "leaf_count": dag.leaf_count,
                "max_fanout": dag.max_fanout,
                "leaf_fraction": dag.leaf_count / dag.node_count,
                "mean_path_length": float(np.mean(paths)),
                "violations": int(sum(p != dag.params.ell + 1 for p in paths)),
            }
        )
        timings["build_seconds"][str(eps)] = dag.build_seconds
        timings["mean_query_seconds"][str(eps)] = elapsed / max(len(directions), 1)
        logger.info(f"eps={eps}: {dag.leaf_count} leaves, ell={dag.params.ell}")

    summary = scaling_summary(rows, K.dim, slope_tolerance)

    report_config = {
        "experiment": "space_scaling",
        "body": body_id,
        "d": d,
        "eps_list": list(eps_list),
        "seed": seed,
        "n_queries": n_queries,
        "hierarchy": cfg.to_dict(),
    }
    return BenchReport("space_scaling", report_config, rows, summary, timings)


def adversarial_directions(K: CanonicalBody) -> np.ndarray:
    """Facet normals and, for d ≤ 3, the directions of K's vertices."""
    dirs = [K.body.A]
    if K.dim <= 3:
        vertices = K.body.vertices()
        dirs.append(vertices / np.linalg.norm(vertices, axis=1, keepdims=True))
    return np.vstack(dirs)


def _check_ray(dag: LayeredDag, K: CanonicalBody, eps: float, u: np.ndarray) -> dict[str, Any]:
    answer = ray_shoot(dag, K, u)
    P = K.body
    p = answer.point
    distance = dist_to_polytope(P, p)
    return {
        "residual": answer.residual > RESIDUAL_TOL,
        "interior": float(np.max(P.A @ p - P.b)) < -INTERIOR_TOL,
        "distance": distance > eps + DISTANCE_TOL,
        "path": answer.path_length != dag.params.ell + 1,
        "dist": distance,
    }


def _membership_points(K: CanonicalBody, eps: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 2])
    dirs = random_directions(K.dim, n, [seed, 3])
    t, _ = ray_exit_many(K.body, np.zeros(K.dim), dirs)
    inside = rng.uniform(0.0, 1.0, size=n // 2) * t[: n // 2]
    outside = t[n // 2 :] + rng.uniform(0.0, 3.0 * eps, size=n - n // 2)
    return np.concatenate([inside, outside])[:, None] * dirs


def _check_member(dag: LayeredDag, K: CanonicalBody, eps: float, q: np.ndarray) -> str:
    """'ok', 'band' or 'violation' for one membership sample."""
    distance = dist_to_polytope(K.body, q)
    if eps >= distance > 0:
        return "band"
    expected = Membership.INSIDE if distance == 0 else Membership.OUTSIDE
    return "ok" if membership(dag, K, q) is expected else "violation"


def run_query_contract(
    body: Body,
    d: int,
    eps: float,
    n_queries: int,
    seed: int = 42,
    config: Optional[HierarchyConfig] = None,
    workers: int = 1,
) -> BenchReport:
    """Check ray-shooting and membership answers against the exact oracles.

    Rays go along K's facet normals and vertex directions first, then random
    directions. Membership samples lie inside K or beyond its boundary;
    samples within ε of K (but outside it) may be answered either way and are
    not counted.
    """
    body_id, K = _canonical(body, d, seed)
    dag = build(K, eps, _config(config, seed, K.dim))

    adversarial = adversarial_directions(K)
    n_random = max(n_queries - len(adversarial), 0)
    directions = np.vstack([adversarial, random_directions(K.dim, n_random, [seed, 4])])

    start = time.perf_counter()
    checks = map_ordered(lambda u: _check_ray(dag, K, eps, u), list(directions), workers)
    ray_seconds = time.perf_counter() - start

    samples = _membership_points(K, eps, n_queries, seed)
    outcomes = map_ordered(lambda q: _check_member(dag, K, eps, q), list(samples), workers)

    counts = {key: int(sum(c[key] for c in checks)) for key in ("residual", "interior", "distance", "path")}
    member_violations = outcomes.count("violation")
    row = {
        "eps": eps,
        "ell": dag.params.ell,
        "node_count": dag.node_count,
        "leaf_count": dag.leaf_count,
        "n_rays": len(directions),
        "n_adversarial": len(adversarial),
        "residual_violations": counts["residual"],
        "interior_violations": counts["interior"],
        "distance_violations": counts["distance"],
        "path_violations": counts["path"],
        "max_distance": max(c["dist"] for c in checks),
        "n_member": len(samples),
        "band_skipped": outcomes.count("band"),
        "member_violations": member_violations,
        "violations": sum(counts.values()) + member_violations,
    }
    report_config = {
        "experiment": "query_contract",
        "body": body_id,
        "d": d,
        "eps": eps,
        "seed": seed,
        "n_queries": n_queries,
        "hierarchy": _config(config, seed, K.dim).to_dict(),
    }
    timings = {
        "build_seconds": dag.build_seconds,
        "mean_query_seconds": ray_seconds / max(len(directions), 1),
    }
    logger.info(f"Query contract on {body_id} d={d} eps={eps}: {row['violations']} violations")
    return BenchReport("query_contract", report_config, [row], timings=timings)


def run_ann_contract(
    distribution: str,
    n: int,
    d: int,
    eps: float,
    m: int,
    n_queries: int,
    seed: int = 42,
    config: Optional[AnnConfig] = None,
    workers: int = 1,
) -> BenchReport:
    """Compare ANN answers against linear-scan nearest neighbors.

    Queries are the data points themselves followed by uniform samples of the
    points' bounding box widened by 10%.
    """
    X = make_points(distribution, n, d, seed)
    config = replace(config or AnnConfig(), seed=seed, workers=workers)
    index = build_ann(X, eps, m, config)

    rng = np.random.default_rng([seed, 5])
    lower, upper = X.min(axis=0), X.max(axis=0)
    margin = 0.1 * (upper - lower)
    queries = np.vstack(
        [
            X[: min(n, n_queries)],
            rng.uniform(lower - margin, upper + margin, size=(max(n_queries - n, 0), d)),
        ]
    )

    def ratio(q: np.ndarray) -> float:
        _, best = exact_nn(X, q)
        found = float(np.linalg.norm(X[index.query(q)] - q))
        if best == 0.0:
            return 1.0 if found == 0.0 else math.inf
        return found / best

    start = time.perf_counter()
    ratios = map_ordered(ratio, list(queries), workers)
    query_seconds = time.perf_counter() - start

    stats = index.stats()
    row = {
        "distribution": distribution,
        "n": n,
        "d": d,
        "eps": eps,
        "m": index.m,
        "t": stats["t"],
        "leaves": stats["leaves"],
        "rep_total": stats["rep_total"],
        "rep_trend": stats["rep_trend"],
        "dag_cells": stats["dag_cells"],
        "n_queries": len(queries),
        "max_ratio": max(ratios),
        "violations": int(sum(r > 1.0 + eps + 1e-12 for r in ratios)),
    }
    report_config = {
        "experiment": "ann_contract",
        "distribution": distribution,
        "n": n,
        "d": d,
        "eps": eps,
        "m": m,
        "seed": seed,
        "n_queries": n_queries,
        "ann": config.to_dict(),
    }
    timings = {
        "build_seconds": index.build_seconds,
        "mean_query_seconds": query_seconds / max(len(queries), 1),
    }
    return BenchReport("ann_contract", report_config, [row], timings=timings)
