"""Command-line interface for Macbeath DAG."""

import argparse
import sys
from dataclasses import replace
from typing import Optional

import numpy as np
from dotenv import load_dotenv

from . import (
    AnnConfig,
    BenchConfig,
    HierarchyConfig,
    PolytopeIndex,
    build_ann,
    get_logger,
    load_points,
    load_polytope,
    setup_logging,
)
from .bench import run_ann_contract, run_query_contract, run_space_scaling
from .exceptions import (
    InputError,
    InvariantViolation,
    MacbeathError,
    PreconditionError,
    VerificationError,
)
from .oracle import exact_nn
from .plotting import plot_dag
from .query import Membership
from .utils import as_float_list, parse_vector

# Load environment variables from .env file
load_dotenv()

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONSTRUCTION = 3
EXIT_VERIFICATION = 4


def _parse_eps(text: str) -> float:
    try:
        eps = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid eps: {text!r}")
    if not 0 < eps <= 1:
        raise argparse.ArgumentTypeError(f"eps must lie in (0, 1], got {eps}")
    return eps


def _parse_eps_list(text: str) -> list[float]:
    return [_parse_eps(part) for part in text.split(",") if part.strip()]


def _hierarchy_config(args) -> HierarchyConfig:
    overrides = {"seed": args.seed, "strict_constants": getattr(args, "strict", False)}
    for name in ("lambda0", "workers", "coverage_rays", "min_candidates"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return HierarchyConfig.from_env(**overrides)


def _fmt(vector) -> str:
    return "(" + ", ".join(f"{v:.9g}" for v in as_float_list(vector)) + ")"


def _witness(answer) -> str:
    h = answer.witness
    return f"{answer.witness_index} {_fmt(h.normal)}·y <= {h.offset:.9g}"


def cmd_build(args) -> int:
    """Handle build command."""
    logger = get_logger(__name__)
    polytope = load_polytope(args.polytope)
    config = _hierarchy_config(args)
    index = PolytopeIndex.build(polytope, args.eps, config)
    index.save(args.out)

    params = index.dag.params
    print(f"Wrote {args.out}")
    print(f"  gamma:       {index.canonical.gamma:.6g}")
    print(f"  delta0:      {params.delta0:.6g}")
    print(f"  ell:         {params.ell}")
    print(f"  level sizes: {index.dag.level_sizes}")
    print(f"  build time:  {index.dag.build_seconds:.2f}s")
    logger.info(f"Built index for {args.polytope} with {index.dag.node_count} nodes")
    return EXIT_OK


def cmd_query(args) -> int:
    """Handle query command."""
    index = PolytopeIndex.load(args.index)
    d = index.canonical.dim
    if args.ray:
        answer = index.ray_shoot_direction(parse_vector(args.ray, d))
    else:
        q = parse_vector(args.point, d)
        if args.member:
            result, decided = index.classify(q)
            print("Inside" if result is Membership.INSIDE else "Outside")
            if decided is not None:
                if result is Membership.OUTSIDE:
                    print(f"  separating witness: {_witness(decided)}")
                print(f"  path length:        {decided.path_length}")
            return EXIT_OK
        answer = index.ray_shoot(q)

    residual = answer.residual
    print(f"point:         {_fmt(answer.point)}")
    print(f"witness:       {_witness(answer)}")
    print(f"path length:   {answer.path_length}")
    print(f"self-check:    {'ok' if residual <= 1e-9 else 'FAILED'} (residual {residual:.3g})")
    return EXIT_OK


def _ann_violations(index, X: np.ndarray, queries: np.ndarray, eps: float) -> int:
    violations = 0
    for q in queries:
        _, best = exact_nn(X, q)
        if np.linalg.norm(X[index.query(q)] - q) > (1.0 + eps) * best + 1e-12:
            violations += 1
    return violations


def cmd_ann(args) -> int:
    """Handle ann command."""
    logger = get_logger(__name__)
    X = load_points(args.points)
    queries = load_points(args.queries) if args.queries else X
    if queries.shape[1] != X.shape[1]:
        raise InputError(f"Queries have dimension {queries.shape[1]}, points have {X.shape[1]}")

    overrides = {"seed": args.seed, "workers": args.workers}
    if args.brute_threshold is not None:
        overrides["brute_threshold"] = args.brute_threshold
    config = AnnConfig.from_env(**overrides)
    config = replace(config, hierarchy=replace(config.hierarchy, seed=args.seed))
    index = build_ann(X, args.eps, args.m, config)

    if args.verify:
        violations = _ann_violations(index, X, queries, args.eps)
        if violations:
            logger.warning(f"{violations} answers break the (1+eps) bound; retrying with c doubled")
            config = replace(config, reduction_c=2.0 * config.reduction_c)
            index = build_ann(X, args.eps, args.m, config)
            violations = _ann_violations(index, X, queries, args.eps)
        if violations:
            raise VerificationError(f"{violations} of {len(queries)} answers break the (1+eps) bound")
        print(f"verify: {len(queries)} answers within (1+{args.eps}) of exact")

    if args.out:
        index.save(args.out)
        print(f"Wrote {args.out}")

    for q in queries:
        i = index.query(q)
        print(f"{i} {np.linalg.norm(X[i] - q):.9g}")

    stats = index.stats()
    print(f"m={stats['m']} t={stats['t']:.4g} leaves={stats['leaves']} reps={stats['rep_total']} "
          f"(n log 1/eps = {stats['rep_trend']:.1f}) dag_cells={stats['dag_cells']} "
          f"brute_cells={stats['brute_cells']}")
    print(f"rep histogram: {stats['rep_histogram']}")
    if stats["upper_regime"]:
        print("m is at the upper end of its range: query time ~ log(1/eps) per leaf")
    return EXIT_OK


def cmd_bench(args) -> int:
    """Handle bench command."""
    bench = BenchConfig.from_env(seed=args.seed, workers=args.workers)
    if args.n_queries is not None:
        bench = replace(bench, n_queries=args.n_queries)
    output_dir = args.out_dir or bench.output_dir
    config = _hierarchy_config(args)

    if args.experiment == "scaling":
        report = run_space_scaling(args.body, args.d, args.eps, bench.seed, config, n_queries=bench.n_queries)
    elif args.experiment == "contract":
        report = run_query_contract(
            args.body, args.d, args.eps[0], bench.n_queries, bench.seed, config, bench.workers
        )
    else:
        report = run_ann_contract(
            args.distribution, args.n, args.d, args.eps[0], args.m, bench.n_queries, bench.seed,
            AnnConfig.from_env(hierarchy=config), bench.workers,
        )

    paths = report.write(output_dir, bench.formats)
    for path in paths:
        print(f"Wrote {path}")
    print(f"{report.name}: {report.violations} violations, summary {report.summary}")
    if not report.passed:
        raise VerificationError(f"{report.name} did not pass")
    return EXIT_OK


def cmd_plot(args) -> int:
    """Handle plot command."""
    index = PolytopeIndex.load(args.index)
    path = plot_dag(index.canonical, index.dag, args.out)
    print(f"Wrote {path}")
    return EXIT_OK


def create_parser() -> argparse.ArgumentParser:
    """Create and configure argument parser."""
    parser = argparse.ArgumentParser(
        description="Macbeath DAG - approximate polytope membership, ray shooting and nearest neighbors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="WARNING",
        help="Set logging level",
    )

    parser.add_argument(
        "--seed",
        type=int,
        default=42,
        help="Seed for every random choice (default: 42)",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Build command
    build_parser = subparsers.add_parser("build", help="Build an index over a polytope")
    build_parser.add_argument("polytope", help="Polytope JSON file")
    build_parser.add_argument("--eps", type=_parse_eps, default=0.1, help="Relative accuracy (default: 0.1)")
    build_parser.add_argument("--strict", action="store_true", help="Use the worst-case constants")
    build_parser.add_argument("--lambda0", type=float, help="Macbeath scaling factor (default: 1/(20√d))")
    build_parser.add_argument("--workers", type=int, help="Worker threads")
    build_parser.add_argument("--out", "-o", default="dag.json", help="Output file (default: dag.json)")

    # Query command
    query_parser = subparsers.add_parser("query", help="Query a built index")
    query_parser.add_argument("index", help="Index JSON file written by build")
    target = query_parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--point", help="Query point, e.g. '0.1,0.2'")
    target.add_argument("--ray", help="Ray direction from the index center, e.g. '1,1'")
    query_parser.add_argument("--member", action="store_true", help="Answer Inside/Outside for --point")

    # ANN command
    ann_parser = subparsers.add_parser("ann", help="Approximate nearest neighbors")
    ann_parser.add_argument("points", help="Point-set JSON file")
    ann_parser.add_argument("--eps", type=_parse_eps, default=0.1, help="Approximation (default: 0.1)")
    ann_parser.add_argument("--m", type=int, default=3, help="Space/query trade-off parameter (default: 3)")
    ann_parser.add_argument("--queries", help="Query point-set JSON file (default: the points)")
    ann_parser.add_argument("--brute-threshold", type=int, help="Largest leaf answered by brute force")
    ann_parser.add_argument("--workers", type=int, default=1, help="Worker threads")
    ann_parser.add_argument("--verify", action="store_true", help="Check answers against exact search")
    ann_parser.add_argument("--out", "-o", help="Write the index to this file")

    # Bench command
    bench_parser = subparsers.add_parser("bench", help="Run a benchmark and write reports")
    bench_parser.add_argument("experiment", choices=["scaling", "contract", "ann"])
    bench_parser.add_argument("--body", default="ball64", help="Body id: ball<k>, cube, random, skewed")
    bench_parser.add_argument("--d", type=int, default=2, help="Dimension (default: 2)")
    bench_parser.add_argument(
        "--eps", type=_parse_eps_list, default=[0.2, 0.1, 0.05, 0.025], help="Comma separated eps values"
    )
    bench_parser.add_argument("--n-queries", type=int, help="Queries per run")
    bench_parser.add_argument("--lambda0", type=float, help="Macbeath scaling factor")
    bench_parser.add_argument("--coverage-rays", type=int, help="Rays used to certify coverage")
    bench_parser.add_argument("--min-candidates", type=int, help="Smallest candidate stream per level")
    bench_parser.add_argument("--distribution", choices=["uniform", "clustered"], default="uniform")
    bench_parser.add_argument("--n", type=int, default=1000, help="ANN point count")
    bench_parser.add_argument("--m", type=int, default=3, help="ANN trade-off parameter")
    bench_parser.add_argument("--workers", type=int, default=1, help="Worker threads")
    bench_parser.add_argument("--out-dir", help="Report directory (default: reports)")

    # Plot command
    plot_parser = subparsers.add_parser("plot", help="Draw a planar index as SVG")
    plot_parser.add_argument("index", help="Index JSON file written by build")
    plot_parser.add_argument("--out", "-o", default="fig.svg", help="Output SVG (default: fig.svg)")

    return parser


def _exit_code(error: Exception) -> int:
    if isinstance(error, (VerificationError, InvariantViolation)):
        return EXIT_VERIFICATION
    if isinstance(error, (InputError, PreconditionError)):
        return EXIT_INPUT
    # construction errors and failed numerics alike
    return EXIT_CONSTRUCTION


HANDLERS = {
    "build": cmd_build,
    "query": cmd_query,
    "ann": cmd_ann,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv: Optional[list[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = create_parser()
    args = parser.parse_args(argv)

    # Set up logging
    setup_logging(level=args.log_level)

    if not args.command:
        parser.print_help()
        return EXIT_INPUT

    try:
        return HANDLERS[args.command](args)
    except MacbeathError as e:
        print(f"Error: {e}", file=sys.stderr)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
