"""Configuration for DAG construction, ANN indexing and benchmarks."""

import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

DEFAULT_SEED = 42


def _env(name: str, default: Any) -> Any:
    raw = os.getenv(name)
    if raw is None:
        return default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


@dataclass(frozen=True)
class HierarchyConfig:
    """Configuration for building the layered DAG."""

    strict_constants: bool = False
    min_candidates: int = 1024
    candidate_factor: int = 4
    coverage_rays: int = 10_000
    max_repair_rounds: int = 50
    cone_slack: float = 1e-3  # radians
    cap_samples: int = 2000
    cap_random_directions: int = 50
    mvee_tol: float = 1e-7
    witness_mode: str = "facets"  # or "supporting"
    lambda0: Optional[float] = None  # None: 1/(20√d)
    max_strict_levels: int = 64
    require_certified: bool = False
    workers: int = 1
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.witness_mode not in ("facets", "supporting"):
            raise ValueError(f"Unsupported witness mode: {self.witness_mode}")
        if self.max_repair_rounds < 1:
            raise ValueError("max_repair_rounds must be positive")
        if self.lambda0 is not None and not 0 < self.lambda0 <= 0.25:
            raise ValueError("lambda0 must lie in (0, 1/4]")

    @classmethod
    def from_env(cls, **overrides: Any) -> "HierarchyConfig":
        """Build a config from MACBEATH_* environment variables."""
        values = {
            f.name: _env(f"MACBEATH_{f.name.upper()}", f.default)
            for f in fields(cls)
            if f.name != "lambda0"
        }
        raw = os.getenv("MACBEATH_LAMBDA0")
        values["lambda0"] = float(raw) if raw else None
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AnnConfig:
    """Configuration for the quadtree approximate Voronoi index."""

    brute_threshold: int = 16
    reduction_c: float = 4.0
    grid_cap: int = 100_000
    max_depth: int = 60
    domain_padding: float = 0.5
    cell_node_budget: int = 20_000
    workers: int = 1
    seed: int = DEFAULT_SEED
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)

    @classmethod
    def from_env(cls, **overrides: Any) -> "AnnConfig":
        """Build a config from MACBEATH_ANN_* environment variables."""
        values = {
            f.name: _env(f"MACBEATH_ANN_{f.name.upper()}", f.default)
            for f in fields(cls)
            if f.name != "hierarchy"
        }
        values["hierarchy"] = HierarchyConfig.from_env()
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BenchConfig:
    """Configuration for benchmark runs."""

    seed: int = DEFAULT_SEED
    n_queries: int = 10_000
    output_dir: str = "reports"
    formats: tuple[str, ...] = ("json", "csv")
    workers: int = 1

    @classmethod
    def from_env(cls, **overrides: Any) -> "BenchConfig":
        """Build a config from MACBEATH_BENCH_* environment variables."""
        values = {f.name: _env(f"MACBEATH_BENCH_{f.name.upper()}", f.default) for f in fields(cls)}
        values.update(overrides)
        return cls(**values)
