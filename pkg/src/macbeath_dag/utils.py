"""Utility functions for the Macbeath DAG library."""

import functools
import hashlib
import json
import time
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar, Union

import numpy as np

from .exceptions import InputError

F = TypeVar("F", bound=Callable[..., Any])


def measure_execution_time(func: F) -> F:
    """Decorator to measure and log function execution time.

    Args:
        func: Function to measure

    Returns:
        Decorated function that logs execution time
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        from .logging_config import get_logger

        logger = get_logger(func.__module__)
        start_time = time.perf_counter()

        try:
            result = func(*args, **kwargs)
            execution_time = time.perf_counter() - start_time
            logger.debug(f"{func.__name__} completed in {execution_time:.3f}s")
            return result
        except Exception as e:
            execution_time = time.perf_counter() - start_time
            logger.debug(f"{func.__name__} failed after {execution_time:.3f}s: {e}")
            raise

    return wrapper  # type: ignore


def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure directory exists, creating if necessary."""
    dir_path = Path(path)
    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path


def parse_vector(text: str, dim: Optional[int] = None) -> np.ndarray:
    """Parse a comma separated coordinate list such as ``"0.1,-2,3"``.

    Args:
        text: Comma separated floats
        dim: Expected dimension, checked when given

    Returns:
        Parsed vector

    Raises:
        InputError: On malformed text, non-finite entries or wrong dimension
    """
    try:
        coords = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InputError(f"Malformed point: {text!r}")

    vector = np.asarray(coords, dtype=float)
    if vector.size == 0 or not np.all(np.isfinite(vector)):
        raise InputError(f"Malformed point: {text!r}")
    if dim is not None and vector.size != dim:
        raise InputError(
            f"Point has dimension {vector.size}, expected {dim}",
            details={"point": text, "dim": dim},
        )
    return vector


def config_hash(config: dict[str, Any], length: int = 10) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON document, converting I/O and parse failures to InputError."""
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"Invalid JSON in {path}: {e}")


def write_json(path: Union[str, Path], data: Any, indent: Optional[int] = None) -> Path:
    """Write a JSON document, creating parent directories."""
    out = Path(path)
    ensure_directory(out.parent)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, sort_keys=False)
        f.write("\n")
    return out


def batch_items(items: Sequence[Any], batch_size: int) -> Iterator[Sequence[Any]]:
    """Yield successive batches from a sequence."""
    for i in range(0, len(items), batch_size):
        yield items[i : i + batch_size]


def as_float_list(values: Any) -> list[float]:
    """Convert an array-like to a list of Python floats (exact JSON round trip)."""
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def map_ordered(func: Callable[[Any], Any], items: Sequence[Any], workers: int = 1) -> list[Any]:
    """Apply func to every item, on a thread pool when workers > 1, keeping input order."""
    if workers <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
