"""Deterministic sharded map: results always come back in shard order."""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def shard_bounds(n_items: int, n_shards: int) -> list[tuple[int, int]]:
    """Split ``range(n_items)`` into at most ``n_shards`` contiguous, non-empty ranges."""
    n_shards = max(1, min(n_shards, n_items))
    if n_items == 0:
        return []
    edges = np.linspace(0, n_items, n_shards + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_shards(func: Callable, shards: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(shards) <= 1:
        return [func(shard) for shard in shards]
    logger.debug(f"Mapping {len(shards)} shards over {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, shards))
