"""
Seeded replicate streams for Monte Carlo loops.

Replicates are cut into fixed-size chunks and each chunk gets its own child
SeedSequence, so results depend on (seed, total) only and never on how many
workers run the chunks.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, NamedTuple, Optional, Sequence, TypeVar, Union

import numpy as np

CHUNK_SIZE = 256

SeedLike = Union[None, int, np.random.SeedSequence]
T = TypeVar("T")


class Chunk(NamedTuple):
    start: int
    size: int
    rng: np.random.Generator


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def spawn_generators(seed: SeedLike, count: int) -> List[np.random.Generator]:
    """One independent generator per stream (e.g. per treatment row)."""
    return [np.random.default_rng(s) for s in as_seed_sequence(seed).spawn(count)]


def replicate_chunks(total: int, seed: SeedLike, chunk_size: int = CHUNK_SIZE) -> List[Chunk]:
    if total < 0:
        raise ValueError("total must be non-negative")
    n_chunks = (total + chunk_size - 1) // chunk_size
    children = as_seed_sequence(seed).spawn(n_chunks)
    chunks = []
    for i, child in enumerate(children):
        start = i * chunk_size
        chunks.append(Chunk(start, min(chunk_size, total - start), np.random.default_rng(child)))
    return chunks


def map_chunks(fn: Callable[[Any], T], chunks: Sequence[Any], workers: Optional[int] = 1) -> List[T]:
    """Apply fn to every chunk; output order always matches chunk order."""
    if not workers or workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
