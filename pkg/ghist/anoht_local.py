"""
Phase one of the analysis of histogram: colour-coded bin compositions, the
per-bin entropy ratio and its label-permutation p-value, and the global
weighted-entropy test.

A low entropy ratio means a bin dominated by few treatments, so p-values count
simulated ratios at or below the observed one.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Sequence

import numpy as np
from scipy.stats import entropy

from .core import GappedHistogram, SortedSample, TreatmentMatrix
from .errors import DomainError
from .parallel import Chunk, SeedLike, as_seed_sequence, map_chunks, replicate_chunks

log = logging.getLogger(__name__)

MIN_PERMUTATIONS = 100
# Simulated ratios within this distance of the observed one count as ties.
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BinComparison:
    bin_index: int
    counts: tuple
    entropy_ratio: float
    p_value: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "bin_index": self.bin_index,
            "counts": list(self.counts),
            "entropy_ratio": self.entropy_ratio,
            "p_value": self.p_value,
        }


class GlobalTest(NamedTuple):
    weighted_entropy: float
    p_value: float


def bin_compositions(histogram: GappedHistogram, sample: SortedSample) -> TreatmentMatrix:
    """Counts of each treatment (rows, sorted names) in each bin (columns)."""
    if sample.labels is None:
        raise DomainError("bin compositions need treatment labels")
    if sample.n != histogram.n:
        raise DomainError(f"histogram covers {histogram.n} values, sample has {sample.n}")
    names = sample.treatments
    code = {name: j for j, name in enumerate(names)}
    labels = np.array([code[x] for x in sample.sorted_labels], dtype=np.int64)
    counts = np.zeros((len(names), histogram.k), dtype=np.int64)
    for k, b in enumerate(histogram.bins):
        counts[:, k] = np.bincount(labels[b.start:b.stop], minlength=len(names))
    return TreatmentMatrix(counts, names, counts.sum(axis=1), histogram.edges)


def _reference_entropy(n_j: Sequence[float]) -> float:
    n_j = np.asarray(n_j, dtype=float)
    if n_j.sum() <= 0:
        raise DomainError("treatment sizes must not all be zero")
    return float(entropy(n_j))


def entropy_ratio(column: Sequence[float], n_j: Sequence[float]) -> float:
    """Entropy of a bin's composition over the entropy of the treatment sizes (natural log)."""
    column = np.asarray(column, dtype=float)
    if column.sum() <= 0:
        raise DomainError("entropy ratio of an empty bin")
    reference = _reference_entropy(n_j)
    if reference == 0.0:
        return 1.0
    return float(entropy(column) / reference)


def _integer_sizes(T: TreatmentMatrix):
    """Integer treatment sizes and bin sizes; weighted counts are rounded for simulation."""
    colors = np.rint(np.asarray(T.n_j, dtype=float)).astype(np.int64)
    sizes = np.rint(T.column_sums.astype(float)).astype(np.int64)
    diff = int(colors.sum() - sizes.sum())
    if diff:
        sizes[int(np.argmax(sizes))] += diff
    return colors, np.clip(sizes, 0, None)


def _check_permutations(B: int) -> None:
    if B < MIN_PERMUTATIONS:
        raise DomainError(f"need at least {MIN_PERMUTATIONS} permutations, got {B}")


def bin_pvalue(T: TreatmentMatrix, k: int, B: int = 10000, seed: SeedLike = 12345, workers: int = 1) -> float:
    """
    Permutation p-value of bin k's entropy ratio. Relabelling without
    replacement makes the bin's colour counts multivariate hypergeometric.
    """
    _check_permutations(B)
    J, K = T.shape
    if not 0 <= k < K:
        raise DomainError(f"bin {k} out of range 0..{K - 1}")
    if J == 1:
        return 1.0
    reference = _reference_entropy(T.n_j)
    if reference == 0.0:
        return 1.0
    colors, sizes = _integer_sizes(T)
    m = int(sizes[k])
    if m == 0 or T.column_sums[k] <= 0:
        return 1.0
    observed = entropy_ratio(T.counts[:, k], T.n_j)

    def run(chunk: Chunk) -> int:
        sims = chunk.rng.multivariate_hypergeometric(colors, m, size=chunk.size)
        ratios = entropy(sims, axis=1) / reference
        return int(np.count_nonzero(ratios <= observed + TIE_TOLERANCE))

    hits = sum(map_chunks(run, replicate_chunks(B, seed), workers))
    return (1 + hits) / (B + 1)


def _weighted(ratios: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    return np.sum(ratios * (sizes / sizes.sum()), axis=-1)


def global_test(T: TreatmentMatrix, B: int = 10000, seed: SeedLike = 12345, workers: int = 1) -> GlobalTest:
    """Weighted entropy sum_k (c_k/n) * ratio_k with a whole-matrix label-permutation p-value."""
    _check_permutations(B)
    J, K = T.shape
    reference = _reference_entropy(T.n_j)
    if J == 1 or reference == 0.0:
        return GlobalTest(1.0, 1.0)
    col = T.column_sums.astype(float)
    occupied = col > 0
    ratios = np.array([entropy_ratio(T.counts[:, k], T.n_j) for k in np.flatnonzero(occupied)])
    observed = float(_weighted(ratios, col[occupied]))

    colors, sizes = _integer_sizes(T)
    sizes = sizes[sizes > 0]
    codes = np.repeat(np.arange(J), colors)
    cuts = np.concatenate(([0], np.cumsum(sizes)))

    def run(chunk: Chunk) -> int:
        shuffled = chunk.rng.permuted(np.tile(codes, (chunk.size, 1)), axis=1)
        onehot = shuffled[:, :, None] == np.arange(J)
        cum = np.concatenate((np.zeros((chunk.size, 1, J), dtype=np.int64), np.cumsum(onehot, axis=1)), axis=1)
        counts = cum[:, cuts[1:], :] - cum[:, cuts[:-1], :]
        sims = _weighted(entropy(counts, axis=2) / reference, sizes.astype(float))
        return int(np.count_nonzero(sims <= observed + TIE_TOLERANCE))

    hits = sum(map_chunks(run, replicate_chunks(B, seed), workers))
    p = (1 + hits) / (B + 1)
    log.info("global test: weighted entropy %.4f, p=%.4g (B=%d)", observed, p, B)
    return GlobalTest(observed, p)


def compare_bins(T: TreatmentMatrix, B: int = 10000, seed: SeedLike = 12345, workers: int = 1) -> List[BinComparison]:
    """Entropy ratio and p-value for every bin, each bin on its own seed stream."""
    _check_permutations(B)
    J, K = T.shape
    streams = as_seed_sequence(seed).spawn(K)
    out = []
    for k in range(K):
        column = T.counts[:, k]
        ratio = entropy_ratio(column, T.n_j) if np.sum(column) > 0 else 1.0
        out.append(BinComparison(k, tuple(column.tolist()), ratio, bin_pvalue(T, k, B, streams[k], workers)))
    return out
