"""
Contiguity-constrained agglomerative clustering of a sorted 1-D sample.

Only neighbouring intervals may merge, so every internal node covers a run of
consecutive sorted positions. Ties between candidate merges go to the leftmost
pair, with distances compared to TIE_DIGITS significant digits.
"""
import heapq
import math
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .core import LINKAGES, DendroNode, DendroTree, SortedSample
from .errors import DomainError

# Merge distances equal to this many significant digits (relative to the data
# range) count as tied, so rounding noise cannot override the leftmost-pair rule.
TIE_DIGITS = 9


def _complete(values, lo_a, hi_a, lo_b, hi_b, sums) -> float:
    return float(values[hi_b] - values[lo_a])


def _mean(sums, lo, hi) -> float:
    return (sums[hi + 1] - sums[lo]) / (hi - lo + 1)


def _average(values, lo_a, hi_a, lo_b, hi_b, sums) -> float:
    return float(max(_mean(sums, lo_b, hi_b) - _mean(sums, lo_a, hi_a), 0.0))


def _ward(values, lo_a, hi_a, lo_b, hi_b, sums) -> float:
    na, nb = hi_a - lo_a + 1, hi_b - lo_b + 1
    gap = max(_mean(sums, lo_b, hi_b) - _mean(sums, lo_a, hi_a), 0.0)
    return float(math.sqrt(2.0 * na * nb / (na + nb)) * gap)


_DISTANCES: Dict[str, Callable] = {
    "complete": _complete,
    "average": _average,
    "ward": _ward,
}


def cluster(sample: SortedSample, linkage: str = "complete") -> DendroTree:
    """Merge adjacent intervals bottom-up; returns the merge tree over sorted positions."""
    if linkage not in LINKAGES:
        raise DomainError(f"unsupported linkage {linkage!r}; choose one of {', '.join(LINKAGES)}")
    values = sample.values
    n = values.size
    if n < 1:
        raise DomainError("cannot cluster an empty sample")
    distance = _DISTANCES[linkage]
    scale = float(values[-1] - values[0]) or 1.0
    sums = None
    if linkage != "complete":
        # prefix sums centred on the first value keep means accurate
        values = values - values[0]
        sums = np.concatenate(([0.0], np.cumsum(values)))

    # active interval keyed by its left position: (right position, node id, height)
    right_end = {i: i for i in range(n)}
    node_of = {i: i for i in range(n)}
    height_of: List[float] = [0.0] * n

    heap: List[Tuple[float, int, int, int, float]] = []

    def push(lo_a: int) -> None:
        hi_a = right_end[lo_a]
        lo_b = hi_a + 1
        if lo_b >= n or lo_b not in right_end:
            return
        d = distance(values, lo_a, hi_a, lo_b, right_end[lo_b], sums)
        heapq.heappush(heap, (round(d / scale, TIE_DIGITS), lo_a, node_of[lo_a], node_of[lo_b], d))

    for i in range(n - 1):
        push(i)

    left_start = {i: i for i in range(n)}  # right position -> left position of its interval
    nodes: List[DendroNode] = []
    while heap:
        _, lo_a, id_a, id_b, d = heapq.heappop(heap)
        if node_of.get(lo_a) != id_a:
            continue
        lo_b = right_end[lo_a] + 1
        if node_of.get(lo_b) != id_b:
            continue
        hi_b = right_end.pop(lo_b)
        del node_of[lo_b]
        new_id = n + len(nodes)
        h = max(d, height_of[id_a], height_of[id_b])
        size = hi_b - lo_a + 1
        nodes.append(DendroNode(h, id_a, id_b, size))
        height_of.append(h)
        right_end[lo_a] = hi_b
        node_of[lo_a] = new_id
        left_start[hi_b] = lo_a
        push(lo_a)
        if lo_a > 0:
            push(left_start[lo_a - 1])
    return DendroTree(n, tuple(nodes))


def tree_height(tree: DendroTree) -> float:
    if tree.n_leaves < 2:
        raise DomainError("a single-leaf tree has no height")
    return tree.height(tree.root)


class ActiveDescent:
    """
    Walks internal nodes from the root down in non-increasing height order.
    Calling stop(node) on the node just yielded keeps its subtree out of the walk.
    """

    def __init__(self, tree: DendroTree):
        self.tree = tree
        self._heap: List[Tuple[float, int]] = []
        self._last: Optional[int] = None
        self._stopped = False
        if tree.n_leaves >= 2:
            self._push(tree.root)

    def _push(self, node_id: int) -> None:
        if not self.tree.is_leaf(node_id):
            heapq.heappush(self._heap, (-self.tree.height(node_id), -node_id))

    def __iter__(self) -> Iterator[int]:
        return self

    def __next__(self) -> int:
        if self._last is not None and not self._stopped:
            for child in self.tree.children(self._last):
                self._push(child)
        self._last = None
        if not self._heap:
            raise StopIteration
        _, neg_id = heapq.heappop(self._heap)
        self._last = -neg_id
        self._stopped = False
        return self._last

    def stop(self, node_id: int) -> None:
        if node_id != self._last:
            raise DomainError(f"only the node just yielded can be stopped, not {node_id}")
        self._stopped = True


def descend_active(tree: DendroTree) -> ActiveDescent:
    return ActiveDescent(tree)
