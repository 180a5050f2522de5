"""
Carving a merge tree into a possibly-gapped histogram.

build_histogram walks the tree from the root down by height and stops on any
node that is already a uniform part (DESS criterion) or too cheap to split
(intrinsic DESS below L0). The chosen segments then go through `assemble`,
which adjudicates every junction, fixes bin edges and scores each bin. refine()
and brute_force_optimum() use the same `assemble`, so all three score a given
segmentation identically.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    BOUNDARY_EXTENSION,
    GAP_METHODS,
    LINKAGES,
    MIDPOINT_DESS,
    Bin,
    DendroTree,
    GapDecision,
    GapMark,
    GappedHistogram,
    SortedSample,
)
from .errors import DegenerateScaleError, DomainError, ExponentialGuardError
from .hc1d import cluster, descend_active, tree_height
from .parallel import map_chunks
from .uniformity import BandLike, band_table, dess, dess_criterion

log = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 14

__all__ = [
    "GapDecision",
    "Hamiltonian",
    "L0Spec",
    "assemble",
    "brute_force_optimum",
    "build_histogram",
    "check_gap_boundaries",
    "check_gap_midpoint",
    "ecdf_polyline",
    "ensemble_size",
    "extension_edges",
    "hamiltonian",
    "intrinsic_dess",
    "is_uniform_part",
    "near_optimality",
    "refine",
    "segmentation_count",
]


@dataclass(frozen=True)
class L0Spec:
    """Boundary coding cost, either absolute or a fraction of the tree height. Absolute wins."""

    fraction: Optional[float] = 0.1
    absolute: Optional[float] = None

    def __post_init__(self):
        if self.absolute is not None:
            if not self.absolute > 0:
                raise DomainError("absolute L0 must be positive")
        elif self.fraction is None or not 0 < self.fraction <= 1:
            raise DomainError("L0 fraction must lie in (0, 1]")

    def resolve(self, tree: DendroTree) -> float:
        if self.absolute is not None:
            return float(self.absolute)
        return float(self.fraction * tree_height(tree))

    def to_dict(self) -> Dict[str, Optional[float]]:
        if self.absolute is not None:
            return {"absolute": self.absolute}
        return {"fraction_of_tree_height": self.fraction}


@dataclass(frozen=True)
class Hamiltonian:
    total_dess: float
    n_boundaries: int
    l0: float
    value: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "total_dess": self.total_dess,
            "n_boundaries": self.n_boundaries,
            "l0": self.l0,
            "value": self.value,
        }


# -----------------------------
# Bin-level helpers
# -----------------------------
def extension_edges(values: Sequence[float]) -> Tuple[float, float]:
    """(a_hat, b_hat): extremes pushed out by one average spacing (range/(n*+1))."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DomainError("extension edges of an empty bin")
    lo, hi = float(x[0]), float(x[-1])
    spread = (hi - lo) / (x.size + 1)
    return lo - spread, hi + spread


def intrinsic_dess(values: Sequence[float]) -> float:
    a, b = extension_edges(values)
    if not a < b:
        return 0.0
    return dess(values, a, b)


def _uniform_within(values: np.ndarray, a: float, b: float, bands: BandLike) -> bool:
    if values.size == 1 or not a < b:
        return True
    return dess_criterion(values, a, b, bands)


def is_uniform_part(values: Sequence[float], bands: BandLike) -> bool:
    x = np.asarray(values, dtype=float)
    a, b = extension_edges(x)
    return _uniform_within(x, a, b, bands)


def _resolve_bands(bands: Optional[BandLike]) -> BandLike:
    return band_table() if bands is None else bands


# -----------------------------
# Gap adjudication
# -----------------------------
def check_gap_boundaries(left_values: Sequence[float], right_values: Sequence[float]) -> GapDecision:
    """Gap iff the left bin's extended right edge falls short of the right bin's extended left edge."""
    left = np.asarray(left_values, dtype=float)
    right = np.asarray(right_values, dtype=float)
    if left.size == 0 or right.size == 0:
        raise DomainError("gap check needs two non-empty bins")
    if left[-1] > right[0]:
        raise DomainError("left bin must lie entirely left of the right bin")
    _, bhat = extension_edges(left)
    ahat, _ = extension_edges(right)
    return GapDecision(BOUNDARY_EXTENSION, bool(bhat < ahat), bhat, ahat,
                       low_confidence=bool(left.size == 1 or right.size == 1))


def check_gap_midpoint(left_values: Sequence[float], right_values: Sequence[float],
                       bands: Optional[BandLike] = None) -> GapDecision:
    """
    Share the midpoint between the facing extremes as a common edge; the
    junction is a gap unless both bins still pass the DESS criterion.
    """
    left = np.asarray(left_values, dtype=float)
    right = np.asarray(right_values, dtype=float)
    if left.size == 0 or right.size == 0:
        raise DomainError("gap check needs two non-empty bins")
    if left[-1] > right[0]:
        raise DomainError("left bin must lie entirely left of the right bin")
    bands = _resolve_bands(bands)
    mid = (float(left[-1]) + float(right[0])) / 2.0
    left_a, _ = extension_edges(left)
    _, right_b = extension_edges(right)
    both = _uniform_within(left, left_a, mid, bands) and _uniform_within(right, mid, right_b, bands)
    return GapDecision(MIDPOINT_DESS, not both, mid, mid,
                       low_confidence=bool(left.size == 1 or right.size == 1))


# -----------------------------
# Assembly and scoring
# -----------------------------
def assemble(sample: SortedSample, segments: Sequence[Tuple[int, int]], l0: float, linkage: str = "complete",
             gap_method: str = BOUNDARY_EXTENSION, bands: Optional[BandLike] = None,
             cross_check: bool = True) -> GappedHistogram:
    """
    Turn a segmentation (consecutive [start, stop) runs of sorted positions)
    into a GappedHistogram.

    Edges: support ends use the extension estimates; a contiguous junction sits
    at the midpoint of the facing extremes; a gapped junction keeps each bin's
    extension estimate, clipped at that midpoint. Each bin's DESS is its
    intrinsic DESS, so a reported bin passes or fails exactly as the stop rule saw it.
    """
    if gap_method not in GAP_METHODS:
        raise DomainError(f"unknown gap method {gap_method!r}")
    bands = _resolve_bands(bands)
    values = sample.values
    segments = sorted((int(s), int(e)) for s, e in segments)
    if not segments or segments[0][0] != 0 or segments[-1][1] != sample.n:
        raise DomainError("segments must cover the whole sample")

    parts = [values[s:e] for s, e in segments]
    decisions: List[GapDecision] = []
    for j, (left, right) in enumerate(zip(parts, parts[1:])):
        boundary = check_gap_boundaries(left, right)
        midpoint = check_gap_midpoint(left, right, bands) if (cross_check or gap_method == MIDPOINT_DESS) else None
        primary = boundary if gap_method == BOUNDARY_EXTENSION else midpoint
        other = midpoint if gap_method == BOUNDARY_EXTENSION else boundary
        if other is not None and other.is_gap != primary.is_gap:
            log.warning("junction %d: %s says gap=%s, %s says gap=%s; keeping %s",
                     j, primary.method, primary.is_gap, other.method, other.is_gap, primary.method)
        if primary.low_confidence and primary.is_gap:
            log.info("junction %d: gap decided on a single-value bin", j)
        decisions.append(primary)

    lefts = [extension_edges(p)[0] for p in parts]
    rights = [extension_edges(p)[1] for p in parts]
    a_edges = [lefts[0]]
    b_edges = []
    marks = [GapMark.BOUNDARY]
    for j, decision in enumerate(decisions):
        mid = (float(parts[j][-1]) + float(parts[j + 1][0])) / 2.0
        if decision.is_gap:
            b_edges.append(min(rights[j], mid))
            a_edges.append(max(lefts[j + 1], mid))
            marks.append(GapMark.GAP)
        else:
            b_edges.append(mid)
            a_edges.append(mid)
            marks.append(GapMark.NONE)
    b_edges.append(rights[-1])
    marks.append(GapMark.BOUNDARY)

    bins = []
    for j, ((start, stop), part) in enumerate(zip(segments, parts)):
        # scored where the stop rule looked, not at the drawn edges
        bins.append(Bin(a_edges[j], b_edges[j], start, stop, intrinsic_dess(part), marks[j], marks[j + 1],
                        ahat=lefts[j], bhat=rights[j]))

    whole = bands.band_for(sample.n)
    return GappedHistogram(tuple(bins), float(l0), (whole.lo, whole.hi), linkage, tuple(decisions))


def hamiltonian(histogram: GappedHistogram, l0: Optional[float] = None) -> Hamiltonian:
    """Total DESS plus L0 per coded boundary; a gapped junction codes two edges."""
    l0 = histogram.l0 if l0 is None else float(l0)
    n_boundaries = (histogram.k - 1) + histogram.n_gaps
    total = histogram.total_dess
    return Hamiltonian(total, n_boundaries, l0, total + n_boundaries * l0)


# -----------------------------
# Tree carving
# -----------------------------
def _stop_here(values: np.ndarray, l0: float, bands: BandLike) -> bool:
    return intrinsic_dess(values) < l0 or is_uniform_part(values, bands)


def build_histogram(sample: SortedSample, l0_spec: Union[L0Spec, float] = L0Spec(), linkage: str = "complete",
                    band: Optional[BandLike] = None, gap_method: str = BOUNDARY_EXTENSION,
                    tree: Optional[DendroTree] = None) -> GappedHistogram:
    """Coarsest histogram whose bins are uniform parts or cheaper than a boundary."""
    if sample.n < 2:
        raise DomainError("a histogram needs at least 2 values")
    values = sample.values
    if values[0] == values[-1]:
        raise DegenerateScaleError("all values are identical")
    if linkage not in LINKAGES:
        raise DomainError(f"unsupported linkage {linkage!r}")
    bands = _resolve_bands(band)
    if tree is None:
        tree = cluster(sample, linkage)
    elif tree.n_leaves != sample.n:
        raise DomainError(f"tree has {tree.n_leaves} leaves, sample has {sample.n} values")
    l0 = l0_spec.resolve(tree) if isinstance(l0_spec, L0Spec) else float(l0_spec)
    if not l0 > 0:
        raise DomainError("L0 must be positive")

    segments = []
    walk = descend_active(tree)
    for node in walk:
        lo, hi = tree.span(node)
        if _stop_here(values[lo:hi + 1], l0, bands):
            walk.stop(node)
            segments.append((lo, hi + 1))
            continue
        for child in tree.children(node):
            if tree.is_leaf(child):
                segments.append((child, child + 1))
    histogram = assemble(sample, segments, l0, linkage, gap_method, bands)
    log.info("histogram: %d bins, %d gaps, L0=%.4g", histogram.k, histogram.n_gaps, l0)
    return histogram


def _node_index(tree: DendroTree) -> Dict[Tuple[int, int], int]:
    index = {}
    for node in range(2 * tree.n_leaves - 1):
        if tree.is_contiguous(node):
            index[tree.span(node)] = node
    return index


def refine(histogram: GappedHistogram, tree: DendroTree, sample: SortedSample, l0: Optional[float] = None,
           bands: Optional[BandLike] = None, gap_method: Optional[str] = None) -> GappedHistogram:
    """
    Split bins at their tree node while a split lowers the intrinsic DESS by
    more than L0 (the price of the extra boundary).
    """
    if tree.n_leaves != histogram.n or sample.n != histogram.n:
        raise DomainError("tree, sample and histogram sizes disagree")
    l0 = histogram.l0 if l0 is None else float(l0)
    if gap_method is None:
        gap_method = histogram.gaps[0].method if histogram.gaps else BOUNDARY_EXTENSION
    bands = _resolve_bands(bands)
    index = _node_index(tree)
    values = sample.values

    def cost(node: int) -> float:
        lo, hi = tree.span(node)
        return intrinsic_dess(values[lo:hi + 1])

    pending = []
    for b in histogram.bins:
        node = index.get((b.start, b.stop - 1))
        if node is None:
            raise DomainError(f"bin [{b.start}, {b.stop}) is not a node of the tree")
        pending.append(node)

    final = []
    splits = 0
    while pending:
        node = pending.pop()
        if tree.is_leaf(node) or cost(node) <= l0:
            final.append(node)
            continue
        left, right = tree.children(node)
        if cost(node) - cost(left) - cost(right) > l0:
            pending.extend((left, right))
            splits += 1
        else:
            final.append(node)
    if splits == 0:
        return histogram
    segments = [(tree.span(nd)[0], tree.span(nd)[1] + 1) for nd in final]
    refined = assemble(sample, segments, l0, histogram.linkage, gap_method, bands)
    log.info("refine: %d splits, %d -> %d bins", splits, histogram.k, refined.k)
    return refined


# -----------------------------
# Exhaustive reference search
# -----------------------------
def segmentation_count(n: int) -> int:
    if n < 1:
        raise DomainError("n must be at least 1")
    return 2 ** (n - 1)


def ensemble_size(n: int) -> int:
    """Candidates of the two-layer (bin boundary + gap flag) ensemble."""
    if n < 1:
        raise DomainError("n must be at least 1")
    return 3 ** (n - 1)


def _segments_of(mask: int, n: int) -> List[Tuple[int, int]]:
    cuts = [i + 1 for i in range(n - 1) if mask >> i & 1]
    bounds = [0] + cuts + [n]
    return list(zip(bounds, bounds[1:]))


def brute_force_optimum(sample: SortedSample, l0: float, bands: Optional[BandLike] = None,
                        gap_method: str = BOUNDARY_EXTENSION, linkage: str = "complete",
                        workers: int = 1, cap: int = BRUTE_FORCE_CAP) -> Tuple[GappedHistogram, Hamiltonian]:
    """
    Minimum-Hamiltonian histogram over every segmentation that keeps equal
    values together. Ties go to fewer bins, then to the leftmost boundaries.
    """
    n = sample.n
    if n > cap:
        raise ExponentialGuardError(f"brute force is capped at n={cap}, got n={n}")
    if n < 1:
        raise DomainError("empty sample")
    bands = _resolve_bands(bands)
    # a cut between equal values is never a boundary
    tied = sum(1 << i for i in range(n - 1) if sample.values[i] == sample.values[i + 1])
    masks = [m for m in range(segmentation_count(n)) if not m & tied]
    step = max(1, len(masks) // max(1, workers * 4))
    blocks = [masks[i:i + step] for i in range(0, len(masks), step)]

    def best_of(block: List[int]):
        best = None
        for mask in block:
            segments = _segments_of(mask, n)
            hist = assemble(sample, segments, l0, linkage, gap_method, bands, cross_check=False)
            h = hamiltonian(hist)
            key = (h.value, hist.k, tuple(s for s, _ in segments[1:]))
            if best is None or key < best[0]:
                best = (key, hist, h)
        return best

    results = map_chunks(best_of, blocks, workers)
    _, hist, h = min(results, key=lambda r: r[0])
    return hist, h


def ecdf_polyline(sample: SortedSample, histogram: GappedHistogram) -> Tuple[np.ndarray, np.ndarray]:
    """
    Piecewise-linear CDF through the bin edges: linear inside a bin, flat
    across a gap. Uses the bin masses when present, counts otherwise.
    """
    if histogram.n != sample.n:
        raise DomainError("histogram and sample sizes disagree")
    masses = histogram.masses
    weights = masses if masses is not None else np.array([b.count for b in histogram.bins], dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(weights))) / weights.sum()
    xs, ys = [], []
    for j, b in enumerate(histogram.bins):
        xs.extend((b.a, b.b))
        ys.extend((cum[j], cum[j + 1]))
    return np.asarray(xs), np.asarray(ys)


@dataclass(frozen=True)
class NearOptimality:
    ratios: np.ndarray

    @property
    def median(self) -> float:
        return float(np.median(self.ratios))

    @property
    def worst(self) -> float:
        return float(np.max(self.ratios))

    def to_dict(self) -> Dict[str, object]:
        return {"ratios": self.ratios.tolist(), "median": self.median, "max": self.worst}


def near_optimality(samples: Sequence[SortedSample], l0_spec: L0Spec = L0Spec(), linkage: str = "complete",
                    bands: Optional[BandLike] = None, gap_method: str = BOUNDARY_EXTENSION,
                    workers: int = 1) -> NearOptimality:
    """Builder-to-optimum Hamiltonian ratios (>= 1) over small samples."""
    bands = _resolve_bands(bands)
    ratios = []
    for sample in samples:
        tree = cluster(sample, linkage)
        hist = build_histogram(sample, l0_spec, linkage, bands, gap_method, tree)
        _, best = brute_force_optimum(sample, hist.l0, bands, gap_method, linkage, workers)
        ratios.append(hamiltonian(hist).value / best.value)
    return NearOptimality(np.asarray(ratios, dtype=float))
