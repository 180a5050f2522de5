"""
Domain model shared by every ghist module: sorted samples, bins, possibly-gapped
histograms, binary merge trees and treatment-by-bin count matrices.

Everything here is immutable after construction (numpy arrays are frozen) and
serializes to plain JSON-ready dicts with the field names used in results.json.
"""
import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateScaleError, DomainError, RejectedInputError

# Linkage rules accepted by the 1-D clusterer (single linkage deliberately absent).
LINKAGES = ("complete", "average", "ward")

BOUNDARY_EXTENSION = "boundary-extension"
MIDPOINT_DESS = "midpoint-dess"
GAP_METHODS = (BOUNDARY_EXTENSION, MIDPOINT_DESS)


def _frozen(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


def dumps(payload: Any) -> str:
    """Deterministic JSON text (sorted keys, no NaN)."""
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)


# -----------------------------
# Samples
# -----------------------------
@dataclass(frozen=True, eq=False)
class SortedSample:
    """
    Ascending values with the sorted->original index map.
    labels and status stay in ORIGINAL order; use sorted_labels / sorted_status
    to read them aligned with values.
    """

    values: np.ndarray
    perm: np.ndarray
    labels: Optional[Tuple[str, ...]] = None
    status: Optional[np.ndarray] = None

    def __post_init__(self):
        values = _frozen(self.values, float)
        perm = _frozen(self.perm, np.int64)
        n = values.size
        if values.ndim != 1 or perm.shape != (n,):
            raise DomainError("values and perm must be 1-d arrays of the same length")
        if n > 1 and np.any(np.diff(values) < 0):
            raise DomainError("values must be non-decreasing")
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise DomainError("perm must be a permutation of 0..n-1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "perm", perm)
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != n:
                raise DomainError(f"labels has length {len(labels)}, expected {n}")
            object.__setattr__(self, "labels", labels)
        if self.status is not None:
            status = _frozen(self.status, np.int8)
            if status.shape != (n,):
                raise DomainError(f"status has length {status.size}, expected {n}")
            if np.any((status != 0) & (status != 1)):
                raise DomainError("status flags must be 0 (censored) or 1 (event)")
            object.__setattr__(self, "status", status)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    @cached_property
    def sorted_labels(self) -> Optional[Tuple[str, ...]]:
        if self.labels is None:
            return None
        return tuple(self.labels[i] for i in self.perm)

    @cached_property
    def sorted_status(self) -> Optional[np.ndarray]:
        if self.status is None:
            return None
        return _frozen(self.status[self.perm], np.int8)

    @cached_property
    def treatments(self) -> Tuple[str, ...]:
        if self.labels is None:
            return ()
        return tuple(sorted(set(self.labels)))

    def with_values(self, values: Sequence[float]) -> "SortedSample":
        """Same ordering metadata, new (already ordered) values."""
        return SortedSample(np.asarray(values, dtype=float), self.perm, self.labels, self.status)

    def subset(self, keep: Sequence[bool]) -> "SortedSample":
        """Sub-sample of the sorted positions where keep is true."""
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (self.n,):
            raise DomainError("subset mask must align with the sorted values")
        if not keep.any():
            raise RejectedInputError("subset is empty")
        original = self.perm[keep]
        kept_sorted = np.sort(original)
        perm = np.searchsorted(kept_sorted, original)
        labels = None if self.labels is None else tuple(self.labels[i] for i in kept_sorted)
        status = None if self.status is None else self.status[kept_sorted]
        return SortedSample(self.values[keep], perm, labels, status)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "values": self.values.tolist(),
            "perm": self.perm.tolist(),
            "labels": None if self.labels is None else list(self.labels),
            "status": None if self.status is None else self.status.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SortedSample":
        return cls(
            np.asarray(d["values"], dtype=float),
            np.asarray(d["perm"], dtype=np.int64),
            None if d.get("labels") is None else tuple(d["labels"]),
            None if d.get("status") is None else np.asarray(d["status"], dtype=np.int8),
        )


def sort_sample(raw: Iterable[float], labels: Optional[Sequence[Any]] = None,
                status: Optional[Sequence[int]] = None) -> SortedSample:
    """
    Stable ascending sort of raw values. When status flags are given, tied values
    put events (1) before censorings (0); otherwise ties keep input order.
    """
    try:
        x = np.asarray(list(raw), dtype=float)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"sample values must be numeric: {e}")
    if x.ndim != 1 or x.size == 0:
        raise RejectedInputError("sample is empty")
    if not np.all(np.isfinite(x)):
        raise RejectedInputError("sample contains NaN or infinite values")
    if status is not None:
        st = np.asarray(status)
        if st.shape != x.shape:
            raise DomainError(f"status has length {st.size}, expected {x.size}")
        if np.any((st != 0) & (st != 1)):
            raise DomainError("status flags must be 0 (censored) or 1 (event)")
        order = np.lexsort((1 - st.astype(np.int64), x))
    else:
        order = np.argsort(x, kind="stable")
    return SortedSample(x[order], order, None if labels is None else tuple(labels), status)


def standardize(sample: SortedSample) -> SortedSample:
    """Zero mean, unit sample standard deviation (divisor n-1)."""
    if sample.n < 2:
        raise DomainError("standardize needs at least 2 values")
    mean = float(np.mean(sample.values))
    sd = float(np.std(sample.values, ddof=1))
    if not np.isfinite(sd) or sd == 0.0:
        raise DegenerateScaleError("sample has zero standard deviation")
    return sample.with_values((sample.values - mean) / sd)


# -----------------------------
# Bins and histograms
# -----------------------------
class GapMark(str, Enum):
    NONE = "none"
    GAP = "gap"
    BOUNDARY = "boundary-of-support"


@dataclass(frozen=True)
class GapDecision:
    """Outcome of adjudicating the junction between two consecutive bins."""

    method: str
    is_gap: bool
    left_bhat: float
    right_ahat: float
    low_confidence: bool = False

    def __post_init__(self):
        if self.method not in GAP_METHODS:
            raise DomainError(f"unknown gap method {self.method!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "is_gap": self.is_gap,
            "left_bhat": self.left_bhat,
            "right_ahat": self.right_ahat,
            "low_confidence": self.low_confidence,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GapDecision":
        return cls(d["method"], bool(d["is_gap"]), float(d["left_bhat"]),
                   float(d["right_ahat"]), bool(d.get("low_confidence", False)))


@dataclass(frozen=True)
class Bin:
    """
    Closed interval [a, b] holding sorted positions start..stop-1.

    dess is scored on the members' own extension edges (ahat, bhat), the same
    edges the uniformity check uses; a and b are the drawn edges, which depend on
    the neighbouring bins.
    """

    a: float
    b: float
    start: int
    stop: int
    dess: float
    left_gap: GapMark = GapMark.NONE
    right_gap: GapMark = GapMark.NONE
    mass: Optional[float] = None
    ahat: Optional[float] = None
    bhat: Optional[float] = None

    def __post_init__(self):
        if self.stop <= self.start or self.start < 0:
            raise DomainError("bin must hold at least one member")
        if self.a > self.b:
            raise DomainError(f"bin edges out of order: [{self.a}, {self.b}]")
        if self.dess < 0:
            raise DomainError("bin DESS must be non-negative")
        if (self.ahat is None) != (self.bhat is None):
            raise DomainError("ahat and bhat go together")
        if self.ahat is not None and self.ahat > self.bhat:
            raise DomainError(f"extension edges out of order: [{self.ahat}, {self.bhat}]")
        object.__setattr__(self, "left_gap", GapMark(self.left_gap))
        object.__setattr__(self, "right_gap", GapMark(self.right_gap))

    @property
    def count(self) -> int:
        return self.stop - self.start

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def fit_width(self) -> float:
        """Width the DESS is scored on: bhat - ahat when known, else b - a."""
        if self.ahat is None:
            return self.width
        return self.bhat - self.ahat

    @property
    def reference_dess(self) -> float:
        return self.fit_width ** 2 / 3.0

    def members(self) -> range:
        return range(self.start, self.stop)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "a": self.a,
            "b": self.b,
            "members": [self.start, self.stop],
            "dess": self.dess,
            "left_gap": self.left_gap.value,
            "right_gap": self.right_gap.value,
        }
        if self.mass is not None:
            out["mass"] = self.mass
        if self.ahat is not None:
            out["ahat"] = self.ahat
            out["bhat"] = self.bhat
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Bin":
        start, stop = d["members"]
        return cls(float(d["a"]), float(d["b"]), int(start), int(stop), float(d["dess"]),
                   GapMark(d["left_gap"]), GapMark(d["right_gap"]),
                   None if d.get("mass") is None else float(d["mass"]),
                   None if d.get("ahat") is None else float(d["ahat"]),
                   None if d.get("bhat") is None else float(d["bhat"]))


@dataclass(frozen=True, eq=False)
class GappedHistogram:
    bins: Tuple[Bin, ...]
    l0: float
    band: Tuple[float, float]
    linkage: str
    gaps: Tuple[GapDecision, ...] = ()

    def __post_init__(self):
        bins = tuple(self.bins)
        if not bins:
            raise DomainError("histogram needs at least one bin")
        if self.linkage not in LINKAGES:
            raise DomainError(f"unknown linkage {self.linkage!r}")
        if bins[0].start != 0:
            raise DomainError("first bin must start at sorted position 0")
        for left, right in zip(bins, bins[1:]):
            if left.stop != right.start:
                raise DomainError("bins must partition the sorted sample")
            if left.b > right.a:
                raise DomainError(f"bins overlap: {left.b} > {right.a}")
            if left.right_gap != right.left_gap:
                raise DomainError("adjacent gap markers disagree")
        gaps = tuple(self.gaps)
        if gaps and len(gaps) != len(bins) - 1:
            raise DomainError("one gap decision per junction expected")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))

    @property
    def k(self) -> int:
        return len(self.bins)

    @property
    def n(self) -> int:
        return self.bins[-1].stop

    @property
    def edges(self) -> np.ndarray:
        """t_0..t_K: first left edge, then every bin's right edge."""
        return np.array([self.bins[0].a] + [b.b for b in self.bins], dtype=float)

    @property
    def n_gaps(self) -> int:
        return sum(1 for b in self.bins[1:] if b.left_gap == GapMark.GAP)

    @property
    def total_dess(self) -> float:
        return float(sum(b.dess for b in self.bins))

    @property
    def masses(self) -> Optional[np.ndarray]:
        if any(b.mass is None for b in self.bins):
            return None
        return np.array([b.mass for b in self.bins], dtype=float)

    def bin_of(self, position: int) -> int:
        starts = [b.start for b in self.bins]
        return int(np.searchsorted(starts, position, side="right") - 1)

    def segments(self) -> List[Tuple[int, int]]:
        return [(b.start, b.stop) for b in self.bins]

    def check_sample(self, sample: SortedSample) -> None:
        """Raise unless every bin encloses its members."""
        if sample.n != self.n:
            raise DomainError(f"histogram covers {self.n} values, sample has {sample.n}")
        for j, b in enumerate(self.bins):
            lo, hi = sample.values[b.start], sample.values[b.stop - 1]
            if lo < b.a or hi > b.b:
                raise DomainError(f"bin {j} [{b.a}, {b.b}] does not enclose [{lo}, {hi}]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bins": [b.to_dict() for b in self.bins],
            "l0": self.l0,
            "band": {"lo": self.band[0], "hi": self.band[1]},
            "linkage": self.linkage,
            "gaps": [g.to_dict() for g in self.gaps],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GappedHistogram":
        return cls(
            tuple(Bin.from_dict(b) for b in d["bins"]),
            float(d["l0"]),
            (float(d["band"]["lo"]), float(d["band"]["hi"])),
            d["linkage"],
            tuple(GapDecision.from_dict(g) for g in d.get("gaps", [])),
        )


# -----------------------------
# Merge trees
# -----------------------------
@dataclass(frozen=True)
class DendroNode:
    height: float
    left: int
    right: int
    size: int


@dataclass(frozen=True, eq=False)
class DendroTree:
    """
    Binary merge tree in scipy's id convention: leaves are 0..n-1 and the k-th
    merge (nodes[k]) has id n + k.
    """

    n_leaves: int
    nodes: Tuple[DendroNode, ...]

    def __post_init__(self):
        n = self.n_leaves
        nodes = tuple(self.nodes)
        if n < 1 or len(nodes) != n - 1:
            raise DomainError(f"a tree on {n} leaves needs {max(n - 1, 0)} merges")
        used = np.zeros(2 * n - 1, dtype=bool)
        sizes = [1] * n
        heights = [0.0] * n
        for k, node in enumerate(nodes):
            me = n + k
            for child in (node.left, node.right):
                if not 0 <= child < me or used[child]:
                    raise DomainError(f"node {me} has invalid child {child}")
                used[child] = True
                if heights[child] > node.height:
                    raise DomainError(f"node {me} is lower than its child {child}")
            if node.size != sizes[node.left] + sizes[node.right]:
                raise DomainError(f"node {me} size mismatch")
            sizes.append(node.size)
            heights.append(node.height)
        object.__setattr__(self, "nodes", nodes)

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 2

    def is_leaf(self, node_id: int) -> bool:
        return node_id < self.n_leaves

    def node(self, node_id: int) -> DendroNode:
        if self.is_leaf(node_id):
            raise DomainError(f"{node_id} is a leaf")
        return self.nodes[node_id - self.n_leaves]

    def height(self, node_id: int) -> float:
        return 0.0 if self.is_leaf(node_id) else self.node(node_id).height

    def children(self, node_id: int) -> Tuple[int, int]:
        node = self.node(node_id)
        return node.left, node.right

    def internal_ids(self) -> range:
        return range(self.n_leaves, 2 * self.n_leaves - 1)

    @cached_property
    def _bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.arange(2 * self.n_leaves - 1)
        hi = lo.copy()
        for k, node in enumerate(self.nodes):
            me = self.n_leaves + k
            lo[me] = min(lo[node.left], lo[node.right])
            hi[me] = max(hi[node.left], hi[node.right])
        return lo, hi

    @cached_property
    def _parents(self) -> np.ndarray:
        parents = np.full(2 * self.n_leaves - 1, -1)
        for k, node in enumerate(self.nodes):
            parents[node.left] = parents[node.right] = self.n_leaves + k
        return parents

    def span(self, node_id: int) -> Tuple[int, int]:
        """Smallest and largest leaf index below node_id (inclusive)."""
        lo, hi = self._bounds
        return int(lo[node_id]), int(hi[node_id])

    def size(self, node_id: int) -> int:
        return 1 if self.is_leaf(node_id) else self.node(node_id).size

    def is_contiguous(self, node_id: int) -> bool:
        lo, hi = self.span(node_id)
        return hi - lo + 1 == self.size(node_id)

    def parent_of(self, node_id: int) -> Optional[int]:
        p = int(self._parents[node_id])
        return None if p < 0 else p

    def leaves(self, node_id: int) -> Tuple[int, ...]:
        out = []
        stack = [node_id]
        while stack:
            cur = stack.pop()
            if self.is_leaf(cur):
                out.append(cur)
            else:
                node = self.node(cur)
                stack.extend((node.left, node.right))
        return tuple(sorted(out))

    def to_linkage(self) -> np.ndarray:
        return np.array([[nd.left, nd.right, nd.height, nd.size] for nd in self.nodes], dtype=float).reshape(-1, 4)

    @classmethod
    def from_linkage(cls, z: np.ndarray, n_leaves: int) -> "DendroTree":
        nodes = tuple(DendroNode(float(h), int(a), int(b), int(c)) for a, b, h, c in np.asarray(z))
        return cls(n_leaves, nodes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_leaves": self.n_leaves,
            "root": self.root,
            "nodes": [
                {
                    "id": self.n_leaves + k,
                    "height": nd.height,
                    "left": nd.left,
                    "right": nd.right,
                    "leaves": list(self.leaves(self.n_leaves + k)),
                }
                for k, nd in enumerate(self.nodes)
            ],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "DendroTree":
        n = int(d["n_leaves"])
        nodes = tuple(
            DendroNode(float(r["height"]), int(r["left"]), int(r["right"]), len(r["leaves"]))
            for r in d["nodes"]
        )
        return cls(n, nodes)


# -----------------------------
# Treatment x bin counts
# -----------------------------
@dataclass(frozen=True, eq=False)
class TreatmentMatrix:
    """
    J x K counts T[j, k] of treatment j in bin k. Counts are integers for
    complete data; Kaplan-Meier weighted compositions carry real effective counts.
    """

    counts: np.ndarray
    treatment_names: Tuple[str, ...]
    n_j: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 2:
            raise DomainError("counts must be a J x K matrix")
        counts = _frozen(counts, counts.dtype if np.issubdtype(counts.dtype, np.integer) else float)
        names = tuple(str(x) for x in self.treatment_names)
        n_j = _frozen(self.n_j, counts.dtype)
        edges = _frozen(self.edges, float)
        j, k = counts.shape
        if np.any(counts < 0):
            raise DomainError("counts must be non-negative")
        if len(names) != j or n_j.shape != (j,):
            raise DomainError("one name and one size per treatment row expected")
        if edges.shape != (k + 1,) or np.any(np.diff(edges) < 0):
            raise DomainError("edges must be K+1 non-decreasing boundaries")
        if not np.allclose(counts.sum(axis=1), n_j, rtol=0, atol=1e-9):
            raise DomainError("row sums of counts must equal n_j")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "treatment_names", names)
        object.__setattr__(self, "n_j", n_j)
        object.__setattr__(self, "edges", edges)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.counts.shape

    @property
    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counts": self.counts.tolist(),
            "treatment_names": list(self.treatment_names),
            "n_j": self.n_j.tolist(),
            "edges": self.edges.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TreatmentMatrix":
        return cls(np.asarray(d["counts"]), tuple(d["treatment_names"]),
                   np.asarray(d["n_j"]), np.asarray(d["edges"], dtype=float))
