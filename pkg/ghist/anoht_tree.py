"""
Phase two of the analysis of histogram: the treatment tree built on
row-normalized bin frequencies, rank-digits of its merges, the multinomial
increment covariance, row mimicking, and branch authenticity indices.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import linkage

from .core import DendroTree, TreatmentMatrix
from .errors import DomainError
from .parallel import SeedLike, map_chunks, spawn_generators

log = logging.getLogger(__name__)

MIN_MIMICS = 100
COVARIANCE_KINDS = ("bridge", "increment", "km", "na")
TREE_BLOCK = 256


@dataclass(frozen=True, eq=False)
class CovarianceK:
    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise DomainError(f"unknown covariance kind {self.kind!r}")
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("covariance must be a square matrix")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12):
            raise DomainError("covariance must be symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class BranchSupport:
    node_id: int
    leaves: Tuple[int, ...]
    names: Tuple[str, ...]
    height: float
    rank_digit: int
    index: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "node_id": self.node_id,
            "leaves": list(self.leaves),
            "names": list(self.names),
            "height": self.height,
            "rank_digit": self.rank_digit,
            "index": self.index,
        }


@dataclass(frozen=True)
class AuthenticityReport:
    nodes: Tuple[BranchSupport, ...]
    B: int
    tree: DendroTree

    def index_of(self, names: Sequence[str]) -> float:
        """Authenticity of the branch whose leaves are exactly these treatments."""
        wanted = frozenset(names)
        for node in self.nodes:
            if frozenset(node.names) == wanted:
                return node.index
        raise DomainError(f"no branch holds exactly {sorted(wanted)}")

    def to_dict(self) -> Dict[str, object]:
        return {"B": self.B, "nodes": [n.to_dict() for n in self.nodes], "tree": self.tree.to_dict()}


# -----------------------------
# Treatment tree
# -----------------------------
def row_normalize(T: TreatmentMatrix) -> np.ndarray:
    counts = np.asarray(T.counts, dtype=float)
    sizes = counts.sum(axis=1)
    if np.any(sizes <= 0):
        empty = [T.treatment_names[j] for j in np.flatnonzero(sizes <= 0)]
        raise DomainError(f"treatments with no observations: {', '.join(empty)}")
    return counts / sizes[:, None]


def treatment_tree(P: np.ndarray) -> DendroTree:
    """Complete-linkage tree over the rows of P under Euclidean distance."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise DomainError("a treatment tree needs at least 2 rows")
    z = linkage(P, method="complete", metric="euclidean")
    return DendroTree.from_linkage(z, P.shape[0])


def rank_digits(tree: DendroTree) -> np.ndarray:
    """
    Rank (1 = lowest) of each merge, indexed in merge order. Equal heights
    rank the smaller branch first, then the one with the leftmost leaf.
    """
    keys = []
    for k, node in enumerate(tree.nodes):
        node_id = tree.n_leaves + k
        keys.append((node.height, node.size, tree.span(node_id)[0], k))
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    ranks = np.empty(len(keys), dtype=np.int64)
    ranks[order] = np.arange(1, len(keys) + 1)
    return ranks


def lowest_common_branch(tree: DendroTree, leaves: Sequence[int]) -> int:
    """Lowest internal node whose leaf set contains every given leaf."""
    wanted = set(int(x) for x in leaves)
    sets: List[frozenset] = [frozenset((i,)) for i in range(tree.n_leaves)]
    for node in tree.nodes:
        merged = sets[node.left] | sets[node.right]
        sets.append(merged)
        if wanted <= merged:
            return len(sets) - 1
    raise DomainError(f"leaves {sorted(wanted)} are not all in the tree")


# -----------------------------
# Covariances
# -----------------------------
def cumulative_matrix(K: int) -> np.ndarray:
    """A: lower-triangular ones, so A @ dF = F."""
    return np.tril(np.ones((K, K)))


def difference_matrix(K: int) -> np.ndarray:
    """A^-1: first differences."""
    return np.eye(K) - np.eye(K, k=-1)


def sigma_bridge(F_at_edges: Sequence[float]) -> CovarianceK:
    """Brownian-bridge covariance F(t_i)(1 - F(t_j)) for i <= j."""
    F = np.asarray(F_at_edges, dtype=float)
    if F.ndim != 1 or F.size == 0:
        raise DomainError("F must be a non-empty vector")
    if np.any(F < 0) or np.any(F > 1) or np.any(np.diff(F) < 0):
        raise DomainError("F must be non-decreasing within [0, 1]")
    return CovarianceK("bridge", np.minimum.outer(F, F) * (1.0 - np.maximum.outer(F, F)))


def sigma_star(deltaF: Sequence[float]) -> CovarianceK:
    """Multinomial increment covariance diag(dF) - dF dF^T."""
    d = np.asarray(deltaF, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise DomainError("dF must be a non-empty vector")
    if np.any(d < 0):
        raise DomainError("dF must be non-negative")
    if d.sum() > 1 + 1e-12:
        raise DomainError(f"dF sums to {d.sum()}, more than 1")
    return CovarianceK("increment", np.diag(d) - np.outer(d, d))


# -----------------------------
# Mimicking
# -----------------------------
def gaussian_draws(mean: Sequence[float], cov: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Multivariate normal draws through a symmetric eigendecomposition, negative eigenvalues set to 0."""
    mean = np.asarray(mean, dtype=float)
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return mean + rng.standard_normal((size, mean.size)) @ root.T


def _clamp_rows(draws: np.ndarray, p_row: np.ndarray) -> np.ndarray:
    target = float(p_row.sum())
    out = np.clip(draws, 0.0, None)
    sums = out.sum(axis=1)
    empty = sums <= 0
    if np.any(empty):
        log.warning("%d mimicked rows had no positive mass; using the mean row instead", int(empty.sum()))
        out[empty] = p_row
        sums[empty] = target
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(sums > 0, target / sums, 0.0)
    return out * scale[:, None]


def mimic_rows(p_row: Sequence[float], n_j: float, size: int, rng: np.random.Generator,
               raw: bool = False, cov: Optional[np.ndarray] = None) -> np.ndarray:
    """
    `size` mimics of a frequency row: Gaussian around p_row with covariance
    sigma_star(p_row)/n_j (or `cov` when given), negatives clamped to 0 and the
    row rescaled to its original sum. raw=True returns the unclamped draws.
    """
    p = np.asarray(p_row, dtype=float)
    if cov is None:
        if p.sum() > 1 + 1e-12:
            raise DomainError("row frequencies sum to more than 1")
        if n_j < 1:
            raise DomainError("treatment size must be at least 1")
        cov = sigma_star(p).matrix / n_j
    draws = gaussian_draws(p, cov, size, rng)
    return draws if raw else _clamp_rows(draws, p)


def mimic_row(p_row: Sequence[float], n_j: float, seed: SeedLike = None) -> np.ndarray:
    return mimic_rows(p_row, n_j, 1, np.random.default_rng(seed))[0]


# -----------------------------
# Authenticity
# -----------------------------
def authenticity_from_rows(rows: np.ndarray, covariances: Sequence[np.ndarray], names: Sequence[str],
                           B: int = 10000, seed: SeedLike = 12345, workers: int = 1) -> AuthenticityReport:
    """
    Share of mimicked trees in which the smallest branch holding each reference
    branch's treatments ranks no higher than the reference branch.
    Row j is mimicked around rows[j] with covariances[j].
    """
    if B < MIN_MIMICS:
        raise DomainError(f"need at least {MIN_MIMICS} mimics, got {B}")
    rows = np.asarray(rows, dtype=float)
    J = rows.shape[0]
    if len(covariances) != J or len(names) != J:
        raise DomainError("one covariance and one name per row expected")
    reference = treatment_tree(rows)
    ref_ranks = rank_digits(reference)
    ref_leaves = [reference.leaves(node_id) for node_id in reference.internal_ids()]

    generators = spawn_generators(seed, J)
    mimics = np.stack(
        [mimic_rows(rows[j], 1.0, B, generators[j], cov=covariances[j]) for j in range(J)],
        axis=1,
    )

    def score(block: range) -> np.ndarray:
        hits = np.zeros(len(ref_leaves), dtype=np.int64)
        for b in block:
            tree = treatment_tree(mimics[b])
            ranks = rank_digits(tree)
            for i, leaves in enumerate(ref_leaves):
                lca = lowest_common_branch(tree, leaves)
                if ranks[lca - J] <= ref_ranks[i]:
                    hits[i] += 1
        return hits

    blocks = [range(s, min(s + TREE_BLOCK, B)) for s in range(0, B, TREE_BLOCK)]
    hits = np.sum(map_chunks(score, blocks, workers), axis=0)

    nodes = []
    for i, leaves in enumerate(ref_leaves):
        node_id = J + i
        nodes.append(BranchSupport(
            node_id,
            leaves,
            tuple(names[j] for j in leaves),
            reference.height(node_id),
            int(ref_ranks[i]),
            float(hits[i] / B),
        ))
    log.info("authenticity over %d mimics: %s", B,
             ", ".join(f"{'+'.join(n.names)}={n.index:.3f}" for n in nodes))
    return AuthenticityReport(tuple(nodes), B, reference)


def authenticity(T: TreatmentMatrix, B: int = 10000, seed: SeedLike = 12345, workers: int = 1) -> AuthenticityReport:
    """Branch authenticity of the treatment tree of T, mimicking rows with sigma_star(P_j)/n_j."""
    P = row_normalize(T)
    sizes = np.asarray(T.counts, dtype=float).sum(axis=1)
    covariances = [sigma_star(P[j]).matrix / sizes[j] for j in range(P.shape[0])]
    return authenticity_from_rows(P, covariances, T.treatment_names, B, seed, workers)
