"""
Right-censored data: Kaplan-Meier and Nelson-Aalen step estimates, the
variance-integral approximation, censored histograms whose bin masses are
re-weighted by the product-limit estimate, and the censored covariances that
feed the phase-two authenticity indices.

Observations are read in the SortedSample order, where tied event times come
before tied censoring times.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .anoht_tree import (
    AuthenticityReport,
    CovarianceK,
    authenticity_from_rows,
    difference_matrix,
)
from .builder import L0Spec, build_histogram
from .core import BOUNDARY_EXTENSION, DendroTree, GappedHistogram, SortedSample, TreatmentMatrix
from .errors import DomainError
from .parallel import SeedLike
from .uniformity import BandLike

log = logging.getLogger(__name__)

SURVIVAL = "survival"
CUMHAZ = "cumhaz"
BASES = ("km", "na")
WEIGHTINGS = ("km", "raw")


@dataclass(frozen=True, eq=False)
class StepEstimate:
    """Right-continuous step function: values[i] holds from times[i] until the next jump."""

    times: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise DomainError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise DomainError("jump times must be strictly increasing")
        if self.kind == SURVIVAL:
            if np.any(np.diff(values) > 1e-12) or np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
                raise DomainError("survival estimate must be non-increasing within [0, 1]")
        elif self.kind == CUMHAZ:
            if np.any(np.diff(values) < -1e-12) or np.any(values < -1e-12):
                raise DomainError("cumulative hazard must be non-decreasing and non-negative")
        else:
            raise DomainError(f"unknown estimate kind {self.kind!r}")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def initial(self) -> float:
        return 1.0 if self.kind == SURVIVAL else 0.0

    def _lookup(self, t, side: str):
        idx = np.searchsorted(self.times, t, side=side) - 1
        if self.times.size == 0:
            vals = np.full(np.shape(idx), self.initial)
        else:
            vals = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.initial)
        return float(vals) if np.ndim(t) == 0 else vals

    def at(self, t: Union[float, np.ndarray]):
        """Value at t (right-continuous)."""
        return self._lookup(t, "right")

    def before(self, t: Union[float, np.ndarray]):
        """Left limit at t."""
        return self._lookup(t, "left")

    def to_dict(self) -> Dict[str, object]:
        return {"kind": self.kind, "times": self.times.tolist(), "values": self.values.tolist()}


def _require_status(sample: SortedSample) -> np.ndarray:
    if sample.status is None:
        raise DomainError("survival estimates need event/censoring status")
    return sample.sorted_status.astype(float)


def _at_risk(n: int) -> np.ndarray:
    """n - i + 1 for i = 1..n."""
    return np.arange(n, 0, -1, dtype=float)


def _jump_table(sample: SortedSample, per_obs: np.ndarray, kind: str) -> StepEstimate:
    """Collapse a per-observation running value onto the distinct event times."""
    delta = sample.sorted_status
    times = np.unique(sample.values[delta == 1])
    last = np.searchsorted(sample.values, times, side="right") - 1
    return StepEstimate(times, per_obs[last], kind)


def kaplan_meier(sample: SortedSample) -> StepEstimate:
    """Product-limit survival estimate prod (1 - delta_(i)/(n-i+1))."""
    delta = _require_status(sample)
    running = np.cumprod(1.0 - delta / _at_risk(sample.n))
    return _jump_table(sample, running, SURVIVAL)


def nelson_aalen(sample: SortedSample) -> StepEstimate:
    """Cumulative hazard sum delta_(i)/(n-i+1)."""
    delta = _require_status(sample)
    running = np.cumsum(delta / _at_risk(sample.n))
    return _jump_table(sample, running, CUMHAZ)


def _integral_terms(sample: SortedSample) -> np.ndarray:
    """n * delta_(i)/((n-i)(n-i+1)) per observation; the i = n term is dropped."""
    delta = _require_status(sample)
    n = sample.n
    risk = _at_risk(n)
    terms = np.zeros(n)
    terms[:-1] = n * delta[:-1] / ((risk[:-1] - 1.0) * risk[:-1])
    return terms


def variance_integral(sample: SortedSample, t_lo: float, t_hi: float, include_lo: bool = True) -> float:
    """Approximate variance integral over [t_lo, t_hi] ((t_lo, t_hi] with include_lo=False)."""
    if not t_lo < t_hi:
        raise DomainError(f"variance integral needs t_lo < t_hi, got [{t_lo}, {t_hi}]")
    terms = _integral_terms(sample)
    x = sample.values
    inside = (x >= t_lo if include_lo else x > t_lo) & (x <= t_hi)
    return float(terms[inside].sum())


def bin_integrals(sample: SortedSample, edges: Sequence[float]) -> np.ndarray:
    """Variance integral per bin over (t_{k-1}, t_k]; the first bin is closed on the left."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) < 0):
        raise DomainError("edges must be at least 2 non-decreasing boundaries")
    terms = _integral_terms(sample)
    x = sample.values
    out = np.zeros(edges.size - 1)
    for k in range(edges.size - 1):
        lower = x >= edges[k] if k == 0 else x > edges[k]
        out[k] = terms[lower & (x <= edges[k + 1])].sum()
    return out


def uncensored(sample: SortedSample) -> SortedSample:
    delta = _require_status(sample)
    if not np.any(delta == 1):
        raise DomainError("sample has no events")
    return sample.subset(delta == 1)


def censored_histogram(sample: SortedSample, l0_spec: Union[L0Spec, float] = L0Spec(), linkage: str = "complete",
                       band: Optional[BandLike] = None, gap_method: str = BOUNDARY_EXTENSION,
                       tree: Optional[DendroTree] = None) -> GappedHistogram:
    """
    Histogram built on the event times only, with each bin's mass re-weighted
    to S(a-) - S(b) from the Kaplan-Meier estimate of the full sample.
    """
    delta = _require_status(sample)
    if np.count_nonzero(delta == 1) < 2:
        raise DomainError("a censored histogram needs at least 2 events")
    events = uncensored(sample)
    histogram = build_histogram(events, l0_spec, linkage, band, gap_method, tree)
    km = kaplan_meier(sample)
    bins = tuple(replace(b, mass=max(km.before(b.a) - km.at(b.b), 0.0)) for b in histogram.bins)
    weighted = replace(histogram, bins=bins)
    log.info("censored histogram: %d events of %d, mass %.4f", events.n, sample.n, float(weighted.masses.sum()))
    return weighted


def sigma_km(S_at_edges: Sequence[float], integrals: Sequence[float]) -> CovarianceK:
    """S(t_i) S(t_j) times the accumulated integral up to min(i, j)."""
    S = np.asarray(S_at_edges, dtype=float)
    I = np.asarray(integrals, dtype=float)
    if S.shape != I.shape or S.ndim != 1 or S.size == 0:
        raise DomainError("S and integrals must be vectors of the same length")
    if np.any(S < 0) or np.any(S > 1) or np.any(np.diff(S) > 1e-12):
        raise DomainError("S must be non-increasing within [0, 1]")
    if np.any(I < 0):
        raise DomainError("integrals must be non-negative")
    acc = np.cumsum(I)
    idx = np.arange(S.size)
    return CovarianceK("km", np.outer(S, S) * acc[np.minimum.outer(idx, idx)])


def sigma_na(integrals: Sequence[float]) -> CovarianceK:
    I = np.asarray(integrals, dtype=float)
    if I.ndim != 1 or I.size == 0 or np.any(I < 0):
        raise DomainError("integrals must be a non-empty non-negative vector")
    return CovarianceK("na", np.diag(I))


def split_treatments(sample: SortedSample) -> Dict[str, SortedSample]:
    """Per-treatment sub-samples keyed by treatment name (sorted)."""
    if sample.labels is None:
        raise DomainError("sample has no treatment labels")
    labels = np.array(sample.sorted_labels, dtype=object)
    return {name: sample.subset(labels == name) for name in sample.treatments}


def censored_compositions(sample: SortedSample, histogram: GappedHistogram, weighting: str = "km") -> TreatmentMatrix:
    """
    Treatment-by-bin matrix for censored data. km: effective counts n_j times
    each treatment's own Kaplan-Meier bin mass. raw: counts of event times only.
    """
    if weighting not in WEIGHTINGS:
        raise DomainError(f"unknown weighting {weighting!r}")
    groups = split_treatments(sample)
    names = tuple(groups)
    edges = histogram.edges
    if weighting == "raw":
        events = uncensored(sample)
        labels = events.sorted_labels
        counts = np.zeros((len(names), histogram.k), dtype=np.int64)
        code = {name: j for j, name in enumerate(names)}
        for k, b in enumerate(histogram.bins):
            for lab in labels[b.start:b.stop]:
                counts[code[lab], k] += 1
        return TreatmentMatrix(counts, names, counts.sum(axis=1), edges)
    counts = np.zeros((len(names), histogram.k))
    for j, name in enumerate(names):
        km = kaplan_meier(groups[name])
        for k, b in enumerate(histogram.bins):
            counts[j, k] = groups[name].n * max(km.before(b.a) - km.at(b.b), 0.0)
    return TreatmentMatrix(counts, names, counts.sum(axis=1), edges)


def censored_row(sample_j: SortedSample, edges: Sequence[float], basis: str = "km") -> Tuple[np.ndarray, np.ndarray]:
    """
    Feature row and its covariance for one treatment on a shared bin grid.
    km: increments of 1 - S_j with covariance A^-1 Sigma# A^-T / n_j.
    na: increments of the cumulative hazard with covariance Sigma** / n_j.
    """
    if basis not in BASES:
        raise DomainError(f"unknown basis {basis!r}")
    edges = np.asarray(edges, dtype=float)
    K = edges.size - 1
    integrals = bin_integrals(sample_j, edges)
    n_j = sample_j.n
    if basis == "km":
        km = kaplan_meier(sample_j)
        S = np.concatenate(([km.before(edges[0])], km.at(edges[1:])))
        row = -np.diff(S)
        sigma = sigma_km(S[1:], integrals).matrix
        D = difference_matrix(K)
        cov = D @ sigma @ D.T / n_j
    else:
        na = nelson_aalen(sample_j)
        L = np.concatenate(([na.before(edges[0])], na.at(edges[1:])))
        row = np.diff(L)
        cov = sigma_na(integrals).matrix / n_j
    return np.clip(row, 0.0, None), (cov + cov.T) / 2.0


def censored_authenticity(sample: SortedSample, histogram: GappedHistogram, B: int = 10000, seed: SeedLike = 12345,
                          basis: str = "km", workers: int = 1) -> AuthenticityReport:
    """Branch authenticity for labelled censored data on the pooled histogram's grid."""
    groups = split_treatments(sample)
    rows, covs, names = [], [], []
    for name, group in groups.items():
        if not np.any(group.sorted_status == 1):
            log.warning("treatment %s has no events; left out of the tree", name)
            continue
        row, cov = censored_row(group, histogram.edges, basis)
        rows.append(row)
        covs.append(cov)
        names.append(name)
    if len(rows) < 2:
        raise DomainError("need at least 2 treatments with events")
    return authenticity_from_rows(np.vstack(rows), covs, names, B, seed, workers)

