"""
Uniform order-statistic moments, the DESS (decoding error sum of squares) of a
bin, and the Monte Carlo acceptance band that turns DESS into a yes/no
uniformity criterion.
"""
import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError
from .parallel import Chunk, SeedLike, map_chunks, replicate_chunks

log = logging.getLogger(__name__)

# Floating slack when comparing a ratio against band quantiles.
BAND_TOLERANCE = 1e-9

# Edge conventions a band can be calibrated for.
SUPPORT_EDGES = "support"    # DESS against the true [0, 1] support
EXTENDED_EDGES = "extended"  # DESS against the extension estimates (a_hat, b_hat)
EDGE_CONVENTIONS = (SUPPORT_EDGES, EXTENDED_EDGES)

MIN_BAND_REPLICATES = 100


def order_stat_mean(k: int, n: int) -> float:
    if n < 1 or not 1 <= k <= n:
        raise DomainError(f"order statistic {k} of {n} is out of range")
    return k / (n + 1)


def order_stat_variance(k: int, n: int) -> float:
    if n < 1 or not 1 <= k <= n:
        raise DomainError(f"order statistic {k} of {n} is out of range")
    return k * (n - k + 1) / ((n + 1) ** 2 * (n + 2))


def order_stat_second_moment(k: int, n: int) -> float:
    if n < 1 or not 1 <= k <= n:
        raise DomainError(f"order statistic {k} of {n} is out of range")
    return k * (k + 1) / ((n + 1) * (n + 2))


def total_order_stat_variance(n: int) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    return n / (6 * (n + 1))


def _dess_unit(u: np.ndarray) -> np.ndarray:
    """DESS of rows of sorted unit-scale values u (shape (..., m))."""
    m = u.shape[-1]
    expected = np.arange(1, m + 1) / (m + 1)
    return m / (6 * (m + 1)) + np.sum((u - expected) ** 2, axis=-1)


def dess(values: Sequence[float], a: float, b: float) -> float:
    """
    Decoding error of coding the (sorted) values by the expected uniform order
    statistics on [a, b]: (b-a)^2 * [m/(6(m+1)) + sum_k (u_(k) - k/(m+1))^2].
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DomainError("DESS of an empty bin")
    if not a < b:
        raise DomainError(f"DESS needs a < b, got [{a}, {b}]")
    if x[0] < a or x[-1] > b:
        raise DomainError(f"values [{x[0]}, {x[-1]}] fall outside [{a}, {b}]")
    width = b - a
    return float(width ** 2 * _dess_unit((x - a) / width))


def dess_ratio(values: Sequence[float], a: float, b: float) -> float:
    """DESS relative to its uniform target (b-a)^2/3."""
    return dess(values, a, b) / ((b - a) ** 2 / 3.0)


def extended_unit(x: np.ndarray) -> np.ndarray:
    """Rescale sorted rows onto their extension edges (a_hat, b_hat)."""
    m = x.shape[-1]
    lo, hi = x[..., :1], x[..., -1:]
    spread = (hi - lo) / (m + 1)
    width = hi - lo + 2 * spread
    return (x - lo + spread) / width


@dataclass(frozen=True)
class DessBand:
    """Acceptance band on the ratio DESS / ((b-a)^2/3)."""

    lo: float
    hi: float
    alpha: float
    n_calibration: int
    m_replicates: int
    edges: str = SUPPORT_EDGES

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not 0 < self.lo <= self.hi:
            raise DomainError(f"invalid band [{self.lo}, {self.hi}]")
        if self.edges not in EDGE_CONVENTIONS:
            raise DomainError(f"unknown edge convention {self.edges!r}")

    def band_for(self, m: int) -> "DessBand":
        return self

    def accepts(self, ratio: float) -> bool:
        return self.lo - BAND_TOLERANCE <= ratio <= self.hi + BAND_TOLERANCE

    def to_dict(self) -> Dict[str, object]:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "alpha": self.alpha,
            "n_calibration": self.n_calibration,
            "m_replicates": self.m_replicates,
            "edges": self.edges,
        }


def _replicate_ratios(n: int, edges: str):
    def run(chunk: Chunk) -> np.ndarray:
        u = np.sort(chunk.rng.random((chunk.size, n)), axis=1)
        if edges == EXTENDED_EDGES:
            u = extended_unit(u)
        return 3.0 * _dess_unit(u)
    return run


def calibrate_band(n: int, alpha: float = 0.05, m_replicates: int = 2000, seed: SeedLike = 12345,
                   edges: str = SUPPORT_EDGES, workers: int = 1) -> DessBand:
    """
    Empirical (alpha/2, 1-alpha/2) quantiles of 3*DESS over m_replicates samples
    of n standard-uniform draws. Deterministic given seed, whatever `workers` is.
    """
    if n < 2:
        raise DomainError("band calibration needs n >= 2")
    if m_replicates < MIN_BAND_REPLICATES:
        raise DomainError(f"band calibration needs at least {MIN_BAND_REPLICATES} replicates")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if edges not in EDGE_CONVENTIONS:
        raise DomainError(f"unknown edge convention {edges!r}")
    ratios = np.concatenate(map_chunks(_replicate_ratios(n, edges), replicate_chunks(m_replicates, seed), workers))
    lo, hi = np.quantile(ratios, [alpha / 2, 1 - alpha / 2])
    return DessBand(float(lo), float(hi), alpha, n, m_replicates, edges)


def band_grid(max_m: int = 1024) -> Tuple[int, ...]:
    """Every size up to 16, then roughly x1.25 steps up to max_m."""
    grid = list(range(2, 17))
    m = 16
    while m < max_m:
        m = min(max_m, max(m + 1, int(round(m * 1.25))))
        grid.append(m)
    return tuple(grid)


class BandTable:
    """
    Per-bin-size acceptance bands, calibrated lazily on a grid of sizes and
    interpolated linearly in log(m) between grid points. Sizes beyond the grid
    reuse the last grid band.
    """

    def __init__(self, alpha: float = 0.05, m_replicates: int = 2000, seed: int = 12345,
                 edges: str = EXTENDED_EDGES, max_m: int = 1024, workers: int = 1):
        self.alpha = alpha
        self.m_replicates = m_replicates
        self.seed = seed
        self.edges = edges
        self.workers = workers
        self.grid = band_grid(max_m)
        self._bands: Dict[int, DessBand] = {}
        self._lock = threading.Lock()

    def _grid_band(self, m: int) -> DessBand:
        with self._lock:
            band = self._bands.get(m)
        if band is None:
            seq = np.random.SeedSequence(self.seed, spawn_key=(m,))
            band = calibrate_band(m, self.alpha, self.m_replicates, seq, self.edges, self.workers)
            log.debug("calibrated band m=%d: [%.4f, %.4f]", m, band.lo, band.hi)
            with self._lock:
                self._bands.setdefault(m, band)
        return band

    def band_for(self, m: int) -> DessBand:
        m = max(int(m), 2)
        if m >= self.grid[-1]:
            return self._grid_band(self.grid[-1])
        i = int(np.searchsorted(self.grid, m))
        if self.grid[i] == m:
            return self._grid_band(m)
        g0, g1 = self.grid[i - 1], self.grid[i]
        b0, b1 = self._grid_band(g0), self._grid_band(g1)
        w = (math.log(m) - math.log(g0)) / (math.log(g1) - math.log(g0))
        return DessBand(
            b0.lo + w * (b1.lo - b0.lo),
            b0.hi + w * (b1.hi - b0.hi),
            self.alpha,
            m,
            self.m_replicates,
            self.edges,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "alpha": self.alpha,
            "m_replicates": self.m_replicates,
            "seed": self.seed,
            "edges": self.edges,
            "calibrated": {str(m): [b.lo, b.hi] for m, b in sorted(self._bands.items())},
        }


@lru_cache(maxsize=16)
def band_table(alpha: float = 0.05, m_replicates: int = 2000, seed: int = 12345,
               edges: str = EXTENDED_EDGES) -> BandTable:
    """Shared, lazily filled BandTable per calibration setting."""
    return BandTable(alpha, m_replicates, seed, edges)


BandLike = Union[DessBand, BandTable]


def dess_criterion(values: Sequence[float], a: float, b: float, band: BandLike) -> bool:
    """True when the bin's DESS ratio lies inside the band; always true for one value."""
    x = np.asarray(values, dtype=float)
    ratio = dess_ratio(x, a, b)
    if x.size == 1:
        return True
    return band.band_for(x.size).accepts(ratio)


def subdivision_gain(widths: Sequence[float]) -> float:
    """Drop in reference DESS from splitting a bin into parts of these widths."""
    w = np.asarray(widths, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise DomainError("widths must be a non-empty list of non-negative lengths")
    return float((w.sum() ** 2 - np.sum(w ** 2)) / 3.0)


def boundaries_worthwhile(widths: Sequence[float], l0: float) -> bool:
    """Whether J-1 extra boundaries pay for themselves at cost l0 each."""
    return subdivision_gain(widths) > (len(widths) - 1) * l0


def uniform_dess_mean(m: int, width: float = 1.0, replicates: int = 200,
                      seed: Optional[SeedLike] = 0) -> float:
    """Monte Carlo mean DESS of m fresh U[0, width] draws on [0, width]."""
    rng = np.random.default_rng(seed)
    u = np.sort(rng.random((replicates, m)), axis=1)
    return float(width ** 2 * np.mean(_dess_unit(u)))
