"""
Run configuration for the ghist commands.

Values are layered on a Flask Config: DEFAULTS, then an optional JSON file,
then explicit command-line flags, then GH_* environment variables.
"""
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional

from .core import BOUNDARY_EXTENSION, GAP_METHODS, LINKAGES
from .errors import DomainError

DEFAULT_L0_FRACTION = 0.1  # L0 as a share of the histogram tree height
DEFAULT_LINKAGE = "complete"
DEFAULT_ALPHA = 0.05  # two-sided DESS band level
DEFAULT_BAND_REPLICATES = 2000  # Monte Carlo samples per calibrated bin size
DEFAULT_PERMUTATIONS = 10000  # label permutations for phase-one p-values
DEFAULT_MIMICS = 10000  # mimicked matrices for authenticity indices
DEFAULT_SEED = 12345
DEFAULT_GAP_METHOD = BOUNDARY_EXTENSION
DEFAULT_BASIS = "km"
DEFAULT_WEIGHTING = "km"  # censored treatment-by-bin counts: km or raw
DEFAULT_WORKERS = 1

ENV_PREFIX = "GH"

# Upper-case keys as they live on app.config.
DEFAULTS: Dict[str, Any] = {
    "L0_FRACTION": DEFAULT_L0_FRACTION,
    "L0_ABS": None,
    "LINKAGE": DEFAULT_LINKAGE,
    "ALPHA": DEFAULT_ALPHA,
    "BAND_REPLICATES": DEFAULT_BAND_REPLICATES,
    "PERMUTATIONS": DEFAULT_PERMUTATIONS,
    "MIMICS": DEFAULT_MIMICS,
    "SEED": DEFAULT_SEED,
    "GAP_METHOD": DEFAULT_GAP_METHOD,
    "BASIS": DEFAULT_BASIS,
    "WEIGHTING": DEFAULT_WEIGHTING,
    "STANDARDIZE": True,
    "WORKERS": DEFAULT_WORKERS,
    "REFINE": False,
    "SVG": False,
}


@dataclass(frozen=True)
class RunConfig:
    l0_fraction: float = DEFAULT_L0_FRACTION
    l0_abs: Optional[float] = None
    linkage: str = DEFAULT_LINKAGE
    alpha: float = DEFAULT_ALPHA
    band_replicates: int = DEFAULT_BAND_REPLICATES
    permutations: int = DEFAULT_PERMUTATIONS
    mimics: int = DEFAULT_MIMICS
    seed: int = DEFAULT_SEED
    gap_method: str = DEFAULT_GAP_METHOD
    basis: str = DEFAULT_BASIS
    weighting: str = DEFAULT_WEIGHTING
    standardize: bool = True
    workers: int = DEFAULT_WORKERS
    refine: bool = False
    svg: bool = False

    def validate(self) -> "RunConfig":
        if self.l0_abs is not None:
            if not self.l0_abs > 0:
                raise DomainError("--l0-abs must be positive")
        elif not 0 < self.l0_fraction <= 1:
            raise DomainError("--l0-fraction must lie in (0, 1]")
        if self.linkage not in LINKAGES:
            raise DomainError(f"linkage must be one of {', '.join(LINKAGES)}")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        for name in ("band_replicates", "permutations", "mimics", "workers"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be at least 1")
        if self.gap_method not in GAP_METHODS:
            raise DomainError(f"gap method must be one of {', '.join(GAP_METHODS)}")
        if self.basis not in ("km", "na"):
            raise DomainError("basis must be km or na")
        if self.weighting not in ("km", "raw"):
            raise DomainError("weighting must be km or raw")
        return self

    @classmethod
    def from_mapping(cls, config: Mapping[str, Any]) -> "RunConfig":
        """Build from upper-case keys (a Flask app.config or DEFAULTS-shaped dict)."""
        def get(key):
            return config.get(key, DEFAULTS[key])

        l0_abs = get("L0_ABS")
        try:
            run = cls(
                l0_fraction=float(get("L0_FRACTION")),
                l0_abs=None if l0_abs in (None, "") else float(l0_abs),
                linkage=str(get("LINKAGE")),
                alpha=float(get("ALPHA")),
                band_replicates=int(get("BAND_REPLICATES")),
                permutations=int(get("PERMUTATIONS")),
                mimics=int(get("MIMICS")),
                seed=int(get("SEED")),
                gap_method=str(get("GAP_METHOD")),
                basis=str(get("BASIS")),
                weighting=str(get("WEIGHTING")),
                standardize=_as_bool(get("STANDARDIZE")),
                workers=int(get("WORKERS")),
                refine=_as_bool(get("REFINE")),
                svg=_as_bool(get("SVG")),
            )
        except (TypeError, ValueError) as e:
            raise DomainError(f"invalid configuration value: {e}")
        return run.validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _as_bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)
