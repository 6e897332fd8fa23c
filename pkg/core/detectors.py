"""
Support detection functions

BHT: binary hypothesis test on the whole marginal posterior,
    h = log(q/(1-q)) + log( int f(x|S=1) f(x|y) / f(x) dx / int f(x|S=0) f(x|y) / f(x) dx )
CS-BP: MAP estimate of the slab compared against the density at zero, with the
    spike read as mass / delta.

Both decide H1 iff h > 0; h = 0 is a failure (H0).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import log_expit
from scipy.stats import norm

from config import Config
from core.analytic_channel import ChannelLimit, ChannelPoint, PosteriorParams, limit_params, posterior_params
from core.density_kit import GridSpec, HybridDensity
from models.signal_model import SpikeSlabPrior
from utils.errors import ConfigError, DensityError, DimensionError

logger = logging.getLogger(__name__)

# h values corresponding to rho in [1e-300, 1 - 1e-16]
H_MIN = math.log(1e-300) - math.log1p(-1e-300)
H_MAX = math.log1p(-1e-16) - math.log(1e-16)

# Local quadrature around zero for the regularized spike
LOCAL_SPAN = 12.0
LOCAL_POINTS = 2049

Posterior = Union[HybridDensity, PosteriorParams]


class DetectorName(Enum):
    BHT = "bht"
    CSBP = "csbp"


class Decision(Enum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class DetectorKind:
    """Detector choice; CS-BP carries the spacing used to read the spike as a density"""
    name: DetectorName
    delta: Optional[float] = None

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise ConfigError(f"CS-BP delta must be positive, got {self.delta}")

    @classmethod
    def bht(cls) -> "DetectorKind":
        return cls(DetectorName.BHT)

    @classmethod
    def csbp(cls, delta: Optional[float] = None) -> "DetectorKind":
        return cls(DetectorName.CSBP, delta)

    @property
    def label(self) -> str:
        return self.name.value

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name.value, "delta": self.delta}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DetectorKind":
        delta = data.get("delta")
        return cls(DetectorName(data["name"]), None if delta is None else float(delta))


@dataclass(frozen=True)
class DetectionResult:
    h_value: float

    @property
    def decision(self) -> Decision:
        return Decision.H1 if self.h_value > 0 else Decision.H0

    @property
    def detected(self) -> bool:
        return self.decision is Decision.H1


def _clip(h: float) -> float:
    return float(min(max(h, H_MIN), H_MAX))


def h_bht_analytic(params: PosteriorParams, q: float) -> DetectionResult:
    """BHT value for a spike-and-slab posterior.

    Under the spike-and-slab prior the two integrals reduce to rho/q and
    (1-rho)/(1-q), so h collapses to log(rho / (1 - rho)).
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    if math.isinf(params.log_odds):
        return DetectionResult(H_MAX if params.log_odds > 0 else H_MIN)

    # log(q/(1-q)) + log(rho/q) - log((1-rho)/(1-q)); the q terms cancel exactly
    h = float(log_expit(params.log_odds)) - float(log_expit(-params.log_odds))
    return DetectionResult(_clip(h))


@lru_cache(maxsize=32)
def _bht_quadrature(grid: GridSpec, epsilon: float, q: float, sigma_x: float):
    """Grid nodes merged with a fine local mesh, and the regularized prior on them"""
    local = np.linspace(-LOCAL_SPAN * epsilon, LOCAL_SPAN * epsilon, LOCAL_POINTS)
    x = np.union1d(grid.nodes, local)
    slab_prior = norm.pdf(x, 0.0, sigma_x)
    spike = norm.pdf(x, 0.0, epsilon)
    marginal = q * slab_prior + (1.0 - q) * spike
    return x, slab_prior, spike, marginal


def h_bht_grid(posterior: HybridDensity, prior: SpikeSlabPrior,
               epsilon: Optional[float] = None) -> DetectionResult:
    """BHT value by quadrature with delta_0 replaced by N(0, epsilon^2)"""
    if not posterior.is_normalized():
        raise DensityError(f"BHT needs a normalized posterior, total mass is {posterior.total_mass:.9f}")

    grid = posterior.grid
    if epsilon is None:
        epsilon = Config.BHT_EPSILON_FRACTION * grid.spacing
    if not 0 < epsilon <= grid.spacing:
        raise ConfigError(f"epsilon must lie in (0, {grid.spacing:g}], got {epsilon}")

    x, slab_prior, spike, marginal = _bht_quadrature(grid, float(epsilon), prior.q, prior.sigma_x)
    belief = posterior.slab_at(x) + posterior.spike_mass * spike
    ratio = belief / marginal

    numerator = trapezoid(slab_prior * ratio, x)
    denominator = trapezoid(spike * ratio, x)
    if denominator <= 0:
        return DetectionResult(H_MAX)
    if numerator <= 0:
        return DetectionResult(H_MIN)

    h = math.log(prior.q) - math.log1p(-prior.q) + math.log(numerator) - math.log(denominator)
    return DetectionResult(_clip(h))


def _csbp_closed_form(params: PosteriorParams, delta: float) -> float:
    if params.log_odds == -math.inf:
        return -math.inf
    if params.theta2 == 0:
        return math.inf if params.mu != 0 else -math.inf

    log_rho = float(log_expit(params.log_odds))
    log_not_rho = float(log_expit(-params.log_odds))
    log_peak = log_rho - math.log(params.theta * math.sqrt(2.0 * math.pi))
    log_at_zero = np.logaddexp(log_not_rho - math.log(delta),
                               log_rho + norm.logpdf(0.0, params.mu, params.theta))
    return float(log_peak - log_at_zero)


def _csbp_grid(density: HybridDensity, delta: float) -> float:
    if not density.is_normalized():
        raise DensityError(f"CS-BP needs a normalized density, total mass is {density.total_mass:.9f}")

    center = density.grid.center_index
    slab = density.slab_values
    off_zero = np.delete(slab, center)
    peak = float(off_zero.max())
    at_zero = density.spike_mass / delta + float(slab[center])
    if peak <= 0:
        return -math.inf
    if at_zero <= 0:
        return math.inf
    return math.log(peak) - math.log(at_zero)


def h_csbp(posterior: Posterior, delta: Optional[float] = None) -> DetectionResult:
    """CS-BP value; a density defaults to its own grid spacing for delta"""
    if isinstance(posterior, HybridDensity):
        return DetectionResult(_csbp_grid(posterior, delta if delta is not None else posterior.grid.spacing))
    if delta is None:
        raise ConfigError("CS-BP on closed-form parameters needs a delta convention")
    return DetectionResult(_csbp_closed_form(posterior, delta))


def evaluate(posterior: Posterior, kind: DetectorKind, prior: SpikeSlabPrior) -> DetectionResult:
    if kind.name is DetectorName.BHT:
        if isinstance(posterior, HybridDensity):
            return h_bht_grid(posterior, prior)
        return h_bht_analytic(posterior, prior.q)
    return h_csbp(posterior, kind.delta)


def detect_support(posteriors: Sequence[Posterior], kind: DetectorKind, prior: SpikeSlabPrior,
                   expected_length: Optional[int] = None) -> np.ndarray:
    """Elementwise support estimate (1 = H1)"""
    if expected_length is not None and len(posteriors) != expected_length:
        raise DimensionError(f"expected {expected_length} posteriors, got {len(posteriors)}")
    return np.array([int(evaluate(p, kind, prior).detected) for p in posteriors], dtype=np.int8)


def detection_value(kind: DetectorKind, point: ChannelPoint) -> float:
    """Closed-form h on the decoupled channel at one (x0, sigma_w) point"""
    if point.sigma_w == 0:
        params = limit_params(point, ChannelLimit.NOISELESS)
    else:
        params = posterior_params(point)
    return evaluate(params, kind, point.prior).h_value
