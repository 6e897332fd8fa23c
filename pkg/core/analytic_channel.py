"""
Decoupled scalar channel

Each support element sees L independent Gaussian messages N(x0, sigma_w^2).
Combined with the spike-and-slab prior the marginal posterior is again
spike-and-slab: rho N(mu, theta^2) + (1 - rho) delta_0 with

    mu      = L x0 sigma_x^2 / (L sigma_x^2 + sigma_w^2)
    theta^2 = sigma_x^2 sigma_w^2 / (L sigma_x^2 + sigma_w^2)
    rho     = q c2 / (q c2 + (1 - q) c1)
    c1      = exp(-L x0^2 / (2 sigma_w^2)) / sqrt(2 pi sigma_w^2 / L)
    c2      = exp(-x0^2 / (2 (sigma_x^2 + sigma_w^2 / L))) / sqrt(2 pi (sigma_x^2 + sigma_w^2 / L))

The exponent of c2 is negative. A positive exponent also satisfies both noise
limits, but only the negative one reproduces the numerically integrated
posterior (see resolve_c2_sign, run by the selftest).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from core.density_kit import GridSpec, HybridDensity, l1_distance, make_gaussian, product
from models.signal_model import SpikeSlabPrior, prior_density
from utils.errors import ConfigError, GridError, NumericalGateError

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-6


class ChannelLimit(Enum):
    NOISELESS = "noiseless"
    INFINITE_NOISE = "infinite_noise"


@dataclass(frozen=True)
class ChannelPoint:
    """True element value, noise level, column weight and prior"""
    x0: float
    sigma_w: float
    l: int
    prior: SpikeSlabPrior

    def __post_init__(self):
        if self.l < 1:
            raise ConfigError(f"column weight must be at least 1, got {self.l}")
        if self.sigma_w < 0:
            raise ConfigError(f"sigma_w must be nonnegative, got {self.sigma_w}")

    @property
    def message_variance(self) -> float:
        """Variance of the fused message N(x0, sigma_w^2 / L)"""
        return self.sigma_w ** 2 / self.l


@dataclass(frozen=True)
class PosteriorParams:
    rho: float
    mu: float
    theta2: float
    c1: float
    c2: float
    log_odds: float  # log(rho / (1 - rho)), exact even when rho rounds to 0 or 1

    @property
    def theta(self) -> float:
        return math.sqrt(self.theta2)

    @property
    def spike_mass(self) -> float:
        return float(expit(-self.log_odds))


def log_c1(point: ChannelPoint) -> float:
    s2 = point.message_variance
    return -point.x0 ** 2 / (2.0 * s2) - 0.5 * math.log(2.0 * math.pi * s2)


def log_c2(point: ChannelPoint, sign: int = -1) -> float:
    v = point.prior.sigma_x ** 2 + point.message_variance
    return sign * point.x0 ** 2 / (2.0 * v) - 0.5 * math.log(2.0 * math.pi * v)


def c2_constant(point: ChannelPoint, sign: int = -1) -> float:
    return math.exp(log_c2(point, sign))


def posterior_params(point: ChannelPoint, c2_sign: int = -1) -> PosteriorParams:
    """Closed-form (rho, mu, theta^2) of the decoupled posterior"""
    if not point.sigma_w > 0:
        raise ConfigError("sigma_w = 0 has no closed form; use limit_params(point, ChannelLimit.NOISELESS)")

    q = point.prior.q
    sx2 = point.prior.sigma_x ** 2
    sw2 = point.sigma_w ** 2
    denominator = point.l * sx2 + sw2

    lc1 = log_c1(point)
    lc2 = log_c2(point, c2_sign)
    log_odds = math.log(q) + lc2 - math.log1p(-q) - lc1

    return PosteriorParams(
        rho=float(expit(log_odds)),
        mu=point.l * point.x0 * sx2 / denominator,
        theta2=sx2 * sw2 / denominator,
        c1=math.exp(lc1),
        c2=math.exp(lc2),
        log_odds=log_odds
    )


def limit_params(point: ChannelPoint, which: ChannelLimit) -> PosteriorParams:
    """Posterior parameters in the noiseless and infinite-noise limits"""
    if which is ChannelLimit.INFINITE_NOISE:
        q = point.prior.q
        return PosteriorParams(rho=q, mu=0.0, theta2=point.prior.sigma_x ** 2,
                               c1=math.nan, c2=math.nan, log_odds=math.log(q / (1.0 - q)))

    if point.x0 == 0:
        return PosteriorParams(rho=0.0, mu=0.0, theta2=0.0,
                               c1=math.nan, c2=math.nan, log_odds=-math.inf)
    return PosteriorParams(rho=1.0, mu=point.x0, theta2=0.0,
                           c1=math.nan, c2=math.nan, log_odds=math.inf)


def posterior_density(params: PosteriorParams, grid: GridSpec) -> HybridDensity:
    """rho N(mu, theta^2) + (1 - rho) delta_0 sampled on the grid"""
    spike = params.spike_mass
    if spike == 1.0:
        return HybridDensity(grid, np.zeros(grid.n_points), 1.0)

    if params.theta < 2.0 * grid.spacing:
        raise GridError(
            f"posterior std {params.theta:.3g} is narrower than twice the grid spacing "
            f"{grid.spacing:.3g}; raise n_points (narrow posterior)"
        )
    slab = make_gaussian(grid, params.mu, params.theta).slab_values
    return HybridDensity(grid, (1.0 - spike) * slab, spike).normalize()


def oracle_posterior(point: ChannelPoint, grid: GridSpec) -> HybridDensity:
    """Numeric normalized product of the prior and L message densities"""
    if not point.sigma_w > 0:
        raise ConfigError("the oracle needs sigma_w > 0")

    message = HybridDensity(grid, norm.pdf(grid.nodes, point.x0, point.sigma_w))
    belief = prior_density(point.prior.with_gaussian(), grid)
    for _ in range(point.l):
        belief = product(belief, message)
    return belief


def oracle_distance(point: ChannelPoint, grid: GridSpec, c2_sign: int = -1) -> float:
    closed = posterior_density(posterior_params(point, c2_sign), grid)
    return l1_distance(closed, oracle_posterior(point, grid))


def resolve_c2_sign(points: Iterable[ChannelPoint], grid: GridSpec) -> int:
    """Exponent sign of c2 whose closed form matches the oracle at every point"""
    points = list(points)
    passing: List[int] = []
    for sign in (-1, 1):
        worst = max(oracle_distance(p, grid, sign) for p in points)
        logger.info(f"c2 exponent sign {sign:+d}: worst oracle L1 distance {worst:.3e}")
        if worst <= ORACLE_TOL:
            passing.append(sign)

    if len(passing) != 1:
        raise NumericalGateError(f"c2 exponent sign not resolved, passing signs: {passing}")
    return passing[0]
