"""
Signal model for sparse support detection
Defines the spike-and-slab prior and generates random sparse signals
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.stats import norm

from core.density_kit import GridSpec, HybridDensity
from utils.errors import ConfigError, DimensionError, GridError
from utils.helpers import raise_if_invalid, validation_result

logger = logging.getLogger(__name__)

# Largest slab mass allowed outside the sampling grid
MAX_TRUNCATED_MASS = 1e-6


class SlabMode(Enum):
    """How nonzero signal values are drawn"""
    GAUSSIAN = "gaussian"
    TWO_POINT = "two_point"


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Spike-and-slab prior: (1-q) delta_0 + q N(0, sigma_x^2)"""
    q: float
    sigma_x: float
    slab_mode: SlabMode = SlabMode.GAUSSIAN
    magnitude: Optional[float] = None  # TwoPoint only

    def __post_init__(self):
        raise_if_invalid(self.validate(), "spike-and-slab prior")

    def validate(self) -> Dict[str, Any]:
        errors = []
        warnings = []

        if not 0.0 < self.q < 1.0:
            errors.append(f"q must lie in (0, 1), got {self.q}")
        elif self.q >= 0.5:
            warnings.append(f"q={self.q} is not sparse; detection assumes q << 1")

        if not self.sigma_x > 0:
            errors.append(f"sigma_x must be positive, got {self.sigma_x}")

        if self.slab_mode is SlabMode.TWO_POINT:
            if self.magnitude is None or not self.magnitude > 0:
                errors.append("TwoPoint slab needs a positive magnitude")

        return validation_result(errors, warnings)

    def with_two_point(self, magnitude: float) -> "SpikeSlabPrior":
        return SpikeSlabPrior(self.q, self.sigma_x, SlabMode.TWO_POINT, float(magnitude))

    def with_gaussian(self) -> "SpikeSlabPrior":
        return SpikeSlabPrior(self.q, self.sigma_x)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "sigma_x": self.sigma_x,
            "slab_mode": self.slab_mode.value,
            "magnitude": self.magnitude
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpikeSlabPrior":
        return cls(
            q=float(data["q"]),
            sigma_x=float(data["sigma_x"]),
            slab_mode=SlabMode(data.get("slab_mode", "gaussian")),
            magnitude=data.get("magnitude")
        )


@dataclass(eq=False)
class SignalInstance:
    """A realization x0 with its support vector S"""
    values: np.ndarray
    support: np.ndarray
    probe_index: Optional[int] = None

    def __post_init__(self):
        if self.values.shape != self.support.shape:
            raise DimensionError("values and support must have the same length")
        if not np.array_equal(self.support.astype(bool), self.values != 0):
            raise ConfigError("support must mark exactly the nonzero values")
        if self.probe_index is not None and self.support[self.probe_index] != 1:
            raise ConfigError(f"probe index {self.probe_index} is not on the support")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def support_size(self) -> int:
        return int(self.support.sum())

    @property
    def probe_value(self) -> Optional[float]:
        if self.probe_index is None:
            return None
        return float(self.values[self.probe_index])


def sample_support(prior: SpikeSlabPrior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(q) support states for n elements"""
    if n < 1:
        raise ConfigError(f"Signal length must be positive, got {n}")
    return (rng.random(n) < prior.q).astype(np.int8)


def sample_signal(prior: SpikeSlabPrior, support: np.ndarray, rng: np.random.Generator,
                  probe_index: Optional[int] = None,
                  probe_magnitude: Optional[float] = None) -> SignalInstance:
    """Draw values on the support; the probe gets +/- probe_magnitude"""
    support = np.asarray(support, dtype=np.int8)
    if probe_index is not None:
        if probe_magnitude is None or not probe_magnitude > 0:
            raise ConfigError("A probe index needs a positive probe magnitude")
        if support[probe_index] != 1:
            raise ConfigError(f"Probe index {probe_index} points at a zero-support position")

    on_support = np.flatnonzero(support)
    values = np.zeros(len(support))

    signs = rng.choice([-1.0, 1.0], size=len(on_support))
    if prior.slab_mode is SlabMode.TWO_POINT:
        values[on_support] = signs * prior.magnitude
    else:
        draws = rng.normal(0.0, prior.sigma_x, size=len(on_support))
        # A continuous draw of exactly zero would break support consistency
        draws[draws == 0.0] = np.finfo(float).tiny
        values[on_support] = draws

    if probe_index is not None:
        values[probe_index] = rng.choice([-1.0, 1.0]) * probe_magnitude

    return SignalInstance(values=values, support=support, probe_index=probe_index)


def sample_probe_instance(prior: SpikeSlabPrior, n: int, probe_magnitude: float,
                          rng: np.random.Generator) -> SignalInstance:
    """Monte Carlo trial signal: random support plus one forced probe element"""
    support = sample_support(prior, n, rng)
    probe_index = int(rng.integers(n))
    support[probe_index] = 1
    return sample_signal(prior, support, rng, probe_index=probe_index,
                         probe_magnitude=probe_magnitude)


def prior_density(prior: SpikeSlabPrior, grid: GridSpec) -> HybridDensity:
    """Detection prior on a grid: spike 1-q at zero, slab q N(0, sigma_x^2)"""
    truncated = 2.0 * norm.sf(grid.half_width / prior.sigma_x)
    if truncated > MAX_TRUNCATED_MASS:
        raise GridError(
            f"Grid half width {grid.half_width:g} truncates {truncated:.2e} of the slab "
            f"mass; use at least {6 * prior.sigma_x:g} (6 sigma_x)"
        )

    slab = prior.q * norm.pdf(grid.nodes, 0.0, prior.sigma_x)
    return HybridDensity(grid, slab, 1.0 - prior.q).normalize()
