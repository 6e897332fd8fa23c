"""
One-dimensional densities on a uniform grid

A HybridDensity is an explicit point mass at zero (the spike) plus a slab
sampled on the grid nodes. Slab integrals use the trapezoidal rule, i.e. the
slab is read as the piecewise-linear interpolant of its samples.

Grid convention: n_points nodes x_k = (k - n_points // 2) * spacing with
spacing = 2 * half_width / (n_points - 1). Node n_points // 2 sits exactly at
zero; the grid has one more node on the negative side than on the positive
side.
"""

import csv
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from config import Config
from utils.errors import (AliasingError, DensityError, DimensionError, GridError,
                          MassAnnihilationError, ResultIOError)
from utils.helpers import format_number, is_power_of_two, raise_if_invalid, validation_result

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
# Relative level below which FFT output is treated as round-off
FFT_FLOOR = 1e-14


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid around zero with a node at zero"""
    half_width: float
    n_points: int = Config.GRID_POINTS

    def __post_init__(self):
        raise_if_invalid(self.validate(), "grid")

    def validate(self) -> Dict[str, Any]:
        errors = []
        if not self.half_width > 0:
            errors.append(f"half_width must be positive, got {self.half_width}")
        if self.n_points < Config.MIN_GRID_POINTS:
            errors.append(f"n_points must be at least {Config.MIN_GRID_POINTS}, got {self.n_points}")
        elif not is_power_of_two(self.n_points):
            errors.append(f"n_points must be a power of two, got {self.n_points}")
        return validation_result(errors, [])

    @classmethod
    def for_prior(cls, sigma_x: float, n_points: int = Config.GRID_POINTS,
                  sigmas: float = Config.GRID_SIGMAS) -> "GridSpec":
        return cls(half_width=sigmas * sigma_x, n_points=n_points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def center_index(self) -> int:
        return self.n_points // 2

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = (np.arange(self.n_points) - self.center_index) * self.spacing
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights"""
        weights = np.full(self.n_points, self.spacing)
        weights[0] = weights[-1] = 0.5 * self.spacing
        weights.setflags(write=False)
        return weights

    def to_dict(self) -> Dict[str, Any]:
        return {"half_width": self.half_width, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridSpec":
        return cls(half_width=float(data["half_width"]), n_points=int(data["n_points"]))


@dataclass(frozen=True, eq=False)
class HybridDensity:
    """spike_mass * delta_0 + slab sampled on grid nodes"""
    grid: GridSpec
    slab_values: np.ndarray
    spike_mass: float = 0.0

    def __post_init__(self):
        slab = np.asarray(self.slab_values, dtype=float)
        if slab.shape != (self.grid.n_points,):
            raise DimensionError(
                f"slab has shape {slab.shape}, grid has {self.grid.n_points} nodes"
            )
        if not np.all(np.isfinite(slab)) or not math.isfinite(self.spike_mass):
            raise DensityError("density values must be finite")
        if np.any(slab < 0) or self.spike_mass < 0:
            raise DensityError("density values must be nonnegative")
        object.__setattr__(self, "slab_values", slab)
        object.__setattr__(self, "spike_mass", float(self.spike_mass))

    @property
    def slab_mass(self) -> float:
        return float(self.slab_values @ self.grid.weights)

    @property
    def total_mass(self) -> float:
        return self.spike_mass + self.slab_mass

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.total_mass - 1.0) <= tol

    def normalize(self) -> "HybridDensity":
        total = self.total_mass
        if not total > 0:
            raise MassAnnihilationError("density has no probability mass left")
        return HybridDensity(self.grid, self.slab_values / total, self.spike_mass / total)

    def value_at_zero(self) -> float:
        """Slab density at the zero node (the spike is excluded)"""
        return float(self.slab_values[self.grid.center_index])

    def slab_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.nodes, self.slab_values, left=0.0, right=0.0)


def _common_grid(densities: Sequence[HybridDensity]) -> GridSpec:
    grid = densities[0].grid
    for density in densities[1:]:
        if density.grid != grid:
            raise GridError(f"grid mismatch: {density.grid} vs {grid}")
    return grid


def make_gaussian(grid: GridSpec, mean: float, std: float, strict: bool = True) -> HybridDensity:
    """Sampled normal density, no spike, normalized on the grid"""
    if not std > 0:
        raise GridError(f"std must be positive, got {std}")
    nodes = grid.nodes
    if not nodes[0] <= mean <= nodes[-1]:
        raise GridError(f"mean {mean:g} lies outside the grid [{nodes[0]:g}, {nodes[-1]:g}]")
    if strict and std < 2.0 * grid.spacing:
        raise GridError(
            f"std {std:g} is below twice the grid spacing {grid.spacing:g}; raise n_points"
        )
    return HybridDensity(grid, norm.pdf(nodes, mean, std)).normalize()


def product(a: HybridDensity, b: HybridDensity) -> HybridDensity:
    """Normalized pointwise product.

    Spike algebra: spike x slab keeps a spike weighted by the slab density at
    zero; spike x spike is read as a delta times a one-node delta of height
    1 / spacing.
    """
    grid = _common_grid([a, b])
    slab = a.slab_values * b.slab_values
    spike = (a.spike_mass * b.value_at_zero()
             + b.spike_mass * a.value_at_zero()
             + a.spike_mass * b.spike_mass / grid.spacing)
    result = HybridDensity(grid, slab, spike)
    if not result.total_mass > 0:
        raise MassAnnihilationError("product of densities annihilated all mass")
    return result.normalize()


def batch_moments(slabs: np.ndarray, spikes: np.ndarray, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mass, mean and variance of each row (spike included at zero)"""
    slabs = np.atleast_2d(slabs)
    weights = grid.weights
    nodes = grid.nodes
    mass = slabs @ weights + spikes
    safe = np.where(mass > 0, mass, 1.0)
    mean = (slabs @ (weights * nodes)) / safe
    second = (slabs @ (weights * nodes ** 2)) / safe
    return mass, mean, np.maximum(second - mean ** 2, 0.0)


def check_alias(means: Iterable[float], variances: Iterable[float], noise_std: float,
                window: float) -> None:
    """Require mean +/- ALIAS_SIGMAS sd of a sum to stay inside +/- window"""
    total_mean = float(np.sum(list(means)))
    total_sd = math.sqrt(float(np.sum(list(variances))) + noise_std ** 2)
    reach = abs(total_mean) + Config.ALIAS_SIGMAS * total_sd
    if reach > window:
        raise AliasingError(
            f"sum density reaches {reach:g} but the convolution window is +/-{window:g}; "
            f"widen the grid"
        )


def linear_length(grid: GridSpec, operands: int, noise_std: float = 0.0) -> int:
    """Buffer nodes spanned by the linear convolution of operands grid densities and the noise kernel"""
    noise_nodes = 2 * math.ceil(Config.ALIAS_SIGMAS * noise_std / grid.spacing)
    return max(operands, 1) * (grid.n_points - 1) + 1 + noise_nodes


def fft_length(grid: GridSpec, reach: float, operands: int, noise_std: float = 0.0) -> int:
    """Power-of-two circular buffer wide enough that a sum reaching +/-reach does not wrap.

    Starts at twice the grid and doubles while the moment reach exceeds the
    half-span, stopping once the buffer holds the full linear convolution, where
    wrap-around is impossible whatever the tails look like.
    """
    length = 2 * grid.n_points
    exact = linear_length(grid, operands, noise_std)
    while (length // 2) * grid.spacing < reach and length < exact:
        length *= 2
    if length > 2 * grid.n_points:
        logger.debug(f"FFT buffer widened to {length} nodes for reach {reach:g}")
    return length


def fft_buffers(slabs: np.ndarray, spikes: np.ndarray, grid: GridSpec, length: int) -> np.ndarray:
    """Node masses laid out for circular convolution (zero at index 0)"""
    slabs = np.atleast_2d(slabs)
    buffers = np.zeros((slabs.shape[0], length))
    positions = (np.arange(grid.n_points) - grid.center_index) % length
    buffers[:, positions] = slabs * grid.weights
    buffers[:, 0] += spikes
    return buffers


def gaussian_kernel(grid: GridSpec, std: float, length: int) -> np.ndarray:
    """Discrete normal masses in buffer layout, summing to one"""
    offsets = np.arange(length)
    offsets[offsets >= length // 2] -= length
    kernel = np.exp(-0.5 * (offsets * grid.spacing / std) ** 2)
    return kernel / kernel.sum()


def unwrap_masses(masses: np.ndarray, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Buffer masses -> (axis, density) ordered from -length/2 to length/2 - 1"""
    length = masses.shape[-1]
    density = np.fft.fftshift(masses, axes=-1) / grid.spacing
    peak = np.max(density, axis=-1, keepdims=True)
    density = np.where(density > FFT_FLOOR * peak, density, 0.0)
    axis = (np.arange(length) - length // 2) * grid.spacing
    return axis, density


def leave_one_out(spectra: np.ndarray) -> np.ndarray:
    """Row k of the result is the product of all rows except k"""
    count = spectra.shape[0]
    prefix = np.ones_like(spectra)
    suffix = np.ones_like(spectra)
    for k in range(1, count):
        prefix[k] = prefix[k - 1] * spectra[k - 1]
    for k in range(count - 2, -1, -1):
        suffix[k] = suffix[k + 1] * spectra[k + 1]
    return prefix * suffix


def convolve_sum(densities: Sequence[HybridDensity], noise_std: float = 0.0,
                 grid: Optional[GridSpec] = None) -> HybridDensity:
    """Density of the sum of independent variables plus N(0, noise_std^2) noise"""
    if noise_std < 0:
        raise GridError(f"noise_std must be nonnegative, got {noise_std}")
    if densities:
        grid = _common_grid(densities)
    elif grid is None:
        raise GridError("convolve_sum needs a grid when no densities are given")

    slabs = np.array([d.slab_values for d in densities]).reshape(len(densities), grid.n_points)
    spikes = np.array([d.spike_mass for d in densities])
    _, means, variances = batch_moments(slabs, spikes, grid)
    check_alias(means, variances, noise_std, grid.half_width)

    length = 2 * grid.n_points
    spectrum = np.ones(length // 2 + 1, dtype=complex)
    if densities:
        spectrum = np.prod(np.fft.rfft(fft_buffers(slabs, spikes, grid, length), axis=1), axis=0)
    spike = float(np.prod(spikes)) if densities else 1.0

    if noise_std > 0:
        spectrum = spectrum * np.fft.rfft(gaussian_kernel(grid, noise_std, length))
        spike = 0.0

    masses = np.fft.irfft(spectrum, n=length)
    masses[0] -= spike
    positions = (np.arange(grid.n_points) - grid.center_index) % length
    slab = masses[positions] / grid.spacing
    slab = np.where(slab > FFT_FLOOR * max(slab.max(), 0.0), slab, 0.0)

    result = HybridDensity(grid, slab, max(spike, 0.0))
    expected = float(np.prod(spikes + slabs @ grid.weights)) if densities else 1.0
    if abs(result.total_mass - expected) > NORMALIZATION_TOL * max(expected, 1.0):
        logger.debug(f"convolution mass drift {result.total_mass - expected:.2e}")
    return result.normalize()


def moments(density: HybridDensity) -> Tuple[float, float, float]:
    """(mean, variance, spike_mass) of a normalized density"""
    if not density.is_normalized():
        raise DensityError(f"moments need a normalized density, total mass is {density.total_mass:.9f}")
    _, mean, variance = batch_moments(density.slab_values, np.array([density.spike_mass]), density.grid)
    return float(mean[0]), float(variance[0]), density.spike_mass


def l1_distance(a: HybridDensity, b: HybridDensity) -> float:
    """Integral of |a - b| over the slab plus the spike difference"""
    grid = _common_grid([a, b])
    slab_part = trapezoid(np.abs(a.slab_values - b.slab_values), dx=grid.spacing)
    return float(slab_part + abs(a.spike_mass - b.spike_mass))


def write_density_csv(density: HybridDensity, path) -> Path:
    """Two-column (x, density) CSV with the spike mass in a header comment"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            handle.write(f"# spike_mass={format_number(density.spike_mass)}\n")
            handle.write(f"# half_width={format_number(density.grid.half_width)}\n")
            handle.write(f"# n_points={density.grid.n_points}\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["x", "density"])
            for x, value in zip(density.grid.nodes, density.slab_values):
                writer.writerow([format_number(x), format_number(value)])
    except OSError as e:
        logger.error(f"Failed to write density {path}: {e}")
        raise ResultIOError(path, str(e)) from e
    return path


def read_density_csv(path) -> HybridDensity:
    path = Path(path)
    header: Dict[str, str] = {}
    values: List[float] = []
    try:
        with path.open() as handle:
            for line in handle:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    header[key.strip()] = value.strip()
                    continue
                if line.startswith("x,"):
                    continue
                values.append(float(line.strip().split(",")[1]))
    except (OSError, ValueError, IndexError) as e:
        logger.error(f"Failed to read density {path}: {e}")
        raise ResultIOError(path, str(e)) from e

    grid = GridSpec(float(header["half_width"]), int(header["n_points"]))
    return HybridDensity(grid, np.array(values), float(header["spike_mass"]))
