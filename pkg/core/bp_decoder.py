"""
Belief propagation over the bipartite graph of a sparse binary matrix

Messages are grid densities. A check-to-variable message is the likelihood of
x_i given y_j, i.e. the density of (sum of the other neighbors + noise)
evaluated at y_j - x; it is computed by FFT convolution with leave-one-out
spectrum products. Variable-to-check messages and beliefs are products of the
prior with incoming messages, formed in the log domain.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from config import Config
from core.density_kit import (GridSpec, HybridDensity, batch_moments, fft_buffers, fft_length,
                              gaussian_kernel, leave_one_out, make_gaussian, unwrap_masses)
from models.measurement import Measurement, SparseBinaryMatrix
from models.signal_model import SpikeSlabPrior, prior_density
from utils.errors import ConfigError, DimensionError, MassAnnihilationError, ResultIOError
from utils.helpers import format_number, raise_if_invalid, validation_result

logger = logging.getLogger(__name__)

LOG_FLOOR = math.log(1e-300)
BRUTE_FORCE_MAX_N = 12


@dataclass
class BpConfig:
    """Iteration control; grid=None means GridSpec.for_prior(sigma_x)"""
    max_iters: int = Config.BP_MAX_ITERS
    tol: float = Config.BP_TOL
    damping: float = Config.BP_DAMPING
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        raise_if_invalid(self.validate(), "BP configuration")

    def validate(self) -> Dict[str, Any]:
        errors = []
        if self.max_iters < 1:
            errors.append(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.tol > 0:
            errors.append(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            errors.append(f"damping must lie in [0, 1), got {self.damping}")
        return validation_result(errors, [])

    def resolve_grid(self, prior: SpikeSlabPrior) -> GridSpec:
        return self.grid if self.grid is not None else GridSpec.for_prior(prior.sigma_x)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_iters": self.max_iters,
            "tol": self.tol,
            "damping": self.damping,
            "grid": None if self.grid is None else self.grid.to_dict()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BpConfig":
        grid = data.get("grid")
        return cls(
            max_iters=int(data.get("max_iters", Config.BP_MAX_ITERS)),
            tol=float(data.get("tol", Config.BP_TOL)),
            damping=float(data.get("damping", Config.BP_DAMPING)),
            grid=None if grid is None else GridSpec.from_dict(grid)
        )


@dataclass(eq=False)
class BpState:
    """Per-edge messages; edge e = i * L + l joins column i to its l-th row"""
    v_slabs: np.ndarray
    v_spikes: np.ndarray
    u_slabs: np.ndarray
    iteration: int = 0


@dataclass
class BpDiagnostics:
    iterations: int = 0
    final_delta: float = math.inf
    converged: bool = False
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged
        }


@dataclass(eq=False)
class BpResult:
    beliefs: List[HybridDensity]
    diagnostics: BpDiagnostics
    state: BpState


def effective_noise(sigma_w: float, grid: GridSpec) -> float:
    """Noise width used in check updates; sigma_w below spacing/2 is resolved at spacing/2"""
    return max(sigma_w, 0.5 * grid.spacing)


def _likelihoods(y_j: float, spectra: np.ndarray, noise_spectrum: np.ndarray,
                 grid: GridSpec, length: int) -> np.ndarray:
    """Rows of sum spectra -> normalized U(x) = f_sum(y_j - x) on the grid"""
    masses = np.fft.irfft(spectra * noise_spectrum, n=length, axis=-1)
    axis, densities = unwrap_masses(masses, grid)
    targets = y_j - grid.nodes
    messages = np.array([np.interp(targets, axis, d, left=0.0, right=0.0) for d in densities])

    mass = messages @ grid.weights
    if np.any(mass <= 0):
        raise MassAnnihilationError(
            f"measurement {y_j:g} lies outside the reach of the check message grid; widen the grid"
        )
    return messages / mass[:, None]


def _row_messages(y_j: float, slabs: np.ndarray, spikes: np.ndarray, sigma_w: float,
                  grid: GridSpec, leave_out: bool = True) -> np.ndarray:
    """Check-to-variable messages of one row.

    With leave_out each row k of the result uses every operand except k;
    otherwise a single message uses all operands.
    """
    noise = effective_noise(sigma_w, grid)
    slabs = np.asarray(slabs, dtype=float).reshape(-1, grid.n_points)
    spikes = np.asarray(spikes, dtype=float).reshape(-1)

    _, means, variances = batch_moments(slabs, spikes, grid)
    if leave_out:
        sum_means = means.sum() - means
        sum_vars = variances.sum() - variances
        operands = slabs.shape[0] - 1
    else:
        sum_means = np.array([means.sum()])
        sum_vars = np.array([variances.sum()])
        operands = slabs.shape[0]
    reach = max(float(np.max(np.abs(sum_means) + Config.ALIAS_SIGMAS * np.sqrt(sum_vars + noise ** 2))),
                abs(y_j) + grid.half_width)
    length = fft_length(grid, reach, operands, noise)

    spectra = np.fft.rfft(fft_buffers(slabs, spikes, grid, length), axis=-1)
    if leave_out:
        combined = leave_one_out(spectra)
    else:
        combined = np.prod(spectra, axis=0, keepdims=True)
    noise_spectrum = np.fft.rfft(gaussian_kernel(grid, noise, length))
    return _likelihoods(y_j, combined, noise_spectrum, grid, length)


def check_update(y_j: float, neighbors: Sequence[HybridDensity], sigma_w: float,
                 grid: GridSpec) -> HybridDensity:
    """Likelihood of x_i given y_j from the messages of the other neighbors"""
    if sigma_w < 0:
        raise ConfigError(f"sigma_w must be nonnegative, got {sigma_w}")
    for density in neighbors:
        if density.grid != grid:
            raise ConfigError("neighbor messages must share the decoder grid")

    slabs = np.array([d.slab_values for d in neighbors]).reshape(len(neighbors), grid.n_points)
    spikes = np.array([d.spike_mass for d in neighbors])
    message = _row_messages(y_j, slabs, spikes, sigma_w, grid, leave_out=False)[0]
    return HybridDensity(grid, message)


def _log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(values), LOG_FLOOR)


def _normalize_log(log_slabs: np.ndarray, log_spikes: np.ndarray,
                   grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    shift = np.asarray(np.maximum(log_slabs.max(axis=-1), log_spikes))
    slabs = np.exp(log_slabs - shift[..., None])
    spikes = np.exp(log_spikes - shift)
    mass = np.asarray(slabs @ grid.weights + spikes)
    if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        raise MassAnnihilationError("variable update annihilated all mass")
    return slabs / mass[..., None], spikes / mass


def _combine(log_prior_slab: np.ndarray, log_prior_spike: float, log_messages: np.ndarray,
             grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized prior x exp(log_messages); the spike reads the messages at the zero node"""
    return _normalize_log(log_prior_slab + log_messages,
                          log_prior_spike + log_messages[..., grid.center_index], grid)


def _damp(slabs: np.ndarray, spikes, previous_slabs: np.ndarray, previous_spikes,
          damping: float) -> Tuple[np.ndarray, Any]:
    if damping == 0.0:
        return slabs, spikes
    return ((1.0 - damping) * slabs + damping * previous_slabs,
            (1.0 - damping) * spikes + damping * previous_spikes)


def variable_update(prior: HybridDensity, incoming: Sequence[HybridDensity],
                    previous: Optional[HybridDensity] = None, damping: float = 0.0) -> HybridDensity:
    """Normalized prior x product of incoming messages, optionally blended with the previous message"""
    grid = prior.grid
    log_messages = np.zeros(grid.n_points)
    for message in incoming:
        log_messages = log_messages + _log(message.slab_values)

    slab, spike = _combine(_log(prior.slab_values), float(_log(np.array(prior.spike_mass))),
                           log_messages, grid)
    if previous is not None:
        slab, spike = _damp(slab, spike, previous.slab_values, previous.spike_mass, damping)
    return HybridDensity(grid, slab, float(spike))


def _check_pass(matrix: SparseBinaryMatrix, y: np.ndarray, state: BpState, sigma_w: float,
                grid: GridSpec) -> None:
    for j, edges in enumerate(matrix.row_edges):
        if edges.size == 0:
            continue
        state.u_slabs[edges] = _row_messages(y[j], state.v_slabs[edges], state.v_spikes[edges],
                                             sigma_w, grid)


def _message_log_sums(matrix: SparseBinaryMatrix, state: BpState, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    log_u = _log(state.u_slabs).reshape(matrix.n_cols, matrix.column_weight, grid.n_points)
    return log_u, log_u.sum(axis=1)


def run_bp(matrix: SparseBinaryMatrix, y, prior: SpikeSlabPrior, sigma_w: float,
           cfg: Optional[BpConfig] = None) -> BpResult:
    """Flooding-schedule BP; beliefs are prior x all L incoming messages"""
    cfg = cfg or BpConfig()
    if isinstance(y, Measurement):
        y = y.y
    y = np.asarray(y, dtype=float)
    if y.shape != (matrix.n_rows,):
        raise DimensionError(f"y has shape {y.shape}, matrix has {matrix.n_rows} rows")
    if sigma_w < 0:
        raise ConfigError(f"sigma_w must be nonnegative, got {sigma_w}")

    grid = cfg.resolve_grid(prior)
    base = prior_density(prior.with_gaussian(), grid)
    log_prior_slab = _log(base.slab_values)
    log_prior_spike = math.log(base.spike_mass)

    n_edges = matrix.n_edges
    state = BpState(
        v_slabs=np.tile(base.slab_values, (n_edges, 1)),
        v_spikes=np.full(n_edges, base.spike_mass),
        u_slabs=np.zeros((n_edges, grid.n_points))
    )
    diagnostics = BpDiagnostics()

    for iteration in range(1, cfg.max_iters + 1):
        _check_pass(matrix, y, state, sigma_w, grid)

        log_u, log_total = _message_log_sums(matrix, state, grid)
        leave_out = log_total[:, None, :] - log_u
        slabs, spikes = _combine(log_prior_slab, log_prior_spike, leave_out, grid)
        slabs, spikes = _damp(slabs.reshape(n_edges, grid.n_points), spikes.reshape(n_edges),
                              state.v_slabs, state.v_spikes, cfg.damping)

        delta = float(np.max(np.abs(slabs - state.v_slabs) @ grid.weights + np.abs(spikes - state.v_spikes)))
        state.v_slabs, state.v_spikes, state.iteration = slabs, spikes, iteration
        diagnostics.history.append(delta)
        diagnostics.iterations = iteration
        diagnostics.final_delta = delta
        logger.debug(f"BP iteration {iteration}: max message change {delta:.3e}")

        if delta < cfg.tol:
            diagnostics.converged = True
            break

    # Beliefs from the last check messages
    _check_pass(matrix, y, state, sigma_w, grid)
    _, log_total = _message_log_sums(matrix, state, grid)
    slabs, spikes = _combine(log_prior_slab, log_prior_spike, log_total, grid)
    beliefs = [HybridDensity(grid, slabs[i], float(spikes[i])) for i in range(matrix.n_cols)]

    if diagnostics.converged:
        logger.info(f"BP converged after {diagnostics.iterations} iterations (delta {diagnostics.final_delta:.2e})")
    else:
        logger.warning(
            f"BP did not converge in {cfg.max_iters} iterations (delta {diagnostics.final_delta:.2e})"
        )
    return BpResult(beliefs=beliefs, diagnostics=diagnostics, state=state)


def brute_force_posterior(matrix: SparseBinaryMatrix, y, prior: SpikeSlabPrior, sigma_w: float,
                          grid: GridSpec) -> List[HybridDensity]:
    """Exact marginals by enumerating every support pattern (N <= 12)"""
    n = matrix.n_cols
    if n > BRUTE_FORCE_MAX_N:
        raise ConfigError(f"brute force needs N <= {BRUTE_FORCE_MAX_N}, got {n}")
    if not sigma_w > 0:
        raise ConfigError("brute force needs sigma_w > 0")
    if isinstance(y, Measurement):
        y = y.y
    y = np.asarray(y, dtype=float)
    if y.shape != (matrix.n_rows,):
        raise DimensionError(f"y has shape {y.shape}, matrix has {matrix.n_rows} rows")

    phi = matrix.to_sparse().toarray()
    sw2, sx2 = sigma_w ** 2, prior.sigma_x ** 2
    log_q, log_not_q = math.log(prior.q), math.log1p(-prior.q)

    patterns = list(itertools.product((0, 1), repeat=n))
    log_weights = np.empty(len(patterns))
    conditionals: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    for p, pattern in enumerate(patterns):
        support = np.flatnonzero(pattern)
        k = support.size
        phi_s = phi[:, support]
        covariance = sw2 * np.eye(matrix.n_rows) + sx2 * phi_s @ phi_s.T
        log_weights[p] = (k * log_q + (n - k) * log_not_q
                          + multivariate_normal.logpdf(y, mean=np.zeros(matrix.n_rows), cov=covariance))
        if k:
            precision = phi_s.T @ phi_s / sw2 + np.eye(k) / sx2
            cond_cov = np.linalg.inv(precision)
            cond_mean = cond_cov @ phi_s.T @ y / sw2
            conditionals.append((support, cond_mean, np.sqrt(np.diag(cond_cov))))
        else:
            conditionals.append((support, np.empty(0), np.empty(0)))

    weights = np.exp(log_weights - logsumexp(log_weights))

    marginals = []
    for i in range(n):
        slab = np.zeros(grid.n_points)
        spike = 0.0
        for w, (support, means, stds) in zip(weights, conditionals):
            position = np.flatnonzero(support == i)
            if position.size == 0:
                spike += w
            else:
                k = position[0]
                slab += w * make_gaussian(grid, means[k], stds[k], strict=False).slab_values
        marginals.append(HybridDensity(grid, slab, spike).normalize())
    return marginals


def write_iteration_log(diagnostics: BpDiagnostics, path) -> Path:
    """CSV with columns iteration, max_delta"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["iteration", "max_delta"])
            for iteration, delta in enumerate(diagnostics.history, start=1):
                writer.writerow([iteration, format_number(delta)])
    except OSError as e:
        logger.error(f"Failed to write iteration log {path}: {e}")
        raise ResultIOError(path, str(e)) from e
    return path
