"""
Monte Carlo failure-probability sweeps over the (sigma_w, |x0|) plane

Each trial forces one probe element onto the support with magnitude |x0| and a
random sign; failure means the detector decides H0 at the probe.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import spearmanr

from config import Config
from core.analytic_channel import ChannelPoint
from core.bp_decoder import BpConfig, run_bp
from core.density_kit import GridSpec
from core.detectors import DetectorKind, DetectorName, detect_support, detection_value, evaluate
from models.measurement import MatrixPolicy, SparseBinaryMatrix, build_matrix, measure
from models.signal_model import SpikeSlabPrior, sample_probe_instance
from utils.errors import ConfigError, SupportDetectionError
from utils.helpers import as_float_list, derive_rng, raise_if_invalid, seed_label, validation_result

logger = logging.getLogger(__name__)

# Stream keys for derive_rng
FIXED_MATRIX_KEY = 0
TRIAL_KEY = 1


class SweepMode(Enum):
    DECOUPLED = "decoupled"
    FULL = "full"


@dataclass
class SweepConfig:
    """Everything that determines a heatmap; serialized verbatim into the sidecar"""
    sigma_w_grid: List[float]
    x0_grid: List[float]
    n: int = Config.DEFAULT_N
    m: int = Config.DEFAULT_M
    l: int = Config.DEFAULT_L
    q: float = 0.02
    sigma_x: float = 10.0
    detectors: List[str] = field(default_factory=lambda: ["bht", "csbp"])
    trials: int = Config.DEFAULT_TRIALS
    seed: int = Config.DEFAULT_SEED
    mode: SweepMode = SweepMode.DECOUPLED
    matrix_policy: MatrixPolicy = MatrixPolicy.FRESH
    signal_magnitude: Optional[float] = None  # non-probe nonzeros; defaults to sigma_x
    bp_grid_points: int = Config.GRID_POINTS
    csbp_delta: Optional[float] = None  # defaults to the BP grid spacing
    bp: BpConfig = field(default_factory=BpConfig)

    def __post_init__(self):
        self.sigma_w_grid = as_float_list(self.sigma_w_grid)
        self.x0_grid = as_float_list(self.x0_grid)
        raise_if_invalid(self.validate(), "sweep configuration")

    def validate(self) -> Dict[str, Any]:
        errors = []
        warnings = []

        if not self.sigma_w_grid:
            errors.append("sigma_w grid is empty")
        elif min(self.sigma_w_grid) <= 0 and self.mode is SweepMode.DECOUPLED:
            errors.append("decoupled sweeps need sigma_w > 0")
        elif min(self.sigma_w_grid) < 0:
            errors.append("sigma_w values must be nonnegative")
        if not self.x0_grid:
            errors.append("x0 grid is empty")
        elif min(self.x0_grid) <= 0:
            errors.append("probe magnitudes must be positive")

        if self.trials < 1:
            errors.append(f"trials must be at least 1, got {self.trials}")
        if not 0.0 < self.q < 0.5:
            errors.append(f"q must lie in (0, 1/2), got {self.q}")
        if not self.sigma_x > 0:
            errors.append(f"sigma_x must be positive, got {self.sigma_x}")
        if not self.detectors:
            errors.append("no detector selected")
        for name in self.detectors:
            if name not in {d.value for d in DetectorName}:
                errors.append(f"unknown detector {name!r}")
        if self.csbp_delta is not None and not self.csbp_delta > 0:
            errors.append(f"csbp_delta must be positive, got {self.csbp_delta}")
        if self.signal_magnitude is not None and not self.signal_magnitude > 0:
            errors.append(f"signal_magnitude must be positive, got {self.signal_magnitude}")

        if self.mode is SweepMode.FULL:
            if self.m >= self.n:
                errors.append(f"full sweeps need M < N, got M={self.m}, N={self.n}")
            if not 1 <= self.l <= self.m:
                errors.append(f"L must lie in [1, M], got {self.l}")
            if self.n > Config.FULL_SCALE_N:
                warnings.append(f"N={self.n} exceeds {Config.FULL_SCALE_N}; expect long runtimes")

        return validation_result(errors, warnings)

    @property
    def detection_prior(self) -> SpikeSlabPrior:
        return SpikeSlabPrior(self.q, self.sigma_x)

    @property
    def generation_prior(self) -> SpikeSlabPrior:
        return self.detection_prior.with_two_point(self.signal_magnitude or self.sigma_x)

    @property
    def bp_grid(self) -> GridSpec:
        return self.bp.grid or GridSpec.for_prior(self.sigma_x, self.bp_grid_points)

    @property
    def bp_config(self) -> BpConfig:
        return BpConfig(self.bp.max_iters, self.bp.tol, self.bp.damping, self.bp_grid)

    @property
    def delta(self) -> float:
        return self.csbp_delta if self.csbp_delta is not None else self.bp_grid.spacing

    def detector_kinds(self) -> List[DetectorKind]:
        kinds = []
        for name in self.detectors:
            if name == DetectorName.BHT.value:
                kinds.append(DetectorKind.bht())
            else:
                kinds.append(DetectorKind.csbp(self.delta))
        return kinds

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sigma_w_grid": list(self.sigma_w_grid),
            "x0_grid": list(self.x0_grid),
            "n": self.n,
            "m": self.m,
            "l": self.l,
            "q": self.q,
            "sigma_x": self.sigma_x,
            "detectors": list(self.detectors),
            "trials": self.trials,
            "seed": self.seed,
            "mode": self.mode.value,
            "matrix_policy": self.matrix_policy.value,
            "signal_magnitude": self.signal_magnitude,
            "bp_grid_points": self.bp_grid_points,
            "csbp_delta": self.csbp_delta,
            "bp": self.bp.to_dict()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepConfig":
        return cls(
            sigma_w_grid=data["sigma_w_grid"],
            x0_grid=data["x0_grid"],
            n=int(data.get("n", Config.DEFAULT_N)),
            m=int(data.get("m", Config.DEFAULT_M)),
            l=int(data.get("l", Config.DEFAULT_L)),
            q=float(data.get("q", 0.02)),
            sigma_x=float(data.get("sigma_x", 10.0)),
            detectors=list(data.get("detectors", ["bht", "csbp"])),
            trials=int(data.get("trials", Config.DEFAULT_TRIALS)),
            seed=int(data.get("seed", Config.DEFAULT_SEED)),
            mode=SweepMode(data.get("mode", "decoupled")),
            matrix_policy=MatrixPolicy(data.get("matrix_policy", "fresh")),
            signal_magnitude=data.get("signal_magnitude"),
            bp_grid_points=int(data.get("bp_grid_points", Config.GRID_POINTS)),
            csbp_delta=data.get("csbp_delta"),
            bp=BpConfig.from_dict(data.get("bp", {}))
        )


@dataclass(eq=False)
class FailureHeatmap:
    """Failure counts per (sigma_w index, x0 index) and detector"""
    config: SweepConfig
    failures: Dict[str, np.ndarray]
    trials: np.ndarray
    nonconverged: np.ndarray
    errored: np.ndarray
    support_error_rate: Dict[str, np.ndarray]
    cell_seeds: List[List[str]]

    @property
    def detectors(self) -> List[str]:
        return list(self.failures)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.trials.shape

    def estimate(self, detector: str) -> np.ndarray:
        return self.failures[detector] / self.trials

    def standard_error(self, detector: str) -> np.ndarray:
        p = self.estimate(detector)
        return np.sqrt(p * (1.0 - p) / self.trials)

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "nonconverged": self.nonconverged.tolist(),
            "errored": self.errored.tolist(),
            "support_error_rate": {k: v.tolist() for k, v in self.support_error_rate.items()}
        }


@dataclass
class CellOutcome:
    index: Tuple[int, int]
    failures: Dict[str, int]
    nonconverged: int = 0
    errored: int = 0
    support_errors: Dict[str, float] = field(default_factory=dict)


def _empty_heatmap(cfg: SweepConfig, trials_per_cell: int) -> FailureHeatmap:
    shape = (len(cfg.sigma_w_grid), len(cfg.x0_grid))
    return FailureHeatmap(
        config=cfg,
        failures={name: np.zeros(shape, dtype=np.int64) for name in cfg.detectors},
        trials=np.full(shape, trials_per_cell, dtype=np.int64),
        nonconverged=np.zeros(shape, dtype=np.int64),
        errored=np.zeros(shape, dtype=np.int64),
        support_error_rate={name: np.zeros(shape) for name in cfg.detectors},
        cell_seeds=[[""] * shape[1] for _ in range(shape[0])]
    )


def run_decoupled_sweep(cfg: SweepConfig) -> FailureHeatmap:
    """Deterministic 0/1 phase diagram from the closed-form detectors"""
    if cfg.mode is not SweepMode.DECOUPLED:
        raise ConfigError("run_decoupled_sweep needs mode=decoupled")

    heatmap = _empty_heatmap(cfg, 1)
    prior = cfg.detection_prior
    for kind in cfg.detector_kinds():
        for i, sigma_w in enumerate(cfg.sigma_w_grid):
            for j, x0 in enumerate(cfg.x0_grid):
                h = detection_value(kind, ChannelPoint(x0, sigma_w, cfg.l, prior))
                heatmap.failures[kind.label][i, j] = int(h <= 0)

    for i in range(len(cfg.sigma_w_grid)):
        for j in range(len(cfg.x0_grid)):
            heatmap.cell_seeds[i][j] = "deterministic"
    logger.info(f"Decoupled sweep finished: {heatmap.shape[0]}x{heatmap.shape[1]} cells")
    return heatmap


@lru_cache(maxsize=4)
def _fixed_matrix(n: int, m: int, l: int, seed: int) -> SparseBinaryMatrix:
    return build_matrix(n, m, l, derive_rng(seed, FIXED_MATRIX_KEY), seed=seed)


def _run_cell(cfg_data: Dict[str, Any], i: int, j: int) -> CellOutcome:
    """All trials of one cell; module level so worker processes can import it"""
    cfg = SweepConfig.from_dict(cfg_data)
    sigma_w = cfg.sigma_w_grid[i]
    x0 = cfg.x0_grid[j]
    generation = cfg.generation_prior
    detection = cfg.detection_prior
    bp_config = cfg.bp_config
    kinds = cfg.detector_kinds()

    outcome = CellOutcome(index=(i, j), failures={k.label: 0 for k in kinds},
                          support_errors={k.label: 0.0 for k in kinds})
    for t in range(cfg.trials):
        rng = derive_rng(cfg.seed, TRIAL_KEY, i, j, t)
        if cfg.matrix_policy is MatrixPolicy.FIXED:
            matrix = _fixed_matrix(cfg.n, cfg.m, cfg.l, cfg.seed)
        else:
            matrix = build_matrix(cfg.n, cfg.m, cfg.l, rng)

        signal = sample_probe_instance(generation, cfg.n, x0, rng)
        measurement = measure(matrix, signal, sigma_w, rng)
        try:
            result = run_bp(matrix, measurement, detection, sigma_w, bp_config)
        except SupportDetectionError as e:
            logger.warning(f"cell ({i}, {j}) trial {t}: decode failed, scored as failure: {e}")
            outcome.errored += 1
            for kind in kinds:
                outcome.failures[kind.label] += 1
                outcome.support_errors[kind.label] += 1.0
            continue

        outcome.nonconverged += int(not result.diagnostics.converged)
        probe_belief = result.beliefs[signal.probe_index]
        for kind in kinds:
            if not evaluate(probe_belief, kind, detection).detected:
                outcome.failures[kind.label] += 1
            estimate = detect_support(result.beliefs, kind, detection, cfg.n)
            outcome.support_errors[kind.label] += float(np.mean(estimate != signal.support))

    logger.debug(f"cell ({i}, {j}) done: {outcome.failures}")
    return outcome


def run_full_sweep(cfg: SweepConfig, threads: int = 1) -> FailureHeatmap:
    """BP-based Monte Carlo estimate of Pr{failure | probe on the support}"""
    if cfg.mode is not SweepMode.FULL:
        raise ConfigError("run_full_sweep needs mode=full")

    cells = [(i, j) for i in range(len(cfg.sigma_w_grid)) for j in range(len(cfg.x0_grid))]
    data = cfg.to_dict()
    logger.info(f"Full sweep: {len(cells)} cells x {cfg.trials} trials, N={cfg.n}, M={cfg.m}, threads={threads}")

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_cell, [data] * len(cells), *zip(*cells)))
    else:
        outcomes = [_run_cell(data, i, j) for i, j in cells]

    heatmap = _empty_heatmap(cfg, cfg.trials)
    for outcome in sorted(outcomes, key=lambda o: o.index):
        i, j = outcome.index
        for name, count in outcome.failures.items():
            heatmap.failures[name][i, j] = count
            heatmap.support_error_rate[name][i, j] = outcome.support_errors[name] / cfg.trials
        heatmap.nonconverged[i, j] = outcome.nonconverged
        heatmap.errored[i, j] = outcome.errored
        heatmap.cell_seeds[i][j] = seed_label(cfg.seed, TRIAL_KEY, i, j)

    total_nonconverged = int(heatmap.nonconverged.sum())
    if total_nonconverged:
        logger.warning(f"{total_nonconverged} decodes did not converge; see the sidecar diagnostics")
    return heatmap


def run_sweep(cfg: SweepConfig, threads: int = 1) -> FailureHeatmap:
    if cfg.mode is SweepMode.FULL:
        return run_full_sweep(cfg, threads)
    return run_decoupled_sweep(cfg)


def replay(sidecar: Dict[str, Any], threads: int = 1) -> FailureHeatmap:
    """Re-run a sweep from the config stored in its sidecar"""
    data = sidecar["sweep"] if "sweep" in sidecar else sidecar["config"]
    return run_sweep(SweepConfig.from_dict(data), threads)


@dataclass
class TrendReport:
    """Spearman correlations: estimate vs sigma_w per x0 column, vs x0 per sigma_w row"""
    along_sigma_w: List[float]
    along_x0: List[float]

    @property
    def ok(self) -> bool:
        rising = all(math.isnan(r) or r >= 0 for r in self.along_sigma_w)
        falling = all(math.isnan(r) or r <= 0 for r in self.along_x0)
        return rising and falling


def trend_report(heatmap: FailureHeatmap, detector: str) -> TrendReport:
    estimate = heatmap.estimate(detector)
    sigma_w = np.array(heatmap.config.sigma_w_grid)
    x0 = np.array(heatmap.config.x0_grid)

    def correlation(a: np.ndarray, b: np.ndarray) -> float:
        if len(a) < 2 or np.all(b == b[0]):
            return math.nan
        return float(spearmanr(a, b)[0])

    return TrendReport(
        along_sigma_w=[correlation(sigma_w, estimate[:, j]) for j in range(len(x0))],
        along_x0=[correlation(x0, estimate[i, :]) for i in range(len(sigma_w))]
    )


def dominance_violations(heatmap: FailureHeatmap, better: str = "bht",
                         worse: str = "csbp") -> List[Tuple[float, float]]:
    """Cells where better's estimate exceeds worse's by more than twice the pooled standard error.

    The pooled error is sqrt(se_better^2 + se_worse^2) from the two binomial
    cell errors; worse's error alone is never the bound.
    """
    gap = heatmap.estimate(better) - heatmap.estimate(worse)
    bound = 2.0 * np.sqrt(heatmap.standard_error(better) ** 2 + heatmap.standard_error(worse) ** 2)
    cfg = heatmap.config
    return [(cfg.sigma_w_grid[i], cfg.x0_grid[j]) for i, j in zip(*np.nonzero(gap > bound))]
