"""
Phase transition boundaries on the (sigma_w, |x0|) plane

For each noise level the boundary is the smallest magnitude at which the
detection function turns positive; success is {|x0| > x0_star(sigma_w)}.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from config import Config
from core.analytic_channel import ChannelPoint
from core.detectors import DetectorKind, DetectorName, detection_value
from models.signal_model import SpikeSlabPrior
from utils.errors import ConfigError, NumericalGateError, SupportDetectionError
from utils.helpers import is_increasing, raise_if_invalid, validation_result

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseParams:
    """Parameter set of one boundary diagram; delta is the CS-BP spike convention"""
    q: float
    sigma_x: float
    l: int = Config.DEFAULT_L
    delta: Optional[float] = None

    def __post_init__(self):
        raise_if_invalid(self.validate(), "phase parameters")

    def validate(self) -> Dict[str, Any]:
        errors = []
        if not 0.0 < self.q < 0.5:
            errors.append(f"boundaries need 0 < q < 1/2, got {self.q}")
        if not self.sigma_x > 0:
            errors.append(f"sigma_x must be positive, got {self.sigma_x}")
        if self.l < 1:
            errors.append(f"L must be at least 1, got {self.l}")
        if self.delta is not None and not self.delta > 0:
            errors.append(f"delta must be positive, got {self.delta}")
        return validation_result(errors, [])

    @property
    def prior(self) -> SpikeSlabPrior:
        return SpikeSlabPrior(self.q, self.sigma_x)

    def with_delta(self, delta: float) -> "PhaseParams":
        return PhaseParams(self.q, self.sigma_x, self.l, delta)

    def to_dict(self) -> Dict[str, Any]:
        return {"q": self.q, "sigma_x": self.sigma_x, "l": self.l, "delta": self.delta}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseParams":
        delta = data.get("delta")
        return cls(float(data["q"]), float(data["sigma_x"]), int(data.get("l", Config.DEFAULT_L)),
                   None if delta is None else float(delta))


@dataclass(frozen=True)
class SolverConfig:
    tol: float = Config.BOUNDARY_TOL
    x_max: float = Config.BOUNDARY_X_MAX
    prescan: int = Config.BOUNDARY_PRESCAN
    fine_scan: int = Config.BOUNDARY_FINE_SCAN

    def __post_init__(self):
        if not self.tol > 0 or self.x_max < 0 or self.prescan < 2 or self.fine_scan < self.prescan:
            raise ConfigError(f"invalid boundary solver settings: {self}")

    def to_dict(self) -> Dict[str, Any]:
        return {"tol": self.tol, "x_max": self.x_max, "prescan": self.prescan, "fine_scan": self.fine_scan}


@dataclass(frozen=True)
class BoundaryPoint:
    sigma_w: float
    x0_star: float
    flagged: bool = False
    reason: str = ""

    @property
    def finite(self) -> bool:
        return math.isfinite(self.x0_star)


@dataclass
class PTBoundary:
    detector: DetectorKind
    params: PhaseParams
    points: List[BoundaryPoint]
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def sigma_w_grid(self) -> List[float]:
        return [p.sigma_w for p in self.points]

    @property
    def x0_star(self) -> np.ndarray:
        return np.array([p.x0_star for p in self.points])

    @property
    def flagged(self) -> List[BoundaryPoint]:
        return [p for p in self.points if p.flagged]

    @property
    def monotone(self) -> bool:
        return not any(p.reason == "curve decreases" for p in self.points)

    def classify(self, sigma_w_index: int, x0: float) -> bool:
        """True when |x0| lies in the success region at this grid node"""
        return abs(x0) > self.points[sigma_w_index].x0_star


@dataclass
class DominanceReport:
    dominates: bool
    max_gap: float
    mean_gap: float
    gap_slope: float
    violations: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dominates": self.dominates,
            "max_gap": self.max_gap,
            "mean_gap": self.mean_gap,
            "gap_slope": self.gap_slope,
            "violations": self.violations
        }


def resolve_detector(detector: DetectorKind, params: PhaseParams) -> DetectorKind:
    """CS-BP takes its delta from the detector or, failing that, from the parameter set"""
    if detector.name is DetectorName.CSBP and detector.delta is None:
        if params.delta is None:
            raise ConfigError("CS-BP boundaries need a delta convention")
        return DetectorKind.csbp(params.delta)
    return detector


def detection_function(detector: DetectorKind, sigma_w: float, params: PhaseParams) -> Callable[[float], float]:
    kind = resolve_detector(detector, params)
    prior = params.prior

    def h(x0: float) -> float:
        return detection_value(kind, ChannelPoint(float(x0), sigma_w, params.l, prior))

    return h


def bht_boundary_exact(sigma_w: float, params: PhaseParams) -> float:
    """Closed-form root of rho = 1/2"""
    s2 = sigma_w ** 2 / params.l
    sx2 = params.sigma_x ** 2
    log_term = math.log((1.0 - params.q) / params.q) + 0.5 * math.log((sx2 + s2) / s2)
    return math.sqrt(2.0 * log_term * s2 * (sx2 + s2) / sx2)


def _bisect(h: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Shrink [lo, hi] keeping h(lo) <= 0 < h(hi); returns hi"""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


def _first_crossing(xs: np.ndarray, positive: np.ndarray) -> Tuple[float, float]:
    k = int(np.argmax(positive))
    return float(xs[k - 1]), float(xs[k])


def boundary_point(detector: DetectorKind, sigma_w: float, params: PhaseParams,
                   solver: Optional[SolverConfig] = None) -> BoundaryPoint:
    """Smallest |x0| in [0, x_max] with h > 0, or +inf when none"""
    solver = solver or SolverConfig()
    if not sigma_w > 0:
        raise ConfigError(f"boundary points need sigma_w > 0, got {sigma_w}")

    h = detection_function(detector, sigma_w, params)
    if h(0.0) > 0:
        raise NumericalGateError(f"detection function is positive at x0=0 for sigma_w={sigma_w:g}")

    xs = np.linspace(0.0, solver.x_max, solver.prescan)
    positive = np.array([h(x) > 0 for x in xs])
    if not positive.any():
        return BoundaryPoint(sigma_w, math.inf)

    changes = int(np.count_nonzero(positive[1:] != positive[:-1]))
    flagged = False
    reason = ""
    if changes > 1:
        xs = np.linspace(0.0, solver.x_max, solver.fine_scan)
        positive = np.array([h(x) > 0 for x in xs])
        flagged = True
        reason = f"{changes} sign changes in the pre-scan"
        logger.warning(f"sigma_w={sigma_w:g}: detection function not monotone in |x0|; using the smallest crossing")

    lo, hi = _first_crossing(xs, positive)
    return BoundaryPoint(sigma_w, _bisect(h, lo, hi, solver.tol), flagged, reason)


def boundary_curve(detector: DetectorKind, sigma_w_grid: Sequence[float], params: PhaseParams,
                   solver: Optional[SolverConfig] = None) -> PTBoundary:
    solver = solver or SolverConfig()
    grid = [float(s) for s in sigma_w_grid]
    if not grid or not is_increasing(grid):
        raise ConfigError("sigma_w grid must be nonempty and strictly increasing")
    detector = resolve_detector(detector, params)

    points: List[BoundaryPoint] = []
    for sigma_w in grid:
        try:
            points.append(boundary_point(detector, sigma_w, params, solver))
        except SupportDetectionError as e:
            logger.warning(f"Boundary point at sigma_w={sigma_w:g} failed: {e}")
            points.append(BoundaryPoint(sigma_w, math.nan, True, str(e)))

    # finite after inf, or a drop, breaks the nondecreasing shape
    running = -math.inf
    for k, point in enumerate(points):
        if math.isnan(point.x0_star):
            continue
        if point.x0_star < running:
            points[k] = BoundaryPoint(point.sigma_w, point.x0_star, True, "curve decreases")
        running = max(running, point.x0_star)

    curve = PTBoundary(detector, params, points, solver)
    logger.info(
        f"{detector.label} boundary: {len(points)} points, {len(curve.flagged)} flagged "
        f"(q={params.q:g}, sigma_x={params.sigma_x:g}, L={params.l})"
    )
    return curve


def region_dominance(a: PTBoundary, b: PTBoundary) -> DominanceReport:
    """Does a's success region contain b's at every node (a.x0_star <= b.x0_star)"""
    if not np.array_equal(a.sigma_w_grid, b.sigma_w_grid):
        raise ConfigError("dominance needs identical sigma_w grids")
    if (a.params.q, a.params.sigma_x, a.params.l) != (b.params.q, b.params.sigma_x, b.params.l):
        raise ConfigError("dominance needs identical (q, sigma_x, L)")

    xa, xb = a.x0_star, b.x0_star
    sigma = np.array(a.sigma_w_grid)
    with np.errstate(invalid="ignore"):
        violations = [float(s) for s, u, v in zip(sigma, xa, xb) if not u <= v]
        gaps = xb - xa
    finite = np.isfinite(gaps)

    max_gap = float(gaps[finite].max()) if finite.any() else math.nan
    mean_gap = float(gaps[finite].mean()) if finite.any() else math.nan

    upper = finite & (sigma >= np.median(sigma))
    slope = math.nan
    if np.count_nonzero(upper) >= 2:
        slope = float(linregress(sigma[upper], gaps[upper]).slope)

    return DominanceReport(not violations, max_gap, mean_gap, slope, violations)


def delta_sensitivity(sigma_w_grid: Sequence[float], params: PhaseParams,
                      solver: Optional[SolverConfig] = None) -> Tuple[PTBoundary, PTBoundary, float]:
    """CS-BP curves at delta and delta/2, plus the largest finite shift between them"""
    if params.delta is None:
        raise ConfigError("delta sensitivity needs a delta convention")
    coarse = boundary_curve(DetectorKind.csbp(params.delta), sigma_w_grid, params, solver)
    fine = boundary_curve(DetectorKind.csbp(0.5 * params.delta), sigma_w_grid,
                          params.with_delta(0.5 * params.delta), solver)
    shifts = np.abs(coarse.x0_star - fine.x0_star)
    shifts = shifts[np.isfinite(shifts)]
    return coarse, fine, float(shifts.max()) if shifts.size else 0.0
