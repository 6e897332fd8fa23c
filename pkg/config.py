"""
Configuration settings for the sparse support detection toolkit
"""

import os
from typing import List

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Toolkit configuration class"""

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("SSD_SEED", "20121"))

    # Output settings
    OUTPUT_DIR: str = os.getenv("SSD_OUTPUT_DIR", "results")
    # Replays of a sidecar without --out land in this subdirectory next to it
    REPLAY_DIR: str = os.getenv("SSD_REPLAY_DIR", "replay")
    LOG_LEVEL: str = os.getenv("SSD_LOG_LEVEL", "INFO")
    THREADS: int = int(os.getenv("SSD_THREADS", "1"))

    # Sampling grid (half width is GRID_SIGMAS * sigma_x)
    GRID_POINTS: int = int(os.getenv("SSD_GRID_POINTS", "1024"))
    GRID_SIGMAS: float = float(os.getenv("SSD_GRID_SIGMAS", "8.0"))
    MIN_GRID_POINTS: int = 64

    # Belief propagation
    BP_MAX_ITERS: int = int(os.getenv("SSD_BP_MAX_ITERS", "20"))
    BP_TOL: float = float(os.getenv("SSD_BP_TOL", "1e-4"))
    BP_DAMPING: float = float(os.getenv("SSD_BP_DAMPING", "0.0"))
    # Convolution windows must hold mean +/- ALIAS_SIGMAS standard deviations
    ALIAS_SIGMAS: float = 8.0

    # Signal model defaults (posterior parameter set)
    DEFAULT_Q: float = 0.05
    DEFAULT_SIGMA_X: float = 5.0
    DEFAULT_L: int = 4

    # Measurement defaults (desk scale; the full-scale run uses N=1024, M=512)
    DEFAULT_N: int = 256
    DEFAULT_M: int = 128
    FULL_SCALE_N: int = 1024
    MATRIX_MAX_RETRIES: int = 50

    # Monte Carlo
    DEFAULT_TRIALS: int = int(os.getenv("SSD_TRIALS", "100"))

    # Phase transition solver
    BOUNDARY_TOL: float = 1e-6
    BOUNDARY_PRESCAN: int = 64
    BOUNDARY_FINE_SCAN: int = 4096
    BOUNDARY_X_MAX: float = 60.0

    # BHT spike regularization width as a fraction of the grid spacing
    BHT_EPSILON_FRACTION: float = 0.125

    # Default grids for the CLI
    POSTERIOR_SIGMA_W: List[float] = [0.5, 1.0, 2.0, 4.0]
    POSTERIOR_X0: List[float] = [2.5]
    BOUNDARY_SIGMA_W: str = "linspace:0.1:6:60"
    SWEEP_SIGMA_W: str = "linspace:0.25:4:8"
    SWEEP_X0: str = "linspace:0.5:12:8"

    # Report templates
    DECODE_HEADER = """Belief propagation decode
N={n}  M={m}  L={l}  sigma_w={sigma_w}
iterations={iterations}  converged={converged}  final delta={delta:.3e}"""

    SELFTEST_HEADER = """Oracle agreement suite ({count} checks)"""
