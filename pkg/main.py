#!/usr/bin/env python3
"""
Sparse Support Detection Toolkit - Main Entry Point
Subcommands: posterior, boundary, sweep, decode, selftest
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from config import Config
from handlers.analysis_handlers import AnalysisHandlers
from handlers.experiment_handlers import ExperimentHandlers
from handlers.selftest_handlers import SelftestHandlers
from results_store import ResultStore
from utils.errors import (ConfigError, NumericalGateError, ResultIOError, SupportDetectionError,
                          UsageError)
from utils.messages import MessageTemplates

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GATE = 2
EXIT_IO = 3

DETECTOR_CHOICES = {"bht": ["bht"], "csbp": ["csbp"], "both": ["bht", "csbp"]}


def base_settings() -> Dict[str, Any]:
    config = Config()
    return {
        "seed": config.DEFAULT_SEED,
        "out": config.OUTPUT_DIR,
        "threads": config.THREADS,
        "q": [config.DEFAULT_Q],
        "sigma_x": [config.DEFAULT_SIGMA_X],
        "l": config.DEFAULT_L,
        "n": config.DEFAULT_N,
        "m": config.DEFAULT_M,
        "sigma_w_grid": list(config.POSTERIOR_SIGMA_W),
        "x0_grid": list(config.POSTERIOR_X0),
        "trials": config.DEFAULT_TRIALS,
        "detectors": ["bht", "csbp"],
        "mode": "decoupled",
        "delta": None,
        "grid_points": config.GRID_POINTS,
        "matrix_policy": "fresh",
        "signal_magnitude": None,
        "quick": False
    }


# Per-command overrides of base_settings
COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "posterior": {},
    "boundary": {
        "q": [0.02, 0.05],
        "sigma_x": [5.0, 10.0],
        "sigma_w_grid": Config.BOUNDARY_SIGMA_W,
        "grid_points": 4096
    },
    "sweep": {
        "q": [0.02],
        "sigma_x": [10.0],
        "sigma_w_grid": Config.SWEEP_SIGMA_W,
        "x0_grid": Config.SWEEP_X0
    },
    "decode": {
        "q": [0.02],
        "sigma_x": [10.0],
        "sigma_w_grid": [1.0]
    },
    "selftest": {}
}

# argparse dest -> settings key
FLAG_KEYS = {
    "seed": "seed", "out": "out", "threads": "threads", "q": "q", "sigma_x": "sigma_x",
    "L": "l", "n": "n", "m": "m", "sigma_w_grid": "sigma_w_grid", "x0_grid": "x0_grid",
    "trials": "trials", "mode": "mode", "delta": "delta", "grid_points": "grid_points",
    "matrix_policy": "matrix_policy", "signal_magnitude": "signal_magnitude"
}


class ToolkitArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting on bad input"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def load_config_file(path: str) -> Tuple[Dict[str, Any], bool]:
    """Settings from a JSON file and whether it was a sidecar (its config block is used)"""
    try:
        data = ResultStore.load_sidecar(path)
    except ResultIOError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")

    is_sidecar = "config" in data
    settings = data["config"] if is_sidecar else data
    unknown = set(settings) - set(base_settings())
    if unknown:
        raise ConfigError(f"Unknown keys in {path}: {sorted(unknown)}")
    return settings, is_sidecar


def build_settings(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """Defaults < --config file < flags.

    A sidecar given without --out replays into REPLAY_DIR next to it.
    """
    settings = base_settings()
    settings.update(COMMAND_DEFAULTS[command])
    if args.config:
        file_settings, is_sidecar = load_config_file(args.config)
        settings.update(file_settings)
        if is_sidecar and args.out is None:
            settings["out"] = str(Path(args.config).parent / Config.REPLAY_DIR)
            logger.info(f"Replaying {args.config} into {settings['out']}")

    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    if args.detector is not None:
        settings["detectors"] = DETECTOR_CHOICES[args.detector]
    if args.quick:
        settings["quick"] = True
    return settings


class SupportDetectionApp:
    def __init__(self, output_dir: Optional[str] = None):
        self.config = Config()
        self.messages = MessageTemplates()
        self.store = ResultStore(output_dir)
        self.analysis_handlers = AnalysisHandlers(self.store, self.messages)
        self.experiment_handlers = ExperimentHandlers(self.store, self.messages)
        self.selftest_handlers = SelftestHandlers(self.store, self.messages)
        self.commands: Dict[str, Callable[[Dict[str, Any]], int]] = {}

    def setup_handlers(self, subparsers, common: argparse.ArgumentParser) -> None:
        """Register every subcommand"""
        entries = [
            ("posterior", "decoupled posterior densities for a list of sigma_w values",
             self.analysis_handlers.posterior_command),
            ("boundary", "phase transition boundaries per (q, sigma_x) set",
             self.analysis_handlers.boundary_command),
            ("sweep", "decoupled or full Monte Carlo failure heatmaps",
             self.experiment_handlers.sweep_command),
            ("decode", "one belief propagation decode with per-element decisions",
             self.experiment_handlers.decode_command),
            ("selftest", "oracle agreement suite",
             self.selftest_handlers.selftest_command),
        ]
        for name, help_text, handler in entries:
            subparsers.add_parser(name, help=help_text, parents=[common])
            self.commands[name] = handler
        logger.debug("All handlers setup completed")

    def run(self, command: str, settings: Dict[str, Any]) -> int:
        self.store.output_dir = Path(settings["out"])
        logger.info(f"Running {command} with seed {settings['seed']}")
        return self.commands[command](settings)


def common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="JSON settings file; sidecars are accepted")
    parser.add_argument("--seed", type=int, help="root seed for all random streams")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="worker processes for Monte Carlo cells")
    parser.add_argument("--n", type=int, help="signal length N")
    parser.add_argument("--m", type=int, help="number of measurements M")
    parser.add_argument("--L", type=int, help="nonzeros per matrix column")
    parser.add_argument("--q", help="sparsity rate(s), comma list")
    parser.add_argument("--sigma-x", dest="sigma_x", help="slab standard deviation(s), comma list")
    parser.add_argument("--sigma-w-grid", dest="sigma_w_grid",
                        help="noise levels: comma list or linspace:start:stop:count")
    parser.add_argument("--x0-grid", dest="x0_grid",
                        help="signal magnitudes: comma list or linspace:start:stop:count")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
    parser.add_argument("--detector", choices=sorted(DETECTOR_CHOICES), help="detector(s) to evaluate")
    parser.add_argument("--mode", choices=["decoupled", "full"], help="sweep mode")
    parser.add_argument("--delta", type=float, help="CS-BP grid spacing convention")
    parser.add_argument("--grid-points", dest="grid_points", type=int, help="sampling grid size (power of two)")
    parser.add_argument("--matrix-policy", dest="matrix_policy", choices=["fresh", "fixed"],
                        help="new matrix per trial or one per sweep")
    parser.add_argument("--signal-magnitude", dest="signal_magnitude", type=float,
                        help="magnitude of non-probe nonzeros (default sigma_x)")
    parser.add_argument("--quick", action="store_true", help="selftest: fewer sample points")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=level
    )
    logging.getLogger().setLevel(level)


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run the subcommand and map errors to the exit status"""
    app = SupportDetectionApp()
    parser = ToolkitArgumentParser(prog="ssd", description="Sparse support detection toolkit")
    subparsers = parser.add_subparsers(dest="command", parser_class=ToolkitArgumentParser)
    app.setup_handlers(subparsers, common_parser())

    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        configure_logging(args.verbose)
        return app.run(args.command, build_settings(args.command, args))
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except (UsageError, ConfigError) as e:
        logger.error(f"Invalid invocation: {e}")
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except NumericalGateError as e:
        logger.error(f"Numerical gate failed: {e}")
        return EXIT_GATE
    except ResultIOError as e:
        logger.error(f"Result I/O failed: {e}")
        return EXIT_IO
    except SupportDetectionError as e:
        logger.error(f"Run aborted: {e}")
        print(str(e), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    try:
        sys.exit(dispatch())
    except KeyboardInterrupt:
        print("Interrupted.")
        sys.exit(130)
