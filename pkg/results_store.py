"""
Result persistence for the support detection toolkit: CSV tables plus JSON sidecars
"""

import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from core.density_kit import HybridDensity, write_density_csv
from core.experiments import FailureHeatmap, SweepConfig
from core.pt_analysis import PTBoundary
from utils.errors import ResultIOError
from utils.helpers import format_number

logger = logging.getLogger(__name__)

HEATMAP_COLUMNS = ["sigma_w", "x0", "detector", "failures", "trials", "estimate"]


class ResultStore:
    """Writes and reads every artifact under one output directory"""

    def __init__(self, output_dir: Optional[str] = None):
        self.config = Config()
        self.output_dir = Path(output_dir or self.config.OUTPUT_DIR)

    def prepare(self) -> Path:
        """Create the output directory"""
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            logger.info(f"Writing results to {self.output_dir}")
        except OSError as e:
            logger.error(f"Failed to create output directory: {e}")
            raise ResultIOError(self.output_dir, str(e)) from e
        return self.output_dir

    def path_for(self, stem: str, suffix: str) -> Path:
        return self.output_dir / f"{stem}{suffix}"

    # Sidecars
    def save_sidecar(self, stem: str, command: str, settings: Dict[str, Any],
                     extra: Optional[Dict[str, Any]] = None) -> Path:
        """JSON with the effective configuration; accepted back as --config"""
        path = self.path_for(stem, ".json")
        payload = {
            "command": command,
            "config": settings,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        payload.update(extra or {})
        try:
            with path.open("w") as handle:
                json.dump(payload, handle, indent=2, sort_keys=True)
                handle.write("\n")
        except (OSError, TypeError) as e:
            logger.error(f"Failed to write sidecar {path}: {e}")
            raise ResultIOError(path, str(e)) from e
        logger.info(f"Sidecar written: {path}")
        return path

    @staticmethod
    def load_sidecar(path) -> Dict[str, Any]:
        path = Path(path)
        try:
            with path.open() as handle:
                return json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to read {path}: {e}")
            raise ResultIOError(path, str(e)) from e

    # Densities
    def save_density(self, density: HybridDensity, stem: str) -> Path:
        path = write_density_csv(density, self.path_for(stem, ".csv"))
        logger.info(f"Density written: {path}")
        return path

    # Boundaries
    def save_boundary(self, curves: Sequence[PTBoundary], stem: str,
                      labels: Optional[Sequence[str]] = None) -> Path:
        """One row per sigma_w node, one x0_star column per curve"""
        labels = list(labels or [c.detector.label for c in curves])
        path = self.path_for(stem, ".csv")
        first = curves[0]
        params = first.params
        try:
            with path.open("w", newline="") as handle:
                handle.write(f"# q={format_number(params.q)}\n")
                handle.write(f"# sigma_x={format_number(params.sigma_x)}\n")
                handle.write(f"# L={params.l}\n")
                if params.delta is not None:
                    handle.write(f"# delta={format_number(params.delta)}\n")
                handle.write(f"# solver_tol={format_number(first.solver.tol)}\n")
                for label, curve in zip(labels, curves):
                    for point in curve.flagged:
                        handle.write(f"# flagged {label} sigma_w={format_number(point.sigma_w)}: "
                                     f"{point.reason}\n")

                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["sigma_w"] + [f"x0_star_{label}" for label in labels])
                for k, sigma_w in enumerate(first.sigma_w_grid):
                    writer.writerow([format_number(sigma_w)]
                                    + [format_number(c.points[k].x0_star) for c in curves])
        except OSError as e:
            logger.error(f"Failed to write boundary {path}: {e}")
            raise ResultIOError(path, str(e)) from e
        logger.info(f"Boundary written: {path}")
        return path

    @staticmethod
    def load_boundary(path) -> Tuple[List[float], Dict[str, List[float]]]:
        path = Path(path)
        try:
            with path.open() as handle:
                rows = list(csv.reader(line for line in handle if not line.startswith("#")))
        except OSError as e:
            logger.error(f"Failed to read boundary {path}: {e}")
            raise ResultIOError(path, str(e)) from e

        header, body = rows[0], rows[1:]
        sigma_w = [float(r[0]) for r in body]
        columns = {name: [float(r[k]) for r in body] for k, name in enumerate(header) if k > 0}
        return sigma_w, columns

    # Heatmaps
    def save_heatmap(self, heatmap: FailureHeatmap, stem: str, settings: Dict[str, Any]) -> Tuple[Path, Path]:
        """Long-format CSV plus a sidecar with config, cell seeds and diagnostics"""
        path = self.path_for(stem, ".csv")
        cfg = heatmap.config
        try:
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(HEATMAP_COLUMNS)
                for i, sigma_w in enumerate(cfg.sigma_w_grid):
                    for j, x0 in enumerate(cfg.x0_grid):
                        for name in heatmap.detectors:
                            writer.writerow([
                                format_number(sigma_w),
                                format_number(x0),
                                name,
                                int(heatmap.failures[name][i, j]),
                                int(heatmap.trials[i, j]),
                                format_number(heatmap.estimate(name)[i, j])
                            ])
        except OSError as e:
            logger.error(f"Failed to write heatmap {path}: {e}")
            raise ResultIOError(path, str(e)) from e
        logger.info(f"Heatmap written: {path}")

        sidecar = self.save_sidecar(stem, "sweep", settings, {
            "sweep": cfg.to_dict(),
            "cell_seeds": heatmap.cell_seeds,
            "diagnostics": heatmap.diagnostics()
        })
        return path, sidecar

    def load_heatmap(self, path) -> FailureHeatmap:
        """Rebuild a heatmap from its CSV and the sidecar next to it"""
        path = Path(path)
        sidecar = self.load_sidecar(path.with_suffix(".json"))
        cfg = SweepConfig.from_dict(sidecar["sweep"])
        index_w = {format_number(v): i for i, v in enumerate(cfg.sigma_w_grid)}
        index_x = {format_number(v): j for j, v in enumerate(cfg.x0_grid)}
        shape = (len(cfg.sigma_w_grid), len(cfg.x0_grid))

        failures: Dict[str, np.ndarray] = {}
        trials = np.zeros(shape, dtype=np.int64)
        try:
            with path.open() as handle:
                for row in csv.DictReader(handle):
                    i, j = index_w[row["sigma_w"]], index_x[row["x0"]]
                    failures.setdefault(row["detector"], np.zeros(shape, dtype=np.int64))
                    failures[row["detector"]][i, j] = int(row["failures"])
                    trials[i, j] = int(row["trials"])
        except (OSError, KeyError, ValueError) as e:
            logger.error(f"Failed to read heatmap {path}: {e}")
            raise ResultIOError(path, str(e)) from e

        diagnostics = sidecar.get("diagnostics", {})
        return FailureHeatmap(
            config=cfg,
            failures=failures,
            trials=trials,
            nonconverged=np.array(diagnostics.get("nonconverged", np.zeros(shape)), dtype=np.int64),
            errored=np.array(diagnostics.get("errored", np.zeros(shape)), dtype=np.int64),
            support_error_rate={k: np.array(v) for k, v in diagnostics.get("support_error_rate", {}).items()},
            cell_seeds=sidecar.get("cell_seeds", [])
        )

    # Decodes
    def save_decode_table(self, rows: List[Dict[str, Any]], stem: str) -> Path:
        path = self.path_for(stem, ".csv")
        try:
            with path.open("w", newline="") as handle:
                writer = csv.DictWriter(handle, fieldnames=list(rows[0]), lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: format_number(v) if isinstance(v, float) else v for k, v in row.items()})
        except OSError as e:
            logger.error(f"Failed to write decode table {path}: {e}")
            raise ResultIOError(path, str(e)) from e
        logger.info(f"Decode table written: {path}")
        return path
