"""
Monte Carlo sweep and single-decode handlers
"""

import logging
from typing import Any, Dict

import numpy as np

from config import Config
from core.bp_decoder import BpConfig, run_bp, write_iteration_log
from core.detectors import DetectorKind, evaluate
from core.experiments import (SweepConfig, SweepMode, dominance_violations, run_sweep,
                              trend_report)
from core.density_kit import GridSpec
from models.measurement import MatrixPolicy, build_matrix, measure, save_matrix
from models.signal_model import SpikeSlabPrior, sample_signal, sample_support
from results_store import ResultStore
from utils.helpers import artifact_stem, as_float_list, derive_rng, format_tag, single_value
from utils.messages import MessageTemplates

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 2


def sweep_config_from_settings(settings: Dict[str, Any]) -> SweepConfig:
    return SweepConfig(
        sigma_w_grid=as_float_list(settings["sigma_w_grid"]),
        x0_grid=as_float_list(settings["x0_grid"]),
        n=int(settings["n"]),
        m=int(settings["m"]),
        l=int(settings["l"]),
        q=single_value(settings["q"], "q"),
        sigma_x=single_value(settings["sigma_x"], "sigma_x"),
        detectors=list(settings["detectors"]),
        trials=int(settings["trials"]),
        seed=int(settings["seed"]),
        mode=SweepMode(settings["mode"]),
        matrix_policy=MatrixPolicy(settings.get("matrix_policy", MatrixPolicy.FRESH.value)),
        signal_magnitude=settings.get("signal_magnitude"),
        bp_grid_points=int(settings["grid_points"]),
        csbp_delta=settings.get("delta")
    )


class ExperimentHandlers:
    """Handle the sweep and decode commands"""

    def __init__(self, store: ResultStore, messages: MessageTemplates):
        self.store = store
        self.messages = messages
        self.config = Config()

    def sweep_command(self, settings: Dict[str, Any]) -> int:
        cfg = sweep_config_from_settings(settings)
        self.store.prepare()

        heatmap = run_sweep(cfg, threads=int(settings.get("threads", 1)))
        stem = artifact_stem("heatmap", cfg.q, cfg.sigma_x, cfg.l, cfg.mode.value)
        self.store.save_heatmap(heatmap, stem, settings)

        for name in heatmap.detectors:
            print(self.messages.format_heatmap(heatmap, name))

        if cfg.mode is SweepMode.FULL:
            for name in heatmap.detectors:
                trend = trend_report(heatmap, name)
                if not trend.ok:
                    logger.warning(f"{name}: failure estimates do not trend with sigma_w and |x0| as expected")
            if {"bht", "csbp"} <= set(heatmap.detectors):
                violations = dominance_violations(heatmap)
                if violations:
                    logger.warning(f"BHT worse than CS-BP beyond two standard errors at {violations}")

        errored = int(heatmap.errored.sum())
        if errored:
            logger.error(f"{errored} trials failed to decode and were scored as failures")
            return EXIT_FLAGGED
        return EXIT_OK

    def decode_command(self, settings: Dict[str, Any]) -> int:
        """One BP decode of a random instance; per-element CSV and iteration log"""
        q = single_value(settings["q"], "q")
        sigma_x = single_value(settings["sigma_x"], "sigma_x")
        sigma_w = as_float_list(settings["sigma_w_grid"])[0]
        n, m, l, seed = int(settings["n"]), int(settings["m"]), int(settings["l"]), int(settings["seed"])

        detection = SpikeSlabPrior(q, sigma_x)
        generation = detection.with_two_point(settings.get("signal_magnitude") or sigma_x)
        grid = GridSpec.for_prior(sigma_x, int(settings["grid_points"]))
        delta = settings.get("delta") or grid.spacing

        matrix = build_matrix(n, m, l, derive_rng(seed, 0), seed=seed)
        rng = derive_rng(seed, 1)
        signal = sample_signal(generation, sample_support(generation, n, rng), rng)
        measurement = measure(matrix, signal, sigma_w, rng)
        result = run_bp(matrix, measurement, detection, sigma_w, BpConfig(grid=grid))

        bht, csbp = DetectorKind.bht(), DetectorKind.csbp(delta)
        rows = []
        for i, belief in enumerate(result.beliefs):
            slab_mass = belief.slab_mass
            slab_mean = float(belief.slab_values @ (grid.weights * grid.nodes)) / slab_mass if slab_mass > 0 else 0.0
            rows.append({
                "index": i,
                "x0": float(signal.values[i]),
                "support": int(signal.support[i]),
                "spike_mass": belief.spike_mass,
                "slab_mean": slab_mean,
                "bht": int(evaluate(belief, bht, detection).detected),
                "csbp": int(evaluate(belief, csbp, detection).detected)
            })

        self.store.prepare()
        stem = f"{artifact_stem('decode', q, sigma_x, l)}_sw{format_tag(sigma_w)}"
        self.store.save_decode_table(rows, stem)
        write_iteration_log(result.diagnostics, self.store.path_for(f"{stem}_iterations", ".csv"))
        save_matrix(matrix, self.store.path_for(f"{stem}_matrix", ".txt"))
        self.store.save_sidecar(stem, "decode", settings, {"diagnostics": result.diagnostics.to_dict()})

        support = np.asarray(signal.support)
        errors = {name: int(np.sum(np.array([r[name] for r in rows]) != support)) for name in ("bht", "csbp")}
        summary = {
            "n": n, "m": m, "l": l, "sigma_w": sigma_w,
            "iterations": result.diagnostics.iterations,
            "converged": result.diagnostics.converged,
            "delta": result.diagnostics.final_delta
        }
        print(self.messages.format_decode(summary, rows))
        print(f"support errors: bht={errors['bht']} csbp={errors['csbp']} (support size {signal.support_size})")
        return EXIT_OK if result.diagnostics.converged else EXIT_FLAGGED
