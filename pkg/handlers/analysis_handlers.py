"""
Closed-form analysis handlers: decoupled posteriors and phase transition boundaries
"""

import itertools
import logging
from typing import Any, Dict

from config import Config
from core.analytic_channel import ChannelPoint, posterior_density, posterior_params
from core.density_kit import GridSpec
from core.detectors import DetectorKind, DetectorName, h_bht_analytic, h_csbp
from core.pt_analysis import PhaseParams, SolverConfig, boundary_curve, delta_sensitivity, region_dominance
from models.signal_model import SpikeSlabPrior
from results_store import ResultStore
from utils.helpers import artifact_stem, as_float_list, format_tag, single_value
from utils.messages import MessageTemplates

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 2


class AnalysisHandlers:
    """Handle the posterior and boundary commands"""

    def __init__(self, store: ResultStore, messages: MessageTemplates):
        self.store = store
        self.messages = messages
        self.config = Config()

    def posterior_command(self, settings: Dict[str, Any]) -> int:
        """Density CSV per (sigma_w, x0) pair plus a parameter table"""
        prior = SpikeSlabPrior(single_value(settings["q"], "q"), single_value(settings["sigma_x"], "sigma_x"))
        l = int(settings["l"])
        grid = GridSpec.for_prior(prior.sigma_x, int(settings["grid_points"]))
        delta = settings.get("delta") or grid.spacing

        self.store.prepare()
        base = artifact_stem("posterior", prior.q, prior.sigma_x, l)
        rows = []
        for sigma_w, x0 in itertools.product(as_float_list(settings["sigma_w_grid"]),
                                             as_float_list(settings["x0_grid"])):
            params = posterior_params(ChannelPoint(x0, sigma_w, l, prior))
            density = posterior_density(params, grid)
            self.store.save_density(density, f"{base}_sw{format_tag(sigma_w)}_x{format_tag(x0)}")
            rows.append({
                "sigma_w": sigma_w,
                "x0": x0,
                "rho": params.rho,
                "mu": params.mu,
                "theta": params.theta,
                "h_bht": h_bht_analytic(params, prior.q).h_value,
                "h_csbp": h_csbp(params, delta).h_value
            })

        self.store.save_sidecar(base, "posterior", settings, {"delta": delta, "grid": grid.to_dict()})
        print(self.messages.format_posterior_table(rows))
        return EXIT_OK

    def boundary_command(self, settings: Dict[str, Any]) -> int:
        """Boundary CSV per (q, sigma_x) set; flagged points or lost dominance exit with 2"""
        sigma_w_grid = as_float_list(settings["sigma_w_grid"])
        l = int(settings["l"])
        solver = SolverConfig()
        detectors = [DetectorName(name) for name in settings["detectors"]]

        self.store.prepare()
        status = EXIT_OK
        for q, sigma_x in itertools.product(as_float_list(settings["q"]), as_float_list(settings["sigma_x"])):
            delta = settings.get("delta") or GridSpec.for_prior(sigma_x, int(settings["grid_points"])).spacing
            params = PhaseParams(q, sigma_x, l, delta)
            label = f"(q={q:g}, sigma_x={sigma_x:g}, L={l}, delta={delta:.4g})"

            curves = []
            for name in detectors:
                kind = DetectorKind.bht() if name is DetectorName.BHT else DetectorKind.csbp(delta)
                curves.append(boundary_curve(kind, sigma_w_grid, params, solver))

            stem = artifact_stem("boundary", q, sigma_x, l)
            self.store.save_boundary(curves, stem)
            single = dict(settings, q=[q], sigma_x=[sigma_x], delta=delta)
            self.store.save_sidecar(stem, "boundary", single, {"solver": solver.to_dict()})

            dominance = None
            if len(curves) == 2:
                dominance = region_dominance(curves[0], curves[1])
                if not dominance.dominates:
                    logger.warning(f"BHT does not dominate CS-BP at {dominance.violations} {label}")
                    status = EXIT_FLAGGED

            if DetectorName.CSBP in detectors:
                coarse, fine, shift = delta_sensitivity(sigma_w_grid, params, solver)
                self.store.save_boundary([coarse, fine], f"{stem}_delta_sensitivity",
                                         labels=["csbp_delta", "csbp_half_delta"])
                logger.info(f"Halving delta moves the CS-BP boundary by at most {shift:.4g} {label}")

            if any(c.flagged for c in curves):
                status = EXIT_FLAGGED
            print(self.messages.format_boundary_summary(label, curves, dominance))

        return status
