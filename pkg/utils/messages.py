"""
Console report templates for the support detection toolkit
"""

from typing import Any, Dict, List, Sequence

import numpy as np

from config import Config


class MessageTemplates:
    """Plain-text report formatting"""

    def __init__(self):
        self.config = Config()

    def format_posterior_table(self, rows: Sequence[Dict[str, Any]]) -> str:
        """One line per (sigma_w, x0): closed-form parameters and both detector values"""
        lines = ["Decoupled posterior",
                 f"{'sigma_w':>9} {'x0':>7} {'rho':>10} {'mu':>9} {'theta':>9} {'h_bht':>10} {'h_csbp':>10}"]
        for row in rows:
            lines.append(
                f"{row['sigma_w']:>9.4g} {row['x0']:>7.4g} {row['rho']:>10.4g} {row['mu']:>9.4g} "
                f"{row['theta']:>9.4g} {row['h_bht']:>10.4g} {row['h_csbp']:>10.4g}"
            )
        return "\n".join(lines)

    def format_boundary_summary(self, label: str, curves: Sequence[Any], dominance: Any = None) -> str:
        lines = [f"Phase transition boundary {label}"]
        for curve in curves:
            finite = curve.x0_star[np.isfinite(curve.x0_star)]
            span = f"{finite.min():.4g} .. {finite.max():.4g}" if finite.size else "none"
            lines.append(f"  {curve.detector.label:<5} x0_star range {span}, flagged points {len(curve.flagged)}")
        if dominance is not None:
            verdict = "yes" if dominance.dominates else f"no ({len(dominance.violations)} nodes)"
            lines.append(f"  BHT dominates CS-BP: {verdict}; max gap {dominance.max_gap:.4g}, "
                         f"mean gap {dominance.mean_gap:.4g}, upper-half gap slope {dominance.gap_slope:.3g}")
        return "\n".join(lines)

    def format_heatmap(self, heatmap: Any, detector: str) -> str:
        """Estimate grid with sigma_w down the rows and x0 across the columns"""
        cfg = heatmap.config
        estimate = heatmap.estimate(detector)
        header = "sigma_w \\ x0 " + " ".join(f"{x:>6.3g}" for x in cfg.x0_grid)
        lines = [f"Failure probability, {detector}", header]
        for i, sigma_w in enumerate(cfg.sigma_w_grid):
            lines.append(f"{sigma_w:>12.4g} " + " ".join(f"{p:>6.2f}" for p in estimate[i]))
        nonconverged = int(heatmap.nonconverged.sum())
        if nonconverged:
            lines.append(f"non-converged decodes: {nonconverged}")
        return "\n".join(lines)

    def format_decode(self, summary: Dict[str, Any], rows: List[Dict[str, Any]], limit: int = 20) -> str:
        lines = [self.config.DECODE_HEADER.format(**summary),
                 f"{'i':>5} {'x0':>9} {'spike':>9} {'mean':>9} {'bht':>4} {'csbp':>4}"]
        shown = [r for r in rows if r["support"] or r["bht"] or r["csbp"]][:limit]
        for row in shown:
            lines.append(f"{row['index']:>5} {row['x0']:>9.4g} {row['spike_mass']:>9.4g} "
                         f"{row['slab_mean']:>9.4g} {row['bht']:>4} {row['csbp']:>4}")
        if len(rows) > len(shown):
            lines.append(f"({len(rows) - len(shown)} elements with no support and no detection not shown)")
        return "\n".join(lines)

    def format_selftest(self, results: Sequence[Any]) -> str:
        lines = [self.config.SELFTEST_HEADER.format(count=len(results))]
        for result in results:
            status = "PASS" if result.passed else "FAIL"
            lines.append(f"  [{status}] {result.name}: {result.detail} ({result.seconds:.1f}s)")
        failed = sum(1 for r in results if not r.passed)
        lines.append("All checks passed" if failed == 0 else f"{failed} check(s) failed")
        return "\n".join(lines)
