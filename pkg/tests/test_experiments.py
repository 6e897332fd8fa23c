import numpy as np
import pytest

from core.density_kit import GridSpec
from core.detectors import DetectorKind
from core.experiments import (FailureHeatmap, SweepConfig, SweepMode, dominance_violations, replay,
                              run_decoupled_sweep, run_full_sweep, run_sweep, trend_report)
from core.pt_analysis import PhaseParams, boundary_curve
from models.measurement import MatrixPolicy
from utils.errors import ConfigError

DELTA = GridSpec.for_prior(10.0, 4096).spacing


def decoupled_config(**overrides):
    settings = dict(sigma_w_grid="linspace:0.25:4:8", x0_grid="linspace:0.5:12:8", q=0.02, sigma_x=10.0,
                    csbp_delta=DELTA)
    settings.update(overrides)
    return SweepConfig(**settings)


def full_config(**overrides):
    settings = dict(sigma_w_grid=[0.5, 3.0], x0_grid=[1.0, 8.0], n=64, m=32, l=3, trials=4,
                    mode=SweepMode.FULL, bp_grid_points=512, seed=7)
    settings.update(overrides)
    return SweepConfig(**settings)


class TestSweepConfig:
    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            decoupled_config(x0_grid=[])

    def test_full_mode_needs_underdetermined_system(self):
        with pytest.raises(ConfigError):
            full_config(m=64)

    def test_unknown_detector(self):
        with pytest.raises(ConfigError):
            decoupled_config(detectors=["lasso"])

    def test_dict_round_trip(self):
        cfg = full_config(matrix_policy=MatrixPolicy.FIXED, signal_magnitude=4.0)
        assert SweepConfig.from_dict(cfg.to_dict()) == cfg

    def test_default_delta_is_bp_grid_spacing(self):
        cfg = full_config()
        assert cfg.delta == GridSpec.for_prior(10.0, 512).spacing
        assert cfg.detector_kinds() == [DetectorKind.bht(), DetectorKind.csbp(cfg.delta)]


class TestDecoupledSweep:
    def test_extreme_cells(self):
        heatmap = run_decoupled_sweep(decoupled_config())
        for name in heatmap.detectors:
            estimate = heatmap.estimate(name)
            assert estimate[-1, 0] == 1.0
            assert estimate[0, -1] == 0.0
        assert np.all(heatmap.trials == 1)

    @pytest.mark.parametrize("kind", [DetectorKind.bht(), DetectorKind.csbp(DELTA)])
    def test_equals_boundary_classification(self, kind):
        cfg = decoupled_config()
        heatmap = run_decoupled_sweep(cfg)
        curve = boundary_curve(kind, cfg.sigma_w_grid, PhaseParams(cfg.q, cfg.sigma_x, cfg.l, DELTA))
        for i in range(len(cfg.sigma_w_grid)):
            for j, x0 in enumerate(cfg.x0_grid):
                assert heatmap.failures[kind.label][i, j] == int(not curve.classify(i, x0))

    def test_trends_and_dominance(self):
        heatmap = run_decoupled_sweep(decoupled_config())
        assert trend_report(heatmap, "bht").ok
        assert trend_report(heatmap, "csbp").ok
        assert dominance_violations(heatmap) == []

    def test_wrong_mode(self):
        with pytest.raises(ConfigError):
            run_decoupled_sweep(full_config())


class TestFullSweep:
    def test_counts_and_seeds(self):
        cfg = full_config()
        heatmap = run_full_sweep(cfg)
        assert heatmap.shape == (2, 2)
        for name in heatmap.detectors:
            assert np.all(heatmap.failures[name] <= heatmap.trials)
            assert np.all((heatmap.estimate(name) >= 0) & (heatmap.estimate(name) <= 1))
        assert heatmap.cell_seeds[1][0] == "7:1:1:0"
        assert np.all(heatmap.errored == 0)

    def test_replay_is_identical(self):
        cfg = full_config(matrix_policy=MatrixPolicy.FIXED)
        first = run_sweep(cfg)
        again = replay({"sweep": cfg.to_dict()})
        for name in first.detectors:
            np.testing.assert_array_equal(first.failures[name], again.failures[name])

    @pytest.mark.slow
    def test_thread_count_does_not_change_results(self):
        cfg = full_config()
        single = run_full_sweep(cfg, threads=1)
        pooled = run_full_sweep(cfg, threads=2)
        for name in single.detectors:
            np.testing.assert_array_equal(single.failures[name], pooled.failures[name])
        np.testing.assert_array_equal(single.nonconverged, pooled.nonconverged)

    @pytest.mark.slow
    def test_transition_far_from_boundary(self):
        cfg = SweepConfig(sigma_w_grid=[0.25, 4.0], x0_grid=[1.0, 12.0], n=256, m=128, l=4,
                          q=0.02, sigma_x=10.0, trials=20, mode=SweepMode.FULL, seed=3)
        heatmap = run_full_sweep(cfg)
        for name in heatmap.detectors:
            assert heatmap.estimate(name)[0, 1] <= 0.2
            assert heatmap.estimate(name)[1, 0] >= 0.8
        assert dominance_violations(heatmap) == []

    @pytest.mark.slow
    def test_heavy_tailed_rows_decode_without_errors(self):
        cfg = SweepConfig(sigma_w_grid=[1.0], x0_grid=[2.787], n=256, m=128, l=4, q=0.02,
                          sigma_x=10.0, trials=30, seed=11, mode=SweepMode.FULL)
        heatmap = run_full_sweep(cfg)
        assert np.all(heatmap.errored == 0)

    @pytest.mark.slow
    def test_cell_straddling_boundary(self):
        params = PhaseParams(0.02, 10.0, 4)
        x0_star = boundary_curve(DetectorKind.bht(), [1.0], params).points[0].x0_star
        cfg = SweepConfig(sigma_w_grid=[1.0], x0_grid=[0.25, x0_star, 12.0], n=256, m=128, l=4,
                          q=0.02, sigma_x=10.0, trials=20, mode=SweepMode.FULL, seed=5)
        heatmap = run_full_sweep(cfg)
        estimate = heatmap.estimate("bht")[0]
        assert estimate[0] >= 0.8
        assert estimate[2] <= 0.2
        assert estimate[0] >= estimate[1] >= estimate[2]
        assert np.all(heatmap.errored == 0)


def test_dominance_uses_pooled_standard_error():
    cfg = full_config(sigma_w_grid=[1.0], x0_grid=[1.0, 2.0, 3.0])
    trials = np.full((1, 3), 100)
    heatmap = FailureHeatmap(
        config=cfg,
        failures={"bht": np.array([[30, 15, 19]]), "csbp": np.array([[10, 10, 10]])},
        trials=trials,
        nonconverged=np.zeros((1, 3), dtype=np.int64),
        errored=np.zeros((1, 3), dtype=np.int64),
        support_error_rate={"bht": np.zeros((1, 3)), "csbp": np.zeros((1, 3))},
        cell_seeds=[["", "", ""]]
    )
    # the third gap (0.09) beats twice the csbp error (0.06) but not the pooled bound (0.099)
    assert dominance_violations(heatmap) == [(1.0, 1.0)]
