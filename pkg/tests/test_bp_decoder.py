import csv

import numpy as np
import pytest
from scipy.special import comb
from scipy.stats import norm

from core.analytic_channel import ChannelPoint, oracle_posterior, posterior_params
from core.bp_decoder import (BpConfig, brute_force_posterior, check_update, run_bp, variable_update,
                             write_iteration_log)
from core.density_kit import GridSpec, HybridDensity, l1_distance, make_gaussian, moments
from models.measurement import SparseBinaryMatrix, build_matrix, build_tree_matrix, girth_at_most, measure
from models.signal_model import (SignalInstance, SpikeSlabPrior, prior_density, sample_probe_instance,
                                 sample_signal, sample_support)
from utils.errors import ConfigError
from utils.helpers import derive_rng


def spike(grid):
    return HybridDensity(grid, np.zeros(grid.n_points), 1.0)


class TestCheckUpdate:
    def test_no_neighbors_is_noise_density(self, grid):
        y_j = float(grid.nodes[grid.center_index + 20])
        message = check_update(y_j, [], 1.0, grid)
        assert l1_distance(message, make_gaussian(grid, y_j, 1.0)) < 1e-6

    def test_spike_neighbor_changes_nothing(self, grid):
        y_j = float(grid.nodes[grid.center_index - 13])
        alone = check_update(y_j, [], 1.5, grid)
        with_spike = check_update(y_j, [spike(grid)], 1.5, grid)
        assert l1_distance(alone, with_spike) < 1e-9

    def test_mean_identity(self, grid):
        neighbors = [make_gaussian(grid, 1.0, 1.0), make_gaussian(grid, -0.5, 2.0),
                     HybridDensity(grid, 0.2 * make_gaussian(grid, 3.0, 1.0).slab_values, 0.8)]
        y_j = 3.0
        mean, _, _ = moments(check_update(y_j, neighbors, 0.7, grid))
        total = 1.0 - 0.5 + 0.2 * 3.0
        assert mean + total == pytest.approx(y_j, abs=grid.spacing)

    def test_rejects_foreign_grid(self, grid):
        other = GridSpec.for_prior(10.0)
        with pytest.raises(ConfigError):
            check_update(0.0, [make_gaussian(other, 0.0, 1.0)], 1.0, grid)

    def test_heavy_tailed_neighbors_widen_buffer(self):
        grid = GridSpec.for_prior(10.0)
        bump = make_gaussian(grid, 9.5, 1.0)
        neighbor = HybridDensity(grid, 0.5 * bump.slab_values, 0.5)
        y_j, sigma_w, count = 10.0, 1.0, 15
        message = check_update(y_j, [neighbor] * count, sigma_w, grid)

        k = np.arange(count + 1)
        weights = comb(count, k) * 0.5 ** count
        reference = sum(w * norm.pdf(y_j - grid.nodes, 9.5 * i, np.sqrt(i + sigma_w ** 2))
                        for w, i in zip(weights, k))
        expected = HybridDensity(grid, reference).normalize()
        assert l1_distance(message, expected) < 1e-3

    def test_matches_run_bp_row_message(self, posterior_prior, grid):
        matrix = SparseBinaryMatrix(1, 3, 1, ((0,), (0,), (0,)))
        state = run_bp(matrix, np.array([0.5]), posterior_prior, 0.8, BpConfig(max_iters=1, grid=grid)).state
        others = [HybridDensity(grid, state.v_slabs[e], float(state.v_spikes[e])) for e in (1, 2)]
        message = check_update(0.5, others, 0.8, grid)
        np.testing.assert_allclose(state.u_slabs[0], message.slab_values, atol=1e-8)


class TestVariableUpdate:
    def test_no_messages_returns_prior(self, posterior_prior, grid):
        prior = prior_density(posterior_prior, grid)
        result = variable_update(prior, [])
        assert l1_distance(result, prior) < 1e-12

    def test_gaussian_messages_shrink_slab_mean(self, posterior_prior, grid):
        x0, sigma_w, k = 2.5, 1.0, 3
        prior = prior_density(posterior_prior, grid)
        result = variable_update(prior, [make_gaussian(grid, x0, sigma_w)] * k)
        slab_mean = float(result.slab_values @ (grid.weights * grid.nodes)) / result.slab_mass
        expected = k * x0 * 25.0 / (k * 25.0 + sigma_w ** 2)
        assert slab_mean == pytest.approx(expected, abs=1e-3)

    def test_zero_damping_ignores_previous(self, posterior_prior, grid):
        prior = prior_density(posterior_prior, grid)
        messages = [make_gaussian(grid, 1.0, 1.0)]
        plain = variable_update(prior, messages)
        blended = variable_update(prior, messages, previous=prior, damping=0.0)
        np.testing.assert_array_equal(plain.slab_values, blended.slab_values)

    def test_damping_with_equal_messages_is_fixed_point(self, posterior_prior, grid):
        prior = prior_density(posterior_prior, grid)
        messages = [make_gaussian(grid, 1.0, 1.0)]
        plain = variable_update(prior, messages)
        blended = variable_update(prior, messages, previous=plain, damping=0.5)
        assert l1_distance(plain, blended) < 1e-12


def tree_instance(seed, n, l, prior, sigma_w):
    rng = derive_rng(seed)
    matrix = build_tree_matrix(n, l, rng)
    signal = sample_signal(prior, sample_support(prior, n, rng), rng)
    return matrix, measure(matrix, signal, sigma_w, rng)


class TestRunBp:
    def test_tree_matches_brute_force(self):
        prior = SpikeSlabPrior(0.2, 2.0)
        grid = GridSpec.for_prior(2.0)
        matrix, y = tree_instance(5, 6, 2, prior, 1.0)
        result = run_bp(matrix, y, prior, 1.0, BpConfig(max_iters=30, tol=1e-8, grid=grid))
        exact = brute_force_posterior(matrix, y, prior, 1.0, grid)
        assert result.diagnostics.converged
        for belief, oracle in zip(result.beliefs, exact):
            assert l1_distance(belief, oracle) <= 2e-2

    def test_zero_signal_keeps_spikes(self, posterior_prior, rng):
        matrix = build_matrix(32, 16, 3, rng)
        zero = SignalInstance(values=np.zeros(32), support=np.zeros(32, dtype=np.int8))
        y = measure(matrix, zero, 0.25, rng)
        result = run_bp(matrix, y, posterior_prior, 0.25)
        assert all(b.spike_mass > 0.5 for b in result.beliefs)

    @pytest.mark.slow
    def test_near_noiseless_beliefs_concentrate(self, rng):
        prior = SpikeSlabPrior(0.1, 5.0)
        grid = GridSpec.for_prior(5.0)
        matrix = build_matrix(32, 16, 3, rng)
        magnitude = float(grid.nodes[grid.center_index + 64])
        signal = sample_signal(prior.with_two_point(magnitude), sample_support(prior, 32, rng), rng)
        y = measure(matrix, signal, 1e-6, rng)
        result = run_bp(matrix, y, prior, 1e-6, BpConfig(max_iters=30, grid=grid))
        means = np.array([moments(b)[0] for b in result.beliefs])
        np.testing.assert_allclose(means, signal.values, atol=1e-2)

    def test_deterministic(self, posterior_prior):
        beliefs = []
        for _ in range(2):
            rng = derive_rng(99)
            matrix = build_matrix(32, 16, 3, rng)
            signal = sample_signal(posterior_prior, sample_support(posterior_prior, 32, rng), rng)
            result = run_bp(matrix, measure(matrix, signal, 0.5, rng), posterior_prior, 0.5,
                            BpConfig(max_iters=5))
            beliefs.append(np.array([b.slab_values for b in result.beliefs]))
        np.testing.assert_array_equal(beliefs[0], beliefs[1])

    def test_iteration_cap_is_reported(self, posterior_prior, rng):
        matrix = build_matrix(32, 16, 3, rng)
        signal = sample_signal(posterior_prior, sample_support(posterior_prior, 32, rng), rng)
        result = run_bp(matrix, measure(matrix, signal, 0.5, rng), posterior_prior, 0.5,
                        BpConfig(max_iters=1, tol=1e-12))
        assert not result.diagnostics.converged
        assert result.diagnostics.iterations == 1
        assert len(result.beliefs) == 32

    @pytest.mark.slow
    def test_large_girth_six_matches_channel(self, sparse_prior):
        n, m, l, sigma_w = 256, 128, 4, 0.5
        rng = derive_rng(21)
        matrix = build_matrix(n, m, l, rng)
        assert not girth_at_most(matrix, 4)
        signal = sample_probe_instance(sparse_prior, n, 8.0, rng)
        result = run_bp(matrix, measure(matrix, signal, sigma_w, rng), sparse_prior, sigma_w,
                        BpConfig(max_iters=30))

        belief = result.beliefs[signal.probe_index]
        params = posterior_params(ChannelPoint(signal.probe_value, sigma_w, l, sparse_prior))
        assert belief.spike_mass == pytest.approx(params.spike_mass, abs=0.05)
        slab_mean = float(belief.slab_values @ (belief.grid.weights * belief.grid.nodes)) / belief.slab_mass
        assert slab_mean == pytest.approx(params.mu, rel=0.1)

        off_support = [b.spike_mass for b, s in zip(result.beliefs, signal.support) if s == 0]
        zero_params = posterior_params(ChannelPoint(0.0, sigma_w, l, sparse_prior))
        assert np.mean(off_support) >= zero_params.spike_mass - 0.05


class TestBruteForce:
    def test_single_observation_matches_channel_oracle(self, posterior_prior, grid):
        matrix = SparseBinaryMatrix(1, 1, 1, ((0,),))
        marginal = brute_force_posterior(matrix, np.array([2.0]), posterior_prior, 1.0, grid)[0]
        oracle = oracle_posterior(ChannelPoint(2.0, 1.0, 1, posterior_prior), grid)
        assert l1_distance(marginal, oracle) < 1e-6

    def test_vanishing_q_gives_spikes(self, grid):
        prior = SpikeSlabPrior(1e-9, 5.0)
        matrix = SparseBinaryMatrix(2, 3, 1, ((0,), (1,), (0,)))
        marginals = brute_force_posterior(matrix, np.array([4.0, -3.0]), prior, 1.0, grid)
        assert all(m.spike_mass > 0.999 for m in marginals)

    def test_huge_noise_gives_prior(self, posterior_prior, grid):
        matrix = SparseBinaryMatrix(2, 3, 1, ((0,), (1,), (0,)))
        marginals = brute_force_posterior(matrix, np.array([4.0, -3.0]), posterior_prior, 1e4, grid)
        prior = prior_density(posterior_prior, grid)
        assert all(l1_distance(m, prior) < 1e-2 for m in marginals)

    def test_size_limit(self, posterior_prior, grid, rng):
        matrix = build_matrix(13, 8, 1, rng)
        with pytest.raises(ConfigError):
            brute_force_posterior(matrix, np.zeros(8), posterior_prior, 1.0, grid)


def test_bp_config_validation():
    with pytest.raises(ConfigError):
        BpConfig(damping=1.0)
    with pytest.raises(ConfigError):
        BpConfig(max_iters=0)


def test_iteration_log(tmp_path, posterior_prior, rng):
    matrix = build_matrix(32, 16, 3, rng)
    signal = sample_signal(posterior_prior, sample_support(posterior_prior, 32, rng), rng)
    result = run_bp(matrix, measure(matrix, signal, 1.0, rng), posterior_prior, 1.0, BpConfig(max_iters=4))
    path = write_iteration_log(result.diagnostics, tmp_path / "iterations.csv")
    with path.open() as handle:
        rows = list(csv.DictReader(handle))
    assert [int(r["iteration"]) for r in rows] == list(range(1, result.diagnostics.iterations + 1))
    assert float(rows[-1]["max_delta"]) == result.diagnostics.final_delta
