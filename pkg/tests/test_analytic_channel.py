import math

import numpy as np
import pytest

from core.analytic_channel import (ChannelLimit, ChannelPoint, PosteriorParams, c2_constant,
                                   limit_params, oracle_distance, oracle_posterior, posterior_density,
                                   posterior_params, resolve_c2_sign)
from core.density_kit import GridSpec, l1_distance, make_gaussian
from models.signal_model import SpikeSlabPrior
from utils.errors import ConfigError, GridError


def point(prior, sigma_w, x0=2.5, l=4):
    return ChannelPoint(x0, sigma_w, l, prior)


class TestPosteriorParams:
    def test_zero_element(self, posterior_prior):
        params = posterior_params(point(posterior_prior, 1.0, x0=0.0))
        assert params.mu == 0.0
        assert params.rho < posterior_prior.q
        assert params.c1 > params.c2

    def test_posterior_plot_parameters(self, posterior_prior):
        params = posterior_params(point(posterior_prior, 2.0))
        assert params.mu == pytest.approx(250 / 104)
        assert params.theta2 == pytest.approx(100 / 104)

    def test_huge_noise_returns_prior(self, posterior_prior):
        params = posterior_params(point(posterior_prior, 1e6))
        assert params.rho == pytest.approx(0.05, abs=1e-3)
        assert params.mu == pytest.approx(0.0, abs=1e-3)
        assert params.theta == pytest.approx(5.0, abs=1e-3)

    def test_noiseless_needs_limit(self, posterior_prior):
        with pytest.raises(ConfigError, match="limit_params"):
            posterior_params(point(posterior_prior, 0.0))

    def test_log_odds_survives_extremes(self, posterior_prior):
        params = posterior_params(point(posterior_prior, 0.1, x0=15.0))
        assert params.rho == 1.0
        assert params.log_odds > 1e4
        assert params.spike_mass == 0.0

    def test_c2_exponent_is_negative(self, posterior_prior):
        p = point(posterior_prior, 1.0, x0=3.0)
        assert c2_constant(p) < c2_constant(p, sign=1)

    def test_invalid_point(self, posterior_prior):
        with pytest.raises(ConfigError):
            ChannelPoint(1.0, 1.0, 0, posterior_prior)


class TestLimits:
    def test_noiseless_support(self, posterior_prior):
        params = limit_params(point(posterior_prior, 0.0), ChannelLimit.NOISELESS)
        assert (params.rho, params.mu, params.theta2) == (1.0, 2.5, 0.0)

    def test_noiseless_zero(self, posterior_prior):
        params = limit_params(point(posterior_prior, 0.0, x0=0.0), ChannelLimit.NOISELESS)
        assert params.rho == 0.0
        assert params.spike_mass == 1.0

    def test_infinite_noise(self, posterior_prior):
        params = limit_params(point(posterior_prior, 1.0), ChannelLimit.INFINITE_NOISE)
        assert (params.rho, params.mu, params.theta2) == (0.05, 0.0, 25.0)

    @pytest.mark.parametrize("sigma_w,which", [(1e-6, ChannelLimit.NOISELESS),
                                               (1e6, ChannelLimit.INFINITE_NOISE)])
    def test_closed_form_converges_to_limits(self, posterior_prior, sigma_w, which):
        got = posterior_params(point(posterior_prior, sigma_w))
        want = limit_params(point(posterior_prior, sigma_w), which)
        for a, b in ((got.rho, want.rho), (got.mu, want.mu), (got.theta, want.theta)):
            assert abs(a - b) <= 1e-3 * max(abs(b), 1.0)


class TestPosteriorDensity:
    def test_pure_slab(self, grid):
        params = PosteriorParams(1.0, 1.0, 1.0, math.nan, math.nan, math.inf)
        density = posterior_density(params, grid)
        assert density.spike_mass == 0.0
        assert l1_distance(density, make_gaussian(grid, 1.0, 1.0)) < 1e-12

    def test_pure_spike(self, grid):
        params = PosteriorParams(0.0, 0.0, 1.0, math.nan, math.nan, -math.inf)
        assert posterior_density(params, grid).spike_mass == 1.0

    def test_mass_spreads_with_noise(self, posterior_prior, grid):
        densities = [posterior_density(posterior_params(point(posterior_prior, s)), grid)
                     for s in (0.5, 1.0, 2.0, 4.0)]
        spikes = [d.spike_mass for d in densities]
        peaks = [d.slab_values.max() for d in densities]
        assert np.all(np.diff(spikes) > 0)
        assert np.all(np.diff(peaks) < 0)

    def test_too_narrow_for_grid(self, posterior_prior, grid):
        with pytest.raises(GridError, match="raise n_points"):
            posterior_density(posterior_params(point(posterior_prior, 0.05)), grid)


class TestOracle:
    @pytest.mark.parametrize("sigma_w", [0.5, 1.0, 2.0, 4.0])
    def test_closed_form_matches_oracle(self, posterior_prior, fine_grid, sigma_w):
        assert oracle_distance(point(posterior_prior, sigma_w), fine_grid) <= 1e-6

    def test_zero_element_spike_exceeds_prior(self, posterior_prior, fine_grid):
        density = oracle_posterior(point(posterior_prior, 1.0, x0=0.0), fine_grid)
        assert density.spike_mass > 1 - posterior_prior.q

    def test_flat_prior_single_message(self):
        prior = SpikeSlabPrior(0.999999, 20.0)
        grid = GridSpec.for_prior(20.0, 8192)
        density = oracle_posterior(ChannelPoint(3.0, 1.0, 1, prior), grid)
        assert l1_distance(density, make_gaussian(grid, 3.0, 1.0)) < 2e-2

    def test_sign_resolution(self, posterior_prior, fine_grid):
        points = [point(posterior_prior, s, x0) for s in (0.5, 1.0, 2.0, 4.0) for x0 in (2.5, 5.0, 8.0)]
        assert resolve_c2_sign(points, fine_grid) == -1
        assert max(oracle_distance(p, fine_grid, c2_sign=1) for p in points) > 1e-3
