import csv
import math

import numpy as np
import pytest

import oracles
from collective_fpf import _backend
from collective_fpf.aggregate import AggregateStats, aggregate_increment_path
from collective_fpf.beliefs import GaussianBelief, SimplexBelief
from collective_fpf.collective_kalman import ckf_step
from collective_fpf.errors import (ConfigError, FilterDivergenceError,
                                   StepSizeError)
from collective_fpf.fpf import (EuclideanEnsemble, FiniteEnsemble,
                                collective_wonham_step, constant_gain,
                                constant_gain_fpf_step, empirical_moments,
                                finite_fpf_step, finite_gain, lg_fpf_step,
                                lg_gain, sample_finite_ensemble,
                                sample_gaussian_ensemble, save_snapshots)
from collective_fpf.models import FiniteStateModel, simulate_lg_agents


def two_state_model(h=(0.0, 1.0), rates=None, sw=1.0, prior=(0.5, 0.5)):
    rates = np.zeros((2, 2)) if rates is None else np.asarray(rates, dtype=float)
    return FiniteStateModel(jump_rates=rates, obs_values=np.array(h),
                            obs_noise_std=sw,
                            prior=SimplexBelief(np.array(prior)))


class TestEmpiricalMoments:
    def test_two_particle_hand_example(self):
        ens = EuclideanEnsemble(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        mean, cov = empirical_moments(ens)
        np.testing.assert_array_equal(mean, [0.0, 0.0])
        np.testing.assert_array_equal(cov, [[2.0, 0.0], [0.0, 0.0]])

    def test_identical_particles_zero_covariance(self):
        ens = EuclideanEnsemble(np.tile([0.3, -0.7], (5, 1)))
        _, cov = empirical_moments(ens)
        np.testing.assert_array_equal(cov, np.zeros((2, 2)))

    def test_large_cloud_law_of_large_numbers(self):
        rng = np.random.default_rng(5)
        ens = EuclideanEnsemble(rng.standard_normal((1_000_000, 2)))
        _, cov = empirical_moments(ens)
        assert np.max(np.abs(cov - np.eye(2))) < 0.01

    def test_validation(self):
        with pytest.raises(ConfigError):
            EuclideanEnsemble(np.array([[1.0, 2.0]]))
        with pytest.raises(ConfigError):
            EuclideanEnsemble(np.array([[1.0], [np.inf]]))


class TestGains:
    def test_constant_gain_matches_exact_lg_gain(self, lg_model, rng):
        ens = sample_gaussian_ensemble(lg_model, 500, rng)
        stats = AggregateStats(0.01, 0.2, 0.1, dt=0.01)
        exact = lg_gain(ens, lg_model, stats)
        approx = constant_gain(ens, ens.states @ lg_model.obs_row(),
                               lg_model.obs_noise_std, stats)
        np.testing.assert_allclose(approx.gain, exact.gain, atol=1e-12)
        assert exact.mode == "exact-lg" and approx.mode == "constant-gain"
        assert exact.alpha == approx.alpha
        assert exact.alpha == pytest.approx(0.5 * (1 - 0.2 / 0.7), abs=1e-14)

    def test_constant_observation_function_kills_gains(self, lg_model, rng):
        ens = sample_gaussian_ensemble(lg_model, 100, rng)
        stats = AggregateStats(0.01, 0.2, 0.1, dt=0.01)
        state = constant_gain(ens, np.full(100, 3.3), lg_model.obs_noise_std,
                              stats)
        np.testing.assert_array_equal(state.gain, np.zeros(2))
        np.testing.assert_array_equal(state.correction, np.zeros(2))

    def test_correction_vanishes_for_gaussian_linear_case(self, lg_model):
        # third central moments of a Gaussian cloud vanish, so the
        # mismatch correction is O(1/sqrt(N)) small
        rng = np.random.default_rng(2024)
        ens = sample_gaussian_ensemble(lg_model, 10_000, rng)
        stats = AggregateStats(0.0, 0.7, 0.7, dt=0.01)
        state = constant_gain(ens, ens.states @ lg_model.obs_row(),
                              lg_model.obs_noise_std, stats)
        assert np.linalg.norm(state.correction) < 0.05


class TestLgFpfStep:
    def test_one_step_moments_match_collective_filter(self, lg_model):
        # the collective Kalman step, started from the cloud's own moments,
        # predicts the post-step particle moments up to Monte Carlo error
        rng = np.random.default_rng(31)
        num = 10_000
        dt = 0.01
        ens = sample_gaussian_ensemble(lg_model, num, rng)
        mean0, cov0 = empirical_moments(ens)
        stats = AggregateStats(0.05, 0.3, 0.25, dt=dt)
        reference = ckf_step(GaussianBelief(mean0, cov0), lg_model, stats)
        stepped = lg_fpf_step(ens, lg_model, stats, rng)
        mean1, cov1 = empirical_moments(stepped)

        q_dt = lg_model.Q * dt
        se_mean = np.sqrt(np.diag(q_dt) / num)
        np.testing.assert_array_less(np.abs(mean1 - reference.mean),
                                     3 * se_mean + 20 * dt * dt)
        se_cov = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                se_cov[i, j] = math.sqrt(
                    (cov0[i, i] * q_dt[j, j] + cov0[j, j] * q_dt[i, i]
                     + q_dt[i, i] * q_dt[j, j] + q_dt[i, j] ** 2) / num)
        np.testing.assert_array_less(np.abs(cov1 - reference.cov),
                                     3 * se_cov + 20 * dt * dt)

    def test_matched_variance_and_innovation_is_pure_propagation(self, lg_model):
        rng_a = np.random.default_rng(77)
        rng_b = np.random.default_rng(77)
        ens = sample_gaussian_ensemble(lg_model, 200, rng_a)
        rng_b.standard_normal((200, 2))  # consume the sampling draw
        sw2 = lg_model.obs_noise_std ** 2
        h_mean = float(lg_model.obs_row() @ ens.states.mean(axis=0))
        dt = 0.01
        stats = AggregateStats(h_mean * dt, sw2, 0.0, dt=dt)
        stepped = lg_fpf_step(ens, lg_model, stats, rng_a)
        noise = rng_b.standard_normal((200, 2))
        expected = (ens.states + (ens.states @ lg_model.A.T) * dt
                    + math.sqrt(dt) * noise @ lg_model.process_noise_sqrt.T)
        np.testing.assert_allclose(stepped.states, expected, atol=1e-14)

    def test_single_path_aggregate_tracks_kalman_bucy(self, lg_model):
        # V = 0 stream from one agent: the particle mean follows the
        # classical filter within Monte Carlo error
        rng = np.random.default_rng(5150)
        ens = simulate_lg_agents(lg_model, 1, 0.01, 1.0, seed=99)
        mean_inc, inc_var, _ = aggregate_increment_path(ens.obs_increments, 0.01)
        assert np.all(inc_var == 0.0)
        belief = GaussianBelief(lg_model.prior_mean, lg_model.prior_cov)
        particles = sample_gaussian_ensemble(lg_model, 10_000, rng)
        for t in range(mean_inc.shape[0]):
            stats = AggregateStats(mean_inc[t], 0.0, mean_inc[t] ** 2 / 0.01,
                                   dt=0.01)
            belief = ckf_step(belief, lg_model, stats)
            particles = lg_fpf_step(particles, lg_model, stats, rng)
        mean, cov = empirical_moments(particles)
        se = np.sqrt(np.diag(cov) / particles.num_particles)
        assert np.all(np.abs(mean - belief.mean) < 4 * se)

    def test_degenerate_ensemble_warns(self, lg_model, rng):
        ens = EuclideanEnsemble(np.tile([1.0, 0.0], (10, 1)))
        with pytest.warns(RuntimeWarning, match="zero spread"):
            lg_fpf_step(ens, lg_model, AggregateStats(0.0, 0.0, 0.0, 0.01), rng)


class TestConstantGainStep:
    def test_matches_exact_lg_step_when_mismatch_vanishes(self, lg_model):
        rng_a = np.random.default_rng(8)
        rng_b = np.random.default_rng(8)
        ens = sample_gaussian_ensemble(lg_model, 300, rng_a)
        rng_b.standard_normal((300, 2))
        sw2 = lg_model.obs_noise_std ** 2
        stats = AggregateStats(0.02, 0.3, sw2 - 0.3, dt=0.01)
        exact = lg_fpf_step(ens, lg_model, stats, rng_a)
        generic = constant_gain_fpf_step(
            ens, drift=lambda x: x @ lg_model.A.T,
            diffusion=lg_model.process_noise_sqrt,
            obs_fn=lambda x: x @ lg_model.obs_row(),
            sigma_w=lg_model.obs_noise_std, stats=stats, rng=rng_b)
        np.testing.assert_allclose(generic.states, exact.states, atol=1e-12)

    def test_callable_diffusion(self, lg_model, rng):
        ens = sample_gaussian_ensemble(lg_model, 50, rng)
        stats = AggregateStats(0.01, 0.2, 0.1, dt=0.01)
        out = constant_gain_fpf_step(
            ens, drift=lambda x: np.zeros_like(x),
            diffusion=lambda x: np.tile(np.eye(2)[None], (x.shape[0], 1, 1)),
            obs_fn=lambda x: x[:, 0] ** 2,
            sigma_w=1.0, stats=stats, rng=rng)
        assert out.states.shape == (50, 2)
        assert np.all(np.isfinite(out.states))


class TestCollectiveWonhamStep:
    def test_constant_observation_gives_forward_equation(self):
        model = two_state_model(h=(1.5, 1.5), rates=[[0.0, 2.0], [1.0, 0.0]])
        belief = SimplexBelief(np.array([0.9, 0.1]))
        stats = AggregateStats(0.4, 0.3, 0.2, dt=0.01)
        out = collective_wonham_step(belief, model, stats)
        raw = belief.probs + (model.rate_adjoint() @ belief.probs) * 0.01
        assert raw.sum() == pytest.approx(1.0, abs=1e-12)  # generator conserves
        np.testing.assert_allclose(out.probs, raw / raw.sum(), atol=1e-14)

    def test_matched_stats_give_forward_equation(self):
        model = two_state_model(h=(0.0, 1.0), rates=[[0.0, 2.0], [1.0, 0.0]])
        belief = SimplexBelief(np.array([0.3, 0.7]))
        sw2 = model.obs_noise_std ** 2
        h_mean = float(belief.probs @ model.obs_values)
        stats = AggregateStats(h_mean * 0.01, sw2, 0.0, dt=0.01)
        out = collective_wonham_step(belief, model, stats)
        raw = belief.probs + (model.rate_adjoint() @ belief.probs) * 0.01
        np.testing.assert_allclose(out.probs, raw / raw.sum(), atol=1e-14)

    def test_single_path_reduces_to_wonham_at_order_dt(self):
        # V = 0 and quad_var = dz^2/dt: the extra collective term is O(dt),
        # so the gap to the textbook filter shrinks linearly with dt
        model = two_state_model(h=(0.0, 1.0), rates=[[0.0, 1.0], [0.5, 0.0]],
                                sw=0.8)
        belief = SimplexBelief(np.array([0.4, 0.6]))
        xi = 1.5  # fixed unit noise draw
        gaps = {}
        for dt in (1e-2, 1e-3, 1e-4):
            h_true = 1.0
            dz = h_true * dt + model.obs_noise_std * math.sqrt(dt) * xi
            ours = collective_wonham_step(
                belief, model, AggregateStats.single(dz, dt))
            ref = oracles.wonham_euler_step(belief.probs, model.rate_adjoint(),
                                            model.obs_values,
                                            model.obs_noise_std, dz, dt)
            gaps[dt] = np.max(np.abs(ours.probs - ref))
        assert gaps[1e-3] < gaps[1e-2] / 5
        assert gaps[1e-4] < gaps[1e-3] / 5

    def test_non_finite_update_raises(self):
        model = two_state_model(h=(0.0, 1.0))
        belief = SimplexBelief(np.array([0.5, 0.5]))
        stats = AggregateStats(np.inf, 0.0, 0.0, dt=0.01)
        with pytest.raises(FilterDivergenceError):
            collective_wonham_step(belief, model, stats)


class TestFiniteGainSignRule:
    def test_anchor_branches(self):
        model = two_state_model(h=(0.0, 1.0))
        pi = np.array([0.5, 0.5])
        pos = AggregateStats(0.5, 0.0, 0.0, dt=0.01)   # positive innovation
        neg = AggregateStats(-0.5, 0.0, 0.0, dt=0.01)
        assert finite_gain(pi, model, pos).anchor == 0.0
        assert finite_gain(pi, model, neg).anchor == 1.0
        # zero innovation takes the nonnegative branch (minimum)
        tie = AggregateStats(pi @ model.obs_values * 0.01, 0.0, 0.0, dt=0.01)
        assert finite_gain(pi, model, tie).anchor == 0.0

    def test_modulated_increments_nonnegative(self, rng):
        model = two_state_model(h=(-1.0, 2.0), sw=0.9)
        for _ in range(200):
            pi = oracles.random_simplex(rng, 2)
            stats = AggregateStats(float(rng.standard_normal() * 0.1),
                                   float(rng.uniform(0, 2.0)),
                                   float(rng.uniform(0, 2.0)), dt=0.01)
            gains = finite_gain(pi, model, stats)
            innov = stats.mean_increment - (pi @ model.obs_values) * stats.dt
            mismatch = ((stats.increment_var + stats.quad_var)
                        / model.obs_noise_std ** 2 - 1.0) * stats.dt
            assert np.all(gains.gain * innov >= 0.0)
            assert np.all(gains.mismatch_gain * mismatch >= 0.0)


class TestFiniteFpfStep:
    def test_zero_innovation_leaves_only_base_jumps(self):
        rates = np.array([[0.0, 3.0], [2.0, 0.0]])
        model = two_state_model(h=(0.0, 1.0), rates=rates)
        ens = FiniteEnsemble(np.array([0] * 500 + [1] * 500), 2)
        pi = ens.histogram()
        sw2 = model.obs_noise_std ** 2
        dt = 0.01
        stats = AggregateStats((pi @ model.obs_values) * dt, sw2 / 2, sw2 / 2,
                               dt=dt)
        stepped = finite_fpf_step(ens, model, stats, np.random.default_rng(4))
        # replicate the base-rate sampling with the same uniforms
        uniforms = np.random.default_rng(4).random(1000)
        expected = ens.states.copy()
        jump_prob = rates.T * dt
        for i, (state, u) in enumerate(zip(ens.states, uniforms)):
            target = 1 - state
            if u < jump_prob[state, target]:
                expected[i] = target
        np.testing.assert_array_equal(stepped.states, expected)

    def test_positive_innovation_pushes_mass_to_high_state(self):
        # h = (0, 1): the low state's inflow gain is exactly zero, so mass
        # only moves toward the high-observation state
        model = two_state_model(h=(0.0, 1.0))
        ens = FiniteEnsemble(np.array([0] * 800 + [1] * 200), 2)
        stats = AggregateStats(0.5, 0.0, 0.0, dt=0.01)
        gains = finite_gain(ens.histogram(), model, stats)
        assert gains.gain[0] == 0.0 and gains.gain[1] > 0.0
        stepped = finite_fpf_step(ens, model, stats, np.random.default_rng(9))
        before = ens.histogram()
        after = stepped.histogram()
        assert after[1] > before[1]
        assert np.all(stepped.states[800:] == 1)

    def test_particle_count_conserved_and_valid(self, finite_model, rng):
        ens = sample_finite_ensemble(finite_model, 300, rng)
        stats = AggregateStats(0.01, 0.5, 0.3, dt=0.01)
        stepped = finite_fpf_step(ens, finite_model, stats, rng)
        assert stepped.num_particles == 300
        assert stepped.states.min() >= 0
        assert stepped.states.max() < finite_model.num_states

    def test_oversized_step_rejected(self):
        model = two_state_model(h=(0.0, 1.0), rates=[[0.0, 30.0], [30.0, 0.0]])
        ens = FiniteEnsemble(np.array([0, 1] * 50), 2)
        stats = AggregateStats(0.0, 0.0, 0.0, dt=0.04)
        with pytest.raises(StepSizeError):
            finite_fpf_step(ens, model, stats, np.random.default_rng(0))

    def test_tracks_exact_filter(self, finite_model):
        # one seed, short horizon: histogram stays near the exact filter
        rng = np.random.default_rng(12)
        kern = _backend.active()
        from collective_fpf.models import simulate_ctmc_agents
        ens = simulate_ctmc_agents(finite_model, 30, 0.01, 1.0, seed=3)
        mean_inc, inc_var, quad_var = aggregate_increment_path(
            ens.obs_increments, 0.01)
        probs = kern.wonham_chain(finite_model.rate_adjoint(),
                                  finite_model.obs_values,
                                  finite_model.obs_noise_std, 0.01,
                                  finite_model.prior.probs,
                                  mean_inc, inc_var, quad_var)
        particles = sample_finite_ensemble(finite_model, 2000, rng)
        for t in range(mean_inc.shape[0]):
            stats = AggregateStats(mean_inc[t], inc_var[t], quad_var[t], dt=0.01)
            particles = finite_fpf_step(particles, finite_model, stats, rng)
        tv = 0.5 * np.abs(particles.histogram() - probs[-1]).sum()
        assert tv < 0.1


class TestMomentExactness:
    def test_errors_shrink_with_particle_count(self, lg_model):
        # trajectory-averaged moment errors against the collective filter
        # drop from N=30 to N=1000 on at least 9 of 10 seeds
        kern = _backend.active()
        dt, steps = 0.01, 500
        wins_mean = wins_cov = 0
        for seed in range(10):
            ens = simulate_lg_agents(lg_model, 30, dt, 5.0, seed=1000 + seed)
            mean_inc, inc_var, _ = aggregate_increment_path(ens.obs_increments, dt)
            ckf_means, ckf_covs = kern.ckf_chain(
                lg_model.A, lg_model.obs_row(), lg_model.Q,
                lg_model.obs_noise_std, dt, lg_model.prior_mean,
                lg_model.prior_cov, mean_inc, inc_var)
            errs = {}
            for num in (30, 1000):
                rng = np.random.default_rng(seed * 7 + num)
                parts = (lg_model.prior_mean
                         + rng.standard_normal((num, 2))
                         @ lg_model.prior_cov_sqrt.T)
                noise = rng.standard_normal((steps, num, 2))
                _, means, covs = kern.lg_fpf_chain(
                    lg_model.A, lg_model.process_noise_sqrt, lg_model.obs_row(),
                    lg_model.obs_noise_std, dt, parts, noise, mean_inc, inc_var)
                errs[num] = (
                    np.linalg.norm(means - ckf_means, axis=1).mean(),
                    np.linalg.norm((covs - ckf_covs).reshape(steps + 1, -1),
                                   axis=1).mean())
            wins_mean += errs[1000][0] < errs[30][0]
            wins_cov += errs[1000][1] < errs[30][1]
        assert wins_mean >= 9
        assert wins_cov >= 9


class TestSnapshots:
    def test_save_euclidean_and_finite(self, tmp_path, lg_model, finite_model,
                                       rng):
        euc = [sample_gaussian_ensemble(lg_model, 4, rng) for _ in range(2)]
        path = tmp_path / "cloud.csv"
        save_snapshots(path, euc)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "particle_id", "x0", "x1"]
        assert len(rows) == 1 + 2 * 4
        fin = [sample_finite_ensemble(finite_model, 3, rng)]
        path2 = tmp_path / "states.csv"
        save_snapshots(path2, fin)
        with open(path2) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "particle_id", "x0"]
        assert len(rows) == 1 + 3
