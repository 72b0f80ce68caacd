import csv

import numpy as np
import pytest
from scipy.linalg import expm

from collective_fpf.beliefs import SimplexBelief
from collective_fpf.errors import ConfigError, StepSizeError
from collective_fpf.models import (AgentEnsemble, FiniteStateModel, HmmModel,
                                   LinearGaussianModel, agent_seed_sequences,
                                   psd_sqrt, simulate_ctmc_agents,
                                   simulate_hmm_agents, simulate_lg_agents)


def _lg(A, H, Q, sw, m0, S0):
    return LinearGaussianModel(A=np.asarray(A, dtype=float), H=H,
                               Q=np.asarray(Q, dtype=float), obs_noise_std=sw,
                               prior_mean=m0, prior_cov=np.asarray(S0, dtype=float))


class TestModelValidation:
    def test_non_psd_rejected(self):
        with pytest.raises(ConfigError):
            _lg(np.zeros((2, 2)), [1.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 1.0,
                np.zeros(2), np.eye(2))
        with pytest.raises(ConfigError):
            _lg(np.zeros((2, 2)), [1.0, 0.0], np.eye(2), 1.0,
                np.zeros(2), -np.eye(2))

    def test_noise_and_shapes(self):
        with pytest.raises(ConfigError):
            _lg(np.zeros((2, 2)), [1.0, 0.0], np.eye(2), 0.0, np.zeros(2), np.eye(2))
        with pytest.raises(ConfigError):
            _lg(np.zeros((2, 2)), [1.0, 0.0, 0.0], np.eye(2), 1.0, np.zeros(2),
                np.eye(2))

    def test_psd_sqrt_roundtrip(self, rng):
        mat = rng.standard_normal((3, 3))
        cov = mat @ mat.T
        root = psd_sqrt(cov)
        np.testing.assert_allclose(root @ root.T, cov, atol=1e-12)

    def test_finite_state_validation(self):
        with pytest.raises(ConfigError):
            FiniteStateModel(jump_rates=np.array([[0.0, -1.0], [1.0, 0.0]]),
                             obs_values=np.array([0.0, 1.0]), obs_noise_std=1.0,
                             prior=SimplexBelief(np.array([0.5, 0.5])))
        model = FiniteStateModel(jump_rates=np.array([[5.0, 1.0], [1.0, 7.0]]),
                                 obs_values=np.array([0.0, 1.0]),
                                 obs_noise_std=1.0,
                                 prior=SimplexBelief(np.array([0.5, 0.5])))
        # diagonal is ignored; adjoint columns sum to zero
        assert np.all(np.diag(model.jump_rates) == 0.0)
        np.testing.assert_allclose(model.rate_adjoint().sum(axis=0), 0.0,
                                   atol=1e-15)

    def test_hmm_validation(self):
        good = HmmModel(transition=np.array([[0.9, 0.2], [0.1, 0.8]]),
                        emission=np.array([[0.7, 0.3], [0.3, 0.7]]),
                        prior=SimplexBelief(np.array([0.6, 0.4])))
        assert good.num_states == 2 and good.alphabet_size == 2
        with pytest.raises(ConfigError):
            HmmModel(transition=np.array([[0.9, 0.2], [0.2, 0.8]]),
                     emission=np.array([[0.7, 0.3], [0.3, 0.7]]),
                     prior=SimplexBelief(np.array([0.6, 0.4])))


class TestLgSimulation:
    def test_noise_free_degenerate_case(self):
        model = _lg(np.zeros((2, 2)), [1.0, 0.0], np.zeros((2, 2)), 1e-9,
                    np.array([1.0, 0.0]), np.zeros((2, 2)))
        ens = simulate_lg_agents(model, num_agents=4, dt=0.01, horizon=0.2, seed=5)
        np.testing.assert_allclose(ens.states,
                                   np.broadcast_to([1.0, 0.0], ens.states.shape))
        np.testing.assert_allclose(ens.obs_increments, 0.01, atol=1e-9)

    def test_benchmark_grid_shape(self, lg_model):
        ens = simulate_lg_agents(lg_model, num_agents=3, dt=0.01, horizon=5.0,
                                 seed=1)
        assert ens.num_steps == 500
        assert ens.states.shape == (501, 3, 2)
        assert ens.obs_increments.shape == (500, 3)
        assert ens.dt == pytest.approx(0.01)

    def test_terminal_covariance_matches_lyapunov(self):
        # A = 0: Var(X_T) = Sigma0 + Q*T exactly on the Euler grid,
        # = 2 I here; sample covariance within 3 standard errors
        model = _lg(np.zeros((2, 2)), [1.0, 0.0], np.eye(2), 1.0,
                    np.zeros(2), np.eye(2))
        num = 1000
        ens = simulate_lg_agents(model, num_agents=num, dt=0.01, horizon=1.0,
                                 seed=9)
        sample_cov = np.cov(ens.states[-1].T, ddof=1)
        expected = 2.0 * np.eye(2)
        for i in range(2):
            for j in range(2):
                se = np.sqrt((expected[i, i] * expected[j, j]
                              + expected[i, j] ** 2) / num)
                assert abs(sample_cov[i, j] - expected[i, j]) < 3 * se

    def test_deterministic_flow_matches_matrix_exponential(self, lg_model):
        # Q = 0, Sigma0 = 0: paths follow the linear ODE; Euler error is O(dt)
        model = _lg(lg_model.A, lg_model.H, np.zeros((2, 2)), 1.0,
                    lg_model.prior_mean, np.zeros((2, 2)))
        exact = expm(model.A * 1.0) @ model.prior_mean
        errs = {}
        for dt in (0.01, 0.001):
            ens = simulate_lg_agents(model, num_agents=1, dt=dt, horizon=1.0,
                                     seed=3)
            errs[dt] = np.linalg.norm(ens.states[-1, 0] - exact)
        assert errs[0.01] < 0.02
        assert errs[0.001] < errs[0.01] / 5

    def test_same_seed_bit_identical(self, lg_model):
        a = simulate_lg_agents(lg_model, 6, 0.01, 0.5, seed=123)
        b = simulate_lg_agents(lg_model, 6, 0.01, 0.5, seed=123)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.obs_increments, b.obs_increments)

    def test_agent_streams_stable_under_growth(self, lg_model):
        small = simulate_lg_agents(lg_model, 3, 0.01, 0.3, seed=77)
        large = simulate_lg_agents(lg_model, 5, 0.01, 0.3, seed=77)
        np.testing.assert_array_equal(small.states, large.states[:, :3])
        np.testing.assert_array_equal(small.obs_increments,
                                      large.obs_increments[:, :3])

    def test_grid_validation(self, lg_model):
        with pytest.raises(ConfigError):
            simulate_lg_agents(lg_model, 2, dt=-0.01, horizon=1.0, seed=0)
        with pytest.raises(ConfigError):
            simulate_lg_agents(lg_model, 0, dt=0.01, horizon=1.0, seed=0)
        with pytest.raises(ConfigError):
            simulate_lg_agents(lg_model, 2, dt=0.01, horizon=0.001, seed=0)


class TestCtmcSimulation:
    def test_zero_rates_freeze_states(self):
        model = FiniteStateModel(jump_rates=np.zeros((3, 3)),
                                 obs_values=np.array([0.0, 1.0, 2.0]),
                                 obs_noise_std=0.5,
                                 prior=SimplexBelief(np.array([0.2, 0.3, 0.5])))
        ens = simulate_ctmc_agents(model, 50, dt=0.01, horizon=1.0, seed=2)
        np.testing.assert_array_equal(ens.states,
                                      np.broadcast_to(ens.states[0],
                                                      ens.states.shape))

    def test_symmetric_two_state_stationary(self):
        model = FiniteStateModel(jump_rates=np.array([[0.0, 1.0], [1.0, 0.0]]),
                                 obs_values=np.array([0.0, 1.0]),
                                 obs_noise_std=1.0,
                                 prior=SimplexBelief(np.array([1.0, 0.0])))
        num = 5000
        ens = simulate_ctmc_agents(model, num, dt=0.01, horizon=10.0, seed=4)
        frac = float(np.mean(ens.states[-1] == 0))
        se = np.sqrt(0.25 / num)
        assert abs(frac - 0.5) < 3 * se

    def test_absorbing_state_holds(self):
        # state 2 has zero exit rates: once entered it is never left
        rates = np.array([[0.0, 1.0, 0.0],
                          [1.0, 0.0, 0.0],
                          [2.0, 2.0, 0.0]])
        model = FiniteStateModel(jump_rates=rates,
                                 obs_values=np.array([0.0, 0.5, 1.0]),
                                 obs_noise_std=1.0,
                                 prior=SimplexBelief(np.array([0.5, 0.5, 0.0])))
        ens = simulate_ctmc_agents(model, 100, dt=0.01, horizon=3.0, seed=6)
        entered = np.maximum.accumulate(ens.states == 2, axis=0)
        stayed = ens.states == 2
        np.testing.assert_array_equal(entered, stayed)
        assert stayed[-1].any()

    def test_rate_dt_validation(self):
        model = FiniteStateModel(jump_rates=np.array([[0.0, 30.0], [40.0, 0.0]]),
                                 obs_values=np.array([0.0, 1.0]),
                                 obs_noise_std=1.0,
                                 prior=SimplexBelief(np.array([0.5, 0.5])))
        with pytest.raises(StepSizeError):
            simulate_ctmc_agents(model, 5, dt=0.05, horizon=1.0, seed=0)


class TestHmmSimulation:
    def test_identity_model_emits_initial_state(self):
        model = HmmModel(transition=np.eye(3), emission=np.eye(3),
                         prior=SimplexBelief(np.array([0.0, 0.0, 1.0])))
        ens = simulate_hmm_agents(model, 20, num_steps=5, seed=8)
        assert np.all(ens.symbols == 2)
        assert np.all(ens.states == 2)

    def test_symbol_marginal_frequency(self):
        # one step from a non-uniform prior: symbol frequencies match the
        # marginal emission @ (transition @ prior) within 3 standard errors
        transition = np.full((2, 2), 0.5)
        emission = np.array([[0.7, 0.2], [0.3, 0.8]])
        prior = np.array([0.9, 0.1])
        model = HmmModel(transition, emission, SimplexBelief(prior))
        num = 10_000
        ens = simulate_hmm_agents(model, num, num_steps=1, seed=10)
        freq = np.bincount(ens.symbols[0], minlength=2) / num
        marginal = emission @ (transition @ prior)
        for z in range(2):
            se = np.sqrt(marginal[z] * (1 - marginal[z]) / num)
            assert abs(freq[z] - marginal[z]) < 3 * se

    def test_deterministic_cycle_has_period_two(self):
        model = HmmModel(transition=np.array([[0.0, 1.0], [1.0, 0.0]]),
                         emission=np.eye(2),
                         prior=SimplexBelief(np.array([1.0, 0.0])))
        ens = simulate_hmm_agents(model, 3, num_steps=6, seed=1)
        np.testing.assert_array_equal(ens.symbols[0], ens.symbols[2])
        np.testing.assert_array_equal(ens.symbols[1], ens.symbols[3])
        assert not np.array_equal(ens.symbols[0], ens.symbols[1])


class TestEnsembleContainer:
    def test_cumulative_observations(self, lg_model):
        ens = simulate_lg_agents(lg_model, 2, 0.01, 0.1, seed=3)
        z = ens.cumulative_observations()
        np.testing.assert_allclose(z[1:] - z[:-1], ens.obs_increments,
                                   atol=1e-15)
        np.testing.assert_array_equal(z[0], 0.0)

    def test_csv_roundtrip_shape(self, tmp_path, lg_model):
        ens = simulate_lg_agents(lg_model, 3, 0.01, 0.05, seed=3)
        path = tmp_path / "ens.csv"
        ens.to_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "agent_id", "x0", "x1", "dZ"]
        assert len(rows) == 1 + (ens.num_steps + 1) * ens.num_agents

    def test_invalid_combinations(self):
        with pytest.raises(ConfigError):
            AgentEnsemble(times=np.arange(3.0),
                          states=np.zeros((3, 2, 1)))
        with pytest.raises(ConfigError):
            AgentEnsemble(times=np.arange(3.0), states=np.zeros((3, 2, 1)),
                          obs_increments=np.zeros((1, 2)))


class TestSeedScheme:
    def test_spawn_keys_documented_counter(self):
        seqs = agent_seed_sequences(42, 3)
        assert [s.spawn_key for s in seqs] == [(0,), (1,), (2,)]
        base = np.random.SeedSequence(entropy=9, spawn_key=(1, 2))
        seqs = agent_seed_sequences(base, 2)
        assert [s.spawn_key for s in seqs] == [(1, 2, 0), (1, 2, 1)]
