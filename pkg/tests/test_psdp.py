import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockrl.analysis import exact_visitation, max_reach
from blockrl.envs import GOOD, make_random_block
from blockrl.mdp_core import EpisodicAccess, Policy
from blockrl.psdp import PsdpTrace, psdp, true_q
from blockrl.regression import BayesOneContext, ErmOneContext
from blockrl.rng import Streams

from conftest import lock_three_layers, tiny_instance
from oracles import backward_latent_optimum, obs_level_q


def witness_covers(mdp):
    return [[max_reach(mdp, h, s)[1] for s in range(mdp.n_states)] for h in range(1, mdp.horizon + 1)]


def achieved(mdp, pi, k, reward):
    return float(exact_visitation(mdp, pi).obs[k] @ reward)


class TestTrueQ:
    @given(st.integers(0, 10_000))
    def test_matches_observation_level_backup(self, seed):
        mdp = tiny_instance(seed, max_h=4)
        if mdp.horizon < 2:
            return
        rng = np.random.default_rng(seed)
        pi = Policy(rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs)))
        k = int(rng.integers(1, mdp.horizon))
        reward = rng.random(mdp.n_obs)
        Q, V = true_q(mdp, pi, k, reward)
        Qo, Vo = obs_level_q(mdp, pi, k, reward)
        assert np.allclose(Q, Qo, atol=1e-12) and np.allclose(V, Vo, atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_definitional_identities(self, seed):
        mdp = tiny_instance(seed, max_h=4)
        if mdp.horizon < 2:
            return
        rng = np.random.default_rng(seed)
        pi = Policy(rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs)))
        k = mdp.horizon - 1
        reward = rng.random(mdp.n_obs)
        Q, V = true_q(mdp, pi, k, reward)
        assert np.all(Q[k] == reward[:, None])
        for h in range(1, k + 2):
            assert np.max(np.abs(V[h - 1] - (pi.table[h - 1] * Q[h - 1]).sum(axis=1))) <= 1e-12
        for h in range(1, k + 1):
            nxt = np.array([[mdp.observed_transition(h, x, a) @ V[h] for a in range(mdp.n_actions)]
                            for x in range(mdp.n_obs)])
            assert np.max(np.abs(Q[h - 1] - nxt)) <= 1e-12
        assert np.array_equal(true_q(mdp, pi, k, reward, h=1)[0], Q[0])


class TestPsdp:
    def test_single_action(self):
        mdp, _ = make_random_block((3, 2, 1, 4), 0.1, 0, n_concepts=2)
        reward = np.linspace(0, 1, 4)
        pi = psdp(2, BayesOneContext(), reward, witness_covers(mdp), [], 4,
                  EpisodicAccess(mdp, np.random.default_rng(0)), Streams(0))
        assert np.all(pi.table == 1.0)
        uniform = Policy.uniform(3, 4, 1)
        assert achieved(mdp, pi, 2, reward) == pytest.approx(achieved(mdp, uniform, 2, reward), abs=1e-15)

    def test_lock_with_bayes_reaches_optimum(self):
        mdp, _ = lock_three_layers()
        reward = (mdp.decoder == GOOD).astype(float)
        pi = psdp(2, BayesOneContext(), reward, witness_covers(mdp), [], 8,
                  EpisodicAccess(mdp, np.random.default_rng(0)), Streams(1))
        assert achieved(mdp, pi, 2, reward) == 1.0

    def test_bayes_near_optimal_on_random_instances(self):
        for seed in range(15):
            rng = np.random.default_rng(seed)
            H, S, A = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
            mdp, _ = make_random_block((H, S, A, S + 2), 0.05, seed, n_concepts=2)
            k = int(rng.integers(1, H))
            reward = rng.random(mdp.n_obs)
            pi = psdp(k, BayesOneContext(), reward, witness_covers(mdp), [], 8,
                      EpisodicAccess(mdp, rng), Streams(seed))
            assert achieved(mdp, pi, k, reward) >= backward_latent_optimum(mdp, k, reward) - 0.02

    def test_bayes_regression_targets_are_exact_q(self):
        mdp, _ = make_random_block((4, 3, 2, 7), 0.1, 3, n_concepts=2)
        reward = np.random.default_rng(3).random(7)
        k = 3
        trace = PsdpTrace()
        pi = psdp(k, BayesOneContext(), reward, witness_covers(mdp), [], 8,
                  EpisodicAccess(mdp, np.random.default_rng(0)), Streams(2), trace=trace)
        # layers above h are already fixed to pi's greedy choices when layer h is fitted
        for h in range(1, k + 1):
            assert np.max(np.abs(trace.q_hat[h] - true_q(mdp, pi, k, reward, h)[0])) <= 1e-12
        assert trace.episodes == k * mdp.n_actions * 8

    def test_erm_with_generous_samples(self):
        mdp, phi = make_random_block((3, 2, 2, 6), 0.2, 11, n_concepts=10)
        reward = (mdp.decoder == 1).astype(float)
        pi = psdp(2, ErmOneContext(phi), reward, witness_covers(mdp), [], 20_000,
                  EpisodicAccess(mdp, np.random.default_rng(0)), Streams(5))
        assert achieved(mdp, pi, 2, reward) >= backward_latent_optimum(mdp, 2, reward) - 0.05

    def test_deterministic_given_seed(self):
        mdp, phi = make_random_block((3, 3, 2, 8), 0.1, 5, n_concepts=5)
        reward = np.random.default_rng(1).random(8)

        def run():
            return psdp(2, ErmOneContext(phi), reward, witness_covers(mdp), [], 300,
                        EpisodicAccess(mdp, np.random.default_rng(7)), Streams(7)).table

        assert np.array_equal(run(), run())

    def test_rejects_out_of_range_reward(self, lock):
        with pytest.raises(ValueError):
            psdp(1, BayesOneContext(), np.full(lock.n_obs, 1.5), witness_covers(lock), [], 4,
                 EpisodicAccess(lock, np.random.default_rng(0)), Streams(0))
