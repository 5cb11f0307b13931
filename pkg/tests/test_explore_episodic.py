import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockrl.analysis import check_cover, exact_visitation, max_reach
from blockrl.envs import make_lock, make_random_block
from blockrl.explore_episodic import (
    PracticalParams, build_contrastive_dataset, center_reward, cluster_centers, epco, exact_kinematics_f,
    extend_budget, pco, roll_in_marginal, signature_distance, worst_case_budget,
)
from blockrl.mdp_core import EpisodicAccess, Policy
from blockrl.regression import BayesTwoContext, ErmTwoContext
from blockrl.rng import Streams

from conftest import tiny_instance
from oracles import contrastive_bayes_label


def uniform_of(mdp):
    return Policy.uniform(mdp.horizon, mdp.n_obs, mdp.n_actions)


class TestContrastiveDataset:
    def test_label_marginal_is_half(self, small_random):
        mdp = small_random
        access = EpisodicAccess(mdp, np.random.default_rng(0))
        n = 10_000
        data = build_contrastive_dataset(access, 1, [uniform_of(mdp)], np.ones(1), 0, n, Streams(0))
        assert abs(data.y.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)
        assert access.episodes == 2 * n

    @given(st.integers(0, 10_000))
    def test_exact_label_matches_joint_law(self, seed):
        mdp = tiny_instance(seed, max_h=3)
        if mdp.horizon < 2:
            return
        rng = np.random.default_rng(seed)
        members = [uniform_of(mdp), Policy(rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs)))]
        weights = np.array([0.3, 0.7])
        h = int(rng.integers(1, mdp.horizon))
        for a in range(mdp.n_actions):
            data = build_contrastive_dataset(EpisodicAccess(mdp, rng), h, members, weights, a, 5, Streams(seed), mdp)
            oracle = contrastive_bayes_label(mdp, h, members, weights, a)
            support = ~np.isnan(oracle)
            assert np.allclose(data.truth.mean[support], oracle[support], atol=1e-12)

    def test_single_state_single_action_is_half(self):
        mdp, _ = make_random_block((3, 1, 1, 3), 0.5, 0, n_concepts=1)
        f = exact_kinematics_f(mdp, 1, [uniform_of(mdp)], np.ones(1))
        assert np.all(f == 0.5)


class TestKinematics:
    @given(st.integers(0, 10_000))
    def test_range_and_lower_bound(self, seed):
        mdp = tiny_instance(seed, max_h=3, max_a=3)
        if mdp.horizon < 2:
            return
        rng = np.random.default_rng(seed)
        members = [Policy(rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs))) for _ in range(2)]
        weights = np.array([0.5, 0.5])
        for h in range(1, mdp.horizon):
            f = exact_kinematics_f(mdp, h, members, weights)
            assert np.all((f >= 0) & (f <= 1))
            beta = roll_in_marginal(mdp, h, members, weights)
            P = mdp.latent.transitions[h - 1]
            for s in range(mdp.n_states):
                for s2 in range(mdp.n_states):
                    for a in range(mdp.n_actions):
                        if P[s, a, s2] > 0:
                            assert 1 - f[s, s2, a] >= beta[s] / (2 * mdp.n_actions) - 1e-12


class TestClustering:
    @given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.integers(1, 6) | st.none())
    def test_centers_separated_and_rejections_explained(self, seed, sep, cap):
        rng = np.random.default_rng(seed)
        X = 8
        sig = rng.random((X, 5)).round(1)
        centers = rng.integers(X, size=12)
        accepted = cluster_centers(sig, centers, sep, cap)
        chosen = [centers[t] for t in accepted]
        for i, u in enumerate(chosen):
            for v in chosen[i + 1:]:
                assert np.max(np.abs(sig[u] - sig[v])) > sep
        if cap is not None:
            assert len(accepted) <= cap
        stop = accepted[-1] if cap is not None and len(accepted) == cap else len(centers)
        for t in range(stop):
            if t not in accepted:
                assert min(np.max(np.abs(sig[centers[t]] - sig[c])) for c in chosen) <= sep

    @given(st.integers(0, 10_000), st.floats(0.01, 1.0))
    def test_center_reward_range(self, seed, tol):
        sig = np.random.default_rng(seed).random((6, 4))
        for c in range(6):
            r = center_reward(sig, c, tol)
            assert r[c] == 1.0
            assert np.all((r >= 0) & (r <= 1))
            assert np.array_equal(r, np.maximum(0, 1 - signature_distance(sig, sig[c]) / tol))


class TestEpco:
    def test_single_state_accepts_one_center(self):
        mdp, _ = make_random_block((3, 1, 2, 3), 0.5, 0, n_concepts=1)
        p = PracticalParams().resolve(1, 2, 3, 8)
        out, report = epco(BayesTwoContext(), 1, [[uniform_of(mdp)]], [], p.n, p.m, p.N, p.gamma_tol, p.gamma_sep,
                           EpisodicAccess(mdp, np.random.default_rng(0)), Streams(0))
        assert len(report.accepted) == 1 and len(out) == 1

    def test_lock_layer_two_cover(self):
        mdp, _ = make_lock(3, 3, 0.1, 2, 4)
        p = PracticalParams().resolve(2, 3, 3, 8)
        out, _ = epco(BayesTwoContext(), 1, [[uniform_of(mdp)]], [], p.n, p.m, p.N, p.gamma_tol, p.gamma_sep,
                      EpisodicAccess(mdp, np.random.default_rng(0)), Streams(0))
        reached = np.max([exact_visitation(mdp, pi).latent[1] for pi in out], axis=0)
        for s in range(2):
            assert reached[s] >= 0.9 * max_reach(mdp, 2, s)[0]

    def test_size_bound_and_distinct_latents_with_bayes(self):
        for seed in range(20):
            mdp, _ = make_random_block((3, 3, 2, 8), 0.1, seed, n_concepts=2)
            access = EpisodicAccess(mdp, np.random.default_rng(seed))
            res = pco(BayesTwoContext(), None, 3, 0.1, 0.1, access, seed=seed)
            for rnd in res.rounds:
                for layer in rnd:
                    accepted = layer["accepted_center_observation_indices"]
                    assert len(accepted) <= mdp.n_states
                    assert len(set(mdp.decoder[accepted].tolist())) == len(accepted)

    def test_episode_accounting(self, small_random):
        mdp = small_random
        access = EpisodicAccess(mdp, np.random.default_rng(0))
        params = PracticalParams(N=50, m=6, n=10, rounds=2)
        res = pco(ErmTwoContext(mdp.concept_class), None, 3, 0.1, 0.1, access, params=params, seed=0)
        for rnd in res.rounds:
            for layer in rnd:
                assert layer["episodes_count"] == layer["episode_budget_count"] == extend_budget(
                    layer["layer_index"], 2, 50, 6, 10, layer["accepted_centers_count"])
        assert res.episodes == access.episodes == res.budget
        assert res.budget <= worst_case_budget(res.params, mdp.horizon, mdp.n_actions)


class TestPco:
    def test_single_layer_returns_uniform(self):
        mdp, _ = make_random_block((1, 2, 2, 4), 0.1, 0, n_concepts=2)
        res = pco(BayesTwoContext(), None, 2, 0.1, 0.1, EpisodicAccess(mdp, np.random.default_rng(0)))
        assert len(res) == 1 and np.all(res.policies[0].table == 0.5)
        assert check_cover(mdp, res.policies, 0.0).passed

    def test_output_size_bound_and_cover(self):
        mdp, phi = make_random_block((3, 2, 2, 6), 0.2, 2, n_concepts=10)
        res = pco(ErmTwoContext(phi), None, 2, 0.1, 0.1, EpisodicAccess(mdp, np.random.default_rng(2)), seed=2)
        assert len(res) <= 3**2 * 2**2
        assert check_cover(mdp, res.policies, 0.1).passed

    def test_deterministic_given_seed(self, small_random):
        def run():
            access = EpisodicAccess(small_random, np.random.default_rng(3))
            res = pco(BayesTwoContext(), None, 3, 0.1, 0.1, access, seed=3)
            return [pi.key() for pi in res.policies]

        assert run() == run()

    def test_params_resolve_defaults(self):
        p = PracticalParams().resolve(3, 2, 4, 2000)
        assert (p.m, p.n, p.N, p.rounds) == (24, 48, 2000, 12)
        assert PracticalParams(sample_scale=5).resolve(3, 2, 4, 2000).N == 10_000
        with pytest.raises(TypeError):
            PracticalParams(unknown=1)
