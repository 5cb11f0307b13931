import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockrl.analysis import check_cover, exact_visitation, max_reach
from blockrl.envs import make_lock, make_random_block
from blockrl.errors import UnregisteredObservation
from blockrl.explore_reset import (
    RESET_GAMMA_SEP, RESET_GAMMA_TOL, ResetExplorer, build_discriminator_datasets, epcr, exact_kinematics_w,
    exact_w_table, pcr, reset_extend_budget, reset_practical_params, reset_query_budget,
)
from blockrl.mdp_core import Policy, ResetAccess
from blockrl.regression import BayesOneContext, ErmOneContext
from blockrl.rng import Streams

from conftest import tiny_instance
from oracles import discriminator_bayes_label, rational_w


def uniform_of(mdp):
    return Policy.uniform(mdp.horizon, mdp.n_obs, mdp.n_actions)


def registered_discriminators(access, mdp, h, m):
    obs, _ = access.rollout(uniform_of(mdp).table[None], np.zeros(m, int), h)
    return obs[:, h - 1]


class TestDiscriminatorDatasets:
    def test_label_marginal(self, small_random):
        mdp = small_random
        access = ResetAccess(mdp, np.random.default_rng(0))
        m, N = 4, 5000
        disc = registered_discriminators(access, mdp, 1, m)
        data = build_discriminator_datasets(access, 1, disc, N, Streams(0))
        A = mdp.n_actions
        pooled = np.mean([data[i][a].y.mean() for i in range(m) for a in range(A)])
        p = 1 / (m * A)
        assert abs(pooled - p) <= 3 * np.sqrt(p * (1 - p) / (m * A * N))
        assert access.queries == m * A * N

    @given(st.integers(0, 10_000))
    def test_exact_label_matches_observation_posterior(self, seed):
        mdp = tiny_instance(seed, max_h=3)
        if mdp.horizon < 2:
            return
        access = ResetAccess(mdp, np.random.default_rng(seed))
        h = int(np.random.default_rng(seed).integers(1, mdp.horizon))
        disc = registered_discriminators(access, mdp, h, 3)
        data = build_discriminator_datasets(access, h, disc, 4, Streams(seed), model=mdp)
        for i in range(3):
            for a in range(mdp.n_actions):
                oracle = discriminator_bayes_label(mdp, h, disc, i, a)
                support = ~np.isnan(oracle)
                assert np.allclose(data[i][a].truth.mean[support], oracle[support], atol=1e-12)

    def test_single_discriminator_single_action_labels_all_one(self):
        mdp, _ = make_random_block((3, 2, 1, 5), 0.1, 0, n_concepts=2)
        access = ResetAccess(mdp, np.random.default_rng(0))
        disc = registered_discriminators(access, mdp, 2, 1)
        data = build_discriminator_datasets(access, 2, disc, 50, Streams(0))
        assert np.all(data[0][0].y == 1)

    def test_shared_mode_relabels_one_stream(self, small_random):
        access = ResetAccess(small_random, np.random.default_rng(0))
        disc = registered_discriminators(access, small_random, 1, 3)
        data = build_discriminator_datasets(access, 1, disc, 200, Streams(0), mode="shared")
        assert access.queries == 200
        first = data[0][0].x
        assert all(np.array_equal(d.x, first) for row in data for d in row)
        assert np.all(sum(d.y for row in data for d in row) == 1)

    def test_rejects_unknown_mode(self, small_random):
        access = ResetAccess(small_random, np.random.default_rng(0))
        disc = registered_discriminators(access, small_random, 1, 2)
        with pytest.raises(ValueError):
            build_discriminator_datasets(access, 1, disc, 10, Streams(0), mode="pooled")

    def test_reset_requires_registered_observation(self, small_random):
        access = ResetAccess(small_random, np.random.default_rng(0))
        with pytest.raises(UnregisteredObservation):
            access.reset_step(1, 0, 0)


class TestKinematicsW:
    def test_identical_sources_single_action(self):
        mdp, _ = make_random_block((3, 3, 1, 6), 0.05, 2, n_concepts=2)
        for m in (1, 2, 5):
            w = exact_w_table(mdp, 1, [1] * m)
            reachable = mdp.latent.transitions[0, 1, 0] > 0
            assert np.allclose(w[:, 0][:, reachable], 1 / m, atol=1e-15)

    @given(st.integers(0, 10_000))
    def test_normalization_and_rational_agreement(self, seed):
        mdp = tiny_instance(seed, max_h=3, max_a=3)
        if mdp.horizon < 2:
            return
        rng = np.random.default_rng(seed)
        sources = rng.integers(mdp.n_states, size=int(rng.integers(1, 4)))
        P = mdp.latent.transitions[0]
        w = exact_w_table(mdp, 1, sources)
        den = P[sources].sum(axis=(0, 1))
        total = w.sum(axis=(0, 1))
        assert np.allclose(total[den > 0], 1.0, atol=1e-12)
        assert np.all(total[den == 0] == 0)
        for i, s in enumerate(sources):
            for a in range(mdp.n_actions):
                for s2 in range(mdp.n_states):
                    exact = float(rational_w(P, sources, s2, int(s), a))
                    assert abs(w[i, a, s2] - exact) <= 1e-12
                    assert abs(exact_kinematics_w(mdp, 1, sources, s2, int(s), a) - exact) <= 1e-12


def run_epcr(mdp, reg, h=1, seed=0, **kw):
    p = reset_practical_params(**kw).resolve(mdp.n_states, mdp.n_actions, mdp.horizon, reg.default_samples)
    access = ResetAccess(mdp, np.random.default_rng(seed))
    psi = [[uniform_of(mdp)] for _ in range(h)]
    out, report = epcr(reg, h, psi, [], p.n, p.m, p.N, p.gamma_tol, p.gamma_sep, access, Streams(seed))
    return out, report, p, access


class TestEpcr:
    def test_single_state_accepts_one_center(self):
        mdp, _ = make_random_block((3, 1, 2, 3), 0.5, 0, n_concepts=1)
        out, report, _, _ = run_epcr(mdp, BayesOneContext())
        assert len(report.accepted) == 1 and len(out) == 1

    def test_lock_layer_two_cover(self):
        mdp, _ = make_lock(3, 3, 0.1, 2, 4)
        out, _, _, _ = run_epcr(mdp, BayesOneContext())
        reached = np.max([exact_visitation(mdp, pi).latent[1] for pi in out], axis=0)
        for s in range(2):
            assert reached[s] >= 0.9 * max_reach(mdp, 2, s)[0]

    def test_size_bound_and_distinct_latents_with_bayes(self):
        for seed in range(20):
            mdp, _ = make_random_block((3, 3, 2, 8), 0.1, seed, n_concepts=2)
            _, report, _, _ = run_epcr(mdp, BayesOneContext(), seed=seed)
            chosen = [report.centers[t] for t in report.accepted]
            assert len(chosen) <= mdp.n_states
            assert len(set(mdp.decoder[chosen].tolist())) == len(chosen)

    @pytest.mark.parametrize("mode", ["independent", "shared"])
    def test_query_and_episode_accounting(self, small_random, mode):
        mdp = small_random
        p = reset_practical_params(N=40, m=4, n=9).resolve(3, 2, 3, 0)
        access = ResetAccess(mdp, np.random.default_rng(0))
        psi = [[uniform_of(mdp)]]
        _, report = epcr(ErmOneContext(mdp.concept_class), 1, psi, [], p.n, p.m, p.N, p.gamma_tol,
                         p.gamma_sep, access, Streams(0), mode=mode)
        assert report.queries == access.queries == reset_query_budget(2, 40, 4, 9, mode)
        assert report.episodes == access.episodes == reset_extend_budget(1, 2, 40, 4, len(report.accepted))


class TestPcr:
    def test_single_layer_returns_uniform(self):
        mdp, _ = make_random_block((1, 2, 2, 4), 0.1, 0, n_concepts=2)
        res = pcr(BayesOneContext(), None, 2, 0.1, 0.1, ResetAccess(mdp, np.random.default_rng(0)))
        assert len(res) == 1 and np.all(res.policies[0].table == 0.5)

    @pytest.mark.parametrize("mode", ["independent", "shared"])
    def test_bayes_cover_and_size(self, mode):
        mdp, _ = make_random_block((3, 2, 2, 6), 0.2, 2, n_concepts=3)
        res = pcr(BayesOneContext(), None, 2, 0.1, 0.1, ResetAccess(mdp, np.random.default_rng(2)),
                  seed=2, mode=mode)
        assert len(res) <= 3**2 * 2**2
        assert check_cover(mdp, res.policies, 0.1).passed
        assert res.episodes == res.budget

    def test_defaults_are_reset_tuned(self):
        p = reset_practical_params()
        assert (p.gamma_tol, p.gamma_sep) == (RESET_GAMMA_TOL, RESET_GAMMA_SEP)
        assert p.resolve(2, 2, 3, 8).N == 40

    def test_explorer_wrapper(self, lock):
        explorer = ResetExplorer(BayesOneContext(), 2)
        assert explorer.max_policies(3, 2) == 36
        pols = explorer(ResetAccess(lock, np.random.default_rng(0)), 0.1, 0.1, 3, 2)
        assert 1 <= len(pols) <= 36
        assert explorer.episode_budget(0.1, 0.1, 3, 2) > 0
