import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockrl.acceptance import truncation_violations
from blockrl.analysis import (
    check_cover, check_truncated_cover, exact_visitation, max_reach, max_reach_table, truncate,
)
from blockrl.envs import GOOD, lock_code, make_random_block
from blockrl.mdp_core import BlockMDP, EpisodicAccess, LatentModel, ObservationModel, Policy

from conftest import tiny_instance
from oracles import brute_max_reach, enumerate_visitation

TAU = 0.2


def rare_branch_mdp():
    """s0 -> s1 under action 0; action 1 reaches s2 with probability TAU / 2."""
    trans = np.zeros((1, 3, 2, 3))
    trans[0, 0, 0, 1] = 1.0
    trans[0, 0, 1] = [0.0, 1 - TAU / 2, TAU / 2]
    trans[0, 1:, :, 1] = 1.0
    latent = LatentModel(2, 3, 2, np.array([1.0, 0.0, 0.0]), trans)
    em = np.tile(np.eye(3), (2, 1, 1))
    return BlockMDP(latent, ObservationModel(3, em, np.arange(3)))


class TestVisitation:
    @given(st.integers(0, 10_000))
    def test_matches_trajectory_enumeration(self, seed):
        mdp = tiny_instance(seed)
        rng = np.random.default_rng(seed)
        pi = Policy(rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs)))
        assert np.allclose(exact_visitation(mdp, pi).latent, enumerate_visitation(mdp, pi), atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_first_layer_is_initial_law(self, seed):
        mdp = tiny_instance(seed)
        pi = Policy(np.random.default_rng(seed).dirichlet(np.ones(mdp.n_actions), size=(mdp.horizon, mdp.n_obs)))
        assert np.array_equal(exact_visitation(mdp, pi).latent[0], mdp.latent.initial)

    def test_uniform_lock_good_state(self, lock):
        d = exact_visitation(lock, Policy.uniform(3, lock.n_obs, 2)).latent
        assert d[2, GOOD] == pytest.approx(0.25, abs=1e-15)

    def test_monte_carlo_agreement(self, small_random):
        mdp = small_random
        pi = Policy.uniform(mdp.horizon, mdp.n_obs, mdp.n_actions)
        n = 100_000
        obs, _ = EpisodicAccess(mdp, np.random.default_rng(0)).rollout(pi.table[None], np.zeros(n, int), mdp.horizon)
        exact = exact_visitation(mdp, pi).latent
        for h in range(mdp.horizon):
            freq = np.bincount(mdp.decoder[obs[:, h]], minlength=mdp.n_states) / n
            sigma = np.sqrt(exact[h] * (1 - exact[h]) / n)
            assert np.all(np.abs(freq - exact[h]) <= 3 * sigma + 1e-12)


class TestMaxReach:
    @given(st.integers(0, 10_000))
    def test_matches_exhaustive_search(self, seed):
        mdp = tiny_instance(seed)
        for h in range(1, mdp.horizon + 1):
            for s in range(mdp.n_states):
                assert max_reach(mdp, h, s)[0] == pytest.approx(brute_max_reach(mdp, h, s), abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_witness_consistency(self, seed):
        mdp = tiny_instance(seed)
        for h in range(1, mdp.horizon + 1):
            for s in range(mdp.n_states):
                value, witness = max_reach(mdp, h, s)
                assert abs(exact_visitation(mdp, witness).latent[h - 1, s] - value) <= 1e-12

    def test_deterministic_lock_witness_plays_code(self, lock):
        value, witness = max_reach(lock, 3, GOOD)
        assert value == 1.0
        good_obs = np.flatnonzero(lock.decoder == GOOD)
        code = lock_code(lock)
        for h in (1, 2):
            assert np.all(witness.table[h - 1, good_obs, code[h - 1]] == 1.0)

    def test_unreachable_state(self):
        assert max_reach(rare_branch_mdp(), 1, 2)[0] == 0.0


class TestTruncation:
    def test_no_truncation_when_everything_reachable(self):
        mdp, _ = make_random_block((3, 2, 2, 4), 1.0, 0)
        trunc = truncate(mdp, (), 0.3, 0.1)
        for seed in range(5):
            pi = Policy(np.random.default_rng(seed).dirichlet(np.ones(2), size=(3, 4)))
            assert np.all(exact_visitation(trunc, pi).bottom == 0.0)

    def test_rare_state_excluded_and_mass_goes_to_terminal(self):
        mdp = rare_branch_mdp()
        trunc = truncate(mdp, (), TAU, 0.05)
        assert not trunc.reachable[1, 2]
        pi = Policy.fixed_actions([1, 1], 3, 2)
        vis = exact_visitation(trunc, pi)
        assert vis.latent[1, 2] == 0.0
        assert vis.bottom[1] == pytest.approx(TAU / 2, abs=1e-15)

    def test_backup_witness_restores_rare_state(self):
        mdp = rare_branch_mdp()
        witness = max_reach(mdp, 2, 2)[1]
        trunc = truncate(mdp, [witness], TAU, 0.05)
        assert trunc.reachable[1, 2]
        assert exact_visitation(trunc, witness).latent[1, 2] == pytest.approx(TAU / 2, abs=1e-15)

    @given(st.integers(0, 10_000), st.floats(0.02, 0.4), st.floats(0.05, 1.0))
    def test_truncation_facts(self, seed, tau, shrink):
        mdp = tiny_instance(seed, max_h=4, max_s=4, max_a=3)
        rng = np.random.default_rng(seed)
        H, X, A = mdp.horizon, mdp.n_obs, mdp.n_actions
        gamma = [Policy(rng.dirichlet(np.ones(A), size=(H, X))) for _ in range(int(rng.integers(0, 3)))]
        pols = [Policy(rng.dirichlet(np.ones(A) * 0.5, size=(H, X))) for _ in range(5)]
        worst = truncation_violations(mdp, tau, tau * shrink, gamma, pols)
        assert all(v <= 1e-9 for v in worst.values()), worst


class TestCover:
    @given(st.integers(0, 10_000))
    def test_witness_set_passes_at_zero(self, seed):
        mdp = tiny_instance(seed)
        psi = [max_reach(mdp, h, s)[1] for h in range(1, mdp.horizon + 1) for s in range(mdp.n_states)]
        assert check_cover(mdp, psi, 0.0).passed

    def test_uniform_fails_on_lock(self, lock):
        report = check_cover(lock, [Policy.uniform(3, lock.n_obs, 2)], 0.1)
        assert not report.passed
        failing = {(h, s): d for h, s, d in report.failures()}
        assert failing[(3, GOOD)] == pytest.approx(0.75, abs=1e-15)

    def test_single_state_always_covered(self):
        mdp, _ = make_random_block((3, 1, 2, 3), 0.5, 1, n_concepts=1)
        assert check_cover(mdp, [Policy.fixed_actions([0, 1, 0], 3, 2)], 0.0).passed

    def test_report_serializes_with_units(self, lock):
        doc = check_cover(lock, [Policy.uniform(3, lock.n_obs, 2)], 0.1).to_dict()
        assert doc["epsilon_probability"] == 0.1
        assert (3, GOOD) in {(f["layer_index"], f["state_index"]) for f in doc["failures"]}


class TestTruncatedCover:
    def test_witnesses_pass_max_mode(self, small_random):
        mdp = small_random
        for h in range(1, mdp.horizon + 1):
            psi = [max_reach(truncate(mdp, (), 0.05, 0.01), h, s)[1] for s in range(mdp.n_states)]
            assert check_truncated_cover(mdp, psi, h, 1.0, "max", tau=0.05, tau_small=0.01).passed

    @given(st.integers(0, 10_000))
    def test_zero_alpha_always_passes(self, seed):
        mdp = tiny_instance(seed)
        pi = Policy.uniform(mdp.horizon, mdp.n_obs, mdp.n_actions)
        for mode in ("average", "max"):
            assert check_truncated_cover(mdp, [pi], mdp.horizon, 0.0, mode, tau=0.1, tau_small=0.05).passed

    def test_single_policy_modes_agree(self, small_random):
        pi = Policy.uniform(3, small_random.n_obs, 2)
        avg = check_truncated_cover(small_random, [pi], 2, 0.5, "average", tau=0.1, tau_small=0.05)
        mx = check_truncated_cover(small_random, [pi], 2, 0.5, "max", tau=0.1, tau_small=0.05)
        assert np.array_equal(avg.covered, mx.covered) and avg.passed == mx.passed


def test_max_reach_table_matches_pointwise(small_random):
    table = max_reach_table(small_random)
    for h in range(1, 4):
        for s in range(3):
            assert table[h - 1, s] == max_reach(small_random, h, s)[0]
