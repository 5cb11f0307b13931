"""Exact dynamic-programming oracles over the latent chain.

These are verification tools: they read the decoder and the latent model,
which exploration algorithms never see.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp_core import BlockMDP, Policy

COVER_SLACK = 1e-12


@dataclass(frozen=True)
class TruncatedMDP:
    """``base`` with transitions into non-reachable states rerouted to an absorbing terminal.

    ``reachable[h-1, s]`` marks the kept latent states at layer h. The terminal
    state emits a terminal observation and earns no reward.
    """

    base: BlockMDP
    reachable: np.ndarray
    tau: float | None = None
    tau_small: float | None = None
    gamma_set: tuple = ()

    @property
    def horizon(self) -> int:
        return self.base.horizon

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    @property
    def n_obs(self) -> int:
        return self.base.n_obs

    @property
    def decoder(self) -> np.ndarray:
        return self.base.decoder

    def intermediate(self, h: int) -> "TruncatedMDP":
        """The truncation that keeps this MDP's sets at layers 1..h and all states above."""
        mask = np.ones_like(self.reachable)
        mask[:h] = self.reachable[:h]
        return TruncatedMDP(self.base, mask, self.tau, self.tau_small, self.gamma_set)


def _parts(mdp: BlockMDP | TruncatedMDP) -> tuple[BlockMDP, np.ndarray]:
    if isinstance(mdp, TruncatedMDP):
        return mdp.base, mdp.reachable
    return mdp, np.ones((mdp.horizon, mdp.n_states), dtype=bool)


@dataclass(frozen=True)
class VisitationTable:
    """``latent[h-1, s]``, ``obs[h-1, x]``, and terminal mass ``bottom[h-1]``."""

    latent: np.ndarray
    obs: np.ndarray
    bottom: np.ndarray


def exact_visitation(mdp: BlockMDP | TruncatedMDP, policy: Policy) -> VisitationTable:
    """Forward DP over observations, aggregated to latent states."""
    base, keep = _parts(mdp)
    H, S, X = base.horizon, base.n_states, base.n_obs
    dec = base.decoder
    cols = np.arange(X)
    onehot = np.zeros((X, S))
    onehot[cols, dec] = 1.0
    latent = np.zeros((H, S))
    obs = np.zeros((H, X))
    bottom = np.zeros(H)
    nu = base.latent.initial * keep[0]
    lost = 1.0 - nu.sum()
    for h in range(1, H + 1):
        latent[h - 1] = nu
        bottom[h - 1] = max(lost, 0.0)
        mu = nu[dec] * base.obs.emissions[h - 1, dec, cols]
        obs[h - 1] = mu
        if h == H:
            break
        flow = onehot.T @ (mu[:, None] * policy.table[h - 1])
        nxt = np.einsum("sa,sat->t", flow, base.latent.transitions[h - 1])
        kept = nxt * keep[h]
        lost += nxt.sum() - kept.sum()
        nu = kept
    return VisitationTable(latent, obs, bottom)


def max_reach(mdp: BlockMDP | TruncatedMDP, h: int, s: int) -> tuple[float, Policy]:
    """Best probability of reaching latent ``s`` at layer ``h`` and a greedy witness."""
    base, keep = _parts(mdp)
    H, A = base.horizon, base.n_actions
    value = np.zeros(base.n_states)
    value[s] = 1.0
    value *= keep[h - 1]
    greedy = np.zeros((H, base.n_states), dtype=np.int64)
    for g in range(h - 1, 0, -1):
        q = base.latent.transitions[g - 1] @ value
        greedy[g - 1] = np.argmax(q, axis=1)
        value = q.max(axis=1) * keep[g - 1]
    prob = float(base.latent.initial @ (value * keep[0]))
    witness = Policy.greedy(greedy[:, base.decoder], A)
    return prob, witness


def max_reach_table(mdp: BlockMDP | TruncatedMDP) -> np.ndarray:
    """``out[h-1, s] = max_reach(mdp, h, s)[0]`` for all layers and states."""
    base, _ = _parts(mdp)
    out = np.zeros((base.horizon, base.n_states))
    for h in range(1, base.horizon + 1):
        for s in range(base.n_states):
            out[h - 1, s] = max_reach(mdp, h, s)[0]
    return out


def _truncation(base: BlockMDP, sets: np.ndarray, upto: int, **meta) -> TruncatedMDP:
    mask = np.ones_like(sets)
    mask[:upto] = sets[:upto]
    return TruncatedMDP(base, mask, **meta)


def truncate(mdp: BlockMDP, gamma: Sequence[Policy], tau: float, tau_small: float) -> TruncatedMDP:
    """Truncated MDP relative to backup set ``gamma`` and thresholds ``tau >= tau_small``.

    Layer-h kept states are those some policy reaches with probability at
    least ``tau`` in the empty-set truncation of layers below h, plus those
    the uniform mixture over ``gamma`` reaches in ``mdp`` with probability at
    least ``tau_small``.
    """
    if not 0 < tau_small <= tau < 1:
        raise ValueError("need 0 < tau_small <= tau < 1")
    H, S = mdp.horizon, mdp.n_states
    empty_sets = np.zeros((H, S), dtype=bool)
    empty_sets[0] = mdp.latent.initial >= tau
    for h in range(2, H + 1):
        below = _truncation(mdp, empty_sets, h - 1)
        for s in range(S):
            empty_sets[h - 1, s] = max_reach(below, h, s)[0] >= tau
    sets = empty_sets.copy()
    gamma = tuple(gamma)
    if gamma:
        avg = np.mean([exact_visitation(mdp, pi).latent for pi in gamma], axis=0)
        sets[1:] |= avg[1:] >= tau_small
    return TruncatedMDP(mdp, sets, tau, tau_small, gamma)


@dataclass
class CoverReport:
    achieved: np.ndarray
    optimal: np.ndarray
    epsilon: float
    n_policies: int

    @property
    def deficit(self) -> np.ndarray:
        return self.optimal - self.achieved

    @property
    def passed(self) -> bool:
        return bool(np.all(self.achieved >= self.optimal - self.epsilon - COVER_SLACK))

    def failures(self) -> list[tuple[int, int, float]]:
        """(layer, state, deficit) for every failing pair, 1-based layers."""
        bad = self.achieved < self.optimal - self.epsilon - COVER_SLACK
        return [(int(h) + 1, int(s), float(self.deficit[h, s])) for h, s in np.argwhere(bad)]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "epsilon_probability": self.epsilon,
            "n_policies_count": self.n_policies,
            "max_deficit_probability": float(self.deficit.max()) if self.deficit.size else 0.0,
            "achieved_probability": self.achieved.tolist(),
            "optimal_probability": self.optimal.tolist(),
            "failures": [
                {"layer_index": h, "state_index": s, "deficit_probability": d} for h, s, d in self.failures()
            ],
        }


def check_cover(mdp: BlockMDP, psi: Sequence[Policy], epsilon: float) -> CoverReport:
    """Does ``psi`` reach every (h, s) within ``epsilon`` of the best policy?"""
    psi = list(psi)
    if psi:
        achieved = np.max([exact_visitation(mdp, pi).latent for pi in psi], axis=0)
    else:
        achieved = np.zeros((mdp.horizon, mdp.n_states))
    return CoverReport(achieved, max_reach_table(mdp), float(epsilon), len(psi))


@dataclass
class TruncatedCoverReport:
    covered: np.ndarray
    required: np.ndarray
    mode: str

    @property
    def passed(self) -> bool:
        return bool(np.all(self.covered >= self.required - COVER_SLACK))


def check_truncated_cover(
    mdp: BlockMDP,
    psi: Sequence[Policy],
    h: int,
    alpha: float,
    mode: str,
    *,
    tau: float,
    tau_small: float,
) -> TruncatedCoverReport:
    """Observation-level cover test against the empty-set truncation at layer ``h``.

    ``mode="average"`` compares the mean visitation over ``psi``;
    ``mode="max"`` compares the best member.
    """
    if mode not in ("average", "max"):
        raise ValueError(f"mode must be 'average' or 'max', got {mode!r}")
    occ = np.array([exact_visitation(mdp, pi).obs[h - 1] for pi in psi])
    covered = occ.mean(axis=0) if mode == "average" else occ.max(axis=0)
    trunc = truncate(mdp, (), tau, tau_small)
    dec = mdp.decoder
    best = np.array([max_reach(trunc, h, s)[0] for s in range(mdp.n_states)])
    em = mdp.obs.emissions[h - 1, dec, np.arange(mdp.n_obs)]
    return TruncatedCoverReport(covered, alpha * best[dec] * em, mode)
