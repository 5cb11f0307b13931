"""Policy search by backward per-layer Q regression."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp_core import BlockMDP, Policy, mixture
from .regression import OneContextDataset, Truth
from .rng import Streams


def check_reward(reward: np.ndarray, n_obs: int) -> np.ndarray:
    """A reward is a vector over observations in [0, 1]; the terminal earns 0 implicitly."""
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (n_obs,):
        raise ValueError(f"reward must have shape ({n_obs},), got {reward.shape}")
    if np.any(reward < 0) or np.any(reward > 1):
        raise ValueError("reward values must lie in [0, 1]")
    return reward


def true_q(mdp: BlockMDP, policy: Policy, k: int, reward: np.ndarray, h: int | None = None):
    """Exact Q and V for reward ``reward(x_{k+1})`` under ``policy``.

    Returns arrays ``Q[g-1, x, a]`` and ``V[g-1, x]`` for g = 1..k+1, or only
    layer ``h`` when given.
    """
    X, A, S = mdp.n_obs, mdp.n_actions, mdp.n_states
    dec = mdp.decoder
    cols = np.arange(X)
    Q = np.zeros((k + 1, X, A))
    V = np.zeros((k + 1, X))
    V[k] = reward
    Q[k] = reward[:, None]
    for g in range(k, 0, -1):
        em = mdp.obs.emissions[g, dec, cols]
        per_state = np.bincount(dec, weights=em * V[g], minlength=S)
        Q[g - 1] = mdp.latent.transitions[g - 1][dec] @ per_state
        V[g - 1] = np.sum(policy.table[g - 1] * Q[g - 1], axis=1)
    if h is None:
        return Q, V
    return Q[h - 1], V[h - 1]


@dataclass
class PsdpTrace:
    """Per-layer regression outputs, kept for verification."""

    q_hat: dict[int, np.ndarray] = field(default_factory=dict)
    datasets: dict[tuple[int, int], OneContextDataset] = field(default_factory=dict)
    episodes: int = 0


def psdp(
    k: int,
    reg1,
    reward: np.ndarray,
    psi: Sequence[Sequence[Policy]],
    gamma: Sequence[Policy],
    N: int,
    access,
    streams: Streams,
    eps: float = 0.0,
    delta: float = 0.0,
    trace: PsdpTrace | None = None,
) -> Policy:
    """Greedy policy maximizing expected ``reward(x_{k+1})``.

    ``psi[h-1]`` is the roll-in cover for layer h. Layers above k play
    uniformly. Uses exactly ``k * |A| * N`` episodes.
    """
    H, X, A = access.horizon, access.n_obs, access.n_actions
    uniform = Policy.uniform(H, X, A)
    if k == 0:
        return uniform
    if not 1 <= k <= H - 1:
        raise ValueError(f"k must be in [0, H-1], got {k}")
    reward = check_reward(reward, X)
    greedy = uniform.table.copy()
    model = access.reveal_model() if getattr(reg1, "reads_truth", False) else None
    for h in range(k, 0, -1):
        members, weights = mixture(psi[h - 1], gamma, uniform)
        base = np.stack([pi.table for pi in members])
        q_hat = np.zeros((X, A))
        exact_q = None
        if model is not None:
            exact_q = true_q(model, Policy(greedy), k, reward, h)[0]
        for a in range(A):
            rng = streams.generator("layer", h, "action", a)
            tables = base.copy()
            tables[:, h - 1] = 0.0
            tables[:, h - 1, :, a] = 1.0
            tables[:, h:k] = greedy[h:k]
            who = rng.choice(len(members), size=N, p=weights)
            obs, _ = access.rollout(tables, who, k + 1)
            r = (rng.random(N) < reward[obs[:, k]]).astype(np.int64)
            truth = None if exact_q is None else Truth(exact_q[:, a])
            data = OneContextDataset(obs[:, h - 1], r, X, truth)
            q_hat[:, a] = reg1(data, eps, delta).table
            if trace is not None:
                trace.datasets[(h, a)] = data
                trace.episodes += N
        greedy[h - 1] = 0.0
        greedy[h - 1, np.arange(X), np.argmax(q_hat, axis=1)] = 1.0
        if trace is not None:
            trace.q_hat[h] = q_hat
    return Policy(greedy, "greedy-table")
