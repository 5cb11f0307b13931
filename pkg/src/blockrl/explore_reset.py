"""Reward-free exploration under reset access via one-context regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import exact_visitation
from .explore_episodic import (
    ExplorationResult, ExtendReport, PracticalParams, TheoryParams, _log10, center_reward,
    cluster_centers, explore,
)
from .mdp_core import BlockMDP, Policy, mixture
from .psdp import psdp
from .regression import OneContextDataset, Truth
from .rng import Streams, as_streams

SHARING_MODES = ("independent", "shared")

# The reset signature is a posterior over m|A| sources, so its entries are
# O(1/(m|A|)) and each discriminator label is positive at rate 1/(m|A|).
# Tolerances are tighter and per-regression samples larger than in the
# episodic defaults; values tuned on random 3-state, 2-action, horizon-4 instances.
RESET_GAMMA_TOL = 0.03
RESET_GAMMA_SEP = 0.05
RESET_SAMPLE_SCALE = 5


def reset_practical_params(**overrides) -> PracticalParams:
    kw = {"gamma_tol": RESET_GAMMA_TOL, "gamma_sep": RESET_GAMMA_SEP, "sample_scale": RESET_SAMPLE_SCALE}
    kw.update(overrides)
    return PracticalParams(**kw)


def pcr_theory_params(eps_final: float, delta: float, horizon: int, n_states: int, n_actions: int) -> TheoryParams:
    H, S, A = horizon, n_states, n_actions
    tau = eps_final / (4 + H * S)
    rounds = S * H
    tau_s = tau**2 / (rounds * S**2 * H**2)
    alpha = (1 - 4 * tau) / S
    m = 2 / min(alpha * tau, tau_s) * math.log(S / delta)
    n = m * A / tau * math.log(S / delta)
    first = (8 * _log10(alpha) + 16 * _log10(tau) + 8 * _log10(tau_s)
             - 8 * _log10(6) - 8 * _log10(H) - 12 * _log10(m) - 12 * _log10(A))
    cap = 4 * _log10(delta) - 2 * _log10(m) - 2 * _log10(A) - 4 * _log10(n)
    log_eps = min(first, cap)
    return TheoryParams(tau, rounds, tau_s, alpha, m, n, log_eps, log_eps / 8,
                        _log10(2) + log_eps / 4, cap)


def exact_kinematics_w(mdp: BlockMDP, h: int, sources: Sequence[int], s_next: int, s: int, a: int) -> float:
    """Posterior weight of a (source state, action) pair given the successor state.

    ``sources`` is the latent multiset of the discriminators; 0/0 gives 0.
    """
    P = mdp.latent.transitions[h - 1]
    den = P[np.asarray(sources)][:, :, s_next].sum()
    num = P[s, a, s_next]
    return float(num / den) if den > 0 else 0.0


def exact_w_table(mdp: BlockMDP, h: int, sources: Sequence[int]) -> np.ndarray:
    """``w[i, a, s']`` for discriminator i with latent ``sources[i]``."""
    P = mdp.latent.transitions[h - 1]
    num = P[np.asarray(sources)]
    den = num.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def build_discriminator_datasets(
    access, h: int, discriminators: np.ndarray, N: int, streams: Streams,
    mode: str = "independent", model: BlockMDP | None = None,
) -> list[list[OneContextDataset]]:
    """Datasets ``D[i][a]`` labelling whether ``x_{h+1}`` came from discriminator i and action a.

    Each draw resets to a uniformly chosen discriminator, plays a uniform
    action, and records the successor. ``independent`` spends N fresh draws
    per (i, a); ``shared`` relabels a single stream of N draws.
    """
    if mode not in SHARING_MODES:
        raise ValueError(f"mode must be one of {SHARING_MODES}")
    m, A, X = len(discriminators), access.n_actions, access.n_obs
    w = None
    if model is not None:
        w = exact_w_table(model, h, model.decoder[discriminators])

    def draw(tag):
        rng = streams.generator("discriminate", h, *tag)
        j = rng.integers(m, size=N)
        acts = rng.integers(A, size=N)
        nxt = access.reset_step_batch(h, discriminators[j], acts)
        return j, acts, nxt

    shared = draw(("shared",)) if mode == "shared" else None
    out = []
    for i in range(m):
        row = []
        for a in range(A):
            j, acts, nxt = shared if shared is not None else draw((i, a))
            y = ((j == i) & (acts == a)).astype(np.int64)
            truth = None if w is None else Truth(w[i, a][model.decoder])
            row.append(OneContextDataset(nxt, y, X, truth))
        out.append(row)
    return out


def epcr(
    reg1, h: int, psi: Sequence[Sequence[Policy]], gamma: Sequence[Policy], n: int, m: int, N: int,
    gamma_tol: float, gamma_sep: float, access, streams: Streams, eps: float = 0.0, delta: float = 0.0,
    mode: str = "independent", diagnostics: bool = False, max_centers: int | None = None,
) -> tuple[list[Policy], ExtendReport]:
    """Extend covers of layers 1..h to layer h+1 using resets to sampled discriminators."""
    H, X, A = access.horizon, access.n_obs, access.n_actions
    start_ep, start_q = access.episodes, access.queries
    uniform = Policy.uniform(H, X, A)
    members, weights = mixture(psi[h - 1], gamma, uniform)
    rng = streams.generator("samples", h)
    base = np.stack([pi.table for pi in members])
    disc, _ = access.rollout(base, rng.choice(len(members), size=m, p=weights), h)
    disc = disc[:, h - 1]
    model = access.reveal_model() if getattr(reg1, "reads_truth", False) else None
    data = build_discriminator_datasets(access, h, disc, N, streams, mode, model)
    w_hat = np.zeros((X, m, A))
    for i in range(m):
        for a in range(A):
            w_hat[:, i, a] = reg1(data[i][a], eps, delta).table
    sig = w_hat.reshape(X, m * A)
    j = rng.integers(m, size=n)
    acts = rng.integers(A, size=n)
    centers = access.reset_step_batch(h, disc[j], acts)
    report = ExtendReport(layer=h, centers=[int(c) for c in centers])
    report.accepted = cluster_centers(sig, centers, gamma_sep, max_centers)
    out = []
    for t in report.accepted:
        reward = center_reward(sig, int(centers[t]), gamma_tol)
        pi = psdp(h, reg1, reward, psi, gamma, N, access, streams.child("psdp", t), eps, delta)
        out.append(pi)
        if diagnostics:
            report.psdp_values.append(float(exact_visitation(access.reveal_model(), pi).obs[h] @ reward))
    report.episodes = access.episodes - start_ep
    report.queries = access.queries - start_q
    report.budget = reset_extend_budget(h, A, N, m, len(report.accepted))
    return out, report


def reset_extend_budget(h: int, n_actions: int, N: int, m: int, accepted: int) -> int:
    """Episodes (not reset queries) used by one reset-based layer extension."""
    return m + accepted * h * n_actions * N


def reset_query_budget(n_actions: int, N: int, m: int, n: int, mode: str = "independent") -> int:
    draws = N if mode == "shared" else m * n_actions * N
    return draws + n


def pcr(
    reg1, nreg_fn: Callable[[float, float], int] | None, n_states: int, eps_final: float, delta: float,
    access, *, params: PracticalParams | None = None, seed: int | Streams = 0, mode: str = "independent",
    diagnostics: bool = False,
) -> ExplorationResult:
    """Policy cover for a Block MDP under reset access from a one-context regression oracle."""
    params = params or reset_practical_params()
    default_n = nreg_fn(eps_final, delta) if nreg_fn is not None else getattr(reg1, "default_samples", 2000)
    params = params.resolve(n_states, access.n_actions, access.horizon, default_n)
    streams = as_streams(seed)

    def extend(h, covers, backup, acc, sub):
        return epcr(reg1, h, covers, backup, params.n, params.m, params.N, params.gamma_tol,
                    params.gamma_sep, acc, sub, eps_final, delta, mode, diagnostics, params.max_centers)

    return explore(extend, n_states, params, access, streams)


@dataclass
class ResetExplorer:
    """Reset-based exploration callable as a reward-free RL oracle."""

    reg1: object
    n_states: int
    params: PracticalParams = field(default_factory=reset_practical_params)
    seed: int = 0
    mode: str = "independent"
    reset = True

    def resolved(self, horizon: int, n_actions: int) -> PracticalParams:
        return self.params.resolve(self.n_states, n_actions, horizon, getattr(self.reg1, "default_samples", 2000))

    def episode_budget(self, eps: float, delta: float, horizon: int, n_actions: int) -> int:
        p = self.resolved(horizon, n_actions)
        return p.rounds * sum(reset_extend_budget(h, n_actions, p.N, p.m, p.center_cap) for h in range(1, horizon))

    def max_policies(self, horizon: int, n_actions: int) -> int:
        return horizon**2 * self.n_states**2

    def __call__(self, access, eps: float, delta: float, horizon: int, n_actions: int) -> list[Policy]:
        res = pcr(self.reg1, None, self.n_states, eps, delta, access,
                  params=self.resolved(horizon, n_actions), seed=self.seed, mode=self.mode)
        return res.policies
