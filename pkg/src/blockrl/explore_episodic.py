"""Reward-free exploration under episodic access via two-context regression."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import exact_visitation
from .mdp_core import BlockMDP, Policy, mixture
from .psdp import psdp
from .regression import OneTwo, TwoContextDataset, Truth
from .rng import Streams, as_streams


@dataclass(frozen=True)
class PracticalParams:
    """User-tunable constants; ``None`` fields take size-based defaults."""

    m: int | None = None
    n: int | None = None
    N: int | None = None
    gamma_tol: float = 0.05
    gamma_sep: float = 0.15
    rounds: int | None = None
    max_centers: int | None = None
    sample_scale: int = 1

    def resolve(self, n_states: int, n_actions: int, horizon: int, default_samples: int) -> "PracticalParams":
        return PracticalParams(
            m=self.m if self.m is not None else 8 * n_states,
            n=self.n if self.n is not None else 8 * n_states * n_actions,
            N=self.N if self.N is not None else default_samples * self.sample_scale,
            gamma_tol=self.gamma_tol,
            gamma_sep=self.gamma_sep,
            rounds=self.rounds if self.rounds is not None else n_states * horizon,
            max_centers=self.max_centers,
            sample_scale=self.sample_scale,
        )

    @property
    def center_cap(self) -> int:
        """Accepted centers per extension; uncapped means every candidate may be accepted."""
        return self.n if self.max_centers is None else min(self.max_centers, self.n)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TheoryParams:
    """Worst-case constants, reported in log space because the tolerance underflows.

    Not executable: no sample count is attached to the regression oracle.
    """

    tau: float
    rounds: int
    tau_small: float
    alpha: float
    m: float
    n: float
    log10_eps: float
    log10_gamma_tol: float
    log10_gamma_sep: float
    log10_eps_cap: float

    def to_dict(self) -> dict:
        return asdict(self)


def _log10(x: float) -> float:
    return math.log10(x)


def pco_theory_params(eps_final: float, delta: float, horizon: int, n_states: int, n_actions: int) -> TheoryParams:
    H, S, A = horizon, n_states, n_actions
    tau = eps_final / (4 + H * S)
    rounds = S * H
    tau_s = tau**2 / (rounds * S**2 * H**2)
    alpha = (1 - 4 * tau) / S
    m = 2 / min(alpha * tau, tau_s) * math.log(S / delta)
    n = m * A / tau
    first = (32 * _log10(alpha) + 64 * _log10(tau) + 32 * _log10(tau_s)
             - 16 * _log10(96) - 16 * _log10(H) - 16 * _log10(S) - 32 * _log10(A) - 8 * _log10(m))
    cap = 4 * _log10(delta) - _log10(81) - 4 * _log10(n)
    log_eps = min(first, cap)
    return TheoryParams(tau, rounds, tau_s, alpha, m, n, log_eps, log_eps / 16,
                        _log10(2) + log_eps / 8 + 0.5 * _log10(m * A), cap)


def build_contrastive_dataset(
    access, h: int, members: Sequence[Policy], weights: np.ndarray, a: int, N: int, streams: Streams,
    model: BlockMDP | None = None,
) -> TwoContextDataset:
    """Real-vs-fake transition pairs at layer h under action ``a``.

    Label 1 pairs ``(x_h, x_{h+1})`` from one episode; label 0 pairs the same
    ``x_h`` with ``x_{h+1}`` from an independent episode that plays a uniform
    action at h. Uses ``2 N`` episodes. ``model`` attaches the exact
    conditional mean.
    """
    X, A = access.n_obs, access.n_actions
    rng = streams.generator("contrastive", h, a)
    base = np.stack([pi.table for pi in members])
    real = base.copy()
    real[:, h - 1] = 0.0
    real[:, h - 1, :, a] = 1.0
    fake = base.copy()
    fake[:, h - 1] = 1.0 / A
    obs_real, _ = access.rollout(real, rng.choice(len(members), size=N, p=weights), h + 1)
    obs_fake, _ = access.rollout(fake, rng.choice(len(members), size=N, p=weights), h + 1)
    y = (rng.random(N) < 0.5).astype(np.int64)
    second = np.where(y == 1, obs_real[:, h], obs_fake[:, h])
    truth = None
    if model is not None:
        f = exact_kinematics_f(model, h, members, weights)
        dec = model.decoder
        truth = Truth(f[dec[:, None], dec[None, :], a])
    return TwoContextDataset(obs_real[:, h - 1], second, y, X, truth)


def exact_kinematics_f(mdp: BlockMDP, h: int, members: Sequence[Policy], weights: np.ndarray) -> np.ndarray:
    """``f[s, s', a] = P(s'|s,a) / (P(s'|s,a) + F(s'))`` with F the uniform-action successor law.

    The roll-in is the weighted mixture of ``members``; pairs with
    ``P = F = 0`` get 0.
    """
    beta = np.zeros(mdp.n_states)
    for pi, w in zip(members, weights):
        beta += w * exact_visitation(mdp, pi).latent[h - 1]
    P = mdp.latent.transitions[h - 1]
    F = np.einsum("s,sat->t", beta, P) / mdp.n_actions
    num = np.transpose(P, (0, 2, 1))
    den = num + F[None, :, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def roll_in_marginal(mdp: BlockMDP, h: int, members: Sequence[Policy], weights: np.ndarray) -> np.ndarray:
    """Latent law at layer h under the weighted mixture of ``members``."""
    return sum(w * exact_visitation(mdp, pi).latent[h - 1] for pi, w in zip(members, weights))


def signature_distance(sig: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Max-norm distance from each row of ``sig`` to ``center``."""
    return np.max(np.abs(sig - center[None, :]), axis=1)


def cluster_centers(sig: np.ndarray, centers: np.ndarray, gamma_sep: float, cap: int | None = None) -> list[int]:
    """Indices t (in order) whose signature is strictly farther than ``gamma_sep`` from all accepted ones.

    Scanning stops once ``cap`` centers are accepted.
    """
    accepted: list[int] = []
    for t, x in enumerate(centers):
        if cap is not None and len(accepted) >= cap:
            break
        if all(np.max(np.abs(sig[x] - sig[centers[u]])) > gamma_sep for u in accepted):
            accepted.append(t)
    return accepted


def center_reward(sig: np.ndarray, center_obs: int, gamma_tol: float) -> np.ndarray:
    return np.maximum(0.0, 1.0 - signature_distance(sig, sig[center_obs]) / gamma_tol)


@dataclass
class ExtendReport:
    layer: int
    centers: list[int] = field(default_factory=list)
    accepted: list[int] = field(default_factory=list)
    episodes: int = 0
    budget: int = 0
    queries: int = 0
    psdp_values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "layer_index": self.layer,
            "n_centers_count": len(self.centers),
            "accepted_centers_count": len(self.accepted),
            "accepted_center_observation_indices": [self.centers[t] for t in self.accepted],
            "episodes_count": self.episodes,
            "episode_budget_count": self.budget,
            "reset_queries_count": self.queries,
            "psdp_achieved_probability": self.psdp_values,
        }


def _model_if(access, needed: bool) -> BlockMDP | None:
    return access.reveal_model() if needed else None


def epco(
    reg2, h: int, psi: Sequence[Sequence[Policy]], gamma: Sequence[Policy], n: int, m: int, N: int,
    gamma_tol: float, gamma_sep: float, access, streams: Streams, eps: float = 0.0, delta: float = 0.0,
    diagnostics: bool = False, max_centers: int | None = None,
) -> tuple[list[Policy], ExtendReport]:
    """Extend covers ``psi[0..h-1]`` of layers 1..h to a cover of layer h+1."""
    H, X, A = access.horizon, access.n_obs, access.n_actions
    start = access.episodes
    uniform = Policy.uniform(H, X, A)
    members, weights = mixture(psi[h - 1], gamma, uniform)
    model = _model_if(access, getattr(reg2, "reads_truth", False))
    f_hat = np.zeros((A, X, X))
    for a in range(A):
        data = build_contrastive_dataset(access, h, members, weights, a, N, streams, model)
        f_hat[a] = reg2(data, eps, delta).table
    rng = streams.generator("samples", h)
    base = np.stack([pi.table for pi in members])
    tests, _ = access.rollout(base, rng.choice(len(members), size=m, p=weights), h)
    tests = tests[:, h - 1]
    fake = base.copy()
    fake[:, h - 1] = 1.0 / A
    centers, _ = access.rollout(fake, rng.choice(len(members), size=n, p=weights), h + 1)
    centers = centers[:, h]
    # signature of x: f_hat(x_test_i, x; a) over (i, a)
    sig = f_hat[:, tests, :].transpose(2, 1, 0).reshape(X, m * A)
    report = ExtendReport(layer=h, centers=[int(c) for c in centers])
    report.accepted = cluster_centers(sig, centers, gamma_sep, max_centers)
    reg1 = OneTwo(reg2)
    out = []
    for t in report.accepted:
        reward = center_reward(sig, int(centers[t]), gamma_tol)
        pi = psdp(h, reg1, reward, psi, gamma, N, access, streams.child("psdp", t), eps, delta)
        out.append(pi)
        if diagnostics:
            mdp = access.reveal_model()
            report.psdp_values.append(float(exact_visitation(mdp, pi).obs[h] @ reward))
    report.episodes = access.episodes - start
    report.budget = extend_budget(h, A, N, m, n, len(report.accepted))
    return out, report


def extend_budget(h: int, n_actions: int, N: int, m: int, n: int, accepted: int) -> int:
    """Episodes used by one layer extension with ``accepted`` PSDP calls."""
    return 2 * N * n_actions + m + n + accepted * h * n_actions * N


@dataclass
class ExplorationResult:
    policies: list[Policy]
    params: PracticalParams
    rounds: list[list[dict]] = field(default_factory=list)
    episodes: int = 0
    budget: int = 0
    queries: int = 0

    def __iter__(self):
        return iter(self.policies)

    def __len__(self) -> int:
        return len(self.policies)


def _dedupe(policies: Sequence[Policy]) -> list[Policy]:
    seen: dict[bytes, Policy] = {}
    for pi in policies:
        seen.setdefault(pi.key(), pi)
    return list(seen.values())


def explore(extend: Callable, n_states: int, params: PracticalParams, access, streams: Streams) -> ExplorationResult:
    """Outer loop shared by the episodic and reset algorithms.

    Each round rebuilds covers layer by layer with the current backup set;
    size-bounded covers join the backup set and the output.
    """
    H, X, A = access.horizon, access.n_obs, access.n_actions
    uniform = Policy.uniform(H, X, A)
    backup: list[Policy] = []
    output: list[Policy] = []
    result = ExplorationResult([], params)
    start_episodes = access.episodes
    start_queries = getattr(access, "queries", 0)
    for r in range(params.rounds):
        covers: list[list[Policy]] = [[uniform]]
        reports = []
        for h in range(1, H):
            nxt, report = extend(h, covers, list(backup), access, streams.child("round", r, "layer", h))
            covers.append(nxt)
            reports.append(report.to_dict())
            result.budget += report.budget
        small = [c for c in covers if len(c) <= n_states]
        for c in small:
            backup.extend(c)
            output.extend(c)
        backup = _dedupe(backup)
        result.rounds.append(reports)
    result.policies = _dedupe(output)
    result.episodes = access.episodes - start_episodes
    result.queries = getattr(access, "queries", 0) - start_queries
    return result


def pco(
    reg2, nreg_fn: Callable[[float, float], int] | None, n_states: int, eps_final: float, delta: float,
    access, *, params: PracticalParams | None = None, seed: int | Streams = 0, diagnostics: bool = False,
) -> ExplorationResult:
    """Policy cover for an episodic Block MDP from a two-context regression oracle.

    Horizon and action count come from ``access``. ``nreg_fn(eps, delta)``
    sets the per-regression sample count unless ``params.N`` overrides it.
    """
    params = params or PracticalParams()
    default_n = nreg_fn(eps_final, delta) if nreg_fn is not None else getattr(reg2, "default_samples", 2000)
    params = params.resolve(n_states, access.n_actions, access.horizon, default_n)
    streams = as_streams(seed)

    def extend(h, covers, backup, acc, sub):
        return epco(reg2, h, covers, backup, params.n, params.m, params.N, params.gamma_tol,
                    params.gamma_sep, acc, sub, eps_final, delta, diagnostics, params.max_centers)

    return explore(extend, n_states, params, access, streams)


def worst_case_budget(params: PracticalParams, horizon: int, n_actions: int) -> int:
    """Episode demand when every extension accepts as many centers as allowed."""
    cap = params.center_cap
    per_round = sum(extend_budget(h, n_actions, params.N, params.m, params.n, cap) for h in range(1, horizon))
    return params.rounds * per_round


@dataclass
class EpisodicExplorer:
    """Exploration with a fixed oracle and constants, callable as a reward-free RL oracle."""

    reg2: object
    n_states: int
    params: PracticalParams = field(default_factory=PracticalParams)
    seed: int = 0
    reset = False

    def resolved(self, horizon: int, n_actions: int) -> PracticalParams:
        return self.params.resolve(self.n_states, n_actions, horizon, getattr(self.reg2, "default_samples", 2000))

    def episode_budget(self, eps: float, delta: float, horizon: int, n_actions: int) -> int:
        return worst_case_budget(self.resolved(horizon, n_actions), horizon, n_actions)

    def max_policies(self, horizon: int, n_actions: int) -> int:
        return horizon**2 * self.n_states**2

    def __call__(self, access, eps: float, delta: float, horizon: int, n_actions: int) -> list[Policy]:
        res = pco(self.reg2, None, self.n_states, eps, delta, access,
                  params=self.resolved(horizon, n_actions), seed=self.seed)
        return res.policies
