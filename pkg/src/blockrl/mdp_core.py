"""Finite Block MDPs, tabular policies, and the episodic and reset access handles.

Layers are 1-based in every public signature (``h`` in ``1..H``); arrays carry
a leading layer axis indexed ``h - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EpisodeClosed, InvariantViolation, UnregisteredObservation
from .rng import categorical

RENORM_SLACK = 1e-6
SUM_TOL = 1e-9


def _stochastic(arr: np.ndarray, invariant: str) -> np.ndarray:
    """Validate the last axis as probability vectors, renormalizing tiny drift."""
    arr = np.array(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(invariant, "non-finite probability")
    if np.any(arr < 0):
        raise InvariantViolation(invariant, f"negative probability {arr.min()!r}")
    sums = arr.sum(axis=-1)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > RENORM_SLACK:
        bad = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        raise InvariantViolation(
            invariant, f"row {tuple(int(i) for i in bad)} sums to {float(sums[bad])!r}"
        )
    # rows already within SUM_TOL are kept bit-for-bit so serialization round-trips
    if worst > SUM_TOL:
        arr = arr / sums[..., None]
    arr.setflags(write=False)
    return arr


def _frozen(arr: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LatentModel:
    """Latent chain: ``initial[s]`` and ``transitions[h-1, s, a, s']`` into layer h+1."""

    horizon: int
    n_states: int
    n_actions: int
    initial: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        if self.horizon < 1 or self.n_states < 1 or self.n_actions < 1:
            raise InvariantViolation("LatentModel.sizes", "H, |S|, |A| must be >= 1")
        init = _stochastic(self.initial, "LatentModel.P1")
        if init.shape != (self.n_states,):
            raise InvariantViolation("LatentModel.P1", f"shape {init.shape}")
        trans = np.asarray(self.transitions, dtype=np.float64)
        if self.horizon == 1 and trans.size == 0:
            trans = np.zeros((0, self.n_states, self.n_actions, self.n_states))
        expect = (self.horizon - 1, self.n_states, self.n_actions, self.n_states)
        if trans.shape != expect:
            raise InvariantViolation("LatentModel.P", f"shape {trans.shape}, expected {expect}")
        trans = _stochastic(trans, "LatentModel.P") if trans.size else _frozen(trans)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transitions", trans)


@dataclass(frozen=True)
class ObservationModel:
    """Emissions ``emissions[h-1, s, x]`` and the true decoder ``decoder[x]``."""

    n_obs: int
    emissions: np.ndarray
    decoder: np.ndarray

    def __post_init__(self):
        dec = _frozen(self.decoder, dtype=np.int64)
        if dec.shape != (self.n_obs,):
            raise InvariantViolation("ObservationModel.decoder", f"shape {dec.shape}")
        em = _stochastic(self.emissions, "ObservationModel.O")
        if em.ndim != 3 or em.shape[2] != self.n_obs:
            raise InvariantViolation("ObservationModel.O", f"shape {em.shape}")
        if dec.size and (dec.min() < 0 or dec.max() >= em.shape[1]):
            raise InvariantViolation("ObservationModel.decoder", "state index out of range")
        owner = dec[None, None, :] == np.arange(em.shape[1])[None, :, None]
        leak = (em > 0) & ~owner
        if np.any(leak):
            h, s, x = (int(i) for i in np.argwhere(leak)[0])
            raise InvariantViolation(
                "ObservationModel.disjoint_support",
                f"layer {h + 1} state {s} emits observation {x} decoded as {int(dec[x])}",
            )
        object.__setattr__(self, "decoder", dec)
        object.__setattr__(self, "emissions", em)


@dataclass(frozen=True)
class BlockMDP:
    latent: LatentModel
    obs: ObservationModel
    concept_class: object | None = None

    def __post_init__(self):
        expect = (self.latent.horizon, self.latent.n_states)
        if self.obs.emissions.shape[:2] != expect:
            raise InvariantViolation(
                "BlockMDP.consistency",
                f"emissions cover {self.obs.emissions.shape[:2]}, latent model has {expect}",
            )

    @property
    def horizon(self) -> int:
        return self.latent.horizon

    @property
    def n_states(self) -> int:
        return self.latent.n_states

    @property
    def n_actions(self) -> int:
        return self.latent.n_actions

    @property
    def n_obs(self) -> int:
        return self.obs.n_obs

    @property
    def decoder(self) -> np.ndarray:
        return self.obs.decoder

    def observed_transition(self, h: int, x: int, a: int) -> np.ndarray:
        """P_{h+1}(.|x, a) over observations, derived from the latent chain."""
        latent_next = self.latent.transitions[h - 1, self.decoder[x], a]
        em = self.obs.emissions[h]
        return latent_next[self.decoder] * em[self.decoder, np.arange(self.n_obs)]

    def initial_observation_law(self) -> np.ndarray:
        em = self.obs.emissions[0]
        return self.latent.initial[self.decoder] * em[self.decoder, np.arange(self.n_obs)]


POLICY_KINDS = ("uniform", "fixed-action", "greedy-table", "composed", "mixture-member")


@dataclass(frozen=True, eq=False)
class Policy:
    """Tabular non-stationary policy ``table[h-1, x, a]``."""

    table: np.ndarray
    kind: str = "greedy-table"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        tab = _stochastic(self.table, "Policy.table")
        if tab.ndim != 3:
            raise InvariantViolation("Policy.table", f"expected (H, X, A), got {tab.shape}")
        object.__setattr__(self, "table", tab)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def probs(self, h: int, x: int) -> np.ndarray:
        return self.table[h - 1, x]

    def key(self) -> bytes:
        return self.table.tobytes()

    @classmethod
    def uniform(cls, horizon: int, n_obs: int, n_actions: int) -> "Policy":
        return cls(np.full((horizon, n_obs, n_actions), 1.0 / n_actions), "uniform")

    @classmethod
    def fixed_actions(cls, actions: Sequence[int], n_obs: int, n_actions: int) -> "Policy":
        tab = np.zeros((len(actions), n_obs, n_actions))
        for h, a in enumerate(actions):
            tab[h, :, a] = 1.0
        return cls(tab, "fixed-action")

    @classmethod
    def greedy(cls, actions: np.ndarray, n_actions: int) -> "Policy":
        """Deterministic policy from an (H, X) table of action indices."""
        actions = np.asarray(actions, dtype=np.int64)
        tab = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(tab, actions[..., None], 1.0, axis=-1)
        return cls(tab, "greedy-table")


def compose(pi: Policy, h: int, pi2: Policy) -> Policy:
    """Play ``pi`` at layers below ``h`` and ``pi2`` at layers ``h`` and above."""
    if pi.table.shape != pi2.table.shape:
        raise ValueError("composed policies must share (H, X, A)")
    cut = min(max(h - 1, 0), pi.horizon)
    tab = np.concatenate([pi.table[:cut], pi2.table[cut:]], axis=0)
    return Policy(tab, "composed")


def mixture(psi: Sequence[Policy], gamma: Sequence[Policy], uniform: Policy) -> tuple[list[Policy], np.ndarray]:
    """Members and weights of 1/2 Unif(psi) + 1/2 Unif(gamma).

    One empty set leaves the uniform mixture over the other; both empty leave
    the uniform policy.
    """
    psi, gamma = list(psi), list(gamma)
    if not psi and not gamma:
        return [uniform], np.ones(1)
    if not gamma:
        return psi, np.full(len(psi), 1.0 / len(psi))
    if not psi:
        return gamma, np.full(len(gamma), 1.0 / len(gamma))
    weights = np.concatenate([np.full(len(psi), 0.5 / len(psi)), np.full(len(gamma), 0.5 / len(gamma))])
    return psi + gamma, weights


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    _latents: np.ndarray = field(repr=False, default=None)

    def reveal_latents(self) -> np.ndarray:
        """Verification only: the hidden latent trace."""
        return self._latents


class EpisodicAccess:
    """Episode-at-a-time interaction; algorithms see observation ids only."""

    def __init__(self, mdp: BlockMDP, rng: np.random.Generator):
        self._mdp = mdp
        self._rng = rng
        self.episodes = 0
        self._cursor: int | None = None
        self._state: int | None = None

    @property
    def horizon(self) -> int:
        return self._mdp.horizon

    @property
    def n_actions(self) -> int:
        return self._mdp.n_actions

    @property
    def n_obs(self) -> int:
        return self._mdp.n_obs

    def reveal_model(self) -> BlockMDP:
        """Verification only: the wrapped environment."""
        return self._mdp

    def _emit(self, h: int, states: np.ndarray) -> np.ndarray:
        return categorical(self._rng, self._mdp.obs.emissions[h - 1][states])

    def _register(self, h: int, xs: np.ndarray) -> None:
        pass

    def new_episode(self) -> int:
        self.episodes += 1
        s = int(categorical(self._rng, self._mdp.latent.initial[None])[0])
        x = int(self._emit(1, np.array([s]))[0])
        self._cursor, self._state = 1, s
        self._register(1, np.array([x]))
        return x

    def step(self, a: int) -> int | None:
        """Submit the action for the current layer; returns the next observation or None at the horizon."""
        if self._cursor is None:
            raise EpisodeClosed("no open episode")
        h = self._cursor
        if h == self.horizon:
            self._cursor = None
            return None
        probs = self._mdp.latent.transitions[h - 1, self._state, a]
        s = int(categorical(self._rng, probs[None])[0])
        x = int(self._emit(h + 1, np.array([s]))[0])
        self._cursor, self._state = h + 1, s
        self._register(h + 1, np.array([x]))
        return x

    def rollout(self, tables: np.ndarray, members: np.ndarray, layers: int) -> tuple[np.ndarray, np.ndarray]:
        """Run ``len(members)`` episodes up to layer ``layers``.

        ``tables`` stacks policy tables (M, H, X, A); episode i follows
        ``tables[members[i]]``. Returns observations (n, layers) and the
        actions taken at layers 1..layers-1.
        """
        n = len(members)
        self.episodes += n
        obs = np.zeros((n, layers), dtype=np.int64)
        acts = np.zeros((n, max(layers - 1, 0)), dtype=np.int64)
        s = categorical(self._rng, np.broadcast_to(self._mdp.latent.initial, (n, self._mdp.n_states)))
        obs[:, 0] = self._emit(1, s)
        self._register(1, obs[:, 0])
        for h in range(1, layers):
            a = categorical(self._rng, tables[members, h - 1, obs[:, h - 1]])
            acts[:, h - 1] = a
            s = categorical(self._rng, self._mdp.latent.transitions[h - 1][s, a])
            obs[:, h] = self._emit(h + 1, s)
            self._register(h + 1, obs[:, h])
        return obs, acts


class ResetAccess(EpisodicAccess):
    """Episodic access plus restarts from previously issued observations."""

    def __init__(self, mdp: BlockMDP, rng: np.random.Generator):
        super().__init__(mdp, rng)
        self.queries = 0
        self._registry = np.zeros((mdp.horizon, mdp.n_obs), dtype=bool)

    def _register(self, h: int, xs: np.ndarray) -> None:
        self._registry[h - 1, xs] = True

    def is_registered(self, h: int, x: int) -> bool:
        return bool(self._registry[h - 1, x])

    def reset_initial_batch(self, n: int) -> np.ndarray:
        self.queries += n
        s = categorical(self._rng, np.broadcast_to(self._mdp.latent.initial, (n, self._mdp.n_states)))
        xs = self._emit(1, s)
        self._register(1, xs)
        return xs

    def reset_step_batch(self, h: int, xs: np.ndarray, acts: np.ndarray) -> np.ndarray:
        if not 1 <= h < self.horizon:
            raise ValueError(f"reset_step needs 1 <= h < H, got h={h}")
        xs = np.asarray(xs, dtype=np.int64)
        missing = ~self._registry[h - 1, xs]
        if np.any(missing):
            raise UnregisteredObservation((h, int(xs[np.argmax(missing)])))
        self.queries += len(xs)
        s = self._mdp.decoder[xs]
        nxt = categorical(self._rng, self._mdp.latent.transitions[h - 1][s, np.asarray(acts)])
        out = self._emit(h + 1, nxt)
        self._register(h + 1, out)
        return out

    def reset_initial(self) -> int:
        return int(self.reset_initial_batch(1)[0])

    def reset_step(self, h: int, x: int, a: int) -> int:
        return int(self.reset_step_batch(h, np.array([x]), np.array([a]))[0])


def sample_episode(access: EpisodicAccess, policy: Policy, rng: np.random.Generator) -> Trajectory:
    """Play ``policy`` for a full episode; action draws use ``rng``."""
    xs, acts = [], []
    x = access.new_episode()
    latents = [access._state]
    for h in range(1, access.horizon + 1):
        xs.append(x)
        a = int(categorical(rng, policy.table[h - 1, x][None])[0])
        acts.append(a)
        x = access.step(a)
        if x is not None:
            latents.append(access._state)
    return Trajectory(np.array(xs), np.array(acts), np.array(latents))


def trajectory_likelihood(mdp: BlockMDP, policy: Policy, observations: Sequence[int], actions: Sequence[int]) -> float:
    """Probability of observing the prefix ``x_1, a_1, ..., x_L`` (and ``a_L`` if given)."""
    dec = mdp.decoder
    x = observations[0]
    p = mdp.latent.initial[dec[x]] * mdp.obs.emissions[0, dec[x], x]
    for h in range(1, len(observations) + 1):
        if h - 1 < len(actions):
            p *= policy.table[h - 1, observations[h - 1], actions[h - 1]]
        if h < len(observations):
            x, nx = observations[h - 1], observations[h]
            p *= mdp.latent.transitions[h - 1, dec[x], actions[h - 1], dec[nx]]
            p *= mdp.obs.emissions[h, dec[nx], nx]
    return float(p)
