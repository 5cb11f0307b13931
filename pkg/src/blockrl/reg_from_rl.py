"""Regression from reward-free RL: dataset-driven horizon-2 gadgets and policy stitching.

Each reduction turns labelled samples into a simulated Block MDP in which an
action is a prediction in [0, 1]. Playing ``a`` on a sample labelled ``y``
diverts the episode to a special ``zero`` observation with probability
``(a - y)^2``. Policies that avoid the diversion are therefore good predictors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetExhausted, NoiselessViolation, UnregisteredObservation
from .mdp_core import BlockMDP, LatentModel, ObservationModel, Policy
from .regression import (
    AugmentedSpace, OneContextDataset, Predictor1, Predictor2, Truth, TwoAug, TwoContextDataset,
    check_realizable,
)
from .rng import Streams, as_streams, categorical


def action_grid(eps_a: float) -> np.ndarray:
    """``{0, eps_a, 2 eps_a, ...}`` up to the largest multiple not exceeding 1."""
    if not 0 < eps_a <= 1:
        raise ValueError("grid spacing must lie in (0, 1]")
    k = int(math.floor(1.0 / eps_a + 1e-9))
    return np.minimum(eps_a * np.arange(k + 1), 1.0)


def zero_prob(a, y):
    """Probability that the simulator diverts to the zero observation."""
    return (np.asarray(a) - np.asarray(y)) ** 2


def expected_zero_prob(a, f):
    """Diversion probability when the label is Bernoulli(f)."""
    return f * zero_prob(a, 1.0) + (1.0 - f) * zero_prob(a, 0.0)


@dataclass(frozen=True)
class GadgetMDP:
    """Explicit horizon-2 Block MDP equivalent to a dataset-driven simulator.

    Observations and states use :class:`AugmentedSpace` numbering; actions
    index ``action_values``.
    """

    mdp: BlockMDP
    action_values: np.ndarray
    space: AugmentedSpace
    decoder: np.ndarray
    latent_f: np.ndarray
    law: np.ndarray
    contexts: str

    @property
    def eps_a(self) -> float:
        return float(self.action_values[1]) if len(self.action_values) > 1 else 1.0


def _conditional_emission(marg: np.ndarray, decoder: np.ndarray, S: int) -> np.ndarray:
    """Emission rows q[s, x] proportional to ``marg`` inside each decoded class."""
    X = len(decoder)
    q = np.zeros((S, X))
    for s in range(S):
        members = decoder == s
        if not np.any(members):
            raise ValueError(f"latent state {s} has no observation")
        mass = marg[members].sum()
        q[s, members] = marg[members] / mass if mass > 0 else 1.0 / members.sum()
    return q


def _augmented_emissions(q_first: np.ndarray, q_second: np.ndarray, space: AugmentedSpace) -> np.ndarray:
    S, X = space.n_states, space.n_obs
    em = np.zeros((2, S + 2, X + 2))
    em[0, :S, :X] = q_first
    em[1, :S, :X] = q_second
    em[:, space.zero_state, space.zero_obs] = 1.0
    em[:, space.one_state, space.one_obs] = 1.0
    return em


def gadget_mdp(phi_star: np.ndarray, f: np.ndarray, D: np.ndarray, eps_a: float) -> GadgetMDP:
    """Explicit two-context gadget for law ``D`` over (x1, x2) and latent target ``f[s1, s2]``."""
    dec = np.asarray(phi_star, dtype=np.int64)
    D = np.asarray(D, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    check_realizable(D, dec)
    S, X = f.shape[0], len(dec)
    space = AugmentedSpace(X, S)
    values = action_grid(eps_a)
    K = len(values)
    m1, m2 = D.sum(axis=1), D.sum(axis=0)
    joint = np.zeros((S, S))
    np.add.at(joint, (dec[:, None].repeat(X, 1), dec[None, :].repeat(X, 0)), D)
    p1 = joint.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(p1[:, None] > 0, joint / np.where(p1 > 0, p1, 1.0)[:, None], 1.0 / S)
    init = np.zeros(S + 2)
    init[:S] = p1
    trans = np.zeros((1, S + 2, K, S + 2))
    div = expected_zero_prob(values[None, :, None], f[:, None, :])  # (s1, a, s2)
    trans[0, :S, :, :S] = cond[:, None, :] * (1.0 - div)
    trans[0, :S, :, space.zero_state] = np.sum(cond[:, None, :] * div, axis=2)
    trans[0, space.zero_state, :, space.zero_state] = 1.0
    trans[0, space.one_state, :, space.one_state] = 1.0
    em = _augmented_emissions(_conditional_emission(m1, dec, S), _conditional_emission(m2, dec, S), space)
    mdp = BlockMDP(LatentModel(2, S + 2, K, init, trans), ObservationModel(X + 2, em, space.decoder(dec)))
    return GadgetMDP(mdp, values, space, dec, f, D, "two")


def one_context_gadget(phi_star: np.ndarray, f: np.ndarray, law: np.ndarray, eps_a: float) -> GadgetMDP:
    """Explicit gadget whose second layer shows only the zero or one observation."""
    dec = np.asarray(phi_star, dtype=np.int64)
    f = np.asarray(f, dtype=np.float64)
    law = np.asarray(law, dtype=np.float64)
    S, X = len(f), len(dec)
    space = AugmentedSpace(X, S)
    values = action_grid(eps_a)
    K = len(values)
    init = np.zeros(S + 2)
    np.add.at(init, dec, law)
    trans = np.zeros((1, S + 2, K, S + 2))
    div = expected_zero_prob(values[None, :], f[:, None])  # (s1, a)
    trans[0, :S, :, space.zero_state] = div
    trans[0, :S, :, space.one_state] = 1.0 - div
    trans[0, space.zero_state, :, space.zero_state] = 1.0
    trans[0, space.one_state, :, space.one_state] = 1.0
    q = _conditional_emission(law, dec, S)
    em = _augmented_emissions(q, q, space)
    mdp = BlockMDP(LatentModel(2, S + 2, K, init, trans), ObservationModel(X + 2, em, space.decoder(dec)))
    return GadgetMDP(mdp, values, space, dec, f, law, "one")


def mean_action(policy: Policy, values: np.ndarray, n_obs: int) -> np.ndarray:
    """Expected action value of ``policy`` at layer 1 for every base context."""
    return policy.table[0, :n_obs] @ values


def loss_tables(gadget: GadgetMDP, policy: Policy, s: int) -> tuple[float, float]:
    """``(L_s, Z_s)``: prediction loss and label variance restricted to second-context state ``s``.

    For a randomized policy the loss averages ``(a - f)^2`` over its actions.
    """
    dec, f, D, values = gadget.decoder, gadget.latent_f, gadget.law, gadget.action_values
    X = len(dec)
    probs = policy.table[0, :X]
    target = f[dec[:, None], dec[None, :]]  # (x1, x2)
    sq = (values[None, None, :] - target[:, :, None]) ** 2
    per_pair = np.einsum("xa,xya->xy", probs, sq)
    mask = (dec == s)[None, :]
    L = float(np.sum(D * mask * per_pair))
    Z = float(np.sum(D * mask * target * (1.0 - target)))
    return L, Z


def simulated_trajectory_likelihood(gadget: GadgetMDP, policy: Policy, x1: int, a: int, x2: int) -> float:
    """Probability that the dataset-driven simulator produces ``(x1, a, x2)``.

    Marginalizes the sample ``(x1, x2', y)`` drawn from the law with
    Bernoulli labels and applies the simulator's diversion rule.
    """
    space, dec, f, values = gadget.space, gadget.decoder, gadget.latent_f, gadget.action_values
    if x1 >= space.n_obs:
        return 0.0  # special contexts never appear at layer 1
    act = values[a]
    pa = policy.table[0, x1, a]
    if gadget.contexts == "two":
        row = gadget.law[x1]
        labels = f[dec[x1], dec]
        if x2 == space.zero_obs:
            return float(pa * np.sum(row * (labels * zero_prob(act, 1) + (1 - labels) * zero_prob(act, 0))))
        if x2 < space.n_obs:
            lab = labels[x2]
            return float(pa * row[x2] * (lab * (1 - zero_prob(act, 1)) + (1 - lab) * (1 - zero_prob(act, 0))))
        return 0.0
    lab = f[dec[x1]]
    p_zero = lab * zero_prob(act, 1) + (1 - lab) * zero_prob(act, 0)
    base = pa * gadget.law[x1]
    if x2 == space.zero_obs:
        return float(base * p_zero)
    if x2 == space.one_obs:
        return float(base * (1 - p_zero))
    return 0.0


class SimulatedEpisodes:
    """Gadget episodes driven by dataset samples; each episode consumes one sample."""

    def __init__(self, x1, x2, y, n_obs: int, values: np.ndarray, rng: np.random.Generator,
                 limit: int, model: BlockMDP | None = None):
        self._x1 = np.asarray(x1, dtype=np.int64)
        self._x2 = None if x2 is None else np.asarray(x2, dtype=np.int64)
        self._y = np.asarray(y, dtype=np.float64)
        self._values = np.asarray(values)
        self._rng = rng
        self._model = model
        self.space = AugmentedSpace(n_obs, 0)
        self.limit = min(limit, len(self._y))
        self.consumed = 0
        self.episodes = 0

    horizon = 2

    @property
    def n_actions(self) -> int:
        return len(self._values)

    @property
    def n_obs(self) -> int:
        return self.space.n_obs + 2

    def reveal_model(self) -> BlockMDP:
        """Verification only: the explicit gadget, when the dataset carries its law."""
        if self._model is None:
            raise RuntimeError("dataset carries no ground truth; the explicit gadget is unavailable")
        return self._model

    def _take(self, n: int) -> np.ndarray:
        if self.consumed + n > self.limit:
            raise DatasetExhausted(
                f"oracle requested {self.consumed + n} episodes; only {self.limit} samples available"
            )
        idx = np.arange(self.consumed, self.consumed + n)
        self.consumed += n
        return idx

    def _second(self, idx: np.ndarray, acts: np.ndarray, labels: np.ndarray) -> np.ndarray:
        divert = self._rng.random(len(idx)) < zero_prob(self._values[acts], labels)
        fallback = self._x2[idx] if self._x2 is not None else np.full(len(idx), self.space.one_obs)
        return np.where(divert, self.space.zero_obs, fallback)

    def rollout(self, tables: np.ndarray, members: np.ndarray, layers: int):
        n = len(members)
        idx = self._take(n)
        self.episodes += n
        obs = np.zeros((n, layers), dtype=np.int64)
        acts = np.zeros((n, max(layers - 1, 0)), dtype=np.int64)
        obs[:, 0] = self._x1[idx]
        self._after_first(obs[:, 0], idx)
        if layers > 1:
            acts[:, 0] = categorical(self._rng, tables[members, 0, obs[:, 0]])
            obs[:, 1] = self._second(idx, acts[:, 0], self._y[idx])
        return obs, acts

    def _after_first(self, xs: np.ndarray, idx: np.ndarray) -> None:
        pass


class SimulatedResets(SimulatedEpisodes):
    """One-context gadget with resets; a reset from ``x`` reuses the label of an earlier sample showing ``x``."""

    def __init__(self, x, y, n_obs: int, values: np.ndarray, rng: np.random.Generator,
                 limit: int, model: BlockMDP | None = None):
        super().__init__(x, None, y, n_obs, values, rng, limit, model)
        self._label_of = np.full(n_obs + 2, -1.0)
        self.queries = 0

    def _after_first(self, xs: np.ndarray, idx: np.ndarray) -> None:
        self._label_of[xs] = self._y[idx]

    def reset_initial_batch(self, n: int) -> np.ndarray:
        idx = self._take(n)
        self.queries += n
        xs = self._x1[idx]
        self._after_first(xs, idx)
        return xs

    def reset_step_batch(self, h: int, xs: np.ndarray, acts: np.ndarray) -> np.ndarray:
        if h != 1:
            raise ValueError("the gadget only resets from layer 1")
        xs = np.asarray(xs, dtype=np.int64)
        labels = self._label_of[xs]
        if np.any(labels < 0):
            raise UnregisteredObservation((h, int(xs[np.argmax(labels < 0)])))
        self.queries += len(xs)
        divert = self._rng.random(len(xs)) < zero_prob(self._values[np.asarray(acts)], labels)
        return np.where(divert, self.space.zero_obs, self.space.one_obs)


def heldout_size(eps: float, delta: float, n_policies: int) -> int:
    return int(math.ceil(16.0 / eps**2 * math.log(4.0 * max(n_policies, 1) / delta)))


@dataclass
class OneRedResult:
    predictor: Predictor1
    policies: list[Policy]
    losses: np.ndarray
    chosen: int
    episodes: int
    heldout: int


def _one_gadget_model(data: OneContextDataset, eps_a: float) -> BlockMDP | None:
    t = data.truth
    if t is None or t.law is None or t.decoder is None or t.latent_f is None:
        return None
    return one_context_gadget(t.decoder, t.latent_f, t.law, eps_a).mdp


def _select(policies: list[Policy], values: np.ndarray, x: np.ndarray, y: np.ndarray, n_obs: int):
    preds = np.array([mean_action(pi, values, n_obs) for pi in policies])
    losses = np.mean((preds[:, x] - y[None, :]) ** 2, axis=1)
    best = int(np.flatnonzero(losses <= losses.min())[0])
    return best, preds[best], losses


def _one_red_run(rl_oracle, data: OneContextDataset, eps: float, delta: float, seed, reset: bool) -> OneRedResult:
    n, X = len(data), data.n_obs
    values = action_grid(math.sqrt(eps / 4))
    K = len(values)
    m_max = heldout_size(eps, delta, rl_oracle.max_policies(2, K))
    budget = rl_oracle.episode_budget(eps / 4, delta / 2, 2, K)
    if budget > n - m_max:
        raise DatasetExhausted(
            f"oracle may need {budget} episodes but only {max(n - m_max, 0)} samples precede the held-out block"
        )
    streams = as_streams(seed)
    model = _one_gadget_model(data, math.sqrt(eps / 4))
    cls = SimulatedResets if reset else SimulatedEpisodes
    if reset:
        access = cls(data.x, data.y, X, values, streams.generator("simulate"), n - m_max, model)
    else:
        access = cls(data.x, None, data.y, X, values, streams.generator("simulate"), n - m_max, model)
    policies = list(rl_oracle(access, eps / 4, delta / 2, 2, K))
    m = heldout_size(eps, delta, len(policies))
    held = np.arange(n - m, n)
    best, pred, losses = _select(policies, values, data.x[held], data.y[held], X)
    return OneRedResult(Predictor1(pred, "one_red"), policies, losses, best, access.episodes, m)


def one_red(rl_oracle, data: OneContextDataset, eps: float, delta: float, seed: int | Streams = 0) -> Predictor1:
    """One-context regression through an episodic reward-free RL oracle."""
    return _one_red_run(rl_oracle, data, eps, delta, seed, reset=False).predictor


def noiseless_one_red(rl_reset_oracle, data: OneContextDataset, eps: float, delta: float,
                      seed: int | Streams = 0) -> Predictor1:
    """One-context regression with deterministic labels through a reset-access RL oracle."""
    label_of = np.full(data.n_obs, -1)
    for x, y in zip(data.x, data.y):
        if label_of[x] >= 0 and label_of[x] != y:
            raise NoiselessViolation(f"context {int(x)} carries both labels")
        label_of[x] = y
    return _one_red_run(rl_reset_oracle, data, eps, delta, seed, reset=True).predictor


@dataclass
class StitchedPredictor:
    """Predict with the policy whose estimated error at the second context is smallest."""

    policies: list[Policy]
    errors: np.ndarray
    action_values: np.ndarray
    n_obs: int

    def choice(self) -> np.ndarray:
        """Index of the chosen policy for every second context; ties go to the lowest index."""
        return np.argmin(self.errors, axis=0)

    def table(self) -> np.ndarray:
        preds = np.array([mean_action(pi, self.action_values, self.n_obs) for pi in self.policies])
        return preds[self.choice()].T

    def predictor(self) -> Predictor2:
        return Predictor2(self.table(), "two_red")


def _error_truth(data: TwoContextDataset, policy: Policy, values: np.ndarray) -> Truth | None:
    """Exact law of the error-labelled second-half dataset for ``policy``."""
    t = data.truth
    if t is None or t.law is None or t.decoder is None or t.latent_f is None:
        return None
    dec, f, law = np.asarray(t.decoder), np.asarray(t.latent_f), np.asarray(t.law)
    X, S = len(dec), f.shape[0]
    probs = policy.table[0, :X]
    target = f[dec[:, None], dec[None, :]]
    per_pair = np.einsum("xa,xya->xy", probs, expected_zero_prob(values[None, None, :], target[:, :, None]))
    marg2 = law.sum(axis=0)
    weighted = (law * per_pair).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(marg2 > 0, weighted / np.where(marg2 > 0, marg2, 1.0), 0.0)
    state_mass = np.bincount(dec, weights=marg2, minlength=S)
    state_sum = np.bincount(dec, weights=weighted, minlength=S)
    latent = np.where(state_mass > 0, state_sum / np.where(state_mass > 0, state_mass, 1.0), 0.0)
    mean = np.where(marg2 > 0, mean, latent[dec])
    return Truth(mean, marg2 / marg2.sum(), dec, latent)


@dataclass
class TwoRedResult:
    stitched: StitchedPredictor
    error_predictors: list[Predictor1]
    episodes: int = 0
    inner_episodes: list[int] = field(default_factory=list)


def two_red_run(rl_oracle, data: TwoContextDataset, eps: float, delta: float, n_states: int,
                inner_eps: float | None = None, seed: int | Streams = 0) -> TwoRedResult:
    """Full trace of :func:`two_red`."""
    n, X = len(data), data.n_obs
    S = n_states
    eps_a = eps / (2 * S)
    values = action_grid(eps_a)
    K = len(values)
    oracle_eps, oracle_delta = eps**2 / (4 * S**2), delta / 2
    half = n // 2
    budget = rl_oracle.episode_budget(oracle_eps, oracle_delta, 2, K)
    if budget > half:
        raise DatasetExhausted(f"oracle may need {budget} episodes but the first half holds {half} samples")
    streams = as_streams(seed)
    model = None
    t = data.truth
    if t is not None and t.law is not None and t.decoder is not None and t.latent_f is not None:
        model = gadget_mdp(t.decoder, t.latent_f, t.law, eps_a).mdp
    access = SimulatedEpisodes(data.x1, data.x2, data.y, X, values, streams.generator("simulate"), half, model)
    policies = list(rl_oracle(access, oracle_eps, oracle_delta, 2, K))
    second = np.arange(half, n)
    inner = inner_eps if inner_eps is not None else eps
    errors, preds, inner_eps_used = [], [], []
    for k, pi in enumerate(policies):
        rng = streams.generator("errors", k)
        probs = pi.table[0, data.x1[second]]
        p = np.sum(probs * zero_prob(values[None, :], data.y[second][:, None]), axis=1)
        z = (rng.random(len(second)) < p).astype(np.int64)
        c_pi = OneContextDataset(data.x2[second], z, X, _error_truth(data, pi, values))
        res = _one_red_run(rl_oracle, c_pi, inner, delta / 2, streams.child("inner", k), reset=False)
        preds.append(res.predictor)
        errors.append(res.predictor.table)
        inner_eps_used.append(res.episodes)
    stitched = StitchedPredictor(policies, np.array(errors), values, X)
    return TwoRedResult(stitched, preds, access.episodes, inner_eps_used)


def two_red(rl_oracle, data: TwoContextDataset, eps: float, delta: float, n_states: int,
            inner_eps: float | None = None, seed: int | Streams = 0) -> Predictor2:
    """Two-context regression through an episodic reward-free RL oracle.

    The first half of the samples drives exploration of the gadget; the
    second half estimates each returned policy's error per second context.
    ``inner_eps`` is the tolerance of those error regressions (default ``eps``).
    """
    return two_red_run(rl_oracle, data, eps, delta, n_states, inner_eps, seed).stitched.predictor()


@dataclass(frozen=True)
class TwoRedOracle:
    """:func:`two_red` packaged as a two-context regression oracle."""

    rl_oracle: object
    n_states: int
    inner_eps: float | None = None
    seed: int = 0
    reads_truth = False

    def __call__(self, data: TwoContextDataset, eps: float, delta: float) -> Predictor2:
        return two_red(self.rl_oracle, data, eps, delta, self.n_states, self.inner_eps, self.seed)


def reg_to_rl(rl_oracle, data: TwoContextDataset, eps: float, delta: float, space: AugmentedSpace,
              inner_eps: float | None = None, seed: int = 0) -> Predictor2:
    """Two-context regression over the augmented context space through an RL oracle."""
    oracle = TwoRedOracle(rl_oracle, space.n_states, inner_eps, seed)
    return TwoAug(oracle, space)(data, eps, delta)
