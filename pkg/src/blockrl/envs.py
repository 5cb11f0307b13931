"""Seeded generators for test environments and regression datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import max_reach_table
from .errors import GenerationTimeout
from .mdp_core import BlockMDP, LatentModel, ObservationModel
from .regression import ConceptClass, OneContextDataset, Truth, TwoContextDataset, check_realizable

GOOD, BAD = 0, 1


def _decoys(rng: np.random.Generator, decoder: np.ndarray, n_states: int, count: int, permute_only: bool) -> list[np.ndarray]:
    """Distinct decoders that differ from ``decoder`` on at least one observation."""
    out: list[np.ndarray] = []
    seen = {decoder.tobytes()}
    X = len(decoder)
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 100 * (count + 1):
            raise GenerationTimeout("could not generate enough distinct decoy decoders")
        if permute_only:
            cand = decoder[rng.permutation(X)]
        elif rng.random() < 0.5:
            cand = decoder.copy()
            flips = rng.choice(X, size=rng.integers(1, max(2, X // 3) + 1), replace=False)
            cand[flips] = rng.integers(n_states, size=len(flips))
        else:
            cand = rng.integers(n_states, size=X)
        key = cand.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(cand)
    return out


def _concept_class(rng: np.random.Generator, decoder: np.ndarray, n_states: int, total: int, permute_only: bool) -> ConceptClass:
    # never ask for more decoys than distinct total maps exist
    total = min(total, n_states ** len(decoder))
    decoys = _decoys(rng, decoder, n_states, total - 1, permute_only)
    where = int(rng.integers(total))
    maps = decoys[:where] + [decoder] + decoys[where:]
    return ConceptClass(np.stack(maps), n_states, where)


def make_lock(
    H: int, A_count: int, noise: float, emissions_per_state: int, seed: int, n_decoys: int = 9,
) -> tuple[BlockMDP, ConceptClass]:
    """Two-state combination lock: one hidden action per layer keeps the agent in the good state."""
    if not 0 <= noise < 0.5:
        raise ValueError("noise must lie in [0, 1/2)")
    rng = np.random.default_rng(seed)
    S, A = 2, A_count
    code = rng.integers(A, size=max(H - 1, 0))
    trans = np.zeros((max(H - 1, 0), S, A, S))
    trans[:, BAD, :, BAD] = 1.0
    trans[:, GOOD, :, BAD] = 1.0
    for h, a in enumerate(code):
        trans[h, GOOD, a] = [1.0 - noise, noise]
    X = S * emissions_per_state
    order = rng.permutation(X)
    decoder = np.empty(X, dtype=np.int64)
    decoder[order[:emissions_per_state]] = GOOD
    decoder[order[emissions_per_state:]] = BAD
    em = np.zeros((H, S, X))
    for s in range(S):
        em[:, s, decoder == s] = 1.0 / emissions_per_state
    latent = LatentModel(H, S, A, np.array([1.0, 0.0]), trans)
    # permutations of a two-class decoder yield only C(X, per_state) - 1 distinct decoys
    n_decoys = min(n_decoys, math.comb(X, emissions_per_state) - 1)
    phi = _concept_class(rng, decoder, S, n_decoys + 1, permute_only=True)
    return BlockMDP(latent, ObservationModel(X, em, decoder), phi), phi


def lock_code(mdp: BlockMDP) -> np.ndarray:
    """Verification only: the action sequence that keeps a lock in its good state."""
    return np.argmax(mdp.latent.transitions[:, GOOD, :, GOOD], axis=1)


def _random_decoder(rng: np.random.Generator, S: int, X: int) -> np.ndarray:
    if X < S:
        raise ValueError("need at least one observation per latent state")
    dec = np.concatenate([np.arange(S), rng.integers(S, size=X - S)])
    return dec[rng.permutation(X)]


def _emissions(rng: np.random.Generator, H: int, S: int, decoder: np.ndarray) -> np.ndarray:
    X = len(decoder)
    em = np.zeros((H, S, X))
    for s in range(S):
        members = np.flatnonzero(decoder == s)
        em[:, s, members] = rng.dirichlet(np.ones(len(members)), size=H)
    return em


def layer_one_floor(min_reach: float, n_states: int) -> float:
    """Reach requirement at layer 1, where no policy can beat the initial law."""
    return min(min_reach, 1.0 / n_states)


def make_random_block(
    sizes: tuple[int, int, int, int], min_reach: float, seed: int, n_concepts: int = 50,
    concentration: float = 0.5, max_tries: int = 2000,
) -> tuple[BlockMDP, ConceptClass]:
    """Random Block MDP whose every (layer, state) is reachable with probability ``min_reach``.

    ``sizes = (H, |S|, |A|, |X|)``. Layer 1 uses the floor
    :func:`layer_one_floor`. ``min_reach = 1`` with ``|A| >= |S|`` takes a
    deterministic construction.
    """
    H, S, A, X = sizes
    if not 0 < min_reach <= 1:
        raise ValueError("min_reach must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    floor = np.full((H, S), float(min_reach))
    floor[0] = layer_one_floor(min_reach, S)
    decoder = _random_decoder(rng, S, X)
    if min_reach == 1 and A >= S:
        trans = np.zeros((H - 1, S, A, S))
        trans[:, :, np.arange(A), np.arange(A) % S] = 1.0
        latent = LatentModel(H, S, A, np.full(S, 1.0 / S), trans)
        obs = ObservationModel(X, _emissions(rng, H, S, decoder), decoder)
        phi = _concept_class(rng, decoder, S, n_concepts, permute_only=False)
        return BlockMDP(latent, obs, phi), phi
    for _ in range(max_tries):
        init = rng.dirichlet(np.full(S, concentration))
        trans = rng.dirichlet(np.full(S, concentration), size=(H - 1, S, A))
        latent = LatentModel(H, S, A, init, trans)
        obs = ObservationModel(X, _emissions(rng, H, S, decoder), decoder)
        mdp = BlockMDP(latent, obs)
        if np.all(max_reach_table(mdp) >= floor - 1e-12):
            phi = _concept_class(rng, decoder, S, n_concepts, permute_only=False)
            return BlockMDP(latent, obs, phi), phi
    raise GenerationTimeout(f"no instance met min_reach={min_reach} within {max_tries} tries")


def rich_obs_wrap(mdp: BlockMDP, copies: int, seed: int) -> BlockMDP:
    """Split every observation into ``copies`` observations with random emission shares."""
    rng = np.random.default_rng(seed)
    X = mdp.n_obs
    shares = rng.dirichlet(np.ones(copies), size=X)
    em = np.einsum("hsx,xc->hsxc", mdp.obs.emissions, shares).reshape(mdp.horizon, mdp.n_states, X * copies)
    decoder = np.repeat(mdp.decoder, copies)
    phi = None
    if isinstance(mdp.concept_class, ConceptClass):
        cc = mdp.concept_class
        phi = ConceptClass(np.repeat(cc.maps, copies, axis=1), cc.n_states, cc.reveal_true_index())
    return BlockMDP(mdp.latent, ObservationModel(X * copies, em, decoder), phi)


@dataclass(frozen=True)
class FactorSpec:
    """Realizable context law: latent law times per-state emissions.

    One context: ``latent`` (S,), ``q1`` (S, X). Two contexts: ``latent``
    (S, S), ``q1`` and ``q2`` (S, X).
    """

    latent: np.ndarray
    q1: np.ndarray
    q2: np.ndarray | None = None

    def law(self, decoder: np.ndarray) -> np.ndarray:
        dec = np.asarray(decoder)
        cols = np.arange(len(dec))
        q1 = np.asarray(self.q1)[dec, cols]
        lat = np.asarray(self.latent, dtype=np.float64)
        if lat.ndim == 1:
            return lat[dec] * q1
        q2 = np.asarray(self.q2)[dec, cols]
        return lat[dec[:, None], dec[None, :]] * q1[:, None] * q2[None, :]


def make_regression_instance(kind: str, phi_class: ConceptClass, f: np.ndarray, D_spec, n: int, seed: int):
    """I.i.d. dataset with Bernoulli labels of mean ``f`` applied to the decoded context(s)."""
    if kind not in ("one", "two"):
        raise ValueError("kind must be 'one' or 'two'")
    decoder = phi_class.maps[phi_class.reveal_true_index()]
    X = len(decoder)
    law = D_spec.law(decoder) if isinstance(D_spec, FactorSpec) else np.asarray(D_spec, dtype=np.float64)
    law = law / law.sum()
    f = np.asarray(f, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.choice(law.size, size=n, p=law.ravel())
    if kind == "one":
        mean = f[decoder]
        y = (rng.random(n) < mean[idx]).astype(np.int64)
        return OneContextDataset(idx, y, X, Truth(mean, law, decoder, f))
    if law.shape != (X, X):
        raise ValueError("two-context law must be (X, X)")
    check_realizable(law, decoder)
    x1, x2 = np.divmod(idx, X)
    mean = f[decoder[:, None], decoder[None, :]]
    y = (rng.random(n) < mean[x1, x2]).astype(np.int64)
    return TwoContextDataset(x1, x2, y, X, Truth(mean, law, decoder, f))


ENV_KINDS = ("lock", "random_block", "rich_obs_wrap")


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    H: int
    S: int = 2
    A: int = 2
    X: int = 8
    noise: float = 0.0
    min_reach: float = 0.1
    n_concepts: int = 10
    copies: int = 2
    base: dict = field(default_factory=dict)

    def build(self, seed: int) -> BlockMDP:
        if self.kind == "lock":
            per_state = max(self.X // 2, 1)
            return make_lock(self.H, self.A, self.noise, per_state, seed, n_decoys=self.n_concepts - 1)[0]
        if self.kind == "random_block":
            sizes = (self.H, self.S, self.A, self.X)
            return make_random_block(sizes, self.min_reach, seed, n_concepts=self.n_concepts)[0]
        if self.kind == "rich_obs_wrap":
            inner = EnvSpec(**self.base).build(seed)
            return rich_obs_wrap(inner, self.copies, seed)
        raise ValueError(f"unknown environment kind {self.kind!r}")
