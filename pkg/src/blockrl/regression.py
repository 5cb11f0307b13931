"""One- and two-context regression oracles and oracle-to-oracle reductions.

An oracle is any callable ``oracle(data, eps, delta) -> predictor``. Oracles
that set ``reads_truth = True`` consume the ground-truth conditional mean
attached to a dataset (``data.truth``) instead of its labels; data builders
attach it only when they can compute it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyDataset, RealizabilityViolation

EMPTY_CELL = 0.5
TIE_TOL = 1e-9


@dataclass(frozen=True)
class ConceptClass:
    """Finite family of decoders ``maps[k, x]`` into ``range(n_states)``."""

    maps: np.ndarray
    n_states: int
    _true_index: int | None = None

    def __post_init__(self):
        maps = np.array(self.maps, dtype=np.int64)
        if maps.ndim != 2 or maps.shape[0] == 0:
            raise ValueError("concept class needs a non-empty (K, X) table")
        if maps.min() < 0 or maps.max() >= self.n_states:
            raise ValueError("concept maps a point outside the state range")
        if self._true_index is not None and not 0 <= self._true_index < maps.shape[0]:
            raise ValueError("true index out of range")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return self.maps.shape[0]

    @property
    def n_obs(self) -> int:
        return self.maps.shape[1]

    def reveal_true_index(self) -> int | None:
        """Verification only."""
        return self._true_index


@dataclass(frozen=True)
class AugmentedSpace:
    """Encodes the two special contexts after the base ones: ``X_aug = X + [zero, one]``."""

    n_obs: int
    n_states: int

    @property
    def zero_obs(self) -> int:
        return self.n_obs

    @property
    def one_obs(self) -> int:
        return self.n_obs + 1

    @property
    def zero_state(self) -> int:
        return self.n_states

    @property
    def one_state(self) -> int:
        return self.n_states + 1

    def decoder(self, base: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(base, dtype=np.int64), [self.zero_state, self.one_state]])

    def concepts(self, phi_class: ConceptClass) -> ConceptClass:
        """Extend every member to map each special context to its own special state."""
        extra = np.tile([self.zero_state, self.one_state], (len(phi_class), 1))
        maps = np.concatenate([phi_class.maps, extra], axis=1)
        return ConceptClass(maps, phi_class.n_states + 2, phi_class.reveal_true_index())


@dataclass(frozen=True)
class Truth:
    """Exact description of the law a dataset was drawn from.

    ``mean`` is the conditional mean of the label given the context(s).
    ``law``, ``decoder`` and ``latent_f`` are optional and only needed to
    rebuild the explicit simulation gadget.
    """

    mean: np.ndarray
    law: np.ndarray | None = None
    decoder: np.ndarray | None = None
    latent_f: np.ndarray | None = None


def _labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return y


@dataclass(frozen=True)
class OneContextDataset:
    x: np.ndarray
    y: np.ndarray
    n_obs: int
    truth: Truth | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.int64))
        object.__setattr__(self, "y", _labels(self.y))
        if self.x.shape != self.y.shape:
            raise ValueError("x and y lengths differ")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "OneContextDataset":
        return replace(self, x=self.x[idx], y=self.y[idx])


@dataclass(frozen=True)
class TwoContextDataset:
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    n_obs: int
    truth: Truth | None = None

    def __post_init__(self):
        object.__setattr__(self, "x1", np.asarray(self.x1, dtype=np.int64))
        object.__setattr__(self, "x2", np.asarray(self.x2, dtype=np.int64))
        object.__setattr__(self, "y", _labels(self.y))
        if not self.x1.shape == self.x2.shape == self.y.shape:
            raise ValueError("x1, x2 and y lengths differ")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "TwoContextDataset":
        return replace(self, x1=self.x1[idx], x2=self.x2[idx], y=self.y[idx])


@dataclass(frozen=True)
class Predictor1:
    """Tabulated map X -> [0, 1]."""

    table: np.ndarray
    source: str

    def __post_init__(self):
        tab = np.clip(np.asarray(self.table, dtype=np.float64), 0.0, 1.0)
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)

    def __call__(self, x):
        return self.table[x]


@dataclass(frozen=True)
class Predictor2:
    """Tabulated map X x X -> [0, 1]."""

    table: np.ndarray
    source: str

    def __post_init__(self):
        tab = np.clip(np.asarray(self.table, dtype=np.float64), 0.0, 1.0)
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)

    def __call__(self, x1, x2):
        return self.table[x1, x2]


def _erm_select(cells: np.ndarray, counts_x: np.ndarray, ones_x: np.ndarray,
                n_cells: int) -> tuple[int, np.ndarray, np.ndarray]:
    """Cell-mean fits for every candidate; returns (best index, its means, all losses).

    ``cells[k, u]`` is the cell of context ``u`` under candidate k, and
    ``counts_x``/``ones_x`` are per-context sample and positive-label counts.
    """
    K, U = cells.shape
    flat = (cells + np.arange(K)[:, None] * n_cells).ravel()
    counts = np.bincount(flat, weights=np.tile(counts_x, K), minlength=K * n_cells).reshape(K, n_cells)
    ones = np.bincount(flat, weights=np.tile(ones_x, K), minlength=K * n_cells).reshape(K, n_cells)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, ones / np.maximum(counts, 1), EMPTY_CELL)
        # binary labels: sum of squared residuals in a cell is k - k^2 / c
        losses = np.where(counts > 0, ones - ones**2 / np.maximum(counts, 1), 0.0).sum(axis=1)
    best = int(np.flatnonzero(losses <= losses.min() + TIE_TOL)[0])
    return best, means[best], losses


def _context_counts(u: np.ndarray, y: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(u, minlength=size).astype(np.float64)
    ones = np.bincount(u, weights=y.astype(np.float64), minlength=size)
    return counts, ones


def _pair_cells(phi_class: ConceptClass) -> np.ndarray:
    """``cells[k, x1 * X + x2]`` for the decoded pair under candidate k."""
    S = phi_class.n_states
    maps = phi_class.maps
    return (maps[:, :, None] * S + maps[:, None, :]).reshape(len(maps), -1)


def _one_fit(data: OneContextDataset, phi_class: ConceptClass):
    counts, ones = _context_counts(data.x, data.y, phi_class.n_obs)
    return _erm_select(phi_class.maps, counts, ones, phi_class.n_states)


def _two_fit(data: TwoContextDataset, phi_class: ConceptClass):
    X = phi_class.n_obs
    counts, ones = _context_counts(data.x1 * X + data.x2, data.y, X * X)
    return _erm_select(_pair_cells(phi_class), counts, ones, phi_class.n_states**2)


def erm_one_context(data: OneContextDataset, phi_class: ConceptClass) -> Predictor1:
    """Least-squares fit of a cell-mean model over each decoder in ``phi_class``."""
    if len(data) == 0:
        raise EmptyDataset("one-context ERM needs at least one sample")
    best, means, _ = _one_fit(data, phi_class)
    return Predictor1(means[phi_class.maps[best]], f"erm1[{best}]")


def erm_two_context(data: TwoContextDataset, phi_class: ConceptClass) -> Predictor2:
    """As :func:`erm_one_context` with cells indexed by the decoded pair."""
    if len(data) == 0:
        raise EmptyDataset("two-context ERM needs at least one sample")
    S = phi_class.n_states
    best, means, _ = _two_fit(data, phi_class)
    phi = phi_class.maps[best]
    table = means.reshape(S, S)[phi[:, None], phi[None, :]]
    return Predictor2(table, f"erm2[{best}]")


def erm_losses(data, phi_class: ConceptClass) -> np.ndarray:
    """Empirical squared loss of every candidate's cell-mean fit."""
    if isinstance(data, TwoContextDataset):
        return _two_fit(data, phi_class)[2]
    return _one_fit(data, phi_class)[2]


@dataclass(frozen=True)
class ErmOneContext:
    phi_class: ConceptClass
    default_samples: int = 2000
    reads_truth = False

    def __call__(self, data: OneContextDataset, eps: float = 0.0, delta: float = 0.0) -> Predictor1:
        return erm_one_context(data, self.phi_class)


@dataclass(frozen=True)
class ErmTwoContext:
    phi_class: ConceptClass
    default_samples: int = 2000
    reads_truth = False

    def __call__(self, data: TwoContextDataset, eps: float = 0.0, delta: float = 0.0) -> Predictor2:
        return erm_two_context(data, self.phi_class)


def _truth_mean(data, decoder, latent_f) -> np.ndarray:
    if decoder is not None and latent_f is not None:
        dec = np.asarray(decoder)
        f = np.asarray(latent_f, dtype=np.float64)
        return f[dec] if f.ndim == 1 else f[dec[:, None], dec[None, :]]
    if data.truth is None:
        raise ValueError("Bayes oracle needs ground truth: pass (decoder, latent_f) or a dataset with truth")
    return data.truth.mean


@dataclass(frozen=True)
class BayesOneContext:
    """Returns the exact conditional mean and ignores the labels."""

    decoder: np.ndarray | None = None
    latent_f: np.ndarray | None = None
    default_samples: int = 8
    reads_truth = True

    def __call__(self, data: OneContextDataset, eps: float = 0.0, delta: float = 0.0) -> Predictor1:
        return Predictor1(_truth_mean(data, self.decoder, self.latent_f), "bayes1")


@dataclass(frozen=True)
class BayesTwoContext:
    decoder: np.ndarray | None = None
    latent_f: np.ndarray | None = None
    default_samples: int = 8
    reads_truth = True

    def __call__(self, data: TwoContextDataset, eps: float = 0.0, delta: float = 0.0) -> Predictor2:
        return Predictor2(_truth_mean(data, self.decoder, self.latent_f), "bayes2")


def padding_context(xs: np.ndarray) -> int:
    """Lowest context present in ``xs``; context 0 when ``xs`` is empty."""
    return int(xs.min()) if len(xs) else 0


def _lift_truth_one_to_two(truth: Truth | None, pad: int, n_obs: int) -> Truth | None:
    if truth is None:
        return None
    mean = np.repeat(np.asarray(truth.mean)[:, None], n_obs, axis=1)
    law = latent_f = None
    if truth.law is not None:
        law = np.zeros((n_obs, n_obs))
        law[:, pad] = truth.law
    if truth.latent_f is not None:
        f = np.asarray(truth.latent_f)
        latent_f = np.repeat(f[:, None], len(f), axis=1)
    return Truth(mean, law, truth.decoder, latent_f)


def one_two(two_oracle, data: OneContextDataset, eps: float, delta: float) -> Predictor1:
    """Answer a one-context query with a two-context oracle by pinning the second context."""
    pad = padding_context(data.x)
    paired = TwoContextDataset(
        data.x, np.full(len(data), pad), data.y, data.n_obs,
        _lift_truth_one_to_two(data.truth, pad, data.n_obs),
    )
    pred = two_oracle(paired, eps, delta)
    return Predictor1(pred.table[:, pad], f"one_two({pred.source})")


@dataclass(frozen=True)
class OneTwo:
    two_oracle: object

    @property
    def reads_truth(self) -> bool:
        return getattr(self.two_oracle, "reads_truth", False)

    @property
    def default_samples(self) -> int:
        return getattr(self.two_oracle, "default_samples", 2000)

    def __call__(self, data: OneContextDataset, eps: float = 0.0, delta: float = 0.0) -> Predictor1:
        return one_two(self.two_oracle, data, eps, delta)


def _restrict_one_truth(truth: Truth | None, n_obs: int, n_states: int) -> Truth | None:
    if truth is None:
        return None
    law = None
    if truth.law is not None:
        law = np.asarray(truth.law)[:n_obs]
        law = law / law.sum() if law.sum() > 0 else np.full(n_obs, 1.0 / n_obs)
    f = None if truth.latent_f is None else np.asarray(truth.latent_f)[:n_states]
    dec = None if truth.decoder is None else np.asarray(truth.decoder)[:n_obs]
    return Truth(np.asarray(truth.mean)[:n_obs], law, dec, f)


def one_aug(one_oracle, data: OneContextDataset, eps: float, delta: float, space: AugmentedSpace) -> Predictor1:
    """Regression over base contexts plus the two special contexts.

    Base contexts go to ``one_oracle`` at (eps/6, delta/6); each special
    context is predicted by its empirical label mean.
    """
    n = space.n_obs
    inner = data.x < n
    table = np.full(n + 2, EMPTY_CELL)
    # truth-reading oracles need no samples, so an empty block still gets its exact fit
    if np.any(inner) or (getattr(one_oracle, "reads_truth", False) and data.truth is not None):
        sub = OneContextDataset(
            data.x[inner], data.y[inner], n, _restrict_one_truth(data.truth, n, space.n_states)
        )
        table[:n] = one_oracle(sub, eps / 6, delta / 6).table
    for b in (space.zero_obs, space.one_obs):
        labels = data.y[data.x == b]
        if len(labels):
            table[b] = labels.mean()
    return Predictor1(table, "one_aug")


_BLOCKS = ("base", "zero", "one")


def _block_of(x: np.ndarray, space: AugmentedSpace) -> np.ndarray:
    out = np.zeros(len(x), dtype=np.int64)
    out[x == space.zero_obs] = 1
    out[x == space.one_obs] = 2
    return out


def _cell_truth(truth: Truth | None, b1: int, b2: int, pad: int, space: AugmentedSpace) -> Truth | None:
    """Ground truth of one cell after special contexts are replaced by ``pad``."""
    if truth is None:
        return None
    n, S = space.n_obs, space.n_states
    special_obs = {1: space.zero_obs, 2: space.one_obs}
    special_state = {1: space.zero_state, 2: space.one_state}
    mean_aug = np.asarray(truth.mean)

    def pick_obs(block, axis_len):
        return np.arange(n) if block == 0 else np.full(axis_len, special_obs[block])

    rows, cols = pick_obs(b1, n), pick_obs(b2, n)
    mean = mean_aug[rows[:, None], cols[None, :]]
    law = None
    if truth.law is not None:
        la = np.asarray(truth.law)
        law = np.zeros((n, n))
        if b1 == 0 and b2 == 0:
            law = la[:n, :n].copy()
        elif b1 == 0:
            law[:, pad] = la[:n, special_obs[b2]]
        elif b2 == 0:
            law[pad, :] = la[special_obs[b1], :n]
        else:
            law[pad, pad] = 1.0
        law = law / law.sum() if law.sum() > 0 else None
    latent_f = None
    if truth.latent_f is not None:
        fa = np.asarray(truth.latent_f)
        srows = np.arange(S) if b1 == 0 else np.full(S, special_state[b1])
        scols = np.arange(S) if b2 == 0 else np.full(S, special_state[b2])
        latent_f = fa[srows[:, None], scols[None, :]]
    dec = None if truth.decoder is None else np.asarray(truth.decoder)[:n]
    return Truth(mean, law, dec, latent_f)


def two_aug(two_oracle, data: TwoContextDataset, eps: float, delta: float, space: AugmentedSpace) -> Predictor2:
    """Two-context regression with special contexts, one oracle call per (block, block) cell.

    Special contexts are replaced by a fixed base context before the call;
    each cell runs at (eps/18, delta/18); empty cells predict 1/2 unless the
    oracle reads ground truth.
    """
    n = space.n_obs
    blk1, blk2 = _block_of(data.x1, space), _block_of(data.x2, space)
    interior = np.concatenate([data.x1[blk1 == 0], data.x2[blk2 == 0]])
    pad = padding_context(interior)
    table = np.full((n + 2, n + 2), EMPTY_CELL)
    index = {0: np.arange(n), 1: np.array([space.zero_obs]), 2: np.array([space.one_obs])}
    # truth-reading oracles need no samples, so empty cells still get their exact fit
    fit_empty = getattr(two_oracle, "reads_truth", False) and data.truth is not None
    for b1 in range(3):
        for b2 in range(3):
            mask = (blk1 == b1) & (blk2 == b2)
            if not (np.any(mask) or fit_empty):
                continue
            x1 = np.where(b1 == 0, data.x1[mask], pad)
            x2 = np.where(b2 == 0, data.x2[mask], pad)
            sub = TwoContextDataset(x1, x2, data.y[mask], n, _cell_truth(data.truth, b1, b2, pad, space))
            pred = two_oracle(sub, eps / 18, delta / 18).table
            rows = np.arange(n) if b1 == 0 else np.full(1, pad)
            cols = np.arange(n) if b2 == 0 else np.full(1, pad)
            table[np.ix_(index[b1], index[b2])] = pred[np.ix_(rows, cols)]
    return Predictor2(table, "two_aug")


@dataclass(frozen=True)
class OneAug:
    one_oracle: object
    space: AugmentedSpace

    def __call__(self, data: OneContextDataset, eps: float, delta: float) -> Predictor1:
        return one_aug(self.one_oracle, data, eps, delta, self.space)


@dataclass(frozen=True)
class TwoAug:
    two_oracle: object
    space: AugmentedSpace

    def __call__(self, data: TwoContextDataset, eps: float, delta: float) -> Predictor2:
        return two_aug(self.two_oracle, data, eps, delta, self.space)


def mse_one(pred: Predictor1, target: np.ndarray, weights: np.ndarray) -> float:
    """Weighted mean squared error over a finite context space."""
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * (pred.table - target) ** 2) / w.sum())


def mse_two(pred: Predictor2, target: np.ndarray, weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * (pred.table - target) ** 2) / w.sum())


def check_realizable(law: np.ndarray, decoder: np.ndarray, tol: float = 1e-9) -> None:
    """Raise unless each context is independent of the other given the other's decoded state."""
    law = np.asarray(law, dtype=np.float64)
    dec = np.asarray(decoder)
    S = int(dec.max()) + 1 if dec.size else 0
    for axis, name in ((0, "x2 given state of x1"), (1, "x1 given state of x2")):
        mat = law if axis == 0 else law.T
        marg = mat.sum(axis=1)
        grouped = np.zeros((S, mat.shape[1]))
        np.add.at(grouped, dec, mat)
        mass = grouped.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(mass[:, None] > 0, grouped / np.where(mass > 0, mass, 1.0)[:, None], 0.0)
        expected = marg[:, None] * cond[dec]
        gap = float(np.max(np.abs(expected - mat))) if mat.size else 0.0
        if gap > tol:
            raise RealizabilityViolation(f"law does not factor ({name}); max deviation {gap:.3g}")
