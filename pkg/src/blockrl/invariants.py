"""Property checks run against serialized environment fixtures.

Loading a fixture runs every constructor invariant; the remaining checks are
exact identities of the verification dynamic programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import check_cover, exact_visitation, max_reach, max_reach_table
from .errors import InvariantViolation
from .io import load_env
from .mdp_core import Policy, compose
from .psdp import true_q
from .regression import ConceptClass

TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        return f"{self.name} {'PASS' if self.passed else 'FAIL'}{': ' + self.detail if self.detail else ''}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def shipped_fixtures() -> Path:
    return Path(str(resources.files("blockrl") / "fixtures"))


def _env_checks(mdp) -> list[tuple[str, bool, str]]:
    H, S, A, X = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_obs
    rng = np.random.default_rng(0)
    out = []
    owner = mdp.decoder[None, None, :] == np.arange(S)[None, :, None]
    out.append(("disjoint_support", not np.any((mdp.obs.emissions > 0) & ~owner), ""))
    sums = np.concatenate([[mdp.latent.initial.sum()], mdp.latent.transitions.sum(axis=-1).ravel(),
                           mdp.obs.emissions.sum(axis=-1).ravel()])
    out.append(("stochastic_rows", bool(np.all(np.abs(sums - 1) <= TOL)), ""))
    cc = mdp.concept_class
    if isinstance(cc, ConceptClass):
        truth = cc.reveal_true_index()
        ok = truth is not None and np.array_equal(cc.maps[truth], mdp.decoder)
        distinct = len({m.tobytes() for m in cc.maps}) == len(cc)
        out.append(("concept_class_contains_decoder", bool(ok and distinct), ""))
    policies = [Policy.uniform(H, X, A)] + [Policy(rng.dirichlet(np.ones(A), size=(H, X))) for _ in range(3)]
    sums = [np.abs(exact_visitation(mdp, pi).latent.sum(axis=1) - 1).max() for pi in policies]
    out.append(("visitation_sums", max(sums) <= TOL, f"max deviation {max(sums):.1e}"))
    gap = 0.0
    for h in range(1, H + 1):
        for s in range(S):
            value, witness = max_reach(mdp, h, s)
            gap = max(gap, abs(exact_visitation(mdp, witness).latent[h - 1, s] - value))
    out.append(("witness_consistency", gap <= 1e-12, f"max gap {gap:.1e}"))
    witnesses = [max_reach(mdp, h, s)[1] for h in range(1, H + 1) for s in range(S)]
    out.append(("witness_cover", check_cover(mdp, witnesses, 0.0).passed, ""))
    table = max_reach_table(mdp)
    achieved = np.max([exact_visitation(mdp, pi).latent for pi in policies], axis=0)
    out.append(("achieved_below_optimal", bool(np.all(achieved <= table + TOL)), ""))
    pi, pi2 = policies[1], policies[2]
    same = np.array_equal(compose(pi, 1, pi2).table, pi2.table) and \
        np.array_equal(compose(pi, H + 1, pi2).table, pi.table)
    out.append(("compose_endpoints", bool(same), ""))
    if H >= 2:
        reward = rng.random(X)
        k = H - 1
        q, v = true_q(mdp, pi, k, reward)
        bell = max(np.abs(v[h - 1] - (pi.table[h - 1] * q[h - 1]).sum(axis=1)).max() for h in range(1, k + 2))
        out.append(("value_identity", bell <= 1e-12, f"max gap {bell:.1e}"))
    return out


def run_invariants(fixture_dir: str | Path | None = None) -> list[CheckResult]:
    """Load every ``*.json`` fixture and run the property checks on it."""
    root = Path(fixture_dir) if fixture_dir is not None else shipped_fixtures()
    paths = sorted(root.glob("*.json"))
    if not paths:
        return [CheckResult("fixtures", False, f"no *.json fixtures in {root}")]
    results = []
    for path in paths:
        try:
            mdp = load_env(path)
        except InvariantViolation as exc:
            results.append(CheckResult(f"{path.stem}.load", False, f"invariant {exc.invariant} violated: {exc.detail}"))
            continue
        except (ValueError, KeyError) as exc:
            results.append(CheckResult(f"{path.stem}.load", False, f"unreadable fixture: {exc}"))
            continue
        results.append(CheckResult(f"{path.stem}.load", True))
        for name, ok, detail in _env_checks(mdp):
            results.append(CheckResult(f"{path.stem}.{name}", ok, detail))
    return results
