"""Environment and dataset serialization.

Environments are self-describing JSON documents; floats are written with
``repr`` precision so a load reproduces the arrays bit for bit. Datasets use a
line-oriented text format: a header line ``# kind=one n_obs=X`` followed by
one whitespace-separated sample per line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mdp_core import BlockMDP, LatentModel, ObservationModel
from .regression import ConceptClass, OneContextDataset, TwoContextDataset

FORMAT = "blockrl.env/1"


def env_to_dict(mdp: BlockMDP) -> dict:
    doc = {
        "format": FORMAT,
        "H": mdp.horizon,
        "S": mdp.n_states,
        "A": mdp.n_actions,
        "X": mdp.n_obs,
        "P1": mdp.latent.initial.tolist(),
        "P": mdp.latent.transitions.tolist(),
        "O": mdp.obs.emissions.tolist(),
        "decoder_star": mdp.decoder.tolist(),
        "concept_class": None,
    }
    cc = mdp.concept_class
    if isinstance(cc, ConceptClass):
        doc["concept_class"] = {"maps": cc.maps.tolist(), "true_index": cc.reveal_true_index()}
    return doc


def env_from_dict(doc: dict) -> BlockMDP:
    """Rebuild a Block MDP; constructor invariants run on the loaded arrays."""
    if doc.get("format") != FORMAT:
        raise ValueError(f"unsupported environment format {doc.get('format')!r}")
    H, S, A, X = (int(doc[k]) for k in ("H", "S", "A", "X"))
    trans = np.array(doc["P"], dtype=np.float64).reshape(max(H - 1, 0), S, A, S)
    latent = LatentModel(H, S, A, np.array(doc["P1"], dtype=np.float64), trans)
    obs = ObservationModel(X, np.array(doc["O"], dtype=np.float64).reshape(H, S, X), np.array(doc["decoder_star"]))
    cc = None
    if doc.get("concept_class") is not None:
        spec = doc["concept_class"]
        cc = ConceptClass(np.array(spec["maps"]), S, spec.get("true_index"))
    return BlockMDP(latent, obs, cc)


def dump_env(mdp: BlockMDP, path: str | Path) -> None:
    Path(path).write_text(json.dumps(env_to_dict(mdp), indent=1) + "\n")


def load_env(path: str | Path) -> BlockMDP:
    return env_from_dict(json.loads(Path(path).read_text()))


def dataset_to_text(data: OneContextDataset | TwoContextDataset) -> str:
    if isinstance(data, TwoContextDataset):
        lines = [f"# kind=two n_obs={data.n_obs}"]
        lines += [f"{a} {b} {y}" for a, b, y in zip(data.x1.tolist(), data.x2.tolist(), data.y.tolist())]
    else:
        lines = [f"# kind=one n_obs={data.n_obs}"]
        lines += [f"{a} {y}" for a, y in zip(data.x.tolist(), data.y.tolist())]
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> OneContextDataset | TwoContextDataset:
    """Parse the line format; ground truth is not serialized."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("dataset text must start with a '# kind=... n_obs=...' header")
    header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    kind, n_obs = header.get("kind"), int(header["n_obs"])
    rows = np.array([[int(t) for t in ln.split()] for ln in lines[1:]], dtype=np.int64)
    width = {"one": 2, "two": 3}.get(kind)
    if width is None:
        raise ValueError(f"unknown dataset kind {kind!r}")
    rows = rows.reshape(-1, width)
    if kind == "one":
        return OneContextDataset(rows[:, 0], rows[:, 1], n_obs)
    return TwoContextDataset(rows[:, 0], rows[:, 1], rows[:, 2], n_obs)
