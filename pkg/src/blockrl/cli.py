"""Batch experiment runner and verification entry point.

``blockrl run CONFIG`` executes an (environment, algorithm, seed) matrix and
writes one JSON report. ``blockrl verify SUITE`` runs the invariant and/or
acceptance suites and exits nonzero on any failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from .analysis import check_cover
from .envs import ENV_KINDS, EnvSpec
from .errors import ConfigError
from .explore_episodic import PracticalParams, pco, pco_theory_params
from .explore_reset import SHARING_MODES, pcr, pcr_theory_params, reset_practical_params
from .mdp_core import EpisodicAccess, ResetAccess
from .regression import BayesOneContext, BayesTwoContext, ErmOneContext, ErmTwoContext

REPORT_FORMAT = "blockrl.report/1"
MODES = ("theory", "practical")
ALGORITHMS = ("pco", "pcr")
ORACLES = ("erm", "bayes")
ENV_FIELDS = {f.name for f in dataclasses.fields(EnvSpec)} - {"kind"}
OVERRIDE_FIELDS = {f.name for f in dataclasses.fields(PracticalParams)}

# every numeric report field carries one of these suffixes
PARAM_KEYS = {
    "m": "m_count", "n": "n_count", "N": "samples_per_regression_count", "rounds": "rounds_count",
    "max_centers": "max_centers_count", "sample_scale": "sample_scale_factor",
    "gamma_tol": "gamma_tol_distance", "gamma_sep": "gamma_sep_distance",
}
THEORY_KEYS = {
    "tau": "tau_probability", "rounds": "rounds_count", "tau_small": "tau_small_probability",
    "alpha": "alpha_probability", "m": "m_count", "n": "n_count", "log10_eps": "regression_eps_log10",
    "log10_gamma_tol": "gamma_tol_log10", "log10_gamma_sep": "gamma_sep_log10", "log10_eps_cap": "eps_cap_log10",
}
ENV_KEYS = {
    "H": "horizon_count", "S": "states_count", "A": "actions_count", "X": "observations_count",
    "noise": "noise_probability", "min_reach": "min_reach_probability", "n_concepts": "concepts_count",
    "copies": "copies_count",
}


@dataclasses.dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    kind: str
    oracle: str
    overrides: dict
    reset_mode: str


@dataclasses.dataclass(frozen=True)
class RunConfig:
    mode: str
    seeds: list[int]
    eps_final: float
    delta: float
    check_eps: float
    environments: list[tuple[str, EnvSpec]]
    algorithms: list[AlgorithmSpec]


def _number(doc: dict, key: str, errors: dict, default=None, lo=0.0, hi=1.0) -> float | None:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not lo < value <= hi:
        errors[key] = f"must be a number in ({lo}, {hi}], got {value!r}"
        return None
    return float(value)


def _env_spec(doc, where: str, errors: dict) -> tuple[str, EnvSpec] | None:
    if not isinstance(doc, dict):
        errors[where] = "must be a mapping"
        return None
    kind = doc.get("kind")
    if kind not in ENV_KINDS:
        errors[f"{where}.kind"] = f"must be one of {list(ENV_KINDS)}, got {kind!r}"
        return None
    fields = {k: v for k, v in doc.items() if k not in ("kind", "name")}
    unknown = sorted(set(fields) - ENV_FIELDS)
    if unknown:
        errors[where] = f"unknown fields {unknown}"
        return None
    if "H" not in fields:
        errors[f"{where}.H"] = "required"
        return None
    if kind == "rich_obs_wrap":
        inner = _env_spec(fields.get("base"), f"{where}.base", errors)
        if inner is None:
            return None
        fields["base"] = {"kind": inner[1].kind, **{k: v for k, v in fields["base"].items() if k not in ("kind", "name")}}
    return str(doc.get("name", f"{kind}-{where}")), EnvSpec(kind=kind, **fields)


def _algorithm_spec(doc, where: str, errors: dict) -> AlgorithmSpec | None:
    if not isinstance(doc, dict):
        errors[where] = "must be a mapping"
        return None
    kind, oracle = doc.get("kind"), doc.get("oracle", "erm")
    bad = False
    if kind not in ALGORITHMS:
        errors[f"{where}.kind"] = f"must be one of {list(ALGORITHMS)}, got {kind!r}"
        bad = True
    if oracle not in ORACLES:
        errors[f"{where}.oracle"] = f"must be one of {list(ORACLES)}, got {oracle!r}"
        bad = True
    overrides = doc.get("overrides") or {}
    if not isinstance(overrides, dict) or set(overrides) - OVERRIDE_FIELDS:
        errors[f"{where}.overrides"] = f"allowed keys are {sorted(OVERRIDE_FIELDS)}"
        bad = True
    reset_mode = doc.get("reset_mode", "independent")
    if reset_mode not in SHARING_MODES:
        errors[f"{where}.reset_mode"] = f"must be one of {list(SHARING_MODES)}, got {reset_mode!r}"
        bad = True
    unknown = sorted(set(doc) - {"name", "kind", "oracle", "overrides", "reset_mode"})
    if unknown:
        errors[where] = f"unknown fields {unknown}"
        bad = True
    if bad:
        return None
    return AlgorithmSpec(str(doc.get("name", f"{kind}-{oracle}")), kind, oracle, dict(overrides), reset_mode)


def parse_config(doc, seed: int | None = None) -> RunConfig:
    """Validate a config mapping; all field problems are reported together."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError({"<root>": "config must be a mapping"})
    errors: dict[str, str] = {}
    mode = doc.get("mode", "practical")
    if mode not in MODES:
        errors["mode"] = f"must be one of {list(MODES)}, got {mode!r}"
    if "seeds" in doc:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            errors["seeds"] = "must be a list of integers"
            seeds = []
        if seed is not None:
            seeds = [seed + i for i in range(len(seeds))]
    else:
        base, runs = doc.get("seed", 0), doc.get("runs", 1)
        if not isinstance(base, int) or isinstance(base, bool):
            errors["seed"] = f"must be an integer, got {base!r}"
            base = 0
        if not isinstance(runs, int) or isinstance(runs, bool) or runs < 0:
            errors["runs"] = f"must be a nonnegative integer, got {runs!r}"
            runs = 0
        seeds = list(range(seed if seed is not None else base, (seed if seed is not None else base) + runs))
    eps_final = _number(doc, "eps_final", errors, 0.1)
    delta = _number(doc, "delta", errors, 0.1, hi=1.0)
    check_eps = _number(doc, "check_eps", errors, doc.get("eps_final", 0.1))
    envs, algs = [], []
    for key, parse, out in (("environments", _env_spec, envs), ("algorithms", _algorithm_spec, algs)):
        items = doc.get(key) or []
        if not isinstance(items, list):
            errors[key] = "must be a list"
            continue
        for i, item in enumerate(items):
            parsed = parse(item, f"{key}[{i}]", errors)
            if parsed is not None:
                out.append(parsed)
    unknown = sorted(set(doc) - {"mode", "seed", "seeds", "runs", "eps_final", "delta", "check_eps",
                                 "environments", "algorithms"})
    if unknown:
        errors["<root>"] = f"unknown fields {unknown}"
    if errors:
        raise ConfigError(errors)
    return RunConfig(mode, seeds, eps_final, delta, check_eps, envs, algs)


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError({"<file>": f"not valid YAML: {exc}"}) from exc
    except OSError as exc:
        raise ConfigError({"<file>": str(exc)}) from exc
    return parse_config(doc, seed)


def _rename(values: dict, keys: dict) -> dict:
    return {keys[k]: v for k, v in values.items() if k in keys}


def _env_dict(name: str, spec: EnvSpec) -> dict:
    out = {"name": name, "kind": spec.kind, **_rename(dataclasses.asdict(spec), ENV_KEYS)}
    if spec.kind == "rich_obs_wrap":
        out["base"] = _env_dict(name + ".base", EnvSpec(**spec.base))
    return out


def _oracle(alg: AlgorithmSpec, phi):
    if alg.kind == "pco":
        return ErmTwoContext(phi) if alg.oracle == "erm" else BayesTwoContext()
    return ErmOneContext(phi) if alg.oracle == "erm" else BayesOneContext()


def _theory_run(job) -> dict:
    cfg, (env_name, spec), alg, seed = job
    mdp = spec.build(seed)
    fn = pco_theory_params if alg.kind == "pco" else pcr_theory_params
    theory = fn(cfg.eps_final, cfg.delta, mdp.horizon, mdp.n_states, mdp.n_actions)
    return {"executable": False, "theory_params": _rename(theory.to_dict(), THEORY_KEYS)}


def _practical_run(job) -> dict:
    cfg, (env_name, spec), alg, seed = job
    mdp = spec.build(seed)
    phi = mdp.concept_class
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    if alg.kind == "pco":
        access = EpisodicAccess(mdp, rng)
        res = pco(_oracle(alg, phi), None, mdp.n_states, cfg.eps_final, cfg.delta, access,
                  params=PracticalParams(**alg.overrides), seed=seed)
    else:
        access = ResetAccess(mdp, rng)
        res = pcr(_oracle(alg, phi), None, mdp.n_states, cfg.eps_final, cfg.delta, access,
                  params=reset_practical_params(**alg.overrides), seed=seed, mode=alg.reset_mode)
    seconds = time.perf_counter() - start
    cover = check_cover(mdp, res.policies, cfg.check_eps)
    return {
        "executable": True,
        "passed": cover.passed,
        "resolved_params": _rename(res.params.to_dict(), PARAM_KEYS),
        "cover": cover.to_dict(),
        "episodes_count": res.episodes,
        "episode_budget_count": res.budget,
        "reset_queries_count": res.queries,
        "policy_bound_count": mdp.horizon**2 * mdp.n_states**2,
        "rounds": res.rounds,
        "wall_time_seconds": seconds,
    }


def execute_job(job) -> dict:
    """One matrix cell; failures are captured into the row instead of raised."""
    cfg, (env_name, _), alg, seed = job
    row = {"environment": env_name, "algorithm": alg.name, "run_seed": seed}
    try:
        row.update(_theory_run(job) if cfg.mode == "theory" else _practical_run(job))
        row["status"] = "ok"
    except Exception as exc:  # noqa: BLE001 - per-run failures must not abort the batch
        row.update({"status": "error", "passed": False, "error_type": type(exc).__name__,
                    "error_message": str(exc), "error_traceback": traceback.format_exc(limit=3)})
    return row


def _summary(rows: list[dict]) -> dict:
    executed = [r for r in rows if r.get("executable", True)]
    passes = sum(bool(r.get("passed")) for r in executed)
    return {
        "runs_count": len(rows),
        "executed_runs_count": len(executed),
        "passed_runs_count": passes,
        "failed_runs_count": sum(r["status"] == "error" for r in rows),
        "pass_rate_fraction": passes / len(executed) if executed else None,
        "max_policies_count": max((r["cover"]["n_policies_count"] for r in executed if "cover" in r), default=None),
    }


def run_matrix(cfg: RunConfig, jobs: int = 1) -> dict:
    work = [(cfg, env, alg, seed) for env in cfg.environments for alg in cfg.algorithms for seed in cfg.seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(execute_job, work))
    else:
        rows = [execute_job(w) for w in work]
    groups = []
    for env_name, spec in cfg.environments:
        for alg in cfg.algorithms:
            sub = [r for r in rows if r["environment"] == env_name and r["algorithm"] == alg.name]
            groups.append({"environment": env_name, "algorithm": alg.name, **_summary(sub)})
    return {
        "format": REPORT_FORMAT,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "mode": cfg.mode,
        "run_seeds": cfg.seeds,
        "eps_final_probability": cfg.eps_final,
        "delta_probability": cfg.delta,
        "check_eps_probability": cfg.check_eps,
        "environments": [_env_dict(n, s) for n, s in cfg.environments],
        "algorithms": [
            {"name": a.name, "kind": a.kind, "oracle": a.oracle, "reset_mode": a.reset_mode,
             "overrides": _rename(a.overrides, PARAM_KEYS)}
            for a in cfg.algorithms
        ],
        "summary": _summary(rows),
        "groups": groups,
        "runs": rows,
    }


def _json_scalar(value):
    # numpy scalars leak out of array reductions in result details
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        for field_name, problem in exc.fields.items():
            print(f"config error: {field_name}: {problem}", file=sys.stderr)
        return 2
    report = run_matrix(cfg, args.jobs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{Path(args.config).stem}.report.json"
    path.write_text(json.dumps(report, indent=1, sort_keys=True, default=_json_scalar) + "\n")
    s = report["summary"]
    rate = "n/a" if s["pass_rate_fraction"] is None else f"{s['pass_rate_fraction']:.2f}"
    print(f"{s['runs_count']} runs, {s['passed_runs_count']} passed, {s['failed_runs_count']} errors, "
          f"pass rate {rate}; report {path}")
    return 0


def _cmd_verify(args) -> int:
    from .acceptance import CRITERIA, run_criteria
    from .invariants import run_invariants

    lines, ok = [], True
    if args.suite in ("invariants", "all"):
        for res in run_invariants(args.fixtures):
            print(res.line(), flush=True)
            ok &= res.passed
            lines.append(res.to_dict())
    if args.suite in ("acceptance", "all"):
        names = args.only or list(CRITERIA)
        unknown = [n for n in names if n not in CRITERIA]
        if unknown:
            print(f"unknown criteria {unknown}; choose from {list(CRITERIA)}", file=sys.stderr)
            return 2
        for name in names:
            res = run_criteria([name], args.jobs)[0]
            print(res.line(), flush=True)
            ok &= res.passed
            lines.append(res.to_dict())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = {"format": "blockrl.verify/1", "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
               "suite": args.suite, "passed": bool(ok), "results": lines}
        text = json.dumps(doc, indent=1, sort_keys=True, default=_json_scalar)
        (out_dir / f"verify-{args.suite}.json").write_text(text + "\n")
    print(f"verify {args.suite}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment matrix from a YAML config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="base seed, replacing the config's seeds")
    run.add_argument("--out", default="reports", help="directory for the JSON report")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.set_defaults(func=_cmd_run)
    verify = sub.add_parser("verify", help="run property and acceptance suites")
    verify.add_argument("suite", choices=("invariants", "acceptance", "all"))
    verify.add_argument("--fixtures", default=None, help="fixture directory (default: shipped fixtures)")
    verify.add_argument("--only", nargs="+", default=None, metavar="AC-N", help="subset of acceptance criteria")
    verify.add_argument("--jobs", type=int, default=1)
    verify.add_argument("--out", default=None, help="also write a JSON summary here")
    verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
