import json
import re

import pytest
import yaml

from blockrl.cli import load_config, main, parse_config, run_matrix
from blockrl.errors import ConfigError
from blockrl.invariants import shipped_fixtures

UNIT_SUFFIXES = ("_count", "_seconds", "_probability", "_fraction", "_log10", "_index", "_indices",
                 "_distance", "_factor", "_seed", "_seeds")

LOCK = {"name": "lock", "kind": "lock", "H": 3, "A": 2, "X": 4, "noise": 0.1, "n_concepts": 4}
PCO_BAYES = {"name": "pco-bayes", "kind": "pco", "oracle": "bayes", "overrides": {"max_centers": 4}}


def config(**extra):
    doc = {"mode": "practical", "seeds": [0, 1], "eps_final": 0.1, "delta": 0.1,
           "environments": [LOCK], "algorithms": [PCO_BAYES]}
    doc.update(extra)
    return doc


def numeric_keys_without_units(node, path=""):
    bad = []
    if isinstance(node, dict):
        for key, value in node.items():
            numeric = isinstance(value, (int, float)) and not isinstance(value, bool)
            numeric_list = isinstance(value, list) and value and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
            if (numeric or numeric_list) and not key.endswith(UNIT_SUFFIXES):
                bad.append(f"{path}.{key}")
            bad += numeric_keys_without_units(value, f"{path}.{key}")
    elif isinstance(node, list):
        for i, value in enumerate(node):
            bad += numeric_keys_without_units(value, f"{path}[{i}]")
    return bad


def strip_volatile(node):
    if isinstance(node, dict):
        return {k: strip_volatile(v) for k, v in node.items()
                if k != "generated_at" and not k.endswith("_seconds")}
    if isinstance(node, list):
        return [strip_volatile(v) for v in node]
    return node


def write_config(tmp_path, doc, name="cfg"):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


class TestParseConfig:
    def test_empty_matrix(self):
        cfg = parse_config({"seeds": [0]})
        report = run_matrix(cfg)
        assert report["summary"]["runs_count"] == 0
        assert report["summary"]["pass_rate_fraction"] is None

    def test_collects_every_field_error(self):
        doc = config(mode="fast", delta=2.0, extra=1)
        doc["environments"] = [{"name": "x", "kind": "maze", "H": 3}]
        doc["algorithms"] = [{"kind": "pco", "oracle": "magic"}]
        with pytest.raises(ConfigError) as err:
            parse_config(doc)
        fields = err.value.fields
        assert {"mode", "delta", "<root>"} <= set(fields)
        assert any(k.startswith("environments[0]") for k in fields)
        assert any(k.startswith("algorithms[0]") for k in fields)

    def test_seed_override_replaces_base(self):
        assert parse_config(config(), seed=10).seeds == [10, 11]
        doc = config()
        del doc["seeds"]
        doc.update(seed=3, runs=2)
        assert parse_config(doc).seeds == [3, 4]
        assert parse_config(doc, seed=7).seeds == [7, 8]

    def test_check_eps_defaults_to_eps_final(self):
        assert parse_config(config(eps_final=0.2)).check_eps == 0.2

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("mode: [unclosed")
        with pytest.raises(ConfigError):
            load_config(path)


class TestRunMatrix:
    def test_report_is_deterministic_and_united(self):
        cfg = parse_config(config())
        a, b = run_matrix(cfg), run_matrix(cfg)
        assert strip_volatile(a) == strip_volatile(b)
        assert numeric_keys_without_units(a) == []
        assert a["summary"]["runs_count"] == 2 and a["summary"]["pass_rate_fraction"] == 1.0
        assert all(r["cover"]["n_policies_count"] <= r["policy_bound_count"] for r in a["runs"])

    def test_per_run_failure_is_recorded(self):
        broken = {"name": "broken", "kind": "random_block", "H": 3, "S": 4, "A": 2, "X": 2}
        report = run_matrix(parse_config(config(environments=[LOCK, broken])))
        rows = [r for r in report["runs"] if r["environment"] == "broken"]
        assert rows and all(r["status"] == "error" and r["error_type"] == "ValueError" for r in rows)
        assert report["summary"]["failed_runs_count"] == 2
        assert report["summary"]["passed_runs_count"] == 2

    def test_theory_mode_is_not_executed(self):
        report = run_matrix(parse_config(config(mode="theory")))
        assert all(r["executable"] is False for r in report["runs"])
        assert report["summary"]["executed_runs_count"] == 0
        params = report["runs"][0]["theory_params"]
        assert params and all(isinstance(v, (int, float)) for v in params.values())
        assert numeric_keys_without_units(report) == []


class TestMain:
    def test_run_writes_report(self, tmp_path, capsys):
        path = write_config(tmp_path, config())
        out = tmp_path / "out"
        assert main(["run", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "cfg.report.json").read_text())
        assert report["format"] == "blockrl.report/1"
        assert re.search(r"2 runs, 2 passed, 0 errors", capsys.readouterr().out)

    def test_run_config_error_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, config(mode="nope"))
        assert main(["run", str(path), "--out", str(tmp_path)]) == 2
        assert "config error: mode" in capsys.readouterr().err

    def test_verify_invariants(self, tmp_path, capsys):
        assert main(["verify", "invariants", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.strip().endswith("verify invariants: PASS")
        assert json.loads((tmp_path / "verify-invariants.json").read_text())["passed"] is True

    def test_verify_corrupted_fixtures_fails(self, tmp_path, capsys):
        doc = json.loads((shipped_fixtures() / "lock.json").read_text())
        doc["P"][0][0][0][0] += 0.01
        (tmp_path / "lock.json").write_text(json.dumps(doc))
        assert main(["verify", "invariants", "--fixtures", str(tmp_path)]) == 1
        out = capsys.readouterr().out
        assert "LatentModel.P" in out and "verify invariants: FAIL" in out

    def test_verify_unknown_criterion(self, capsys):
        assert main(["verify", "acceptance", "--only", "AC-99"]) == 2

    def test_verify_all_covers_both_suites(self, tmp_path, capsys):
        assert main(["verify", "all", "--only", "AC-6", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "verify-all.json").read_text())
        names = [r["name"] for r in doc["results"]]
        assert "AC-6" in names and any(n.endswith(".load") for n in names)


@pytest.mark.slow
def test_shipped_cover_config_pass_rate(tmp_path):
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "ac1.yaml"
    report = run_matrix(load_config(path))
    assert report["summary"]["pass_rate_fraction"] >= 0.9
