import json
import math

import pytest

from privsbm import __version__
from privsbm.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, dispatch
from privsbm.config import config_hash
from privsbm.formats import write_graph
from privsbm.graph_model import Graph
from privsbm.privacy_audit import failure_floor

MODEL = {"n": 4, "k": 2, "a": 1.0, "b": 0.5}
AUDIT = {
    "schema_version": 1,
    "model": MODEL,
    "mechanism": {"epsilon": 1.0, "c": 1.0},
    "audit": {"distances": [1, 2]},
}
NO_CHECKS = {
    "reduction_n": [],
    "identity_n": [],
    "split_merge_betas": [],
    "peeling_instances": 0,
    "orbit_n": [],
}


def run(command, config_path, out, *extra):
    return dispatch([command, "--config", str(config_path), "--out", str(out), *extra])


def read_json(path):
    return json.loads(path.read_text())


class TestUsage:
    def test_no_command(self, capsys):
        assert dispatch([]) == EXIT_INVALID
        assert "usage" in capsys.readouterr().err

    def test_unknown_command(self):
        assert dispatch(["train"]) == EXIT_INVALID

    def test_missing_config(self):
        assert dispatch(["audit"]) == EXIT_INVALID

    def test_version(self, capsys):
        assert dispatch(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_invalid_config(self, tmp_path, config_file):
        path = config_file({**AUDIT, "schema_version": 2})
        assert run("audit", path, tmp_path / "out") == EXIT_INVALID

    def test_absent_config(self, tmp_path):
        assert run("audit", tmp_path / "absent.json", tmp_path / "out") == EXIT_INVALID

    def test_negative_seed(self, tmp_path, config_file):
        path = config_file(AUDIT)
        assert run("sample", path, tmp_path / "out", "--seed", "-1") == EXIT_INVALID

    def test_missing_section(self, tmp_path, config_file):
        path = config_file({"schema_version": 1, "model": MODEL})
        assert run("estimate", path, tmp_path / "out") == EXIT_INVALID


class TestAudit:
    def test_pass(self, tmp_path, config_file):
        out = tmp_path / "out"
        assert run("audit", config_file(AUDIT), out) == EXIT_OK
        audit = read_json(out / "audit.json")
        assert audit["pass"] is True
        assert [report["distance"] for report in audit["reports"]] == [1, 2]
        manifest = read_json(out / "manifest.json")
        assert manifest["command"] == "audit"
        assert manifest["status"] == "pass"
        assert manifest["outputs"] == ["audit.json"]
        assert manifest["config_sha256"] == config_hash(AUDIT)

    def test_miscalibrated_mechanism_fails(self, tmp_path, config_file):
        raw = {**AUDIT, "audit": {"distances": [1], "eta_scale": 10.0}}
        out = tmp_path / "out"
        assert run("audit", config_file(raw), out) == EXIT_FAILED
        assert read_json(out / "audit.json")["pass"] is False
        assert read_json(out / "manifest.json")["status"] == "fail"


class TestLowerBound:
    def test_pass(self, tmp_path, config_file):
        raw = {
            "schema_version": 1,
            "model": {"n": 4, "k": 2, "a": 2.0, "b": 1.0},
            "mechanism": {"epsilon": 1.0, "c": 1.0},
            "audit": {"epsilons": [0.5, 4.0], "class_ab": [[3.0, 1.0]]},
        }
        out = tmp_path / "out"
        assert run("lower-bound", config_file(raw), out) == EXIT_OK
        record = read_json(out / "lower_bound.json")
        assert record["pass"] is True
        assert len(record["results"]) == 4
        assert record["results"][0]["epsilon"] == 0.5
        assert record["results"][0]["floor"] >= failure_floor(0.5) - 1e-12
        assert record["min_epsilon_for_inverse_n_failure"] == pytest.approx(
            0.5 * math.log(3)
        )


class TestVerify:
    def test_pass(self, tmp_path, config_file):
        raw = {"schema_version": 1, "verify": {"chernoff_n": [4], **NO_CHECKS}}
        out = tmp_path / "out"
        assert run("verify", config_file(raw), out) == EXIT_OK
        lines = (out / "verification.csv").read_text().splitlines()
        assert lines[0] == "lemma,instance,lhs,rhs,margin,pass"
        assert all(line.endswith(",true") for line in lines[1:])
        assert (out / "verification.xml").exists()

    def test_penalty_outside_interval_fails(self, tmp_path, config_file):
        raw = {
            "schema_version": 1,
            "verify": {
                "chernoff_n": [6],
                "chernoff_beta": 1.5,
                "lambda_override": -10.0,
                "s_grid": [0.0],
                **NO_CHECKS,
            },
        }
        out = tmp_path / "out"
        assert run("verify", config_file(raw), out) == EXIT_FAILED
        assert ",false" in (out / "verification.csv").read_text()


class TestSampleEstimate:
    def test_sample(self, tmp_path, config_file):
        out = tmp_path / "out"
        assert run("sample", config_file(AUDIT), out, "--seed", "5") == EXIT_OK
        assert (out / "truth.txt").read_text() == "1 1 2 2\n"
        assert (out / "graph.txt").read_text().startswith("4 ")

    def test_reproducible(self, tmp_path, config_file):
        path = config_file({**AUDIT, "model": {**MODEL, "truth": "uniform"}})
        for name in ("first", "second"):
            assert run("sample", path, tmp_path / name, "--seed", "7") == EXIT_OK
        for output in ("graph.txt", "truth.txt", "manifest.json"):
            first = (tmp_path / "first" / output).read_bytes()
            assert first == (tmp_path / "second" / output).read_bytes()

    def test_estimate_given_graph(self, tmp_path, config_file):
        graph_path = tmp_path / "graph.txt"
        write_graph(Graph.from_edges(4, [(0, 1), (2, 3)]), graph_path)
        out = tmp_path / "out"
        path = config_file(AUDIT)
        assert run("estimate", path, out, "--graph", str(graph_path)) == EXIT_OK
        record = read_json(out / "estimate.json")
        assert record["envelope_member"] is True
        assert sorted(record["labeling"]) == [1, 1, 2, 2]
        assert record["epsilon0"] == 0.5

    def test_estimate_outside_envelope(self, tmp_path, config_file):
        graph_path = tmp_path / "graph.txt"
        write_graph(Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)]), graph_path)
        out = tmp_path / "out"
        path = config_file(AUDIT)
        assert run("estimate", path, out, "--graph", str(graph_path)) == EXIT_OK
        assert read_json(out / "estimate.json")["envelope_member"] is False


class TestSweep:
    def test_sweep(self, tmp_path, config_file):
        raw = {
            "schema_version": 1,
            "sweep": {
                "n": [4],
                "k": [2],
                "a": [2.0],
                "b": [1.0],
                "epsilon": [0.5, 2.0],
                "replicates": 10,
            },
        }
        out = tmp_path / "out"
        assert run("sweep", config_file(raw), out, "--threads", "1") == EXIT_OK
        assert len((out / "risk.csv").read_text().splitlines()) == 3
        assert len((out / "overlay.csv").read_text().splitlines()) == 3
        manifest = read_json(out / "manifest.json")
        assert manifest["outputs"] == ["risk.csv", "overlay.csv"]
