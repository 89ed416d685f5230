import json
import os

import pytest

import starweyl.commands as commands
from starweyl.interfaces import CheckResult
from starweyl.verification import BaseCheck, VerificationService, WronskianCheck
from starweyl_cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main

HYPERBOLIC = {
    "edges": [{"order": 2, "length": 1.0, "nu": [0]} for _ in range(3)],
    "w": 3,
    "grid": {"kind": "ray", "t_min": 1, "t_max": 20, "count": 20},
    "verify": {"cases": [{"name": "hyperbolic", "order": 2, "nu": [0], "samples": 3}]},
}


class _AlwaysFails(BaseCheck):
    name = "always_fails"

    def run(self, ctx):
        return [CheckResult(self.name, ctx.case.name, 1.0, 0.0, False)]


def _config(tmp_path, doc=None, name="problem.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc or HYPERBOLIC), encoding="utf-8")
    return str(path)


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path / "out")])


def _only_checks(monkeypatch, *checks):
    monkeypatch.setattr(commands, "VerificationService",
                        lambda *args, **kwargs: VerificationService(checks=list(checks)))


class TestForwardAndReduce:
    def test_forward_writes_all_matrices(self, tmp_path):
        assert _run(tmp_path, "forward", "--config", _config(tmp_path), "--grid-count", "4") == EXIT_OK
        names = set(os.listdir(tmp_path / "out"))
        assert {f"{p}_{i}.csv" for p in ("M", "m") for i in (1, 2, 3)} | {"forward_report.json"} == names
        report = json.loads((tmp_path / "out" / "forward_report.json").read_text(encoding="utf-8"))
        assert len(report["grid"]) == 4
        assert report["graph"]["orders"] == [2, 2, 2]

    def test_reduce_after_forward(self, tmp_path):
        config = _config(tmp_path)
        assert _run(tmp_path, "forward", "--config", config, "--grid-count", "4", "--workers", "2") == EXIT_OK
        assert _run(tmp_path, "reduce", "--config", config) == EXIT_OK
        summary = json.loads((tmp_path / "out" / "reduction_report.json").read_text(encoding="utf-8"))
        assert summary["s"] == 1 and summary["p_N"] == 3
        assert summary["pass_fraction"] >= 0.9
        assert os.path.isfile(tmp_path / "out" / "m_pN_reconstructed.csv")

    def test_reduce_without_weyl_data(self, tmp_path):
        assert _run(tmp_path, "reduce", "--config", _config(tmp_path)) == EXIT_CONFIG


class TestConfigurationErrors:
    def test_zero_gamma_diagonal(self, tmp_path):
        doc = json.loads(json.dumps(HYPERBOLIC))
        doc["edges"][1]["gamma"] = [[1, 0], [0, 0]]
        assert _run(tmp_path, "forward", "--config", _config(tmp_path, doc)) == EXIT_CONFIG
        assert not os.path.exists(tmp_path / "out")

    def test_empty_grid(self, tmp_path):
        assert _run(tmp_path, "forward", "--config", _config(tmp_path), "--grid-count", "0") == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert _run(tmp_path, "forward", "--config", str(tmp_path / "absent.json")) == EXIT_CONFIG

    def test_command_needs_config(self, tmp_path):
        assert _run(tmp_path, "forward") == EXIT_CONFIG

    def test_recover_needs_section(self, tmp_path):
        assert _run(tmp_path, "recover", "--config", _config(tmp_path)) == EXIT_CONFIG

    def test_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit):
            _run(tmp_path, "plot")

    def test_help_lists_exit_codes(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        assert "Exit codes:" in out
        assert "write their full report before exiting 3" in out


class TestVerify:
    def test_passing_checks(self, tmp_path, monkeypatch):
        _only_checks(monkeypatch, WronskianCheck())
        assert _run(tmp_path, "verify", "--config", _config(tmp_path)) == EXIT_OK
        report = json.loads((tmp_path / "out" / "asymptotics_report.json").read_text(encoding="utf-8"))
        assert report["passed"] and report["cases"][0]["name"] == "hyperbolic"

    def test_failed_check_exits_numerical(self, tmp_path, monkeypatch):
        _only_checks(monkeypatch, _AlwaysFails())
        assert _run(tmp_path, "verify", "--config", _config(tmp_path)) == EXIT_NUMERICAL
        report = json.loads((tmp_path / "out" / "asymptotics_report.json").read_text(encoding="utf-8"))
        assert report["failed"] == ["always_fails@hyperbolic"]
