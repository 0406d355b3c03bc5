"""Command-line verbs, exit codes, manifests and sweeps."""

import csv
import json
import subprocess
import sys

import pytest

from gceigen.cli import main
from gceigen.manifest import SCHEMA, read_manifest, validate_manifest

FAST = ["--problem", "quartic1d", "--h", "0.01", "--half-width", "3"]


def _manifest(path):
    return read_manifest(path / "manifest.json")


def _stable(doc):
    doc = dict(doc)
    doc.pop("timings")
    doc["config"] = {k: v for k, v in doc["config"].items() if k != "output"}
    return doc


class TestVerbs:
    def test_validate_builtin(self, tmp_path):
        assert main(["validate", "--problem", "ellipse2d", "--out", str(tmp_path)]) == 0
        doc = _manifest(tmp_path)
        assert doc["validation"]["ok"] and doc["command"] == "validate"

    def test_validate_inline_failure(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"inline": {"n": 1, "f": {"kind": "quadratic", "scale": -1.0}},
                                   "output": str(tmp_path / "out")}))
        assert main(["validate", "--config", str(cfg)]) == 2
        doc = _manifest(tmp_path / "out")
        assert doc["status"] == "validation_failed"

    def test_solve_with_checks(self, tmp_path):
        assert main(["solve", *FAST, "--check", "--out", str(tmp_path)]) == 0
        doc = _manifest(tmp_path)
        assert doc["converged"] and all(doc["checks"].values())
        assert doc["oracle"]["kind"] == "radial"
        assert (tmp_path / "u_star.csv").exists() and (tmp_path / "phi.csv").exists()

    def test_certify(self, tmp_path):
        assert main(["certify", *FAST, "--tau", "1.05", "--out", str(tmp_path)]) == 0
        cert = _manifest(tmp_path)["certificates"]
        assert cert["tau"] == 1.05 and cert["consistent"]

    def test_oracle_only(self, tmp_path):
        assert main(["oracle", "--problem", "radial2d", "--out", str(tmp_path)]) == 0
        doc = _manifest(tmp_path)
        assert "lambda_star" not in doc
        assert doc["oracle"]["lambda"] == pytest.approx(2.3811016, abs=1e-6)

    def test_oracle_missing_for_ellipse(self, tmp_path):
        assert main(["oracle", "--problem", "ellipse2d", "--out", str(tmp_path)]) == 2

    def test_degenerate(self, tmp_path):
        assert main(["solve", "--problem", "degenerate_zeroF", "--check", "--out", str(tmp_path)]) == 0
        assert _manifest(tmp_path)["oracle"]["kind"] == "degenerate"

    def test_not_converged(self, tmp_path):
        code = main(["solve", *FAST, "--delta-floor", "0.5", "--out", str(tmp_path)])
        assert code == 3
        doc = _manifest(tmp_path)
        assert doc["status"] == "not_converged" and doc["converged"] is False


class TestConfigErrors:
    def test_malformed_json_reports_position(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"builtin": "quartic1d",\n "grid": {"h": }}')
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert "line 2" in err and "column" in err

    def test_negative_spacing(self, tmp_path, capsys):
        assert main(["solve", "--problem", "quartic1d", "--h", "-0.1", "--out", str(tmp_path)]) == 2
        assert "grid.h" in capsys.readouterr().err

    def test_both_problem_sources(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"builtin": "quartic1d", "inline": {"n": 1}}))
        assert main(["validate", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_unknown_field(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"builtin": "quartic1d", "colour": 1}))
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_empty_sweep(self, tmp_path):
        assert main(["sweep", *FAST, "--axis", "tau", "--values", "", "--out", str(tmp_path)]) == 2

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"builtin": "quartic1d", "grid": {"h": 0.5}}))
        assert main(["validate", "--config", str(cfg), "--h", "0.01", "--out", str(tmp_path)]) == 0
        assert _manifest(tmp_path)["config"]["grid"]["h"] == 0.01


class TestManifest:
    def test_deterministic_apart_from_timings(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["certify", *FAST, "--out", str(a)]) == 0
        assert main(["certify", *FAST, "--out", str(b)]) == 0
        assert _stable(_manifest(a)) == _stable(_manifest(b))
        assert (a / "u_star.csv").read_bytes() == (b / "u_star.csv").read_bytes()

    def test_schema_rejects_extra_fields(self, tmp_path):
        main(["validate", "--problem", "quartic1d", "--out", str(tmp_path)])
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["surprise"] = 1
        with pytest.raises(Exception):
            validate_manifest(doc)

    def test_schema_requires_timings(self):
        assert "timings" in SCHEMA["required"]


def test_sweep_summary(tmp_path):
    assert main(["sweep", *FAST, "--axis", "tau", "--values", "1.01,1.1", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "sweep_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [1.01, 1.1]
    assert float(rows[0]["lambda_plus"]) < float(rows[1]["lambda_plus"])
    assert all(r["exit_code"] == "0" for r in rows)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gceigen", "validate", "--problem", "quartic1d",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
