import hashlib
import json
import subprocess
import sys
import time

import pytest

from perc_solidify import potential
from perc_solidify.cli import main


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def config(tmp_path):
    out = tmp_path / "c.bin"
    assert main(["generate", "--side", "12", "--p", "0.8", "--seed", "5", "--out", str(out)]) == 0
    return out


def test_generate_is_reproducible(tmp_path, config, capsys):
    again = tmp_path / "d.bin"
    assert main(["generate", "--side", "12", "--p", "0.8", "--seed", "5", "--out", str(again)]) == 0
    assert sha(config) == sha(again)
    manifest = json.loads((tmp_path / "c.bin.manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["command"] == "generate"
    assert {"started", "finished", "version", "params"} <= manifest.keys()


def test_schedule_prints_exact_alpha(capsys):
    assert main(["schedule", "--J", "1", "--eta", "0.6"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "1/38" in json.dumps(out)


def test_summary_file_and_sidecar(tmp_path, config):
    out = tmp_path / "cl.json"
    assert main(["cluster", "--config", str(config), "--out", str(out)]) == 0
    summary = json.loads(out.read_text())
    manifest = json.loads((tmp_path / "cl.json.manifest.json").read_text())
    assert summary and str(config) in manifest["input_digests"]
    assert manifest["input_digests"][str(config)] == sha(config)


def test_capacity_of_a_set(tmp_path, config, capsys):
    vs = tmp_path / "a.txt"
    vs.write_text("# a box\n5 5 5\n5 5 6\n")
    assert main(["capacity", "--config", str(config), "--set", str(vs)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["capacity"] > 0 and out["estimator"] == "exact"


def test_exit_codes(tmp_path, config, monkeypatch, capsys):
    assert main(["cluster", "--config", str(tmp_path / "missing.bin")]) == 3
    assert main(["generate", "--side", "8", "--p", "1.5", "--out", str(tmp_path / "x")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n")
    assert main(["capacity", "--config", str(config), "--set", str(bad)]) == 1
    vs = tmp_path / "a.txt"
    vs.write_text("5 5 5\n")
    monkeypatch.setattr(potential, "SPARSE_CAP", 10)
    assert main(["capacity", "--config", str(config), "--set", str(vs)]) == 2


def test_verify_subprocess():
    t = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "perc_solidify", "verify", "schedule-identities"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["passed"] is True
    assert time.perf_counter() - t < 10
