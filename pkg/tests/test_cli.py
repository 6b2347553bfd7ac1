import csv
import json
import subprocess
import sys

import pytest

from neurocert.benchmarks import REGISTRY
from neurocert.cli import main


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("NEUROCERT_OUT", str(tmp_path))
    return tmp_path


def test_list_has_every_benchmark(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 26
    assert lines[0].split()[:3] == ["1", "NonPoly0", "stability"]
    assert "(extended)" in lines[7] and "(extended)" in lines[8]


def test_list_full_is_registry_listing(capsys):
    from neurocert.benchmarks import registry_listing

    assert main(["list", "--full"]) == 0
    assert capsys.readouterr().out == registry_listing()


def test_usage_errors_exit_2(capsys, out):
    assert main([]) == 2
    assert main(["synth"]) == 2  # no benchmark or config
    assert main(["synth", "-b", "NoSuch"]) == 2
    assert "1-NonPoly0" in capsys.readouterr().err
    assert main(["frobnicate"]) == 2
    assert main(["check", "-b", "1"]) == 2  # no --function
    assert main(["check", "-b", "1", "-f", "V"]) == 2
    assert main(["check", "-b", "1", "-f", "V=x0^^2"]) == 2


def test_config_parse_error_exit_2(tmp_path, capsys, out):
    path = tmp_path / "bad.toml"
    path.write_text('[problem]\nkind = "rwa"\ndynamics = [\n')
    assert main(["synth", "-c", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_synth_check_simulate_round_trip(out, capsys):
    assert main(["synth", "-b", "1", "--seed", "0"]) == 0
    text = capsys.readouterr().out
    assert "success" in text and "V(x) =" in text
    cert = out / "1-NonPoly0_seed0.cert.json"
    assert cert.exists() and (out / "1-NonPoly0_seed0.cert.networks.json").exists()
    run = json.loads((out / "runs.jsonl").read_text().splitlines()[-1])
    assert run["outcome"] == "success" and run["benchmark"] == 1

    assert main(["check", str(cert)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("V_positive") and "Valid" in lines[0]
    assert lines[-1].startswith("Valid")

    assert main(["simulate", str(cert), "--n", "20", "--T", "5", "--dt", "0.01", "--dump", "2", "--grid", "11"]) == 0
    assert len(list(out.glob("*_traj*.csv"))) == 2
    rows = list(csv.reader(open(out / "1-NonPoly0_V_contour.csv")))
    assert len(rows) == 1 + 121


def test_check_inline_counterexample(out, capsys):
    # the quadratic proves benchmark 1 (x1 < 1 on the torus); an indefinite V does not
    assert main(["check", "-b", "1", "-f", "V=x0^2 + x1^2"]) == 0
    capsys.readouterr()
    assert main(["check", "-b", "1", "-f", "V=x0^2 - x1^2"]) == 1
    text = capsys.readouterr().out
    assert "V_positive         Counterexample at x =" in text and "NOT valid" in text


def test_check_reach_certificate(out, capsys):
    # V = x0 is positive on part of the initial set, so the init condition fails
    assert main(["check", "-b", "15", "-f", "V=x0"]) == 1
    assert "V_init" in capsys.readouterr().out
    assert main(["check", "-b", "23", "-f", "V=x0^2 + x1^2"]) == 2  # controller missing


UNSTABLE = """
[problem]
kind = "stability"
dynamics = ["x0", "x1"]
[regions]
domain = "Torus([0, 0], 1, 0.1)"
[cegis]
max_loops = 2
"""


def test_synth_failure_exit_1(out, tmp_path, capsys):
    path = tmp_path / "unstable.toml"
    path.write_text(UNSTABLE)
    assert main(["synth", "-c", str(path)]) == 1
    run = json.loads((out / "runs.jsonl").read_text().splitlines()[-1])
    assert run["outcome"] == "failure" and run["loops"] == 2
    assert not list(out.glob("*.cert.json"))


def test_suite_empty_seeds(out, capsys):
    assert main(["suite", "1", "--seeds", ""]) == 0
    rows = list(csv.reader(open(out / "suite.csv")))
    assert rows == [["benchmark", "property", "N_s", "N_u", "seed", "outcome", "loops",
                     "t_learn_s", "t_verify_s", "t_total_s"]]


def test_suite_one_cell(out, capsys):
    assert main(["suite", "1", "--seeds", "0", "--dump"]) == 0
    rows = list(csv.DictReader(open(out / "suite.csv")))
    assert len(rows) == 1 and rows[0]["benchmark"] == "1" and rows[0]["outcome"] == "success"
    assert "S=100%" in capsys.readouterr().out
    assert (out / "1-NonPoly0_seed0.cert.json").exists()


def test_bad_seed_spec(out):
    assert main(["suite", "1", "--seeds", "a-b"]) == 2


def test_console_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "neurocert", "list"], capture_output=True, text=True,
                       env={"NEUROCERT_OUT": str(tmp_path), "PATH": "/usr/bin:/bin"})
    assert r.returncode == 0 and len(r.stdout.splitlines()) == len(REGISTRY)
