import json
import subprocess
import sys

import pytest

from fedscore.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, main

FAST = ["--n", "2000", "--sites", "3", "--seed", "5"]


@pytest.fixture
def cohort(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", *FAST, "--out", "syn"]) == 0
    assert main(["partition", *FAST, "--csv", "syn/data.csv", "--schema", "syn/schema.json",
                 "--out", "sites"]) == 0
    return tmp_path


def test_staged_commands(cohort):
    assert sorted(p.name for p in (cohort / "sites").iterdir()) == [
        "schema.json", "site_01.csv", "site_02.csv", "site_03.csv", "sites.json"]
    assert main(["rank", "sites", *FAST, "--out", "ranking.json"]) == 0
    ranking = json.loads((cohort / "ranking.json").read_text())
    assert len(ranking["local"]) == 3
    assert main(["bin", "sites", *FAST, "--out", "cutoffs.json"]) == 0
    assert main(["fit", "sites", *FAST, "--cutoffs", "cutoffs.json", "--variables", "age,triage",
                 "--out", "fit"]) == 0
    card = json.loads((cohort / "fit" / "scorecard.json").read_text())
    assert [v["name"] for v in card["variables"]] == ["age", "triage"]
    tr = json.loads((cohort / "fit" / "transcript.json").read_text())
    assert [r["kind"] for r in tr["records"]].count("reply") == 2
    assert main(["evaluate", "sites", *FAST, "--cutoffs", "cutoffs.json", "--scorecard",
                 "fit/scorecard.json", "--out", "eval.json"]) == 0
    ev = json.loads((cohort / "eval.json").read_text())
    assert len(ev["sites"]) == 3 and 0.5 < ev["M1"] < 1.0


def test_partition_is_deterministic(cohort):
    first = (cohort / "sites" / "site_02.csv").read_bytes()
    assert main(["partition", *FAST, "--csv", "syn/data.csv", "--schema", "syn/schema.json",
                 "--out", "again"]) == 0
    assert (cohort / "again" / "site_02.csv").read_bytes() == first


def test_run_select_plot(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    args = ["run", *FAST, "--d-max", "3", "--epsilon", "0.01"]
    assert main([*args, "--out", "b1"]) == 0
    assert main([*args, "--out", "b2"]) == 0
    files = sorted(p.relative_to(tmp_path / "b1") for p in (tmp_path / "b1").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "b1" / f).read_bytes() == (tmp_path / "b2" / f).read_bytes(), f
    curve = tmp_path / "b1" / "arms" / "federated" / "curve.json"
    assert main(["select", str(curve), "--epsilon", "0", "--out", "sel.json"]) == 0
    sel = json.loads((tmp_path / "sel.json").read_text())
    assert 1 <= sel["m"] <= 3 and sel["epsilon"] == 0
    assert main(["plot", str(curve), "--out", "curve.svg"]) == 0
    assert (tmp_path / "curve.svg").read_text().startswith("<svg")


def test_config_file_and_flag_override(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "cfg.json").write_text(json.dumps({"n": 1500, "sites": 2, "d_max": 2, "seed": 1}))
    assert main(["run", "--config", "cfg.json", "--seed", "2", "--out", "b"]) == 0
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["config"]["seed"] == 2 and man["config"]["sites"] == 2


@pytest.mark.parametrize(
    "argv, code, stage",
    [
        (["run", "--epsilon", "-1"], EXIT_CONFIG, "config"),
        (["run", "--lead", "first"], EXIT_CONFIG, "config"),
        (["run", "--config", "missing.json"], EXIT_IO, "config"),
        (["rank", "nowhere"], EXIT_IO, "rank"),
        (["partition", "--csv", "bad.csv", "--schema", "schema.json", "--sites", "2"], EXIT_DATA, "partition"),
    ],
)
def test_error_exit_codes(tmp_path, monkeypatch, capsys, argv, code, stage):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "schema.json").write_text(json.dumps(
        {"outcome": "y", "variables": [{"name": "x", "kind": "continuous"}]}))
    (tmp_path / "bad.csv").write_text("x,y\n1,0\nfoo,1\n")
    assert main(argv) == code
    assert capsys.readouterr().err.startswith(f"fedscore {stage}: ")


def test_unknown_variable_in_fit(cohort, capsys):
    assert main(["bin", "sites", *FAST, "--out", "cutoffs.json"]) == 0
    assert main(["fit", "sites", *FAST, "--cutoffs", "cutoffs.json", "--variables", "age,shoe"]) == EXIT_CONFIG
    assert "shoe" in capsys.readouterr().err


def test_site_count_mismatch(cohort):
    assert main(["rank", "sites", "--sites", "4"]) == EXIT_CONFIG


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fedscore", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth" in out.stdout
