import json
import shutil
from pathlib import Path

import pytest

from grwlab.cli import main
from grwlab.io.serialize import read_jsonl, read_povm

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


BASE = {"format_version": "1.0", "seed": 3,
        "model": {"n_particles": 1, "sites": 4, "lam": 1.0, "sigma": 1.0, "hamiltonian": {"kind": "hopping"}},
        "window": [0.0, 1.0], "ensemble": {"M": 20}}


def test_simulate_jsonl_and_csv(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    recs = read_jsonl(tmp_path / "a" / "trajectories.jsonl")
    assert len(recs) == 20 and all(r["seed"] == 3 for r in recs)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--format", "csv"]) == 0
    lines = (tmp_path / "b" / "flashes.csv").read_text().splitlines()
    assert lines[0] == "trajectory,t,site,label"
    assert len(lines) - 1 == sum(len(r["flashes"]) for r in recs)


def test_zero_rate_simulation_has_no_flashes(tmp_path):
    doc = json.loads(json.dumps(BASE))
    doc["model"]["lam"] = 0.0
    assert main(["simulate", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    assert all(r["flashes"] == [] for r in read_jsonl(tmp_path / "trajectories.jsonl"))


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, BASE)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    assert (tmp_path / "a" / "trajectories.jsonl").read_bytes() != (tmp_path / "b" / "trajectories.jsonl").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    doc = json.loads(json.dumps(BASE))
    doc["model"]["sigma"] = -1.0
    doc["seed"] = -5
    assert main(["simulate", "--config", write(tmp_path, doc)]) == 2
    err = capsys.readouterr().err
    assert "config error at /model/sigma" in err and "config error at /seed" in err
    assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 2
    assert main(["simulate", "--config", write(tmp_path, BASE), "--jobs", "0"]) == 2
    assert main(["verify", "--config", write(tmp_path, BASE)]) == 2


def test_lindblad_outputs(tmp_path):
    doc = dict(BASE, lindblad={"times": [0.5, 1.0]})
    assert main(["lindblad", "--config", write(tmp_path, doc), "--out", str(tmp_path), "--format", "csv"]) == 0
    rows = (tmp_path / "lindblad.csv").read_text().splitlines()
    assert len(rows) == 3
    assert float(rows[1].split(",")[1]) == pytest.approx(1.0)


def test_povm_command(tmp_path):
    out = tmp_path / "o"
    assert main(["povm", "--config", str(ROOT / "configs" / "standard_povm.json"), "--out", str(out)]) == 0
    summary = json.loads((out / "povm_summary.json").read_text())
    assert summary["passed"]
    assert read_povm(out / "povm_flow.json").outcomes == ["left", "right"]


def test_runtime_povm_command(tmp_path):
    assert main(["povm", "--config", str(ROOT / "configs" / "runtime_povm.json"), "--out", str(tmp_path)]) == 0


def test_scenario_command_and_unknown_parameter(tmp_path):
    doc = {"format_version": "1.0", "seed": 1,
           "scenario": {"name": "collapse_detection", "params": {"M": 2000}}}
    assert main(["scenario", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "scenario_collapse_detection.json").read_text())
    assert res["ok"]
    doc["scenario"]["params"]["speed"] = 3
    assert main(["scenario", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 2


def test_verify_command(tmp_path):
    doc = {"format_version": "1.0", "seed": 2, "verify": {"suites": ["poisson"], "M": 3000}}
    assert main(["verify", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify_summary.csv").read_text().startswith("suite,test,")


def test_replay_of_shipped_records_is_byte_identical(tmp_path):
    cfg = str(ROOT / "configs" / "example_trajectories.json")
    rec = str(ROOT / "data" / "example_trajectories.jsonl")
    for jobs in ("1", "2"):
        out = tmp_path / jobs
        assert main(["replay", "--config", cfg, "--record", rec, "--out", str(out), "--jobs", jobs]) == 0
        assert (out / "replay.jsonl").read_bytes() == Path(rec).read_bytes()


def test_replay_detects_tampering(tmp_path):
    rec = ROOT / "data" / "example_trajectories.jsonl"
    lines = rec.read_text().splitlines(keepends=True)
    first = json.loads(lines[0])
    first["final_state_hash"] = "0" * 64
    lines[0] = json.dumps(first, sort_keys=True, separators=(",", ":")) + "\n"
    bad = tmp_path / "bad.jsonl"
    bad.write_text("".join(lines))
    cfg = str(ROOT / "configs" / "example_trajectories.json")
    assert main(["replay", "--config", cfg, "--record", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["replay", "--config", cfg, "--out", str(tmp_path)]) == 2
