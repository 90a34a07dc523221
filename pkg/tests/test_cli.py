import csv
import json
import subprocess
import sys

import pytest

from bampf_lab import cli
from bampf_lab.envs import load_env_spec
from bampf_lab.evaluation import BoundReport


def run(capsys, *argv):
    code = cli.run_command(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema_version=1 config_hash=")
    return list(csv.DictReader(lines[1:]))


def test_plan_writes_stamped_json(tmp_path, capsys):
    code, out, _ = run(capsys, "plan", "--env", "caterpillar", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["status"] == "ok"
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["config_hash"]) == 16
    (res,) = doc["results"]
    assert res["optimal_actions"] == ["go"]
    assert res["action_values"]["go"] == pytest.approx(600.03, abs=0.05)
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["config_hash"] == doc["config_hash"]
    assert cfg["config"]["command"] == "plan"


def test_rollout_bytes_are_reproducible(tmp_path, capsys):
    args = ["rollout", "--env", "coin", "--agent", "eps-greedy", "--agent-param", "epsilon=0.3", "--horizon", "12", "--seeds", "0-5"]
    assert run(capsys, *args, "--out", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out", str(tmp_path / "b"), "--jobs", "4")[0] == 0
    for name in ("traces.csv", "rollout_summary.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "traces.csv")
    assert list(rows[0]) == ["seed", "t", "s", "a", "r", "F", "G_partial"]
    assert sorted({int(r["seed"]) for r in rows}) == list(range(6))
    assert len(rows) == 6 * 12


def test_config_hash_tracks_content():
    base = ["rollout", "--env", "coin"]
    h = lambda *extra: cli.build_config(cli.build_parser().parse_args(base + list(extra))).hash
    assert h() == h("--out", "elsewhere") == h("--jobs", "3")
    assert h() != h("--seeds", "1")
    assert h() != h("--scale", "2")


def test_output_root_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BAMPF_LAB_OUT", str(tmp_path / "envroot"))
    assert run(capsys, "gen-random", "--seeds", "4,7")[0] == 0
    for sd in (4, 7):
        prior = load_env_spec((tmp_path / "envroot" / f"random-{sd}.json").read_text())
        assert prior.n_states == 3 and prior.discount == 0.7


def test_operational_errors_exit_one(tmp_path, capsys):
    code, _, err = run(capsys, "plan", "--env", "atlantis", "--out", str(tmp_path))
    assert code == 1
    rec = json.loads(err)
    assert rec["error"] == "UsageError" and "atlantis" in rec["message"]
    code, _, err = run(capsys, "teleport")
    assert code == 1 and json.loads(err)["error"] == "UsageError"
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = run(capsys, "plan", "--spec", str(bad), "--out", str(tmp_path))
    assert code == 1 and "schema_version" in json.loads(err)["message"]


def test_verification_failure_exits_two(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "verify_bounds", lambda kind, **kw: BoundReport(kind, 5.0, 1.0, False, 0.0, "x"))
    code, _, err = run(capsys, "bounds", "--kind", "d-horizon", "--out", str(tmp_path))
    assert code == 2
    assert json.loads(err)["error"] == "verification-failed"
    assert json.loads((tmp_path / "bounds.json").read_text())["report"]["satisfied"] is False


def test_bounds_commands(tmp_path, capsys):
    assert run(capsys, "bounds", "--kind", "d-horizon", "--phi-max", "1", "--d", "0.01", "--out", str(tmp_path))[0] == 0
    rep = json.loads((tmp_path / "bounds.json").read_text())["report"]
    assert rep["measured"] == 104
    code = run(capsys, "bounds", "--kind", "cor3", "--env", "caterpillar", "--k", "5", "--out", str(tmp_path))[0]
    assert code == 0
    rep = json.loads((tmp_path / "bounds.json").read_text())["report"]
    assert rep["bound"] == pytest.approx(4414, abs=1) and rep["satisfied"]


def test_check_bampf_and_counterexample(tmp_path, capsys):
    assert run(capsys, "check-bampf", "--env", "coin", "--builtin", "prediction_error", "--out", str(tmp_path))[0] == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())["certificate"]
    assert cert["verdict"] == "witness-found"
    assert run(capsys, "check-bampf", "--env", "coin", "--shaping", "information_gain", "--out", str(tmp_path))[0] == 0
    assert json.loads((tmp_path / "certificate.json").read_text())["certificate"]["verdict"] == "certified-bampf"
    assert run(capsys, "counterexample", "--env", "coin", "--shaping", "prediction_error", "--out", str(tmp_path))[0] == 0
    dis = json.loads((tmp_path / "disagreement.json").read_text())
    assert dis["planner"]["disjoint"]
    inst = load_env_spec((tmp_path / "counterexample_env.json").read_text())
    assert inst.n_states == 4 and inst.n_actions == 3
    # a potential-based shaping has nothing to construct
    code, _, err = run(capsys, "counterexample", "--env", "coin", "--shaping", "information_gain", "--out", str(tmp_path))
    assert code == 1 and "no witness" in json.loads(err)["message"]


def test_decompose_and_theorem1(tmp_path, capsys):
    assert run(capsys, "decompose", "--env", "caterpillar", "--depth", "2", "--out", str(tmp_path))[0] == 0
    rows = read_csv(tmp_path / "decomposition.csv")
    for r in rows:
        assert float(r["voi"]) + float(r["voo"]) == pytest.approx(float(r["total"]), abs=1e-12)
    assert run(capsys, "verify-theorem1", "--n", "6", "--out", str(tmp_path))[0] == 0
    doc = json.loads((tmp_path / "theorem1.json").read_text())
    assert doc["passed"] == doc["total"] == 6


def test_reproduce_fig1_matches_closed_forms(tmp_path, capsys):
    assert run(capsys, "reproduce", "fig1", "--out", str(tmp_path))[0] == 0
    for r in read_csv(tmp_path / "fig1a_heatmap.csv"):
        x, y = int(r["x"]), int(r["y"])
        d = (4 - x) + (4 - y)
        assert float(r["value"]) == pytest.approx(0.99 * -d + 8, abs=1e-12)
        if d == 7:
            assert float(r["value"]) == pytest.approx(0.99 + 0.01 * 8, abs=1e-12)
    hist = json.loads((tmp_path / "fig1b_history.json").read_text())["episodes"]
    assert [e["episode"] for e in hist] == [1, 2, 3]
    for e in hist:
        n = len(e["visited_before"])
        seen = set(e["visited_before"])
        for r in read_csv(tmp_path / f"fig1b_episode{e['episode']}_heatmap.csv"):
            cell = int(r["y"]) * 5 + int(r["x"])
            expected = -0.01 * n if cell in seen else 0.99 - 0.01 * n
            assert float(r["value"]) == pytest.approx(expected, abs=1e-12)


def test_parse_seeds():
    assert cli.parse_seeds("3") == [3]
    assert cli.parse_seeds("0,2,5") == [0, 2, 5]
    assert cli.parse_seeds("2-4,9") == [2, 3, 4, 9]
    with pytest.raises(cli.UsageError):
        cli.parse_seeds("a-b")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "bampf_lab.cli", "bounds", "--kind", "d-horizon", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
