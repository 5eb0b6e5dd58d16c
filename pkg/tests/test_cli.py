"""CLI surface: generate/rollout/verify/serve, exit codes, seed override."""

import json
import os
import subprocess
import sys

from pomdp_forge.core import EnvSpec, parse_trajectory

CLI = [sys.executable, "-m", "pomdp_forge.cli"]


def run_cli(*args, env=None, input_text=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(CLI + list(args), capture_output=True, text=True,
                          env=full_env, input=input_text, timeout=300)


def test_generate_writes_canonical_spec(tmp_path):
    out = tmp_path / "spec.json"
    res = run_cli("generate", "--family", "all_eq_one", "--k", "3",
                  "--horizon", "64", "--m", "8", "--out", str(out))
    assert res.returncode == 0
    spec = EnvSpec.load(out)
    assert spec.family == "all_eq_one" and spec.order_k == 3
    assert res.stdout.strip() == spec.digest()


def test_generate_rejects_k9(tmp_path):
    res = run_cli("generate", "--family", "all_eq_one", "--k", "9",
                  "--out", str(tmp_path / "x.json"))
    assert res.returncode == 2
    assert "InvalidSpec" in res.stderr and "table width" in res.stderr


def test_generate_state_conv_level5_sign_n(tmp_path):
    out = tmp_path / "spec.json"
    res = run_cli("generate", "--family", "reward_when_inside",
                  "--horizon", "256",
                  "--wrapper", "state_conv:level=5,sign=n", "--out", str(out))
    assert res.returncode == 0
    spec = EnvSpec.load(out)
    assert spec.wrappers[0].weights == (1.0, -1.0)


def test_rollout_stats_and_jsonl(tmp_path):
    spec_path = tmp_path / "spec.json"
    run_cli("generate", "--family", "all_eq", "--k", "2", "--horizon", "64",
            "--seed", "5", "--out", str(spec_path))
    out = tmp_path / "traj.jsonl"
    res = run_cli("rollout", "--spec", str(spec_path), "--episodes", "20",
                  "--policy", "clairvoyant", "--out", str(out))
    assert res.returncode == 0
    stats = json.loads(res.stdout)
    assert stats["episodes"] == 20
    assert 62.0 <= stats["mean_return"] <= 64.0  # 64 - 7/8 in expectation
    lines = out.read_text().splitlines()
    assert len(lines) == 20
    traj = parse_trajectory(lines[0])
    assert len(traj.steps) == 64 and traj.terminal
    assert traj.episode_index == 0
    assert json.loads((str(out) + ".stats.json") and
                      open(str(out) + ".stats.json").read()) == stats


def test_rollout_zero_episodes(tmp_path):
    spec_path = tmp_path / "spec.json"
    run_cli("generate", "--family", "all_eq", "--k", "1", "--out", str(spec_path))
    out = tmp_path / "none.jsonl"
    res = run_cli("rollout", "--spec", str(spec_path), "--episodes", "0",
                  "--out", str(out))
    assert res.returncode == 0
    assert out.read_text() == ""
    stats = json.loads(res.stdout)
    assert stats == {"episodes": 0, "mean_return": None, "std_return": None,
                     "per_step_reward_mean": None}


def test_seed_env_var_override(tmp_path):
    spec_path = tmp_path / "spec.json"
    run_cli("generate", "--family", "all_eq", "--k", "1", "--seed", "1",
            "--out", str(spec_path))
    out_a = tmp_path / "a.jsonl"
    out_b = tmp_path / "b.jsonl"
    script = tmp_path / "acts.json"
    script.write_text("[0]")
    run_cli("rollout", "--spec", str(spec_path), "--episodes", "1",
            "--policy", f"scripted:{script}", "--out", str(out_a),
            env={"POMDP_FORGE_SEED": "99"})
    run_cli("rollout", "--spec", str(spec_path), "--episodes", "1",
            "--policy", f"scripted:{script}", "--out", str(out_b))
    ta, tb = out_a.read_text(), out_b.read_text()
    assert ta and tb and ta != tb  # override changed the stream


def test_verify_exit_codes(tmp_path):
    res = run_cli("verify", "--suite", "lattice", "--instances", "20",
                  "--out", str(tmp_path / "report.json"))
    assert res.returncode == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["suite"] == "lattice" and report["passed"]
    names = {p["property"] for p in report["properties"]}
    assert {"commutativity", "associativity", "absorption"} <= names

    res = run_cli("verify", "--suite", "nope")
    assert res.returncode == 2  # argparse usage error

    res = run_cli("verify", "--suite", "mds", "--fixture", "fig9")
    assert res.returncode == 0
    report = json.loads(res.stdout)
    assert report["properties"][0]["property"] == "fig9_power_set"


def test_serve_protocol(tmp_path):
    spec_path = tmp_path / "spec.json"
    run_cli("generate", "--family", "all_eq", "--k", "1", "--horizon", "4",
            "--seed", "3", "--out", str(spec_path))
    spec = EnvSpec.load(spec_path)
    requests = [
        {"id": 1, "op": "hello"},
        {"id": 2, "op": "reset", "episode": 0},
        {"id": 3, "op": "step", "action": 0},
        {"id": 3, "op": "step", "action": 0},   # non-increasing id
        {"id": 5, "op": "step", "action": 99},  # bad action
        {"id": 6, "op": "close"},
    ]
    payload = "".join(json.dumps(r) + "\n" for r in requests)
    res = run_cli("serve", "--spec", str(spec_path), input_text=payload)
    assert res.returncode == 0
    replies = [json.loads(line) for line in res.stdout.splitlines()]
    assert replies[0]["ok"] and replies[0]["spec_digest"] == spec.digest()
    assert replies[1]["ok"] and 0.0 <= replies[1]["obs"][0] < 1.0
    assert replies[2]["ok"] and "reward" in replies[2]
    assert not replies[3]["ok"] and replies[3]["error"] == "ProtocolError"
    assert not replies[4]["ok"] and replies[4]["error"] == "ActionOutOfRange"
    assert replies[5]["ok"]
