"""Transcript equivalence against the native CLI rollout, plus protocol
behavior. The primary toolkit is touched only through its CLI and wire
protocol."""

import json
import shutil
import subprocess

import pytest

from pybridge import (
    BridgeEnv, BridgeSession, ChildExited, EpisodeFinished, ProtocolError,
)

FORGE = shutil.which("pomdp-forge")
pytestmark = pytest.mark.skipif(FORGE is None,
                                reason="pomdp-forge CLI not installed")

SPECS = {
    "linproc": ["--family", "no_eq", "--k", "3", "--horizon", "64",
                "--m", "8", "--n", "8", "--seed", "11"],
    "wrapped_rwi": ["--family", "reward_when_inside", "--horizon", "96",
                    "--m", "8", "--seed", "12",
                    "--wrapper", "state_conv:level=4,sign=n",
                    "--wrapper", "reward_delay:k=8,gamma=0.9"],
    "tabular_mod": ["--family", "finite_tabular", "--horizon", "32",
                    "--m", "5", "--seed", "13",
                    "--wrapper", "state_conv:w=2+3,mod=5"],
}
SCRIPT = [0, 3, 1, 4, 2, 0, 1]  # cycled over each episode
EPISODES = 10


def forge(*args):
    res = subprocess.run([FORGE, *args], capture_output=True, text=True,
                         timeout=300)
    assert res.returncode == 0, res.stderr
    return res.stdout


@pytest.fixture(scope="module", params=sorted(SPECS))
def spec_setup(request, tmp_path_factory):
    root = tmp_path_factory.mktemp(request.param)
    spec_path = root / "spec.json"
    digest = forge("generate", *SPECS[request.param], "--out", str(spec_path)).strip()
    script_path = root / "script.json"
    script_path.write_text(json.dumps(SCRIPT))
    jsonl_path = root / "native.jsonl"
    forge("rollout", "--spec", str(spec_path), "--episodes", str(EPISODES),
          "--policy", f"scripted:{script_path}", "--out", str(jsonl_path))
    native = [json.loads(line) for line in jsonl_path.read_text().splitlines()]
    return request.param, spec_path, digest, native


def test_transcript_equals_native_rollout(spec_setup):
    _, spec_path, digest, native = spec_setup
    assert len(native) == EPISODES
    with BridgeEnv(str(spec_path), expected_digest=digest) as env:
        assert env.spec_digest == digest
        for episode, record in enumerate(native):
            assert record["spec_digest"] == digest
            assert record["episode"] == episode
            obs = env.reset(episode)
            horizon = len(record["act"])
            for t in range(horizon):
                action = SCRIPT[t % len(SCRIPT)]
                next_obs, reward, done = env.step(action)
                assert obs == record["obs"][t], (episode, t)
                assert action == record["act"][t]
                assert reward == record["rew"][t], (episode, t)
                assert done == (t == horizon - 1)
                obs = next_obs


def test_reset_is_reproducible_and_respawn_reproduces(spec_setup):
    _, spec_path, digest, _ = spec_setup
    with BridgeSession(str(spec_path)) as sess:
        first = sess.reset(0)
        assert sess.reset(0) == first
        stepped = sess.step(0)
    # a fresh child on the same spec replays the episode
    with BridgeSession(str(spec_path)) as sess:
        assert sess.reset(0) == first
        assert sess.step(0) == stepped


def test_linproc_observations_in_unit_interval(spec_setup):
    name, spec_path, _, native = spec_setup
    if name != "linproc":
        pytest.skip("LinProc-only range check")
    with BridgeSession(str(spec_path)) as sess:
        obs = sess.reset(3)
        assert 0.0 <= obs[0] < 1.0
        done = False
        while not done:
            obs, _, done = sess.step(1)
            assert 0.0 <= obs[0] < 1.0


def test_wrapped_rewards_zero_during_delay(spec_setup):
    name, spec_path, _, native = spec_setup
    if name != "wrapped_rwi":
        pytest.skip("delay-wrapped spec only")
    assert all(rec["rew"][:8] == [0.0] * 8 for rec in native)


def test_step_after_done_and_digest_mismatch(spec_setup):
    _, spec_path, digest, native = spec_setup
    with BridgeSession(str(spec_path)) as sess:
        sess.reset(0)
        for _ in range(len(native[0]["act"])):
            sess.step(0)
        with pytest.raises(EpisodeFinished):
            sess.step(0)
        # session survives the error and can start a new episode
        assert sess.reset(1)
    with pytest.raises(ProtocolError, match="digest"):
        BridgeSession(str(spec_path), expected_digest="0" * 64)


def test_child_exit_detected(spec_setup):
    _, spec_path, _, _ = spec_setup
    sess = BridgeSession(str(spec_path))
    sess._proc.kill()
    sess._proc.wait()
    with pytest.raises(ChildExited):
        sess.reset(0)
