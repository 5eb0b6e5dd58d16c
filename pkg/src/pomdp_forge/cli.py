"""Command-line entry point.

Subcommands:
  generate  -- write a canonical EnvSpec JSON file, print its digest
  rollout   -- run episodes, write JSONL trajectories and a stats JSON
  verify    -- run one property suite, write a machine-readable report
  serve     -- newline-delimited JSON protocol over stdin/stdout (the
               endpoint the pybridge client drives as a subprocess)

Exit codes: 0 pass, 1 property failure, 2 usage or infrastructure error.
POMDP_FORGE_SEED overrides the seed of any loaded spec.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import __version__
from .agents import make_policy
from .core import (
    EnvSpec, ForgeError, InvalidSpec, RewardDelaySpec, StateConvSpec,
    canonical_json, serialize_trajectory,
)
from .envs import make_env, rollout_stats, run_episode
from .hist_wrappers import state_conv_kernel
from .verify import SUITES, run_suite

PROTOCOL_VERSION = "pomdp-forge-bridge/1"


def _parse_wrapper(text: str):
    """--wrapper syntax: kind:key=value,key=value.

    state_conv takes level=0..5 and sign=p|n (preset kernels) or an explicit
    plus-separated list w=1.0+0.5, plus mod=N for modular arithmetic;
    reward_delay takes k=<steps> (or level=<j> for the 8j-step preset
    schedule) and gamma=<float>.
    """
    kind, _, body = text.partition(":")
    params = {}
    if body:
        for item in body.split(","):
            key, _, value = item.partition("=")
            if not _:
                raise InvalidSpec(f"malformed wrapper parameter {item!r}")
            params[key] = value
    if kind == "state_conv":
        if "w" in params:
            weights = tuple(float(x) for x in params["w"].split("+"))
        else:
            kernel = state_conv_kernel(int(params.get("level", 0)),
                                       params.get("sign", "p"))
            weights = kernel.weights
        if "mod" in params:
            return StateConvSpec(weights=tuple(int(w) for w in weights),
                                 modulus=int(params["mod"]))
        return StateConvSpec(weights=weights, modulus=None)
    if kind == "reward_delay":
        if "level" in params:
            delay = 8 * int(params["level"])
        else:
            delay = int(params.get("k", 0))
        return RewardDelaySpec(delay_k=delay, gamma=float(params.get("gamma", 1.0)))
    raise InvalidSpec(f"unknown wrapper kind {kind!r}")


def _load_spec(path: str) -> EnvSpec:
    spec = EnvSpec.load(path)
    override = os.environ.get("POMDP_FORGE_SEED")
    if override is not None:
        spec = replace(spec, seed=int(override))
        spec.validate()
    return spec


def cmd_generate(args) -> int:
    spec = EnvSpec(
        family=args.family,
        order_k=args.k,
        horizon_t=args.horizon,
        num_intervals_m=args.m,
        segment_len_n=args.n,
        wrappers=tuple(_parse_wrapper(w) for w in args.wrapper),
        seed=args.seed,
    )
    spec.validate()
    spec.save(args.out)
    print(spec.digest())
    return 0


def cmd_rollout(args) -> int:
    spec = _load_spec(args.spec)
    env = make_env(spec)
    policy = make_policy(args.policy, spec, args.policy_seed)
    returns, step_counts = [], []
    with open(args.out, "w", encoding="utf-8") as fh:
        for episode in range(args.episodes):
            traj = run_episode(env, policy, episode)
            fh.write(serialize_trajectory(traj))
            fh.write("\n")
            returns.append(traj.episode_return())
            step_counts.append(len(traj.steps))
    stats = rollout_stats(returns, step_counts)
    stats_path = args.stats or (args.out + ".stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(stats))
        fh.write("\n")
    print(canonical_json(stats))
    return 0


def cmd_verify(args) -> int:
    import inspect

    accepted = inspect.signature(SUITES[args.suite]).parameters
    kwargs = {}
    for name in ("seed", "instances", "episodes", "fixture"):
        value = getattr(args, name)
        if value is not None:
            if name not in accepted:
                raise InvalidSpec(f"suite {args.suite!r} takes no --{name}")
            kwargs[name] = value
    report = run_suite(args.suite, **kwargs)
    text = json.dumps(report, indent=2, default=str)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    print(text)
    return 0 if report["passed"] else 1


def cmd_serve(args) -> int:
    """One session per process: hello/reset/step/close requests, one JSON
    object per line, responses echo the request id (strictly increasing)."""
    spec = _load_spec(args.spec)
    env = make_env(spec)
    digest = spec.digest()
    last_id = None
    out = sys.stdout

    def reply(obj) -> None:
        out.write(canonical_json(obj))
        out.write("\n")
        out.flush()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            reply({"id": None, "ok": False, "error": "ProtocolError",
                   "message": f"bad JSON: {exc}"})
            continue
        rid = msg.get("id")
        if not isinstance(rid, int) or (last_id is not None and rid <= last_id):
            reply({"id": rid, "ok": False, "error": "ProtocolError",
                   "message": "ids must be strictly increasing integers"})
            continue
        last_id = rid
        op = msg.get("op")
        try:
            if op == "hello":
                reply({"id": rid, "ok": True, "protocol": PROTOCOL_VERSION,
                       "spec_digest": digest})
            elif op == "reset":
                obs = env.reset(int(msg["episode"]))
                reply({"id": rid, "ok": True, "obs": list(obs)})
            elif op == "step":
                obs, reward, done = env.step(msg["action"])
                reply({"id": rid, "ok": True, "obs": list(obs),
                       "reward": reward, "done": done})
            elif op == "close":
                reply({"id": rid, "ok": True})
                return 0
            else:
                reply({"id": rid, "ok": False, "error": "ProtocolError",
                       "message": f"unknown op {op!r}"})
        except ForgeError as exc:
            reply({"id": rid, "ok": False, "error": type(exc).__name__,
                   "message": str(exc)})
        except (KeyError, TypeError, ValueError) as exc:
            reply({"id": rid, "ok": False, "error": "ProtocolError",
                   "message": str(exc)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pomdp-forge",
        description="Synthesize and verify seeded POMDP/HDP environments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a canonical EnvSpec")
    gen.add_argument("--family", required=True)
    gen.add_argument("--k", type=int, default=0)
    gen.add_argument("--horizon", type=int, default=64)
    gen.add_argument("--m", type=int, default=8)
    gen.add_argument("--n", type=int, default=8)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--wrapper", action="append", default=[],
                     metavar="KIND:K=V,...")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    roll = sub.add_parser("rollout", help="run episodes, write JSONL + stats")
    roll.add_argument("--spec", required=True)
    roll.add_argument("--episodes", type=int, required=True)
    roll.add_argument("--policy", default="random",
                      help="random | clairvoyant | scripted:<file>")
    roll.add_argument("--policy-seed", type=int, default=None)
    roll.add_argument("--out", required=True)
    roll.add_argument("--stats", default=None)
    roll.set_defaults(func=cmd_rollout)

    ver = sub.add_parser("verify", help="run one property suite")
    ver.add_argument("--suite", required=True, choices=sorted(SUITES))
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--instances", type=int, default=None)
    ver.add_argument("--episodes", type=int, default=None)
    ver.add_argument("--fixture", default=None)
    ver.add_argument("--out", default=None)
    ver.set_defaults(func=cmd_verify)

    srv = sub.add_parser("serve", help="line-delimited JSON bridge endpoint")
    srv.add_argument("--spec", required=True)
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
