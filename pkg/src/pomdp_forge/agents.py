"""Reference policies: the random baseline, the clairvoyant LinProc
predictor (dynamics-aware upper bound), and scripted replay.

All policies speak the same three calls: begin_episode(episode, first_obs),
act(t) -> action, observe(next_obs, reward). Policy randomness comes from a
stream keyed by (seed XOR POLICY_SALT, episode) so it never collides with
environment draws and replays exactly.
"""

from __future__ import annotations

import math

from .core import (
    EnvSpec, PolicyEnvMismatch, RngStream, LINPROC_FAMILIES, POLICY_SALT,
    MASK64,
)
from .linproc import CoefficientSchedule, ROW_WIDTH

__all__ = ["UniformRandomPolicy", "ClairvoyantLinProcPolicy", "ScriptedPolicy",
           "make_policy"]


class UniformRandomPolicy:
    """Uniform over {0..m-1} ("random guesses")."""

    def __init__(self, num_actions: int, seed: int = 0):
        self.num_actions = num_actions
        self.seed = seed
        self._rng: RngStream | None = None

    def begin_episode(self, episode_index: int, first_obs) -> None:
        self._rng = RngStream((self.seed ^ POLICY_SALT) & MASK64, episode_index)

    def act(self, t: int) -> int:
        return self._rng.randrange(self.num_actions)

    def observe(self, obs, reward) -> None:
        pass


class ClairvoyantLinProcPolicy:
    """Knows the family's coefficient schedule; mirrors the generator window
    and predicts floor(m * z_{t+1}) exactly once the warm-up is over.

    During warm-up (t+1 < k) the next observation is an independent draw, so
    the policy acts uniformly at random.
    """

    def __init__(self, spec: EnvSpec):
        if spec.family not in LINPROC_FAMILIES:
            raise PolicyEnvMismatch(
                f"clairvoyant policy needs a LinProc family, got {spec.family!r}")
        if spec.wrappers:
            raise PolicyEnvMismatch("clairvoyant policy binds to unwrapped LinProc envs")
        self.spec = spec
        self._k = spec.order_k
        self._m = spec.num_intervals_m
        self._n = spec.segment_len_n
        schedule = CoefficientSchedule.for_family(spec.family)
        self._rows = [[tuple(float(w) for w in schedule.row(seg, b)[: max(self._k, 1)])
                       for b in range(ROW_WIDTH)] for seg in range(ROW_WIDTH)]
        self._fallback = UniformRandomPolicy(spec.num_intervals_m, spec.seed)
        self._window: list[float] = []
        self._bucket = 0

    def begin_episode(self, episode_index: int, first_obs) -> None:
        self._fallback.begin_episode(episode_index, first_obs)
        z0 = first_obs[0]
        self._window = [z0]
        self._bucket = int(self._m * z0) % ROW_WIDTH

    def act(self, t: int) -> int:
        k = self._k
        if k == 0 or t + 1 < k:
            return self._fallback.act(t)
        coeffs = self._rows[(t // self._n) % ROW_WIDTH][self._bucket]
        s = 0.0
        for i in range(k):
            s += coeffs[i] * self._window[-1 - i]
        z_next = s - math.floor(s)
        return int(self._m * z_next)

    def observe(self, obs, reward) -> None:
        self._window.append(obs[0])
        if len(self._window) > max(self._k, 1):
            del self._window[0]


class ScriptedPolicy:
    """Replays a fixed action list, cycling when the episode outlives it."""

    def __init__(self, actions):
        if not actions:
            raise PolicyEnvMismatch("scripted policy needs at least one action")
        self.actions = list(actions)

    def begin_episode(self, episode_index: int, first_obs) -> None:
        pass

    def act(self, t: int) -> int:
        return self.actions[t % len(self.actions)]

    def observe(self, obs, reward) -> None:
        pass


def make_policy(name: str, spec: EnvSpec, policy_seed: int | None = None):
    """Policy from a CLI-style name: random | clairvoyant | scripted:<path>."""
    seed = spec.seed if policy_seed is None else policy_seed
    if name == "random":
        return UniformRandomPolicy(spec.num_intervals_m, seed)
    if name == "clairvoyant":
        return ClairvoyantLinProcPolicy(spec)
    if name.startswith("scripted:"):
        import json

        with open(name.split(":", 1)[1], "r", encoding="utf-8") as fh:
            return ScriptedPolicy(json.load(fh))
    raise PolicyEnvMismatch(f"unknown policy {name!r}")
