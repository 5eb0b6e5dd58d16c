"""Base environments and the spec-to-environment assembler.

RewardWhenInside: fully observed i.i.d. U(0,1) states; reward for naming the
1/m-interval of the *current* state. FiniteTabular is its discrete analogue
(i.i.d. uniform states over {0..m-1}, reward for matching the current state),
which is the natural target for the modular convolution wrapper.
"""

from __future__ import annotations

from .core import (
    ActionOutOfRange, EnvSpec, EpisodeFinished, InvalidSpec, RngStream, Step,
    Trajectory, LINPROC_FAMILIES,
)
from .hist_wrappers import wrap_from_spec
from .linproc import LinProcEnv

__all__ = ["RewardWhenInsideEnv", "FiniteTabularEnv", "make_env",
           "run_episode", "rollout_stats"]


class RewardWhenInsideEnv:
    """256-step (by default) IDP over [0,1); r_t = 1{a_t names s_t's interval}."""

    def __init__(self, spec: EnvSpec):
        spec.validate()
        if spec.family != "reward_when_inside":
            raise InvalidSpec(f"wrong family {spec.family!r} for RewardWhenInsideEnv")
        self.spec = spec
        self.horizon = spec.horizon_t
        self._m = spec.num_intervals_m
        self._rng: RngStream | None = None
        self._state = 0.0
        self._t = 0
        self._done = True

    def reset(self, episode_index: int) -> tuple:
        self._rng = RngStream(self.spec.seed, episode_index)
        self._state = self._rng.uniform01()
        self._t = 0
        self._done = False
        return (self._state,)

    def step(self, action: int):
        if self._done or self._rng is None:
            raise EpisodeFinished("step() outside an active episode")
        m = self._m
        if not (isinstance(action, int) and 0 <= action < m):
            raise ActionOutOfRange(f"action {action!r} outside {{0..{m - 1}}}")
        reward = 1.0 if action == int(m * self._state) else 0.0
        self._state = self._rng.uniform01()
        self._t += 1
        self._done = self._t >= self.horizon
        return (self._state,), reward, self._done


class FiniteTabularEnv:
    """Discrete RewardWhenInside: i.i.d. uniform integer states over
    {0..m-1}; r_t = 1{a_t == s_t}. Integer observations make the env
    compatible with modular convolution wrappers."""

    def __init__(self, spec: EnvSpec):
        spec.validate()
        if spec.family != "finite_tabular":
            raise InvalidSpec(f"wrong family {spec.family!r} for FiniteTabularEnv")
        self.spec = spec
        self.horizon = spec.horizon_t
        self._n_states = spec.num_intervals_m
        self._rng: RngStream | None = None
        self._state = 0
        self._t = 0
        self._done = True

    def reset(self, episode_index: int) -> tuple:
        self._rng = RngStream(self.spec.seed, episode_index)
        self._state = self._rng.randrange(self._n_states)
        self._t = 0
        self._done = False
        return (self._state,)

    def step(self, action: int):
        if self._done or self._rng is None:
            raise EpisodeFinished("step() outside an active episode")
        if not (isinstance(action, int) and 0 <= action < self._n_states):
            raise ActionOutOfRange(
                f"action {action!r} outside {{0..{self._n_states - 1}}}")
        reward = 1.0 if action == self._state else 0.0
        self._state = self._rng.randrange(self._n_states)
        self._t += 1
        self._done = self._t >= self.horizon
        return (self._state,), reward, self._done


def make_env(spec: EnvSpec):
    """Build the environment a spec describes: base family, then wrappers in
    list order (outermost last). Raises InvalidSpec / WrapperIncompatible
    naming the failed invariant."""
    spec.validate()
    if spec.family in LINPROC_FAMILIES:
        env = LinProcEnv(spec)
    elif spec.family == "reward_when_inside":
        env = RewardWhenInsideEnv(spec)
    else:
        env = FiniteTabularEnv(spec)
    for wspec in spec.wrappers:
        env = wrap_from_spec(env, wspec)
    return env


def run_episode(env, policy, episode_index: int) -> Trajectory:
    """Roll one episode; the policy sees each observation as it arrives."""
    obs = env.reset(episode_index)
    policy.begin_episode(episode_index, obs)
    steps = []
    done = False
    t = 0
    while not done:
        action = policy.act(t)
        next_obs, reward, done = env.step(action)
        steps.append(Step(t=t, observation=obs, action=action, reward=reward))
        policy.observe(next_obs, reward)
        obs = next_obs
        t += 1
    return Trajectory(spec_digest=env.spec.digest(), episode_index=episode_index,
                      steps=tuple(steps), terminal=True)


def rollout_stats(returns: list, step_counts: list) -> dict:
    """Summary block written next to every rollout: per-episode return mean
    and population std, plus the pooled per-step reward mean."""
    episodes = len(returns)
    if episodes == 0:
        return {"episodes": 0, "mean_return": None, "std_return": None,
                "per_step_reward_mean": None}
    mean = sum(returns) / episodes
    var = sum((r - mean) ** 2 for r in returns) / episodes
    total_steps = sum(step_counts)
    return {
        "episodes": episodes,
        "mean_return": mean,
        "std_return": var ** 0.5,
        "per_step_reward_mean": (sum(returns) / total_steps) if total_steps else None,
    }
