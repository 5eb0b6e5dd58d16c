"""MDP-to-HDP wrappers: convolution state aggregation and reward delay.

The convolution wrapper replaces the observation at time t with
``sum_i w_i * s_{t-i}`` (componentwise; mod N for integer state spaces).
Stacking the weights gives a lower-triangular Toeplitz system
``z_{0:t} = W_t s_{0:t}``, so whenever w_0 is invertible the hidden states
are recovered by forward substitution and the wrapper changes nothing about
the underlying decision problem.

The reward-delay wrapper shifts each reward delay_k steps later, divided by
gamma^delay_k to keep discounted returns identical, and flushes the last
delay_k+1 rewards as a discounted catch-up sum on the terminal step.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .core import (
    ArithmeticModeMismatch, DelayExceedsHorizon, IndexOutOfRange, InvalidSpec,
    NonInvertibleKernel, RewardDelaySpec, StateConvSpec,
)

__all__ = [
    "ConvolutionKernel", "ToeplitzView", "convolve_state", "convolve_all",
    "deconvolve", "inverse_first_column", "mds_of_kernel",
    "StateConvEnv", "RewardDelayEnv", "state_conv_kernel", "wrap_state_conv",
    "wrap_reward_delay", "STATECONV_MAX_LEVEL",
]


@dataclass(frozen=True)
class ConvolutionKernel:
    """Finite-support weight sequence w_{0:L}; real or modular-N arithmetic."""

    weights: tuple
    modulus: int | None = None

    def __post_init__(self) -> None:
        if len(self.weights) == 0:
            raise NonInvertibleKernel("kernel needs at least w_0")
        if self.modulus is None:
            if self.weights[0] == 0:
                raise NonInvertibleKernel("real kernel requires w_0 != 0")
        else:
            if self.modulus < 1:
                raise NonInvertibleKernel("modulus must be >= 1")
            if any(not isinstance(w, int) for w in self.weights):
                raise ArithmeticModeMismatch("modular kernel requires integer weights")
            if math.gcd(int(self.weights[0]), self.modulus) != 1:
                raise NonInvertibleKernel(
                    f"w_0={self.weights[0]} not invertible mod {self.modulus}")

    @classmethod
    def from_spec(cls, spec: StateConvSpec) -> "ConvolutionKernel":
        return cls(weights=tuple(spec.weights), modulus=spec.modulus)

    @property
    def support(self) -> int:
        return len(self.weights)


def _check_states(kernel: ConvolutionKernel, states) -> None:
    if kernel.modulus is not None:
        for vec in states:
            if any(not isinstance(x, int) for x in vec):
                raise ArithmeticModeMismatch(
                    "modular kernel applied to non-integer state components")


def convolve_state(kernel: ConvolutionKernel, states) -> tuple:
    """Observation for the last index of ``states`` (chronological list of
    state vectors): z_t = sum_{i<=min(t,L)} w_i s_{t-i}, componentwise."""
    if not states:
        raise IndexOutOfRange("convolve_state needs a nonempty state history")
    _check_states(kernel, states[-kernel.support:])
    w = kernel.weights
    dim = len(states[-1])
    depth = min(len(states), kernel.support)
    out = [0] * dim
    for i in range(depth):
        s = states[-1 - i]
        for c in range(dim):
            out[c] += w[i] * s[c]
    if kernel.modulus is not None:
        return tuple(int(x) % kernel.modulus for x in out)
    return tuple(float(x) for x in out)


def convolve_all(kernel: ConvolutionKernel, states) -> list:
    return [convolve_state(kernel, states[: t + 1]) for t in range(len(states))]


def deconvolve(kernel: ConvolutionKernel, observations) -> list:
    """Unique state sequence with W_t s_{0:t} = z_{0:t}, by forward
    substitution; exact for modular kernels."""
    w = kernel.weights
    out: list[tuple] = []
    if kernel.modulus is not None:
        n = kernel.modulus
        inv0 = pow(int(w[0]), -1, n)
        for t, z in enumerate(observations):
            acc = [int(x) for x in z]
            for i in range(1, min(t, kernel.support - 1) + 1):
                prev = out[t - i]
                for c in range(len(acc)):
                    acc[c] -= w[i] * prev[c]
            out.append(tuple((x * inv0) % n for x in acc))
        return out
    w0 = float(w[0])
    for t, z in enumerate(observations):
        acc = [float(x) for x in z]
        for i in range(1, min(t, kernel.support - 1) + 1):
            prev = out[t - i]
            for c in range(len(acc)):
                acc[c] -= float(w[i]) * prev[c]
        out.append(tuple(x / w0 for x in acc))
    return out


def inverse_first_column(kernel: ConvolutionKernel, t: int) -> list:
    """First column c_{0:t} of W_t^{-1} (itself lower-triangular Toeplitz),
    from the convolution identity sum_j w_j c_{i-j} = [i == 0]."""
    w = kernel.weights
    if kernel.modulus is not None:
        n = kernel.modulus
        inv0 = pow(int(w[0]), -1, n)
        col = [inv0 % n]
        for i in range(1, t + 1):
            acc = 0
            for j in range(1, min(i, kernel.support - 1) + 1):
                acc += int(w[j]) * col[i - j]
            col.append((-acc * inv0) % n)
        return col
    w0 = float(w[0])
    col = [1.0 / w0]
    for i in range(1, t + 1):
        acc = 0.0
        for j in range(1, min(i, kernel.support - 1) + 1):
            acc += float(w[j]) * col[i - j]
        col.append(-acc / w0)
    return col


class ToeplitzView:
    """Size-(t+1) lower-triangular Toeplitz view of a kernel, with its
    inverse first column computed once."""

    def __init__(self, kernel: ConvolutionKernel, t: int):
        if t < 0:
            raise IndexOutOfRange("t must be >= 0")
        self.kernel = kernel
        self.t = t
        self.inverse_column = inverse_first_column(kernel, t)

    def _entry(self, seq, i: int, j: int):
        if i < j:
            return 0
        d = i - j
        if d < len(seq):
            return seq[d]
        return 0

    def matrix(self) -> list:
        w = self.kernel.weights
        n = self.t + 1
        rows = [[self._entry(w, i, j) for j in range(n)] for i in range(n)]
        if self.kernel.modulus is not None:
            return [[int(x) % self.kernel.modulus for x in row] for row in rows]
        return [[float(x) for x in row] for row in rows]

    def inverse_matrix(self) -> list:
        n = self.t + 1
        return [[self._entry(self.inverse_column, i, j) for j in range(n)]
                for i in range(n)]

    def solve(self, observations) -> list:
        return deconvolve(self.kernel, observations)


def mds_of_kernel(kernel: ConvolutionKernel, t: int, eps: float = 1e-9) -> set:
    """Past indices needed to decode s_t from z_{0:t}: the non-vanishing
    diagonals of W_t^{-1}, i.e. {t - j : |c_j| > eps}. Modular kernels use
    exact non-zero residues; eps is ignored."""
    col = inverse_first_column(kernel, t)
    if kernel.modulus is not None:
        return {t - j for j, c in enumerate(col) if c % kernel.modulus != 0}
    return {t - j for j, c in enumerate(col) if abs(c) > eps}


# ---------------------------------------------------------------------------
# Wrapper environments
# ---------------------------------------------------------------------------

class StateConvEnv:
    """Convolves the inner environment's observations (treated as its hidden
    states) into aggregated observations; actions and rewards pass through."""

    def __init__(self, inner, kernel: ConvolutionKernel):
        self.inner = inner
        self.kernel = kernel
        self.spec = inner.spec
        self.horizon = inner.horizon
        self._buf: deque = deque(maxlen=kernel.support)  # most recent first

    def _convolved(self) -> tuple:
        w = self.kernel.weights
        dim = len(self._buf[0])
        out = [0] * dim
        for i, s in enumerate(self._buf):
            for c in range(dim):
                out[c] += w[i] * s[c]
        if self.kernel.modulus is not None:
            return tuple(int(x) % self.kernel.modulus for x in out)
        return tuple(float(x) for x in out)

    def reset(self, episode_index: int) -> tuple:
        s0 = self.inner.reset(episode_index)
        _check_states(self.kernel, [s0])
        self._buf.clear()
        self._buf.appendleft(tuple(s0))
        return self._convolved()

    def step(self, action):
        s_next, reward, done = self.inner.step(action)
        _check_states(self.kernel, [s_next])
        self._buf.appendleft(tuple(s_next))
        return self._convolved(), reward, done


class RewardDelayEnv:
    """Delays rewards by delay_k steps with discount compensation.

    Emits 0 for t < delay_k, r_{t-delay_k}/gamma^delay_k up to t = T-2, and
    the catch-up sum over the last delay_k+1 rewards at t = T-1 so that
    sum_t gamma^t r'_t equals the unwrapped discounted return exactly.
    ``broken=True`` drops the catch-up (negative-control wrapper used by the
    return-equivalence oracle).
    """

    def __init__(self, inner, delay_k: int, gamma: float = 1.0, broken: bool = False):
        if delay_k < 0:
            raise InvalidSpec("delay_k must be >= 0")
        if not 0.0 < gamma <= 1.0:
            raise InvalidSpec("gamma must be in (0, 1]")
        if delay_k >= inner.horizon:
            raise DelayExceedsHorizon(
                f"delay_k={delay_k} must be < horizon {inner.horizon}")
        self.inner = inner
        self.delay_k = delay_k
        self.gamma = gamma
        self.broken = broken
        self.spec = inner.spec
        self.horizon = inner.horizon
        self._t = 0
        self._pending: list[float] = []
        # inv_pow[i] = gamma^-i; exact for gamma == 1
        self._inv_pow = [gamma ** -i for i in range(delay_k + 1)]

    def reset(self, episode_index: int) -> tuple:
        obs = self.inner.reset(episode_index)
        self._t = 0
        self._pending = []
        return obs

    def step(self, action):
        obs, reward, done = self.inner.step(action)
        t = self._t
        k = self.delay_k
        self._pending.append(reward)
        if done:
            if self.broken:
                out = self._pending[0] * self._inv_pow[k]
            else:
                # pending holds r_{T-1-k}..r_{T-1}; age i gets weight gamma^-i
                out = 0.0
                for j, r in enumerate(self._pending):
                    out += r * self._inv_pow[k - j]
            self._pending = []
        elif t < k:
            out = 0.0
        else:
            out = self._pending.pop(0) * self._inv_pow[k]
        self._t = t + 1
        return obs, out, done


# ---------------------------------------------------------------------------
# Presets (the shipped StateConv levels and helpers)
# ---------------------------------------------------------------------------

STATECONV_MAX_LEVEL = 5


def state_conv_kernel(level: int, sign: str = "p") -> ConvolutionKernel:
    """Two-tap preset kernel (1, +/- w1) with w1 = 1 - 1/2^level for levels
    0..4 and w1 = 1 at level 5."""
    if not 0 <= level <= STATECONV_MAX_LEVEL:
        raise IndexOutOfRange(f"state_conv level {level} outside 0..{STATECONV_MAX_LEVEL}")
    if sign not in ("p", "n"):
        raise InvalidSpec(f"state_conv sign must be 'p' or 'n', got {sign!r}")
    w1 = 1.0 if level == STATECONV_MAX_LEVEL else 1.0 - 0.5 ** level
    return ConvolutionKernel(weights=(1.0, w1 if sign == "p" else -w1))


def wrap_state_conv(env, level: int, sign: str = "p") -> StateConvEnv:
    return StateConvEnv(env, state_conv_kernel(level, sign))


def wrap_reward_delay(env, delay_k: int, gamma: float = 1.0) -> RewardDelayEnv:
    return RewardDelayEnv(env, delay_k, gamma)


def wrap_from_spec(env, wspec):
    if isinstance(wspec, StateConvSpec):
        return StateConvEnv(env, ConvolutionKernel.from_spec(wspec))
    if isinstance(wspec, RewardDelaySpec):
        return RewardDelayEnv(env, wspec.delay_k, wspec.gamma)
    raise InvalidSpec(f"unknown wrapper spec {wspec!r}")
