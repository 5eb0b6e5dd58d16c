"""Autoregressive interval-prediction environment families.

Five families share one mechanism: observations live in [0, 1), the next
observation is the fractional part of a coefficient-weighted sum of the last
``k`` observations, and the agent scores 1 for naming the 1/m-interval the
next observation lands in. The families differ only in how the coefficient
row is selected: fixed, rotated per time segment, rotated per initial-
observation bucket, or both (circulant tables over the base row (8..15)/8).

During the warm-up (t+1 < k) observations are fresh U(0,1) draws and the
reward target is the truncated sum over the observations seen so far; k = 0
degenerates to i.i.d. draws with an unpredictable target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    ActionOutOfRange, EnvSpec, EpisodeFinished, IndexOutOfRange, NotLinProc,
    RngStream, LINPROC_FAMILIES,
)

__all__ = [
    "BASE_ROW", "shift_row", "CoefficientSchedule", "coeffs_for",
    "LinProcState", "ar_step", "ar_next", "interval_reward",
    "InvarianceLabel", "invariance_class", "LinProcEnv", "FAMILY_MODE",
]

ROW_WIDTH = 8
BASE_ROW = tuple(Fraction(i, 8) for i in range(8, 16))

MODES = ("all_one", "fixed", "time_circulant", "traj_circulant",
         "time_traj_circulant")

FAMILY_MODE = {
    "all_eq_one": "all_one",
    "all_eq": "fixed",
    "time_eq": "time_circulant",
    "traj_eq": "traj_circulant",
    "no_eq": "time_traj_circulant",
}


def shift_row(row: tuple, r: int) -> tuple:
    """Apply the rotation operator r times: element i of the result is
    row[(i - r) mod width]; r may be negative."""
    width = len(row)
    return tuple(row[(i - r) % width] for i in range(width))


@dataclass(frozen=True)
class CoefficientSchedule:
    """Coefficient-row selector for one family.

    Row selection: all_one -> ones; fixed -> base row; time_circulant ->
    shift_row(base, seg); traj_circulant -> shift_row(base, -bucket);
    time_traj_circulant -> shift_row(base, seg - bucket).
    """

    mode: str

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise NotLinProc(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def for_family(cls, family: str) -> "CoefficientSchedule":
        if family not in FAMILY_MODE:
            raise NotLinProc(f"{family!r} is not a LinProc family")
        return cls(FAMILY_MODE[family])

    def row(self, seg: int, z0_bucket: int) -> tuple:
        if not 0 <= seg < ROW_WIDTH:
            raise IndexOutOfRange(f"seg={seg} outside [0, {ROW_WIDTH})")
        if not 0 <= z0_bucket < ROW_WIDTH:
            raise IndexOutOfRange(f"z0_bucket={z0_bucket} outside [0, {ROW_WIDTH})")
        if self.mode == "all_one":
            return (Fraction(1),) * ROW_WIDTH
        if self.mode == "fixed":
            return BASE_ROW
        if self.mode == "time_circulant":
            return shift_row(BASE_ROW, seg)
        if self.mode == "traj_circulant":
            return shift_row(BASE_ROW, -z0_bucket)
        return shift_row(BASE_ROW, seg - z0_bucket)


def coeffs_for(schedule: CoefficientSchedule, seg: int, z0_bucket: int,
               k: int) -> tuple:
    """First k coefficients of the selected row, as exact rationals."""
    if not 0 <= k <= ROW_WIDTH:
        raise IndexOutOfRange(f"k={k} outside [0, {ROW_WIDTH}]")
    return schedule.row(seg, z0_bucket)[:k]


@dataclass
class LinProcState:
    """Generator-side state: the most-recent-first observation window plus
    the two row-selection indices."""

    window: tuple  # (z_t, z_{t-1}, ..., z_{t-k+1}); len == min(t+1, k)
    t: int
    z0_bucket: int
    seg: int


def ar_next(window_recent_first, coeffs) -> float:
    """Fractional part of sum_i w_i * z_{t-i}; window and coeffs aligned
    most-recent-first."""
    s = 0.0
    for w, z in zip(coeffs, window_recent_first):
        s += float(w) * z
    return s - math.floor(s)


def ar_step(state: LinProcState, schedule: CoefficientSchedule) -> float:
    """Next observation for t+1 >= k (the window must be full)."""
    coeffs = schedule.row(state.seg, state.z0_bucket)[:len(state.window)]
    return ar_next(state.window, coeffs)


def interval_reward(action: int, next_obs: float, m: int) -> float:
    """1 if the action names the 1/m-interval containing next_obs."""
    if not (isinstance(action, int) and 0 <= action < m):
        raise ActionOutOfRange(f"action {action!r} outside {{0..{m - 1}}}")
    return 1.0 if action == int(m * next_obs) else 0.0


# ---------------------------------------------------------------------------
# Invariance labels (consumed by verify.check_invariance)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvarianceLabel:
    """An equivalence relation on histories, as a meet of the three relation
    atoms: equal last-k (observation, action) pairs, equal length-n time
    block, equal initial-observation bucket (m intervals). All-None is the
    universal relation."""

    last_k: int | None = None
    time_block: int | None = None
    init_buckets: int | None = None

    def __str__(self) -> str:
        parts = []
        if self.last_k is not None:
            parts.append(f"≃_{self.last_k}")
        if self.time_block is not None:
            parts.append(f"≃^{self.time_block}")
        if self.init_buckets is not None:
            parts.append("≃^{⌊%dz_0⌋}" % self.init_buckets)
        return " ∧ ".join(parts) if parts else "≃^⊤"


def invariance_class(spec: EnvSpec) -> InvarianceLabel:
    """The transition-invariance relation each family is built to satisfy."""
    if spec.family not in LINPROC_FAMILIES:
        raise NotLinProc(f"{spec.family!r} is not a LinProc family")
    k, n, m = spec.order_k, spec.segment_len_n, spec.num_intervals_m
    if spec.family in ("all_eq_one", "all_eq"):
        return InvarianceLabel(last_k=k)
    if spec.family == "time_eq":
        return InvarianceLabel(last_k=k, time_block=n)
    if spec.family == "traj_eq":
        return InvarianceLabel(last_k=k, init_buckets=m)
    return InvarianceLabel(last_k=k, time_block=n, init_buckets=m)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

class LinProcEnv:
    """Seeded single-owner episode state machine for one LinProc family.

    reset(episode) draws z_0; each step consumes a_t, reveals z_{t+1} and the
    reward for step t. Episodes have exactly horizon_t steps.
    """

    def __init__(self, spec: EnvSpec):
        spec.validate()
        if spec.family not in LINPROC_FAMILIES:
            raise NotLinProc(f"{spec.family!r} is not a LinProc family")
        self.spec = spec
        self.horizon = spec.horizon_t
        self._k = spec.order_k
        self._m = spec.num_intervals_m
        self._n = spec.segment_len_n
        schedule = CoefficientSchedule.for_family(spec.family)
        # 8x8 float row cache; rows are exact binary fractions so float() is lossless
        self._rows = [[tuple(float(w) for w in schedule.row(seg, b)[: max(self._k, 1)])
                       for b in range(ROW_WIDTH)] for seg in range(ROW_WIDTH)]
        self._rng: RngStream | None = None
        self._done = True
        self._window: list[float] = []  # chronological, capped at k entries
        self._t = 0
        self._z0_bucket = 0

    def reset(self, episode_index: int) -> tuple:
        self._rng = RngStream(self.spec.seed, episode_index)
        z0 = self._rng.uniform01()
        self._window = [z0]
        self._z0_bucket = int(self._m * z0) % ROW_WIDTH
        self._t = 0
        self._done = False
        return (z0,)

    def state(self) -> LinProcState:
        window = tuple(reversed(self._window))
        return LinProcState(window=window, t=self._t, z0_bucket=self._z0_bucket,
                            seg=(self._t // self._n) % ROW_WIDTH)

    def step(self, action: int):
        if self._done or self._rng is None:
            raise EpisodeFinished("step() outside an active episode")
        m = self._m
        if not (isinstance(action, int) and 0 <= action < m):
            raise ActionOutOfRange(f"action {action!r} outside {{0..{m - 1}}}")
        t = self._t
        k = self._k
        window = self._window
        if k == 0:
            z_next = self._rng.uniform01()
            reward = 1.0 if action == int(m * z_next) else 0.0
        else:
            coeffs = self._rows[(t // self._n) % ROW_WIDTH][self._z0_bucket]
            if t + 1 >= k:
                s = 0.0
                for i in range(k):
                    s += coeffs[i] * window[-1 - i]
                z_next = s - math.floor(s)
                reward = 1.0 if action == int(m * z_next) else 0.0
            else:
                s = 0.0
                for i in range(t + 1):
                    s += coeffs[i] * window[-1 - i]
                target = s - math.floor(s)
                reward = 1.0 if action == int(m * target) else 0.0
                z_next = self._rng.uniform01()
            window.append(z_next)
            if len(window) > k:
                del window[0]
        self._t = t + 1
        self._done = self._t >= self.horizon
        return (z_next,), reward, self._done
