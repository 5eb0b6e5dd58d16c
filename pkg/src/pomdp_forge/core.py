"""Shared contract for the environment toolkit.

This module holds everything the other modules agree on: the deterministic
counter RNG, the declarative environment spec with its canonical JSON form and
digest, trajectory records with their JSONL serialization, and the exception
vocabulary. It deliberately contains no environment dynamics.

Canonical-form rules (load-bearing, do not change casually):
  * canonical JSON has sorted keys, no whitespace, and reals rendered with 17
    significant digits (``format(x, '.17g')``), which round-trips every finite
    double exactly;
  * spec_digest is the lowercase-hex SHA-256 of the canonical EnvSpec bytes;
  * the RNG is a counter-mode SplitMix64: draw ``i`` of stream ``(seed, sid)``
    finalizes ``key + (i+1)*GOLDEN`` where ``key = seed XOR (sid*STREAM_SALT)``,
    so golden vectors are reproducible in any language.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

__all__ = [
    "ForgeError", "InvalidSpec", "WrapperIncompatible", "ActionOutOfRange",
    "EpisodeFinished", "SerializationOverflow", "ArithmeticModeMismatch",
    "NonInvertibleKernel", "DelayExceedsHorizon", "EnumerationTooLarge",
    "UndefinedConditional", "GroundSetMismatch", "PolicySpaceTooLarge",
    "ZeroDenominatorOnReachableHistory", "IndexOutOfRange", "NotLinProc",
    "PolicyEnvMismatch",
    "RngStream", "uniform01", "mix64",
    "StateConvSpec", "RewardDelaySpec", "EnvSpec",
    "LINPROC_FAMILIES", "FAMILIES",
    "Step", "Trajectory",
    "canonical_real", "canonical_json",
    "serialize_trajectory", "parse_trajectory",
]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class ForgeError(Exception):
    """Base class for every toolkit error."""


class InvalidSpec(ForgeError):
    """An EnvSpec/WrapperSpec invariant failed; the message names it."""


class WrapperIncompatible(ForgeError):
    """A wrapper cannot be applied to the environment underneath it."""


class ActionOutOfRange(ForgeError):
    pass


class EpisodeFinished(ForgeError):
    """step() after the terminal step, or before any reset()."""


class SerializationOverflow(ForgeError):
    """Non-finite real encountered while writing a canonical record."""


class ArithmeticModeMismatch(ForgeError):
    pass


class NonInvertibleKernel(ForgeError):
    pass


class DelayExceedsHorizon(ForgeError):
    pass


class EnumerationTooLarge(ForgeError):
    pass


class UndefinedConditional(ForgeError):
    """Conditioning event has probability zero under the reference policy."""


class GroundSetMismatch(ForgeError):
    pass


class PolicySpaceTooLarge(ForgeError):
    pass


class ZeroDenominatorOnReachableHistory(ForgeError):
    pass


class IndexOutOfRange(ForgeError):
    pass


class NotLinProc(ForgeError):
    pass


class PolicyEnvMismatch(ForgeError):
    pass


# ---------------------------------------------------------------------------
# Deterministic RNG (counter-mode SplitMix64)
# ---------------------------------------------------------------------------

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
# Odd salts, so stream/policy key derivation is a bijection on 64-bit ints.
STREAM_SALT = 0xBF58476D1CE4E5B9
POLICY_SALT = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 finalizer (Vigna's constants)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


@dataclass
class RngStream:
    """One independent draw sequence, fully determined by (seed, stream_id).

    ``counter`` advances by one per 64-bit draw, so any position can be
    replayed without replaying the prefix.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0
    _key: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise InvalidSpec(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self._key = (self.seed ^ ((self.stream_id * STREAM_SALT) & MASK64)) & MASK64

    def next_u64(self) -> int:
        x = (self._key + ((self.counter + 1) * GOLDEN)) & MASK64
        self.counter += 1
        return mix64(x)

    def uniform01(self) -> float:
        """Uniform double in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n); uses the 53-bit double path so the
        result is reproducible from the same golden vectors."""
        return int(n * self.uniform01())


def uniform01(rng: RngStream) -> float:
    return rng.uniform01()


def uniform01_array(seed: int, stream_id: int, start_counter: int, n: int):
    """Vectorized twin of RngStream.uniform01 (bit-identical outputs)."""
    import numpy as np

    key = np.uint64((seed ^ ((stream_id * STREAM_SALT) & MASK64)) & MASK64)
    idx = np.arange(start_counter + 1, start_counter + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = key + idx * np.uint64(GOLDEN)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return (x >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


# ---------------------------------------------------------------------------
# Environment specs
# ---------------------------------------------------------------------------

LINPROC_FAMILIES = ("all_eq_one", "all_eq", "time_eq", "traj_eq", "no_eq")
FAMILIES = LINPROC_FAMILIES + ("reward_when_inside", "finite_tabular")

COEFF_TABLE_WIDTH = 8  # circulant coefficient rows have 8 entries


@dataclass(frozen=True)
class StateConvSpec:
    """Convolution observation wrapper: weights w_0.., real or modular-N."""

    weights: tuple
    modulus: int | None = None  # None = real arithmetic

    def validate(self) -> None:
        if len(self.weights) == 0:
            raise InvalidSpec("state_conv kernel must have at least w_0")
        if self.modulus is None:
            if self.weights[0] == 0:
                raise InvalidSpec("state_conv real mode requires w_0 != 0")
        else:
            if self.modulus < 1:
                raise InvalidSpec("state_conv modulus must be >= 1")
            if any(not isinstance(w, int) for w in self.weights):
                raise InvalidSpec("state_conv modular mode requires integer weights")
            if math.gcd(int(self.weights[0]), self.modulus) != 1:
                raise InvalidSpec(
                    f"state_conv modular mode requires gcd(w_0, N) = 1, "
                    f"got w_0={self.weights[0]}, N={self.modulus}")

    def to_json_obj(self) -> dict:
        mode = "real" if self.modulus is None else {"mod": self.modulus}
        return {"kind": "state_conv", "w": list(self.weights), "mode": mode}


@dataclass(frozen=True)
class RewardDelaySpec:
    """Delay rewards by delay_k steps, compensated by the discount gamma."""

    delay_k: int
    gamma: float = 1.0

    def validate(self) -> None:
        if self.delay_k < 0:
            raise InvalidSpec("reward_delay requires delay_k >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidSpec("reward_delay requires gamma in (0, 1]")

    def to_json_obj(self) -> dict:
        return {"kind": "reward_delay", "k": self.delay_k, "gamma": self.gamma}


def wrapper_from_json_obj(obj: dict):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidSpec(f"malformed wrapper spec: {obj!r}")
    kind = obj["kind"]
    if kind == "state_conv":
        extra = set(obj) - {"kind", "w", "mode"}
        if extra:
            raise InvalidSpec(f"unknown state_conv keys: {sorted(extra)}")
        mode = obj.get("mode", "real")
        modulus = None if mode == "real" else mode["mod"]
        return StateConvSpec(weights=tuple(obj["w"]), modulus=modulus)
    if kind == "reward_delay":
        extra = set(obj) - {"kind", "k", "gamma"}
        if extra:
            raise InvalidSpec(f"unknown reward_delay keys: {sorted(extra)}")
        return RewardDelaySpec(delay_k=obj["k"], gamma=float(obj.get("gamma", 1.0)))
    raise InvalidSpec(f"unknown wrapper kind: {kind!r}")


_SPEC_KEYS = ("family", "horizon_t", "num_intervals_m", "order_k",
              "seed", "segment_len_n", "wrappers")


@dataclass(frozen=True)
class EnvSpec:
    """Declarative description of one environment instance.

    ``(family, order_k, horizon_t, num_intervals_m, segment_len_n, wrappers,
    seed)`` fully determines every episode; the canonical JSON form of this
    object is what spec_digest hashes.
    """

    family: str
    order_k: int = 0
    horizon_t: int = 64
    num_intervals_m: int = 8
    segment_len_n: int = 8
    wrappers: tuple = ()
    seed: int = 0

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.order_k < 0:
            raise InvalidSpec("order_k must be >= 0")
        if self.family in LINPROC_FAMILIES and self.order_k > COEFF_TABLE_WIDTH:
            raise InvalidSpec(
                f"order_k={self.order_k} exceeds coefficient table width {COEFF_TABLE_WIDTH}")
        if self.family not in LINPROC_FAMILIES and self.order_k != 0:
            raise InvalidSpec(f"family {self.family!r} has no AR order; order_k must be 0")
        if self.horizon_t < 1:
            raise InvalidSpec("horizon_t must be >= 1")
        if self.horizon_t < self.order_k:
            raise InvalidSpec(
                f"horizon_t={self.horizon_t} shorter than warm-up for order_k={self.order_k}")
        if self.num_intervals_m < 1:
            raise InvalidSpec("num_intervals_m must be >= 1")
        if self.segment_len_n < 1:
            raise InvalidSpec("segment_len_n must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        for w in self.wrappers:
            w.validate()
            if isinstance(w, StateConvSpec) and w.modulus is not None:
                if self.family != "finite_tabular":
                    raise WrapperIncompatible(
                        "state_conv modular mode requires the finite_tabular family")
                if w.modulus != self.num_intervals_m:
                    raise WrapperIncompatible(
                        f"state_conv modulus {w.modulus} must equal the "
                        f"finite_tabular state count {self.num_intervals_m}")
            if isinstance(w, RewardDelaySpec) and w.delay_k >= self.horizon_t:
                raise DelayExceedsHorizon(
                    f"delay_k={w.delay_k} must be < horizon_t={self.horizon_t}")

    # -- canonical JSON ----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "family": self.family,
            "horizon_t": self.horizon_t,
            "num_intervals_m": self.num_intervals_m,
            "order_k": self.order_k,
            "seed": self.seed,
            "segment_len_n": self.segment_len_n,
            "wrappers": [w.to_json_obj() for w in self.wrappers],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EnvSpec":
        if not isinstance(obj, dict):
            raise InvalidSpec("EnvSpec JSON must be an object")
        unknown = set(obj) - set(_SPEC_KEYS)
        if unknown:
            raise InvalidSpec(f"unknown EnvSpec keys: {sorted(unknown)}")
        missing = set(_SPEC_KEYS) - set(obj)
        if missing:
            raise InvalidSpec(f"missing EnvSpec keys: {sorted(missing)}")
        spec = cls(
            family=obj["family"],
            order_k=obj["order_k"],
            horizon_t=obj["horizon_t"],
            num_intervals_m=obj["num_intervals_m"],
            segment_len_n=obj["segment_len_n"],
            wrappers=tuple(wrapper_from_json_obj(w) for w in obj["wrappers"]),
            seed=obj["seed"],
        )
        spec.validate()
        return spec

    def canonical_json(self) -> str:
        return canonical_json(self.to_json_obj())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path) -> "EnvSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.canonical_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# Canonical JSON rendering
# ---------------------------------------------------------------------------

def canonical_real(x: float) -> str:
    """17-significant-digit decimal form; exact double round-trip."""
    if not math.isfinite(x):
        raise SerializationOverflow(f"non-finite real {x!r} in canonical record")
    return format(x, ".17g")


def _render(obj, out: list) -> None:
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(canonical_real(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _render(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _render(item, out)
        out.append("]")
    else:
        raise SerializationOverflow(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj) -> str:
    out: list[str] = []
    _render(obj, out)
    return "".join(out)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    """One interaction: the observation seen at t, the action taken, the
    reward received. ``t`` starts at 0 and is strictly increasing."""

    t: int
    observation: tuple
    action: object
    reward: float


@dataclass(frozen=True)
class Trajectory:
    spec_digest: str
    episode_index: int
    steps: tuple
    terminal: bool

    def prefix(self, length: int) -> "Trajectory":
        """Any truncation of the step list is itself a valid trajectory."""
        return Trajectory(self.spec_digest, self.episode_index,
                          self.steps[:length], terminal=False)

    def episode_return(self, gamma: float = 1.0) -> float:
        if gamma == 1.0:
            return sum(s.reward for s in self.steps)
        return sum((gamma ** s.t) * s.reward for s in self.steps)


def serialize_trajectory(traj: Trajectory) -> str:
    """One-line canonical record; parse(serialize(x)) == x and a second
    serialize is byte-identical."""
    record = {
        "spec_digest": traj.spec_digest,
        "episode": traj.episode_index,
        "obs": [list(s.observation) for s in traj.steps],
        "act": [list(s.action) if isinstance(s.action, tuple) else s.action
                for s in traj.steps],
        "rew": [s.reward for s in traj.steps],
        "terminal": traj.terminal,
    }
    return canonical_json(record)


def parse_trajectory(line: str) -> Trajectory:
    obj = json.loads(line)
    expected = {"spec_digest", "episode", "obs", "act", "rew", "terminal"}
    if set(obj) != expected:
        raise InvalidSpec(f"malformed trajectory record keys: {sorted(obj)}")
    steps = tuple(
        Step(t=t, observation=tuple(z),
             action=tuple(a) if isinstance(a, list) else a, reward=r)
        for t, (z, a, r) in enumerate(zip(obj["obs"], obj["act"], obj["rew"]))
    )
    if not (len(obj["obs"]) == len(obj["act"]) == len(obj["rew"])):
        raise InvalidSpec("obs/act/rew length mismatch in trajectory record")
    return Trajectory(spec_digest=obj["spec_digest"], episode_index=obj["episode"],
                      steps=steps, terminal=obj["terminal"])
