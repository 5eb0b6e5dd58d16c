"""Exact-rational tabular processes and the equivalent-HDP constructor.

Everything here runs on Fractions so that "these two distributions are
equal" is a decidable exact check, which is what the memory-demand and
equivalence oracles need. Sizes are meant to stay tiny (a handful of states,
horizon <= ~4); enumeration guards raise rather than grind.

A FinitePOMDP is indexed tables over states/actions/observations with a
declared finite reward support. A FiniteHDP has no states: its transition
kernel is keyed by the full (observations, actions) history, and observation
symbols may be any hashable values (ints here, exact rationals for
convolution-aggregated processes).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from .core import (
    EnumerationTooLarge, IndexOutOfRange, InvalidSpec, RngStream,
    ZeroDenominatorOnReachableHistory, mix64, MASK64,
)

__all__ = [
    "FinitePOMDP", "FiniteHDP", "TrajectoryDistribution",
    "phi", "equivalent_hdp", "enumerate_distribution",
    "UniformPolicy", "HashedDeterministicPolicy", "TablePolicy",
    "random_pomdp", "pomdp_to_json_obj", "pomdp_from_json_obj",
]

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass
class FinitePOMDP:
    """Tabular POMDP with per-step tables and finite reward support.

    transitions[t][s][a] is a tuple of (s_next, reward_index, prob);
    observations[t][s] is a tuple of (z, prob) and has horizon+1 entries so
    the final observation is defined. All probabilities are Fractions and
    every conditional row sums to exactly 1.
    """

    num_states: int
    num_actions: int
    num_obs: int
    rho0: tuple
    transitions: tuple
    observations: tuple
    rewards: tuple
    horizon: int
    _marg: dict = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        if sum(self.rho0) != ONE:
            raise InvalidSpec("rho0 must sum to exactly 1")
        if len(self.transitions) != self.horizon:
            raise InvalidSpec("need one transition table per step")
        if len(self.observations) != self.horizon + 1:
            raise InvalidSpec("need horizon+1 observation tables")
        for t in range(self.horizon):
            for s in range(self.num_states):
                for a in range(self.num_actions):
                    if sum(p for _, _, p in self.transitions[t][s][a]) != ONE:
                        raise InvalidSpec(f"T[{t}][{s}][{a}] does not sum to 1")
        for t in range(self.horizon + 1):
            for s in range(self.num_states):
                if sum(p for _, p in self.observations[t][s]) != ONE:
                    raise InvalidSpec(f"O[{t}][{s}] does not sum to 1")

    def trans_marginal(self, t: int, s: int, a: int) -> dict:
        """sum_r T_t(s', r | s, a) as a dict s' -> Fraction."""
        key = (t, s, a)
        out = self._marg.get(key)
        if out is None:
            out = defaultdict(lambda: ZERO)
            for s2, _, p in self.transitions[t][s][a]:
                out[s2] += p
            out = dict(out)
            self._marg[key] = out
        return out

    @property
    def is_fully_observed(self) -> bool:
        if self.num_obs != self.num_states:
            return False
        return all(obs_t[s] == ((s, ONE),)
                   for obs_t in self.observations for s in range(self.num_states))


@dataclass
class FiniteHDP:
    """History-keyed process: kernels[(zs, acts)] -> {(z_next, r): prob}.

    Histories not present in ``kernels`` are unreachable (the Theorem-1
    construction omits zero-denominator histories rather than inventing a
    default row).
    """

    rho0: dict
    num_actions: int
    kernels: dict
    horizon: int

    def kernel(self, zs: tuple, acts: tuple) -> dict:
        try:
            return self.kernels[(zs, acts)]
        except KeyError:
            raise ZeroDenominatorOnReachableHistory(
                f"no kernel for history zs={zs} acts={acts}") from None


@dataclass
class TrajectoryDistribution:
    """Exact distribution over terminal trajectories (z_{0:T}, a_{0:T-1},
    r_{0:T-1}) under a fixed policy."""

    probs: dict

    def total(self) -> Fraction:
        return sum(self.probs.values(), ZERO)

    def marginal_initial_obs(self) -> dict:
        out = defaultdict(lambda: ZERO)
        for (zs, _, _), p in self.probs.items():
            out[zs[0]] += p
        return dict(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryDistribution):
            return NotImplemented
        a = {k: v for k, v in self.probs.items() if v != 0}
        b = {k: v for k, v in other.probs.items() if v != 0}
        return a == b


# ---------------------------------------------------------------------------
# Theorem-1 construction
# ---------------------------------------------------------------------------

def phi(pomdp: FinitePOMDP, zs: tuple, ss: tuple, acts: tuple) -> Fraction:
    """rho0(s0) O_0(z0|s0) prod_{tau<t} O_{tau+1}(z_{tau+1}|s_{tau+1})
    sum_r T_tau(s_{tau+1}, r | s_tau, a_tau); the unnormalized weight of a
    state path given the observed history. ``acts`` may include the current
    action a_t; only a_{0:t-1} is read."""
    t = len(zs) - 1
    if len(ss) != t + 1 or len(acts) < t:
        raise IndexOutOfRange("phi needs |ss| == |zs| and |acts| >= |zs|-1")
    obs = pomdp.observations
    p = pomdp.rho0[ss[0]] * _obs_prob(obs[0], ss[0], zs[0])
    if p == 0:
        return ZERO
    for tau in range(t):
        p *= pomdp.trans_marginal(tau, ss[tau], acts[tau]).get(ss[tau + 1], ZERO)
        if p == 0:
            return ZERO
        p *= _obs_prob(obs[tau + 1], ss[tau + 1], zs[tau + 1])
        if p == 0:
            return ZERO
    return p


def _obs_prob(obs_table_t, s: int, z) -> Fraction:
    for zz, p in obs_table_t[s]:
        if zz == z:
            return p
    return ZERO


def equivalent_hdp(pomdp: FinitePOMDP) -> FiniteHDP:
    """The HDP that is indistinguishable from the POMDP: kernel rows are the
    Theorem-1 quotient (numerator and denominator both explicit Phi sums),
    computed for every reachable history and exact."""
    S, A = pomdp.num_states, pomdp.num_actions
    rho0p = defaultdict(lambda: ZERO)
    for s in range(S):
        for z, p in pomdp.observations[0][s]:
            rho0p[z] += pomdp.rho0[s] * p
    rho0p = {z: p for z, p in rho0p.items() if p > 0}

    kernels: dict = {}
    frontier = [((z,), ()) for z in rho0p]
    for t in range(pomdp.horizon):
        successors = set()
        for zs, acts in frontier:
            state_paths = [(ss, phi(pomdp, zs, ss, acts))
                           for ss in product(range(S), repeat=t + 1)]
            state_paths = [(ss, w) for ss, w in state_paths if w > 0]
            den = sum(w for _, w in state_paths)
            if den == 0:
                raise ZeroDenominatorOnReachableHistory(
                    f"history zs={zs} acts={acts} reached with zero weight")
            for a in range(A):
                row = defaultdict(lambda: ZERO)
                for ss, w in state_paths:
                    for s2, r_idx, pt in pomdp.transitions[t][ss[-1]][a]:
                        base = w * pt
                        for z2, po in pomdp.observations[t + 1][s2]:
                            if po > 0:
                                row[(z2, pomdp.rewards[r_idx])] += base * po
                kernels[(zs, acts + (a,))] = {k: v / den for k, v in row.items() if v > 0}
                if t + 1 < pomdp.horizon:
                    for (z2, _r) in kernels[(zs, acts + (a,))]:
                        successors.add((zs + (z2,), acts + (a,)))
        frontier = sorted(successors)
    return FiniteHDP(rho0=rho0p, num_actions=A, kernels=kernels,
                     horizon=pomdp.horizon)


# ---------------------------------------------------------------------------
# Policies over histories (oracle side: exact action probabilities)
# ---------------------------------------------------------------------------

class UniformPolicy:
    def __init__(self, num_actions: int):
        self.num_actions = num_actions
        self._row = {a: Fraction(1, num_actions) for a in range(num_actions)}

    def action_probs(self, zs: tuple, acts: tuple) -> dict:
        return self._row


class HashedDeterministicPolicy:
    """A deterministic history-dependent policy drawn at random: the action
    at each history is a stable 64-bit hash of (history, salt). Same history
    always maps to the same action."""

    def __init__(self, num_actions: int, salt: int):
        self.num_actions = num_actions
        self.salt = salt & MASK64

    def action_probs(self, zs: tuple, acts: tuple) -> dict:
        h = hash((zs, acts)) & MASK64
        return {mix64(h ^ self.salt) % self.num_actions: ONE}


class TablePolicy:
    """Deterministic policy from an explicit {(zs, acts): action} table."""

    def __init__(self, table: dict, num_actions: int):
        self.table = table
        self.num_actions = num_actions

    def action_probs(self, zs: tuple, acts: tuple) -> dict:
        return {self.table[(zs, acts)]: ONE}


# ---------------------------------------------------------------------------
# Exhaustive trajectory enumeration
# ---------------------------------------------------------------------------

def enumerate_distribution(process, policy, guard: int = 10 ** 6) -> TrajectoryDistribution:
    """Exact probability of every terminal trajectory under ``policy``;
    raises EnumerationTooLarge past ``guard`` leaves."""
    if isinstance(process, FinitePOMDP):
        return _enumerate_pomdp(process, policy, guard)
    if isinstance(process, FiniteHDP):
        return _enumerate_hdp(process, policy, guard)
    raise InvalidSpec(f"cannot enumerate {type(process).__name__}")


def _enumerate_pomdp(pomdp: FinitePOMDP, policy, guard: int) -> TrajectoryDistribution:
    probs: dict = defaultdict(lambda: ZERO)
    leaves = 0

    def rec(t, s, zs, acts, rews, p):
        nonlocal leaves
        if t == pomdp.horizon:
            leaves += 1
            if leaves > guard:
                raise EnumerationTooLarge(f"more than {guard} trajectory leaves")
            probs[(zs, acts, rews)] += p
            return
        for a, pa in policy.action_probs(zs, acts).items():
            if pa == 0:
                continue
            for s2, r_idx, pt in pomdp.transitions[t][s][a]:
                if pt == 0:
                    continue
                for z2, po in pomdp.observations[t + 1][s2]:
                    if po == 0:
                        continue
                    rec(t + 1, s2, zs + (z2,), acts + (a,),
                        rews + (pomdp.rewards[r_idx],), p * pa * pt * po)

    for s0 in range(pomdp.num_states):
        if pomdp.rho0[s0] == 0:
            continue
        for z0, po in pomdp.observations[0][s0]:
            if po > 0:
                rec(0, s0, (z0,), (), (), pomdp.rho0[s0] * po)
    return TrajectoryDistribution(probs=dict(probs))


def _enumerate_hdp(hdp: FiniteHDP, policy, guard: int) -> TrajectoryDistribution:
    probs: dict = defaultdict(lambda: ZERO)
    leaves = 0

    def rec(t, zs, acts, rews, p):
        nonlocal leaves
        if t == hdp.horizon:
            leaves += 1
            if leaves > guard:
                raise EnumerationTooLarge(f"more than {guard} trajectory leaves")
            probs[(zs, acts, rews)] += p
            return
        for a, pa in policy.action_probs(zs, acts).items():
            if pa == 0:
                continue
            for (z2, r), pk in hdp.kernel(zs, acts + (a,)).items():
                if pk == 0:
                    continue
                rec(t + 1, zs + (z2,), acts + (a,), rews + (r,), p * pa * pk)

    for z0, p0 in hdp.rho0.items():
        if p0 > 0:
            rec(0, (z0,), (), (), p0)
    return TrajectoryDistribution(probs=dict(probs))


# ---------------------------------------------------------------------------
# Random instances (seeded through the toolkit RNG)
# ---------------------------------------------------------------------------

def _rational_row(rng: RngStream, n: int, max_weight: int = 4) -> list:
    """Random exact distribution over n outcomes; some entries may be zero
    but at least one is positive."""
    weights = [rng.randrange(max_weight + 1) for _ in range(n)]
    if sum(weights) == 0:
        weights[rng.randrange(n)] = 1
    total = sum(weights)
    return [Fraction(w, total) for w in weights]


def random_pomdp(rng: RngStream, num_states: int = 2, num_actions: int = 2,
                 num_obs: int = 2, horizon: int = 2, num_rewards: int = 2,
                 mdp: bool = False, deterministic_rewards: bool = False,
                 action_rewards: bool = False, uniform_rho0: bool = False,
                 time_varying: bool = True) -> FinitePOMDP:
    """Random small instance. ``mdp=True`` forces identity observations
    (Z = S). ``deterministic_rewards=True`` fixes one reward value per
    (s, a), drawn from distinct random rationals (keeps reward-delay and
    optimality oracles well-posed and tie-free). ``action_rewards=True``
    factorizes each row as T(s'|s,a) * g_t(r|a), so rewards carry no hidden-
    state information beyond the observations."""
    if mdp:
        num_obs = num_states
    if deterministic_rewards:
        rewards = tuple(Fraction(rng.randrange(1000) + 1 + 1000 * i, 97)
                        for i in range(num_states * num_actions))
    else:
        rewards = (ZERO, ONE)[:num_rewards]
        if len(rewards) < num_rewards:
            rewards = tuple(Fraction(i) for i in range(num_rewards))

    if uniform_rho0:
        rho0 = tuple(Fraction(1, num_states) for _ in range(num_states))
    else:
        rho0 = tuple(_rational_row(rng, num_states))

    def trans_table(t):
        reward_dists = [_rational_row(rng, len(rewards))
                        for _ in range(num_actions)] if action_rewards else None
        table = []
        for s in range(num_states):
            per_action = []
            for a in range(num_actions):
                row = _rational_row(rng, num_states)
                entries = []
                for s2, p in enumerate(row):
                    if p == 0:
                        continue
                    if deterministic_rewards:
                        entries.append((s2, s * num_actions + a, p))
                    elif action_rewards:
                        for r_idx, q in enumerate(reward_dists[a]):
                            if q > 0:
                                entries.append((s2, r_idx, p * q))
                    else:
                        entries.append((s2, rng.randrange(len(rewards)), p))
                per_action.append(tuple(entries))
            table.append(tuple(per_action))
        return tuple(table)

    def obs_table(t):
        if mdp:
            return tuple(((s, ONE),) for s in range(num_states))
        table = []
        for s in range(num_states):
            row = _rational_row(rng, num_obs)
            table.append(tuple((z, p) for z, p in enumerate(row) if p > 0))
        return tuple(table)

    first_trans = trans_table(0)
    first_obs = obs_table(0)
    transitions = tuple(trans_table(t) if time_varying else first_trans
                        for t in range(horizon))
    observations = tuple(obs_table(t) if time_varying else first_obs
                         for t in range(horizon + 1))
    pomdp = FinitePOMDP(num_states=num_states, num_actions=num_actions,
                        num_obs=num_obs, rho0=rho0, transitions=transitions,
                        observations=observations, rewards=rewards,
                        horizon=horizon)
    pomdp.validate()
    return pomdp


# ---------------------------------------------------------------------------
# JSON schema ("p/q" rationals)
# ---------------------------------------------------------------------------

def _rat_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _rat_parse(s: str) -> Fraction:
    return Fraction(s)


def pomdp_to_json_obj(pomdp: FinitePOMDP) -> dict:
    return {
        "S": pomdp.num_states,
        "A": pomdp.num_actions,
        "Z": pomdp.num_obs,
        "rho0": [_rat_str(p) for p in pomdp.rho0],
        "T": [[[[ [s2, r_idx, _rat_str(p)] for s2, r_idx, p in pomdp.transitions[t][s][a]]
                for a in range(pomdp.num_actions)]
               for s in range(pomdp.num_states)]
              for t in range(pomdp.horizon)],
        "O": [[[[z, _rat_str(p)] for z, p in pomdp.observations[t][s]]
               for s in range(pomdp.num_states)]
              for t in range(pomdp.horizon + 1)],
        "rewards": [_rat_str(r) for r in pomdp.rewards],
        "horizon": pomdp.horizon,
    }


def pomdp_from_json_obj(obj: dict) -> FinitePOMDP:
    pomdp = FinitePOMDP(
        num_states=obj["S"], num_actions=obj["A"], num_obs=obj["Z"],
        rho0=tuple(_rat_parse(p) for p in obj["rho0"]),
        transitions=tuple(
            tuple(tuple(tuple((s2, r_idx, _rat_parse(p)) for s2, r_idx, p in row)
                        for row in per_state)
                  for per_state in table)
            for table in obj["T"]),
        observations=tuple(
            tuple(tuple((z, _rat_parse(p)) for z, p in row) for row in table)
            for table in obj["O"]),
        rewards=tuple(_rat_parse(r) for r in obj["rewards"]),
        horizon=obj["horizon"],
    )
    pomdp.validate()
    return pomdp
