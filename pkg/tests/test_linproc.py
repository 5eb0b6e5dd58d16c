"""Coefficient schedules against the printed circulant tables, AR stepping,
and the interval reward."""

import math
from fractions import Fraction

import pytest

from pomdp_forge.core import ActionOutOfRange, EnvSpec, IndexOutOfRange, NotLinProc
from pomdp_forge.envs import make_env
from pomdp_forge.linproc import (
    BASE_ROW, CoefficientSchedule, InvarianceLabel, ar_next, ar_step,
    coeffs_for, interval_reward, invariance_class, shift_row, LinProcState,
)

# The two 8x8 circulant tables, frozen as printed (rows of eighths).
TIME_MATRIX = [
    (8, 9, 10, 11, 12, 13, 14, 15),
    (15, 8, 9, 10, 11, 12, 13, 14),
    (14, 15, 8, 9, 10, 11, 12, 13),
    (13, 14, 15, 8, 9, 10, 11, 12),
    (12, 13, 14, 15, 8, 9, 10, 11),
    (11, 12, 13, 14, 15, 8, 9, 10),
    (10, 11, 12, 13, 14, 15, 8, 9),
    (9, 10, 11, 12, 13, 14, 15, 8),
]
TRAJ_MATRIX = [
    (8, 9, 10, 11, 12, 13, 14, 15),
    (9, 10, 11, 12, 13, 14, 15, 8),
    (10, 11, 12, 13, 14, 15, 8, 9),
    (11, 12, 13, 14, 15, 8, 9, 10),
    (12, 13, 14, 15, 8, 9, 10, 11),
    (13, 14, 15, 8, 9, 10, 11, 12),
    (14, 15, 8, 9, 10, 11, 12, 13),
    (15, 8, 9, 10, 11, 12, 13, 14),
]


def test_base_row():
    assert BASE_ROW == tuple(Fraction(i, 8) for i in range(8, 16))
    assert all(w >= 1 for w in BASE_ROW)


def test_circulant_tables_match_frozen_matrices():
    time_sched = CoefficientSchedule("time_circulant")
    traj_sched = CoefficientSchedule("traj_circulant")
    for r in range(8):
        assert time_sched.row(r, 0) == tuple(Fraction(x, 8) for x in TIME_MATRIX[r])
        assert traj_sched.row(0, r) == tuple(Fraction(x, 8) for x in TRAJ_MATRIX[r])
        assert time_sched.row(r, 0) == shift_row(BASE_ROW, r)
        assert traj_sched.row(0, r) == shift_row(BASE_ROW, -r)


def test_time_traj_table_is_difference_shift():
    sched = CoefficientSchedule("time_traj_circulant")
    for i in range(8):
        for j in range(8):
            assert sched.row(i, j) == shift_row(BASE_ROW, i - j)


def test_coeffs_for_examples():
    assert coeffs_for(CoefficientSchedule("time_circulant"), 1, 0, 8) == \
        tuple(Fraction(x, 8) for x in (15, 8, 9, 10, 11, 12, 13, 14))
    assert coeffs_for(CoefficientSchedule("traj_circulant"), 0, 1, 8) == \
        tuple(Fraction(x, 8) for x in (9, 10, 11, 12, 13, 14, 15, 8))
    assert coeffs_for(CoefficientSchedule("all_one"), 4, 6, 3) == (1, 1, 1)
    with pytest.raises(IndexOutOfRange):
        coeffs_for(CoefficientSchedule("fixed"), 8, 0, 2)
    with pytest.raises(IndexOutOfRange):
        coeffs_for(CoefficientSchedule("fixed"), 0, 0, 9)


def test_ar_next_hand_values():
    # all-one, k=2: (0.7 + 0.8) mod 1
    assert ar_next((0.7, 0.8), (1, 1)) == pytest.approx(0.5, abs=1e-9)
    # identity coefficient
    assert ar_next((0.3,), (Fraction(8, 8),)) == 0.3
    # mixed coefficients, checked against exact rational evaluation
    got = ar_next((0.4, 0.8), (Fraction(1), Fraction(9, 8)))
    exact = Fraction(0.4) * 1 + Fraction(0.8) * Fraction(9, 8)
    expect = float(exact - math.floor(exact))
    assert got == pytest.approx(expect, abs=1e-12)
    assert got == pytest.approx(0.3, abs=1e-9)
    assert 0.0 <= got < 1.0


def test_ar_step_uses_selected_row():
    state = LinProcState(window=(0.5, 0.25), t=9, z0_bucket=0, seg=1)
    got = ar_step(state, CoefficientSchedule("time_circulant"))
    expect = (15 / 8) * 0.5 + (8 / 8) * 0.25
    assert got == pytest.approx(expect - math.floor(expect), abs=1e-12)


def test_interval_reward():
    assert interval_reward(3, 0.45, 8) == 1.0
    assert interval_reward(0, 0.9999999, 8) == 0.0
    assert interval_reward(7, 1.0 - 2 ** -53, 8) == 1.0
    with pytest.raises(ActionOutOfRange):
        interval_reward(8, 0.5, 8)


def test_interval_reward_uniform_rate():
    # Bernoulli(1/8) within 3 sigma over 1e5 trials
    from pomdp_forge.core import uniform01_array

    zs = uniform01_array(5, 0, 0, 10 ** 5)
    acts = (uniform01_array(5, 1, 0, 10 ** 5) * 8).astype(int)
    mean = sum(interval_reward(int(a), float(z), 8) for a, z in zip(acts, zs)) / 10 ** 5
    assert abs(mean - 1 / 8) < 0.004


def test_invariance_class_labels():
    assert str(invariance_class(EnvSpec(family="all_eq", order_k=2))) == "≃_2"
    assert str(invariance_class(EnvSpec(family="time_eq", order_k=2))) == \
        "≃_2 ∧ ≃^8"
    assert str(invariance_class(EnvSpec(family="no_eq", order_k=1))) == \
        "≃_1 ∧ ≃^8 ∧ ≃^{⌊8z_0⌋}"
    got = invariance_class(EnvSpec(family="traj_eq", order_k=3))
    assert got == InvarianceLabel(last_k=3, init_buckets=8)
    with pytest.raises(NotLinProc):
        invariance_class(EnvSpec(family="reward_when_inside"))


# ---------------------------------------------------------------------------
# Environment behavior
# ---------------------------------------------------------------------------

def test_k1_all_one_observations_constant():
    env = make_env(EnvSpec(family="all_eq_one", order_k=1, horizon_t=64, seed=3))
    obs = env.reset(0)
    seen = [obs[0]]
    done = False
    while not done:
        obs, _, done = env.step(0)
        seen.append(obs[0])
    assert len(set(seen[:64])) == 1  # z_{t+1} = z_t under the all-one order-1 map


def test_warmup_draws_are_fresh_and_reward_uses_truncated_sum():
    spec = EnvSpec(family="all_eq", order_k=4, horizon_t=16, seed=11)
    env = make_env(spec)
    z0 = env.reset(5)[0]
    # t = 0 < k-1: reward target is floor(8 * frac(w0*z0))
    target = int(8 * math.modf(float(Fraction(8, 8)) * z0)[0])
    _, r_hit, _ = env.step(target)
    assert r_hit == 1.0
    env.reset(5)
    _, r_miss, _ = env.step((target + 1) % 8)
    assert r_miss == 0.0


def test_post_warmup_transition_is_deterministic_function_of_window():
    spec = EnvSpec(family="no_eq", order_k=3, horizon_t=64, seed=9)
    env = make_env(spec)
    env.reset(2)
    for _ in range(10):
        env.step(0)
    state = env.state()
    nxt = ar_step(state, CoefficientSchedule("time_traj_circulant"))
    obs, _, _ = env.step(0)
    assert obs[0] == pytest.approx(nxt, abs=1e-12)


def test_k0_observations_iid():
    env = make_env(EnvSpec(family="all_eq_one", order_k=0, horizon_t=64, seed=4))
    env.reset(0)
    seen = set()
    done = False
    while not done:
        obs, _, done = env.step(0)
        seen.add(obs[0])
    assert len(seen) == 64  # fresh U(0,1) draw every step


def test_observations_in_unit_interval():
    for family in ("all_eq_one", "all_eq", "time_eq", "traj_eq", "no_eq"):
        env = make_env(EnvSpec(family=family, order_k=5, horizon_t=64, seed=8))
        obs = env.reset(1)
        assert 0.0 <= obs[0] < 1.0
        done = False
        while not done:
            obs, _, done = env.step(0)
            assert 0.0 <= obs[0] < 1.0
