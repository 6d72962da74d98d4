import itertools

import numpy as np
import pytest

from maintnet import mdp
from maintnet.errors import IllegalActionError, ValidationError
from maintnet.mdp import (
    EngineerAction,
    Instance,
    MAINTAIN,
    NetworkState,
    travel_to,
)
from maintnet.policies import RandomPolicy

from conftest import random_states


def test_action_set_available_engineer(pair_k2):
    state = mdp.initial_state(pair_k2)
    actions = mdp.legal_actions_engineer(pair_k2, state, 0)
    assert len(actions) == 4  # three destinations plus maintenance
    assert MAINTAIN in actions
    assert travel_to(0) in actions  # own location = continue/idle


def test_action_set_busy_engineer(pair_k2):
    state = NetworkState((1, 1, 1), (0, 2), (0, 0), (5, 0))
    assert mdp.legal_actions_engineer(pair_k2, state, 0) == (travel_to(0),)


def test_action_set_blocked_by_co_located_maintainer(pair_k2):
    # engineer 1 is maintaining machine 0 where engineer 0 stands available
    state = NetworkState((2, 1, 1), (0, 0), (0, 1), (0, 3))
    actions = mdp.legal_actions_engineer(pair_k2, state, 0)
    assert MAINTAIN not in actions
    assert len(actions) == 3


def test_engineer_index_validated(pair_k2):
    state = mdp.initial_state(pair_k2)
    with pytest.raises(ValidationError):
        mdp.legal_actions_engineer(pair_k2, state, 5)


def test_travel_updates_location_and_busy_time(m8):
    state = mdp.initial_state(m8)
    nxt = mdp.apply_engineer_action(m8, state, 0, travel_to(2))
    assert nxt.location[0] == 2  # Amsterdam -> Maastricht
    assert nxt.busy_for[0] == 11
    assert nxt.maintaining[0] == 0


def test_idle_sets_one_epoch_busy(pair_k2):
    state = mdp.initial_state(pair_k2)
    nxt = mdp.apply_engineer_action(pair_k2, state, 0, travel_to(0))
    assert nxt.busy_for[0] == 1
    assert nxt.location == state.location and nxt.levels == state.levels


def test_preventive_maintenance_takes_machine_down(pair_k2):
    state = mdp.initial_state(pair_k2)
    nxt = mdp.apply_engineer_action(pair_k2, state, 0, MAINTAIN)
    assert nxt.maintaining[0] == 1
    assert nxt.busy_for[0] == pair_k2.repair_pm[0]
    assert nxt.levels[0] == pair_k2.failed_level(0)


def test_corrective_maintenance_uses_cm_duration(pair_k2):
    state = NetworkState((2, 1, 1), (0, 2), (0, 0), (0, 0))
    nxt = mdp.apply_engineer_action(pair_k2, state, 0, MAINTAIN)
    assert nxt.busy_for[0] == pair_k2.repair_cm[0]


def test_illegal_actions_rejected(pair_k2):
    busy = NetworkState((1, 1, 1), (0, 2), (0, 0), (4, 0))
    with pytest.raises(IllegalActionError):
        mdp.apply_engineer_action(pair_k2, busy, 0, travel_to(1))
    with pytest.raises(IllegalActionError):
        mdp.apply_engineer_action(pair_k2, busy, 0, MAINTAIN)
    both_maintain = (MAINTAIN, MAINTAIN)
    co_located = NetworkState((1, 1, 1), (1, 1), (0, 0), (0, 0))
    with pytest.raises(IllegalActionError):
        mdp.apply_joint_action(pair_k2, co_located, both_maintain)


def test_completion_resets_machine(pair_k2):
    # engineer 0 maintaining machine 0 with one epoch left
    state = NetworkState((2, 1, 1), (0, 2), (1, 0), (1, 0))
    rng = np.random.default_rng(0)
    nxt = mdp.advance_time(pair_k2, state, rng)
    assert nxt.levels[0] == 1
    assert nxt.maintaining[0] == 0 and nxt.busy_for[0] == 0


def test_degradation_probability_matches_matrix(m8):
    state = mdp.initial_state(m8)
    inter = mdp.apply_joint_action(m8, state, tuple(travel_to(l) for l in state.location))
    n = 40_000
    rng = np.random.default_rng(7)
    advanced = sum(
        mdp.advance_time(m8, inter, rng).levels[5] == 2 for _ in range(n)
    )
    assert advanced / n == pytest.approx(1 / 200, abs=3 * np.sqrt(0.005 * 0.995 / n))


def test_certain_degradation_advances(tiny):
    state = mdp.initial_state(tiny)
    inter = mdp.apply_joint_action(tiny, state, (travel_to(0),))
    nxt = mdp.advance_time(tiny, inter, np.random.default_rng(0))
    assert nxt.levels[0] == 2


def test_stage_cost_examples_from_cost_structures(m4, m8, m8pm):
    # C2: one failed machine, engineer idling -> downtime only
    state = NetworkState((5, 1, 1, 1), (1,), (0,), (0,))
    assert mdp.stage_cost(m4, state, (travel_to(1),)) == 10.0
    # C3: corrective start on a failed machine -> cm + downtime
    state = NetworkState((3, 1, 1, 1, 1, 1, 1, 1), (0, 2, 3), (0, 0, 0), (0, 0, 0))
    joint = (MAINTAIN, travel_to(2), travel_to(3))
    assert mdp.stage_cost(m8pm, state, joint) == pytest.approx(4.0 + 1.0)
    # C1: departing on a trip with all machines healthy -> one travel unit
    state = mdp.initial_state(m8)
    joint = (travel_to(4), travel_to(2), travel_to(3))
    assert mdp.stage_cost(m8, state, joint) == pytest.approx(0.05)


def test_preventive_start_charges_downtime(m8pm):
    # downtime applies while the machine is down, including the epoch
    # maintenance begins on a not-yet-failed machine
    state = NetworkState((2, 1, 1, 1, 1, 1, 1, 1), (0, 2, 3), (0, 0, 0), (0, 0, 0))
    joint = (MAINTAIN, travel_to(2), travel_to(3))
    pm, cm, dt, tr = mdp.stage_cost_components(m8pm, state, joint)
    assert (pm, cm, dt, tr) == (1.0, 0.0, 1.0, 0.0)


def test_travel_cost_charged_exactly_trip_length(m8):
    # one engineer rides Amsterdam -> Maastricht (11 quarters); the others
    # hold position; no failures can interfere with the travel charge
    rng = np.random.default_rng(3)
    state = mdp.initial_state(m8)
    total_travel = 0.0
    for t in range(13):
        actions = [travel_to(loc) for loc in state.location]
        if t == 0:
            actions[0] = travel_to(2)
        comps = mdp.stage_cost_components(m8, state, tuple(actions))
        total_travel += comps[3]
        state = mdp.advance_time(m8, mdp.apply_joint_action(m8, state, tuple(actions)), rng)
    assert total_travel == pytest.approx(11 * 0.05)
    assert state.location[0] == 2 and state.busy_for[0] == 0


def test_step_rejects_double_maintenance(pair_k2):
    state = NetworkState((2, 1, 2), (2, 2), (0, 0), (0, 0))
    with pytest.raises(IllegalActionError):
        mdp.step(pair_k2, state, (MAINTAIN, MAINTAIN), np.random.default_rng(0))


def test_order_independence_of_joint_application(m8, pair_k2):
    rng = np.random.default_rng(11)
    policy = RandomPolicy()
    for instance in (m8, pair_k2):
        for state in random_states(instance, 300, seed=5):
            joint = policy.decide(instance, state, rng)
            reference = mdp.apply_joint_action(instance, state, joint)
            k = instance.engineer_count
            for perm in itertools.permutations(range(k)):
                out = state
                for i in perm:
                    out = mdp.apply_engineer_action(instance, out, i, joint[i])
                assert out == reference


def test_step_invariants_fuzz(m4, m8):
    rng = np.random.default_rng(23)
    policy = RandomPolicy()
    for instance in (m4, m8):
        state = mdp.initial_state(instance)
        for _ in range(4000):
            joint = policy.decide(instance, state, rng)
            inter = mdp.apply_joint_action(instance, state, joint)
            completing = {
                inter.location[k]
                for k in range(instance.engineer_count)
                if inter.maintaining[k] == 1 and inter.busy_for[k] == 1
            }
            nxt, cost = mdp.step(instance, state, joint, rng)
            assert cost >= 0.0
            mdp.validate_state(instance, nxt)
            for m in range(instance.machine_count):
                if m not in completing:
                    assert nxt.levels[m] >= inter.levels[m]  # monotone wear
            state = nxt


def test_failed_level_absorbing_without_maintenance(tiny):
    state = NetworkState((2,), (0,), (0,), (0,))
    rng = np.random.default_rng(1)
    for _ in range(50):
        state, _ = mdp.step(tiny, state, (travel_to(0),), rng)
        assert state.levels[0] == 2


def test_instance_validation_errors():
    good = dict(
        name="x",
        travel=[[0, 1], [1, 0]],
        degradation=(
            np.array([[0.5, 0.5], [0.0, 1.0]]),
            np.array([[0.5, 0.5], [0.0, 1.0]]),
        ),
        repair_pm=[1, 1],
        repair_cm=[1, 1],
        cost_pm=[1.0, 1.0],
        cost_cm=[2.0, 2.0],
        cost_downtime=[1.0, 1.0],
        cost_travel=0.0,
        gamma=0.9,
        initial_locations=(0,),
    )
    Instance(**good)

    bad = dict(good, travel=[[0, -1], [1, 0]])
    with pytest.raises(ValidationError):
        Instance(**bad)
    bad = dict(good, degradation=(np.array([[0.5, 0.4], [0.0, 1.0]]),) * 2)
    with pytest.raises(ValidationError):
        Instance(**bad)
    # jumps of two levels are not representable
    q = np.array([[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])
    bad = dict(good, degradation=(q, q))
    with pytest.raises(ValidationError):
        Instance(**bad)
    bad = dict(good, cost_cm=[0.5, 0.5])  # cheaper than preventive
    with pytest.raises(ValidationError):
        Instance(**bad)
    bad = dict(good, gamma=1.0)
    with pytest.raises(ValidationError):
        Instance(**bad)
    bad = dict(good, initial_locations=(4,))
    with pytest.raises(ValidationError):
        Instance(**bad)


def test_state_validation(pair_k2):
    with pytest.raises(ValidationError):
        mdp.validate_state(pair_k2, NetworkState((1, 1), (0, 2), (0, 0), (0, 0)))
    with pytest.raises(ValidationError):  # maintaining but idle
        mdp.validate_state(pair_k2, NetworkState((1, 1, 1), (0, 2), (1, 0), (0, 0)))
    with pytest.raises(ValidationError):  # maintained machine must be down
        mdp.validate_state(pair_k2, NetworkState((1, 1, 1), (0, 2), (1, 0), (2, 0)))


def test_action_ordinal_round_trip():
    for m_count in (1, 4, 35):
        for ordinal in range(m_count + 1):
            action = mdp.action_from_ordinal(ordinal, m_count)
            assert mdp.action_ordinal(action, m_count) == ordinal
