import numpy as np
import pytest

from maintnet import exact
from maintnet.instances import load_shipped
from maintnet.mdp import Instance


def make_tiny() -> Instance:
    """One two-level machine, deterministic failure, free instant repair."""
    return Instance(
        name="tiny",
        travel=[[0]],
        degradation=(np.array([[0.0, 1.0], [0.0, 1.0]]),),
        repair_pm=[1],
        repair_cm=[1],
        cost_pm=[0.0],
        cost_cm=[0.0],
        cost_downtime=[1.0],
        cost_travel=0.0,
        gamma=0.99,
        initial_locations=(0,),
    )


def make_duo(gamma: float = 0.9) -> Instance:
    """Two machines, one engineer, short horizons for fast oracle tests."""
    return Instance(
        name="duo",
        travel=[[0, 2], [2, 0]],
        degradation=(
            np.array([[0.8, 0.2], [0.0, 1.0]]),
            np.array([[0.5, 0.5, 0.0], [0.0, 0.6, 0.4], [0.0, 0.0, 1.0]]),
        ),
        repair_pm=[1, 2],
        repair_cm=[2, 3],
        cost_pm=[1.0, 1.0],
        cost_cm=[3.0, 4.0],
        cost_downtime=[5.0, 6.0],
        cost_travel=0.1,
        gamma=gamma,
        initial_locations=(0,),
    )


def make_pair_k2() -> Instance:
    """Two engineers on three machines; exercises joint-action rules."""
    return Instance(
        name="pair",
        travel=[[0, 1, 3], [1, 0, 2], [3, 2, 0]],
        degradation=(
            np.array([[0.7, 0.3], [0.0, 1.0]]),
            np.array([[0.7, 0.3], [0.0, 1.0]]),
            np.array([[0.7, 0.3], [0.0, 1.0]]),
        ),
        repair_pm=[2, 2, 2],
        repair_cm=[3, 3, 3],
        cost_pm=[1.0, 1.0, 1.0],
        cost_cm=[2.0, 2.0, 2.0],
        cost_downtime=[4.0, 4.0, 4.0],
        cost_travel=0.05,
        gamma=0.9,
        initial_locations=(0, 2),
    )


@pytest.fixture(scope="session")
def tiny():
    return make_tiny()


@pytest.fixture(scope="session")
def duo():
    return make_duo()


@pytest.fixture(scope="session")
def pair_k2():
    return make_pair_k2()


@pytest.fixture(scope="session")
def m4():
    return load_shipped("M4K1-Q2Q3C2")


@pytest.fixture(scope="session")
def m6():
    return load_shipped("M6K1-Q2Q3Q4C2")


@pytest.fixture(scope="session")
def m8():
    return load_shipped("M8K3-Qt1C1")


@pytest.fixture(scope="session")
def m8pm():
    return load_shipped("M8K3-Qt2C3")


@pytest.fixture(scope="session")
def m35():
    return load_shipped("M35K5-Qt3C1")


@pytest.fixture(scope="session")
def m4_index(m4):
    return exact.enumerate_states(m4)


@pytest.fixture(scope="session")
def m4_solution(m4, m4_index):
    values, policy = exact.value_iteration(m4, m4_index, tol=1e-7)
    return values, policy


@pytest.fixture(scope="session")
def duo_index(duo):
    return exact.enumerate_states(duo)


def random_states(instance, count, seed, steps_between=3):
    """Reachable states sampled by walking the random policy."""
    from maintnet import mdp
    from maintnet.policies import RandomPolicy

    rng = np.random.default_rng(seed)
    policy = RandomPolicy()
    state = mdp.initial_state(instance)
    states = [state]
    while len(states) < count:
        for _ in range(steps_between):
            state, _ = mdp.step(instance, state, policy.decide(instance, state, rng), rng)
        states.append(state)
    return states
