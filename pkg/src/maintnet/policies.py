"""Decision-rule interface and the trivial baseline policies."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import mdp
from .mdp import EngineerAction, Instance, JointAction, NetworkState

__all__ = ["Policy", "IdlePolicy", "RandomPolicy"]


class Policy:
    """A stationary decision rule mapping states to joint actions.

    ``decide`` picks the joint action for a decision epoch.  The default
    implementation selects engineer actions sequentially in index order,
    applying each engineer's action before choosing the next one, which is
    how cooperative per-engineer policies are defined.  Joint heuristics
    override ``decide`` directly.

    ``decide_engineer`` picks one engineer's action given the current
    (possibly partially updated) state; it is the building block used by
    rollout simulation and data collection.

    ``action_distribution`` optionally exposes the exact distribution over
    joint actions for a state, enabling exact policy evaluation; policies
    without a tractable distribution return None.
    """

    name = "policy"

    def decide(self, instance: Instance, state: NetworkState, rng: np.random.Generator) -> JointAction:
        actions: list[EngineerAction] = []
        current = state
        for k in range(instance.engineer_count):
            action = self.decide_engineer(instance, current, k, rng)
            actions.append(action)
            current = mdp.apply_engineer_action(instance, current, k, action)
        return tuple(actions)

    def decide_engineer(
        self, instance: Instance, state: NetworkState, k: int, rng: np.random.Generator
    ) -> EngineerAction:
        raise NotImplementedError

    def action_distribution(
        self, instance: Instance, state: NetworkState
    ) -> Optional[list[tuple[float, JointAction]]]:
        return None


class IdlePolicy(Policy):
    """Every engineer continues its activity or idles in place."""

    name = "idle"

    def decide_engineer(self, instance, state, k, rng) -> EngineerAction:
        return EngineerAction(state.location[k])

    def decide(self, instance, state, rng) -> JointAction:
        return tuple(EngineerAction(loc) for loc in state.location)

    def action_distribution(self, instance, state):
        return [(1.0, self.decide(instance, state, None))]


class RandomPolicy(Policy):
    """Each engineer's action uniform over its own legal set.

    The joint draw samples every engineer independently on the decision
    state and resamples whenever the draw puts two engineers on the same
    maintenance job, which makes the joint action uniform over the legal
    joint set.
    """

    name = "random"

    def decide_engineer(self, instance, state, k, rng) -> EngineerAction:
        actions = mdp.legal_actions_engineer(instance, state, k)
        return actions[int(rng.integers(len(actions)))]

    def decide(self, instance, state, rng) -> JointAction:
        sets = [mdp.legal_actions_engineer(instance, state, k) for k in range(instance.engineer_count)]
        while True:
            joint = tuple(acts[int(rng.integers(len(acts)))] for acts in sets)
            maintain_locs = [state.location[k] for k, a in enumerate(joint) if a.is_maintain]
            if len(maintain_locs) == len(set(maintain_locs)):
                return joint

    def action_distribution(self, instance, state):
        joints = mdp.legal_joint_actions(instance, state)
        p = 1.0 / len(joints)
        return [(p, joint) for joint in joints]
