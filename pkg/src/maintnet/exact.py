"""Exact solution of small instances: enumeration, value iteration and
exact policy evaluation.

States are enumerated by breadth-first closure from the initial state
under every legal joint action and every stochastic outcome, then values
are computed over the dense index with Jacobi sweeps (deterministic and
trivially parallelizable).  Transition data is kept as flat arrays built
on the fly; no per-pair transition matrix is ever materialized.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import mdp
from .errors import CompatibilityError, EnumerationCapError
from .mdp import Instance, JointAction, NetworkState
from .policies import Policy

__all__ = [
    "StateIndex",
    "TablePolicy",
    "enumerate_states",
    "exact_policy_value",
    "policy_iteration",
    "predicted_state_bound",
    "value_iteration",
]

DEFAULT_STATE_CAP = 5_000_000

# One weighted mixture of joint actions; a state maps to one or more blocks.
Block = list[tuple[float, JointAction]]


def predicted_state_bound(instance: Instance) -> int:
    """Product upper bound on the number of reachable decision states."""
    bound = 1
    for n in instance.levels:
        bound *= n
    delta_bound = int(
        max(instance.travel.max(), instance.repair_pm.max(), instance.repair_cm.max())
    )
    per_engineer = instance.machine_count * 2 * (delta_bound + 1)
    return bound * per_engineer ** instance.engineer_count


def _transition_outcomes(
    instance: Instance, intermediate: NetworkState
) -> list[tuple[float, NetworkState]]:
    """All stochastic next states of a post-action state, with probabilities."""
    completing = {
        intermediate.location[k]
        for k in range(instance.engineer_count)
        if intermediate.maintaining[k] == 1 and intermediate.busy_for[k] == 1
    }
    busy_for = tuple(max(r - 1, 0) for r in intermediate.busy_for)
    maintaining = tuple(
        mnt if rem > 1 else 0 for mnt, rem in zip(intermediate.maintaining, intermediate.busy_for)
    )
    base_levels = list(intermediate.levels)
    random_machines: list[tuple[int, float]] = []
    for m, x in enumerate(base_levels):
        if m in completing:
            base_levels[m] = 1
            continue
        p = instance.advance_probability(m, x)
        if p >= 1.0:
            base_levels[m] = x + 1
        elif p > 0.0:
            random_machines.append((m, p))

    outcomes = []
    for pattern in range(1 << len(random_machines)):
        prob = 1.0
        levels = list(base_levels)
        for bit, (m, p) in enumerate(random_machines):
            if pattern >> bit & 1:
                prob *= p
                levels[m] += 1
            else:
                prob *= 1.0 - p
        outcomes.append(
            (prob, NetworkState(tuple(levels), intermediate.location, maintaining, busy_for))
        )
    return outcomes


@dataclass
class StateIndex:
    """Bijection between reachable decision states and dense integers."""

    instance: Instance
    states: list[NetworkState]
    index: dict[NetworkState, int]
    delta_bound: int
    _full_model: tuple | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def full_model(self) -> "_FlatModel":
        """Transition arrays over every (state, legal joint action), the
        actions of each state in lexicographic ordinal order."""
        if self._full_model is None:
            self._full_model = _build_model(
                self,
                lambda state: [
                    [(1.0, joint)] for joint in mdp.legal_joint_actions(self.instance, state)
                ],
            )
        return self._full_model


@dataclass
class _FlatModel:
    sa_offsets: np.ndarray  # per state: [start, end) into block arrays
    costs: np.ndarray  # expected stage cost per block
    out_offsets: np.ndarray  # per block: [start, end) into outcome arrays
    out_next: np.ndarray
    out_prob: np.ndarray
    actions: list[JointAction | None]  # representative action per block

    def sweep_values(self, values: np.ndarray, gamma: float) -> np.ndarray:
        """Expected one-step value of every block given state values."""
        contrib = self.out_prob * values[self.out_next]
        sums = np.add.reduceat(contrib, self.out_offsets[:-1])
        return self.costs + gamma * sums


def _build_model(index: StateIndex, blocks_for: Callable[[NetworkState], list[Block]]) -> _FlatModel:
    instance = index.instance
    sa_offsets = np.zeros(len(index.states) + 1, dtype=np.int64)
    costs: list[float] = []
    out_counts: list[int] = []
    out_next: list[int] = []
    out_prob: list[float] = []
    actions: list[JointAction | None] = []
    for s, state in enumerate(index.states):
        blocks = blocks_for(state)
        sa_offsets[s + 1] = sa_offsets[s] + len(blocks)
        for block in blocks:
            cost = 0.0
            merged: dict[int, float] = {}
            for weight, joint in block:
                cost += weight * mdp.stage_cost(instance, state, joint)
                intermediate = mdp.apply_joint_action(instance, state, joint)
                for p, nxt in _transition_outcomes(instance, intermediate):
                    j = index.index[nxt]
                    merged[j] = merged.get(j, 0.0) + weight * p
            costs.append(cost)
            out_counts.append(len(merged))
            for j, p in merged.items():
                out_next.append(j)
                out_prob.append(p)
            actions.append(block[0][1] if len(block) == 1 else None)
    out_offsets = np.zeros(len(costs) + 1, dtype=np.int64)
    np.cumsum(out_counts, out=out_offsets[1:])
    return _FlatModel(
        sa_offsets=sa_offsets,
        costs=np.asarray(costs),
        out_offsets=out_offsets,
        out_next=np.asarray(out_next, dtype=np.int64),
        out_prob=np.asarray(out_prob),
        actions=actions,
    )


def enumerate_states(instance: Instance, cap: int = DEFAULT_STATE_CAP) -> StateIndex:
    """Breadth-first closure of the reachable decision-state set."""
    bound = predicted_state_bound(instance)
    if bound > cap:
        raise EnumerationCapError(
            f"instance too large for exact solution: predicted state bound "
            f"{bound} exceeds cap {cap}"
        )
    start = mdp.initial_state(instance)
    states = [start]
    index = {start: 0}
    frontier = [start]
    while frontier:
        next_frontier = []
        for state in frontier:
            for joint in mdp.legal_joint_actions(instance, state):
                intermediate = mdp.apply_joint_action(instance, state, joint)
                for _, nxt in _transition_outcomes(instance, intermediate):
                    if nxt not in index:
                        index[nxt] = len(states)
                        states.append(nxt)
                        next_frontier.append(nxt)
        frontier = next_frontier
    delta_bound = int(
        max(instance.travel.max(), instance.repair_pm.max(), instance.repair_cm.max())
    )
    return StateIndex(instance=instance, states=states, index=index, delta_bound=delta_bound)


class TablePolicy(Policy):
    """Deterministic policy stored as one joint action per indexed state."""

    name = "exact"

    def __init__(self, index: StateIndex, table: list[JointAction]):
        if len(table) != len(index.states):
            raise CompatibilityError("action table length does not match the state index")
        self.index = index
        self.table = table

    def decide(self, instance, state, rng) -> JointAction:
        s = self.index.index.get(state)
        if s is None:
            raise CompatibilityError("state outside the enumerated reachable set")
        return self.table[s]

    def decide_engineer(self, instance, state, k, rng):
        return self.decide(instance, state, rng)[k]

    def action_distribution(self, instance, state):
        return [(1.0, self.decide(instance, state, None))]

    def save(self, path: str | Path) -> None:
        m_count = self.index.instance.machine_count
        doc = {
            "format": "maintnet-policy-table",
            "version": 1,
            "instance_hash": self.index.instance.content_hash,
            "state_count": len(self.table),
            "actions": [
                [mdp.action_ordinal(a, m_count) for a in joint] for joint in self.table
            ],
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @staticmethod
    def load(path: str | Path, instance: Instance, cap: int = DEFAULT_STATE_CAP) -> "TablePolicy":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != "maintnet-policy-table":
            raise CompatibilityError(f"{path}: not a policy table file")
        if doc["instance_hash"] not in (instance.content_hash, instance.parent_hash):
            raise CompatibilityError(
                f"policy table was computed for instance {doc['instance_hash']}, "
                f"got {instance.content_hash}"
            )
        index = enumerate_states(instance, cap=cap)
        if doc["state_count"] != len(index.states):
            raise CompatibilityError("state count mismatch; instance differs from the table's")
        m_count = instance.machine_count
        table = [
            tuple(mdp.action_from_ordinal(o, m_count) for o in ordinals)
            for ordinals in doc["actions"]
        ]
        return TablePolicy(index, table)


def value_iteration(
    instance: Instance,
    index: StateIndex,
    tol: float = 1e-6,
    max_sweeps: int = 200_000,
) -> tuple[np.ndarray, TablePolicy]:
    """Optimal values and a greedy optimal policy.

    Jacobi value iteration from zero until the sup-norm Bellman residual
    drops to ``tol``; greedy ties resolve to the lowest action ordinal.
    """
    model = index.full_model()
    values = np.zeros(len(index.states))
    starts = model.sa_offsets[:-1]
    for _ in range(max_sweeps):
        q = model.sweep_values(values, instance.gamma)
        new_values = np.minimum.reduceat(q, starts)
        residual = np.max(np.abs(new_values - values))
        values = new_values
        if residual <= tol:
            break
    else:
        raise RuntimeError(f"value iteration did not reach residual {tol}")

    q = model.sweep_values(values, instance.gamma)
    table: list[JointAction] = []
    for s in range(len(index.states)):
        lo, hi = model.sa_offsets[s], model.sa_offsets[s + 1]
        best = lo + int(np.argmin(q[lo:hi]))  # argmin returns the first minimum
        table.append(model.actions[best])
    return values, TablePolicy(index, table)


def _policy_model(index: StateIndex, policy: Policy) -> _FlatModel:
    def blocks_for(state: NetworkState) -> list[Block]:
        dist = policy.action_distribution(index.instance, state)
        if dist is None:
            raise CompatibilityError(
                f"policy {policy.name!r} does not expose an exact action distribution"
            )
        return [[(p, joint) for p, joint in dist]]

    return _build_model(index, blocks_for)


def exact_policy_value(
    instance: Instance,
    index: StateIndex,
    policy: Policy,
    tol: float = 1e-9,
    max_sweeps: int = 1_000_000,
) -> np.ndarray:
    """Fixed point of the policy's expected-cost operator, by iteration.

    Requires the policy to expose its exact action distribution
    (deterministic policies and the shipped randomized ones do).
    """
    model = _policy_model(index, policy)
    values = np.zeros(len(index.states))
    for _ in range(max_sweeps):
        new_values = model.sweep_values(values, instance.gamma)
        residual = np.max(np.abs(new_values - values))
        values = new_values
        if residual <= tol:
            return values
    raise RuntimeError(f"policy evaluation did not reach residual {tol}")


def policy_iteration(
    instance: Instance,
    index: StateIndex,
    eval_tol: float = 1e-9,
    max_rounds: int = 1000,
) -> tuple[np.ndarray, TablePolicy]:
    """Exact policy iteration; same fixed point as value iteration."""
    model = index.full_model()
    starts = model.sa_offsets[:-1]
    # Start from the continue/idle policy (always legal, first ordinal block
    # is travel-to-machine-0, so pick each state's own-location action).
    current = [
        tuple(mdp.EngineerAction(loc) for loc in state.location) for state in index.states
    ]
    for _ in range(max_rounds):
        policy = TablePolicy(index, current)
        values = exact_policy_value(instance, index, policy, tol=eval_tol)
        q = model.sweep_values(values, instance.gamma)
        improved = []
        for s in range(len(index.states)):
            lo, hi = model.sa_offsets[s], model.sa_offsets[s + 1]
            best = lo + int(np.argmin(q[lo:hi]))
            improved.append(model.actions[best])
        if improved == current:
            return values, TablePolicy(index, improved)
        current = improved
    raise RuntimeError("policy iteration did not stabilize")
