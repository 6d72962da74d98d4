"""Core model: problem instances, network states, actions, transitions and costs.

A network consists of M machines at fixed locations and K traveling
engineers.  Machine condition is a discrete level from 1 (as good as new)
up to a machine-specific failed level.  Time advances in unit epochs: first
every engineer's chosen action is applied (deterministic), then machine
degradation and activity countdowns advance (stochastic).

Conventions used throughout the package:

* machine/location indices are 0-based,
* degradation levels are 1-based (1 = new, ``n_levels`` = failed),
* an engineer action is either "travel to machine m" (which covers
  continuing/idling when m is the engineer's own location) or "start
  maintenance here".
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import IllegalActionError, ValidationError

__all__ = [
    "EngineerAction",
    "Instance",
    "JointAction",
    "MAINTAIN",
    "NetworkState",
    "action_from_ordinal",
    "action_ordinal",
    "advance_time",
    "apply_engineer_action",
    "apply_joint_action",
    "initial_state",
    "is_jointly_legal",
    "legal_actions_engineer",
    "legal_joint_actions",
    "stage_cost",
    "stage_cost_components",
    "step",
    "travel_to",
    "validate_state",
]


@dataclass(frozen=True)
class EngineerAction:
    """One engineer's choice: travel to ``target`` or start maintenance.

    ``target == state.location[k]`` encodes "continue the current activity
    or idle"; ``target is None`` encodes "start maintenance at the current
    location".
    """

    target: int | None = None

    @property
    def is_maintain(self) -> bool:
        return self.target is None

    def __repr__(self) -> str:
        return "Maintain" if self.target is None else f"TravelTo({self.target})"


MAINTAIN = EngineerAction(None)

JointAction = tuple[EngineerAction, ...]


def travel_to(machine: int) -> EngineerAction:
    return EngineerAction(machine)


def action_ordinal(action: EngineerAction, machine_count: int) -> int:
    """Map an action to its ordinal: travel-to-m -> m, maintain -> M."""
    return machine_count if action.is_maintain else action.target


def action_from_ordinal(ordinal: int, machine_count: int) -> EngineerAction:
    if not 0 <= ordinal <= machine_count:
        raise ValidationError(f"action ordinal {ordinal} out of range for M={machine_count}")
    return MAINTAIN if ordinal == machine_count else EngineerAction(int(ordinal))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable problem definition.

    ``travel`` holds integer travel times with a zero diagonal.  Each entry
    of ``degradation`` is a row-stochastic matrix whose only nonzero
    entries sit on the diagonal and the superdiagonal (condition worsens at
    most one level per epoch); the final row is absorbing.  A machine whose
    rows are all self-absorbing never degrades (used for dummy machines in
    robustness transforms).
    """

    name: str
    travel: np.ndarray
    degradation: tuple[np.ndarray, ...]
    repair_pm: np.ndarray
    repair_cm: np.ndarray
    cost_pm: np.ndarray
    cost_cm: np.ndarray
    cost_downtime: np.ndarray
    cost_travel: float
    gamma: float
    initial_locations: tuple[int, ...]
    location_names: tuple[str, ...] | None = None
    coords: np.ndarray | None = None
    parent_hash: str | None = None
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "travel", _readonly(np.asarray(self.travel, dtype=np.int64)))
        object.__setattr__(
            self, "degradation", tuple(_readonly(np.asarray(q, dtype=np.float64)) for q in self.degradation)
        )
        for attr in ("repair_pm", "repair_cm"):
            object.__setattr__(self, attr, _readonly(np.asarray(getattr(self, attr), dtype=np.int64)))
        for attr in ("cost_pm", "cost_cm", "cost_downtime"):
            object.__setattr__(self, attr, _readonly(np.asarray(getattr(self, attr), dtype=np.float64)))
        object.__setattr__(self, "initial_locations", tuple(int(v) for v in self.initial_locations))
        if self.coords is not None:
            object.__setattr__(self, "coords", _readonly(np.asarray(self.coords, dtype=np.float64)))
        if self.location_names is not None:
            object.__setattr__(self, "location_names", tuple(self.location_names))
        _validate_instance(self)

    @property
    def machine_count(self) -> int:
        return self.travel.shape[0]

    @property
    def engineer_count(self) -> int:
        return len(self.initial_locations)

    @cached_property
    def levels(self) -> tuple[int, ...]:
        """Number of condition levels per machine (failed level index)."""
        return tuple(q.shape[0] for q in self.degradation)

    def failed_level(self, machine: int) -> int:
        return self.levels[machine]

    def advance_probability(self, machine: int, level: int) -> float:
        """Probability that condition worsens one level during an epoch."""
        q = self.degradation[machine]
        if level >= q.shape[0]:
            return 0.0
        return float(q[level - 1, level])

    @cached_property
    def content_hash(self) -> str:
        """Stable digest of the computational content of the instance.

        Cosmetic fields (name, location names, notes, coordinates, parent
        hash) are excluded so that relabelled copies remain compatible.
        """
        doc = {
            "travel": self.travel.tolist(),
            "degradation": [q.tolist() for q in self.degradation],
            "repair_pm": self.repair_pm.tolist(),
            "repair_cm": self.repair_cm.tolist(),
            "cost_pm": self.cost_pm.tolist(),
            "cost_cm": self.cost_cm.tolist(),
            "cost_downtime": self.cost_downtime.tolist(),
            "cost_travel": self.cost_travel,
            "gamma": self.gamma,
            "initial_locations": list(self.initial_locations),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.blake2b(blob, digest_size=16).hexdigest()

    def __eq__(self, other) -> bool:
        return isinstance(other, Instance) and self.content_hash == other.content_hash

    def __hash__(self) -> int:
        return hash(self.content_hash)


def _validate_instance(inst: Instance) -> None:
    travel = inst.travel
    if travel.ndim != 2 or travel.shape[0] != travel.shape[1]:
        raise ValidationError(f"travel matrix must be square, got shape {travel.shape}")
    m_count = travel.shape[0]
    if m_count < 1:
        raise ValidationError("at least one machine required")
    if np.any(np.diag(travel) != 0):
        raise ValidationError("travel matrix diagonal must be zero")
    if np.any(travel < 0):
        raise ValidationError("travel times must be non-negative")
    if len(inst.degradation) != m_count:
        raise ValidationError(
            f"expected {m_count} degradation matrices, got {len(inst.degradation)}"
        )
    for m, q in enumerate(inst.degradation):
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
            raise ValidationError(f"machine {m}: degradation matrix must be square with >= 2 levels")
        n = q.shape[0]
        if np.any(q < 0):
            raise ValidationError(f"machine {m}: negative degradation probability")
        if np.any(np.abs(q.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError(f"machine {m}: degradation rows must sum to 1")
        off = q.copy()
        idx = np.arange(n)
        off[idx, idx] = 0.0
        off[idx[:-1], idx[:-1] + 1] = 0.0
        if np.any(off != 0.0):
            raise ValidationError(
                f"machine {m}: only single-level worsening transitions are supported"
            )
        if abs(q[n - 1, n - 1] - 1.0) > 1e-9:
            raise ValidationError(f"machine {m}: failed level must be absorbing")
    for attr in ("repair_pm", "repair_cm"):
        arr = getattr(inst, attr)
        if arr.shape != (m_count,):
            raise ValidationError(f"{attr} must have one entry per machine")
        if np.any(arr < 1):
            raise ValidationError(f"{attr} must be positive integers")
    for attr in ("cost_pm", "cost_cm", "cost_downtime"):
        arr = getattr(inst, attr)
        if arr.shape != (m_count,):
            raise ValidationError(f"{attr} must have one entry per machine")
        if np.any(arr < 0):
            raise ValidationError(f"{attr} must be non-negative")
    if np.any(inst.cost_cm < inst.cost_pm):
        raise ValidationError("corrective maintenance must cost at least preventive maintenance")
    if inst.cost_travel < 0:
        raise ValidationError("travel cost must be non-negative")
    if not 0.0 <= inst.gamma < 1.0:
        raise ValidationError("discount factor must lie in [0, 1)")
    if len(inst.initial_locations) < 1:
        raise ValidationError("at least one engineer required")
    for k, loc in enumerate(inst.initial_locations):
        if not 0 <= loc < m_count:
            raise ValidationError(f"engineer {k}: initial location {loc} out of range")
    if inst.coords is not None and inst.coords.shape != (m_count, 2):
        raise ValidationError("coords must be one 2-D point per location")
    if inst.location_names is not None and len(inst.location_names) != m_count:
        raise ValidationError("location_names must have one entry per location")


@dataclass(frozen=True)
class NetworkState:
    """Full observable state: machine levels plus one block per engineer.

    ``maintaining[k]`` is 1 while engineer k is carrying out maintenance;
    ``busy_for[k]`` counts the remaining epochs of the current activity
    (0 means the engineer is available).
    """

    levels: tuple[int, ...]
    location: tuple[int, ...]
    maintaining: tuple[int, ...]
    busy_for: tuple[int, ...]

    def replace_engineer(self, k: int, loc: int, mnt: int, rem: int) -> "NetworkState":
        location = self.location[:k] + (loc,) + self.location[k + 1 :]
        maintaining = self.maintaining[:k] + (mnt,) + self.maintaining[k + 1 :]
        busy_for = self.busy_for[:k] + (rem,) + self.busy_for[k + 1 :]
        return NetworkState(self.levels, location, maintaining, busy_for)

    def replace_level(self, m: int, level: int) -> "NetworkState":
        return NetworkState(
            self.levels[:m] + (level,) + self.levels[m + 1 :],
            self.location,
            self.maintaining,
            self.busy_for,
        )


def initial_state(instance: Instance) -> NetworkState:
    """All machines as good as new, engineers available at their bases."""
    k = instance.engineer_count
    return NetworkState(
        levels=tuple(1 for _ in range(instance.machine_count)),
        location=instance.initial_locations,
        maintaining=(0,) * k,
        busy_for=(0,) * k,
    )


def validate_state(instance: Instance, state: NetworkState) -> None:
    m_count = instance.machine_count
    k_count = instance.engineer_count
    if len(state.levels) != m_count:
        raise ValidationError(f"state has {len(state.levels)} machine levels, expected {m_count}")
    for m, x in enumerate(state.levels):
        if not 1 <= x <= instance.levels[m]:
            raise ValidationError(f"machine {m}: level {x} outside 1..{instance.levels[m]}")
    for name, n in (("location", len(state.location)), ("maintaining", len(state.maintaining)), ("busy_for", len(state.busy_for))):
        if n != k_count:
            raise ValidationError(f"state.{name} has {n} entries, expected {k_count}")
    seen_maintenance: set[int] = set()
    for k in range(k_count):
        loc, mnt, rem = state.location[k], state.maintaining[k], state.busy_for[k]
        if not 0 <= loc < m_count:
            raise ValidationError(f"engineer {k}: location {loc} out of range")
        if mnt not in (0, 1):
            raise ValidationError(f"engineer {k}: maintaining flag must be 0 or 1")
        if rem < 0:
            raise ValidationError(f"engineer {k}: negative remaining busy time")
        if mnt == 1:
            if rem == 0:
                raise ValidationError(f"engineer {k}: maintaining but not busy")
            if loc in seen_maintenance:
                raise ValidationError(f"two engineers maintaining at location {loc}")
            seen_maintenance.add(loc)
            if state.levels[loc] != instance.failed_level(loc):
                raise ValidationError(
                    f"machine {loc} under maintenance must sit at its failed level"
                )


def _maintained_locations(state: NetworkState, skip: int | None = None) -> set[int]:
    return {
        state.location[k]
        for k in range(len(state.location))
        if state.maintaining[k] == 1 and k != skip
    }


def legal_actions_engineer(instance: Instance, state: NetworkState, k: int) -> tuple[EngineerAction, ...]:
    """Legal actions for engineer k, in ordinal order.

    A busy engineer can only continue.  An available engineer may travel
    anywhere (its own location meaning idle) and may start maintenance
    unless another engineer is already maintaining the machine here.  The
    co-maintainer check runs against the state as given, which may be an
    intermediate state during sequential action selection.
    """
    if not 0 <= k < instance.engineer_count:
        raise ValidationError(f"engineer index {k} out of range")
    if state.busy_for[k] > 0:
        return (EngineerAction(state.location[k]),)
    actions = tuple(EngineerAction(m) for m in range(instance.machine_count))
    if state.location[k] in _maintained_locations(state, skip=k):
        return actions
    return actions + (MAINTAIN,)


def apply_engineer_action(
    instance: Instance, state: NetworkState, k: int, action: EngineerAction
) -> NetworkState:
    """Apply the deterministic consequences of engineer k's action.

    Raises :class:`IllegalActionError` naming the violated precondition.
    """
    loc, rem = state.location[k], state.busy_for[k]
    if action.is_maintain:
        if rem > 0:
            raise IllegalActionError(f"engineer {k} is busy and can only continue")
        if loc in _maintained_locations(state, skip=k):
            raise IllegalActionError(f"machine {loc} is already being maintained")
        failed = instance.failed_level(loc)
        if state.levels[loc] == failed:
            duration = int(instance.repair_cm[loc])
        else:
            duration = int(instance.repair_pm[loc])
        new = state.replace_engineer(k, loc, 1, duration)
        return new.replace_level(loc, failed)
    dest = action.target
    if not 0 <= dest < instance.machine_count:
        raise IllegalActionError(f"travel destination {dest} out of range")
    if dest == loc:
        if rem > 0:
            return state  # continue the ongoing activity
        return state.replace_engineer(k, loc, 0, 1)  # idle for one epoch
    if rem > 0:
        raise IllegalActionError(f"engineer {k} is busy and can only continue")
    return state.replace_engineer(k, dest, 0, int(instance.travel[loc, dest]))


def is_jointly_legal(instance: Instance, state: NetworkState, joint: Sequence[EngineerAction]) -> bool:
    if len(joint) != instance.engineer_count:
        return False
    maintain_locs: set[int] = set()
    for k, action in enumerate(joint):
        if action not in legal_actions_engineer(instance, state, k):
            return False
        if action.is_maintain:
            loc = state.location[k]
            if loc in maintain_locs:
                return False
            maintain_locs.add(loc)
    return True


def apply_joint_action(
    instance: Instance, state: NetworkState, joint: Sequence[EngineerAction]
) -> NetworkState:
    """Fold all engineer actions into the post-action intermediate state.

    The fold order is engineer 0..K-1; the result is independent of the
    order for any jointly legal action.
    """
    if len(joint) != instance.engineer_count:
        raise IllegalActionError(
            f"joint action has {len(joint)} entries, expected {instance.engineer_count}"
        )
    maintain_locs: set[int] = set()
    for k, action in enumerate(joint):
        if action.is_maintain:
            loc = state.location[k]
            if loc in maintain_locs:
                raise IllegalActionError(f"two engineers maintaining machine {loc}")
            maintain_locs.add(loc)
    out = state
    for k, action in enumerate(joint):
        out = apply_engineer_action(instance, out, k, action)
    return out


def advance_time(instance: Instance, state: NetworkState, rng: np.random.Generator) -> NetworkState:
    """Advance one epoch from the post-action state.

    Machines with a completing engineer (maintaining, one epoch left)
    reset to as good as new; all other machines worsen one level with
    their level's probability; the failed level is absorbing.  Engineer
    countdowns decrease by one (floored at zero) and the maintaining flag
    clears on completion.  Degradation draws are taken in machine order.
    """
    completing = {
        state.location[k]
        for k in range(instance.engineer_count)
        if state.maintaining[k] == 1 and state.busy_for[k] == 1
    }
    levels = []
    for m, x in enumerate(state.levels):
        if m in completing:
            levels.append(1)
            continue
        p = instance.advance_probability(m, x)
        if p > 0.0 and rng.random() < p:
            levels.append(x + 1)
        else:
            levels.append(x)
    location = state.location
    busy_for = tuple(max(rem - 1, 0) for rem in state.busy_for)
    maintaining = tuple(
        mnt if rem > 1 else 0 for mnt, rem in zip(state.maintaining, state.busy_for)
    )
    return NetworkState(tuple(levels), location, maintaining, busy_for)


def stage_cost_components(
    instance: Instance, state: NetworkState, joint: Sequence[EngineerAction]
) -> tuple[float, float, float, float]:
    """(pm, cm, downtime, travel) cost of taking ``joint`` in ``state``.

    Maintenance and travel indicators evaluate on the pre-action state.
    An engineer is charged one travel unit when departing (choosing
    another location while available) and one for each epoch spent in
    transit (busy without maintaining), so a full trip of length theta
    costs exactly theta * cost_travel.

    Downtime is charged per epoch in which a machine is unavailable,
    regardless of the cause: machines already at their failed level and
    machines taken down this epoch by starting preventive maintenance.
    (Equivalently, the downtime indicator evaluates on the post-action
    degradation level.)
    """
    pm = cm = travel = 0.0
    downtime = sum(
        float(instance.cost_downtime[m])
        for m, x in enumerate(state.levels)
        if x == instance.failed_level(m)
    )
    for k, action in enumerate(joint):
        loc = state.location[k]
        if action.is_maintain:
            if state.levels[loc] == instance.failed_level(loc):
                cm += float(instance.cost_cm[loc])
            else:
                pm += float(instance.cost_pm[loc])
                downtime += float(instance.cost_downtime[loc])  # taken down now
        elif action.target != loc:
            travel += instance.cost_travel  # departure epoch
        if state.busy_for[k] > 0 and state.maintaining[k] == 0:
            travel += instance.cost_travel  # in transit
    return pm, cm, downtime, travel


def stage_cost(instance: Instance, state: NetworkState, joint: Sequence[EngineerAction]) -> float:
    return sum(stage_cost_components(instance, state, joint))


def step(
    instance: Instance,
    state: NetworkState,
    joint: Sequence[EngineerAction],
    rng: np.random.Generator,
) -> tuple[NetworkState, float]:
    """One full epoch: cost of the decision, then the two transition stages."""
    cost = stage_cost(instance, state, joint)
    intermediate = apply_joint_action(instance, state, joint)
    return advance_time(instance, intermediate, rng), cost


def legal_joint_actions(instance: Instance, state: NetworkState) -> list[JointAction]:
    """All jointly legal actions, in lexicographic ordinal order."""
    per_engineer = [legal_actions_engineer(instance, state, k) for k in range(instance.engineer_count)]
    out: list[JointAction] = []

    def expand(k: int, chosen: list[EngineerAction], maintain_locs: set[int]) -> None:
        if k == len(per_engineer):
            out.append(tuple(chosen))
            return
        for action in per_engineer[k]:
            if action.is_maintain:
                loc = state.location[k]
                if loc in maintain_locs:
                    continue
                chosen.append(action)
                expand(k + 1, chosen, maintain_locs | {loc})
                chosen.pop()
            else:
                chosen.append(action)
                expand(k + 1, chosen, maintain_locs)
                chosen.pop()

    expand(0, [], set())
    return out
