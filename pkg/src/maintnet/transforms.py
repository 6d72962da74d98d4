"""Robustness transforms: dummy machines and engineer changes.

Each transform produces a new instance whose ``parent_hash`` points at the
original, so networks trained on the original remain loadable (feature
dimensions are preserved for machine removal and are engineer-count
independent for the block feature designs).
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .mdp import Instance

__all__ = ["add_engineer", "remove_engineer", "remove_machine"]


def _derive(instance: Instance, suffix: str, **changes) -> Instance:
    fields = dict(
        name=f"{instance.name}{suffix}",
        travel=instance.travel,
        degradation=instance.degradation,
        repair_pm=instance.repair_pm,
        repair_cm=instance.repair_cm,
        cost_pm=instance.cost_pm,
        cost_cm=instance.cost_cm,
        cost_downtime=instance.cost_downtime,
        cost_travel=instance.cost_travel,
        gamma=instance.gamma,
        initial_locations=instance.initial_locations,
        location_names=instance.location_names,
        coords=instance.coords,
        parent_hash=instance.content_hash,
        notes=instance.notes,
    )
    fields.update(changes)
    return Instance(**fields)


def remove_machine(instance: Instance, machine: int) -> Instance:
    """Replace a machine by a dummy that never degrades and never costs.

    The machine keeps its place in the travel matrix and in feature
    vectors; its condition is frozen at as-good-as-new (the degradation
    matrix becomes the identity) and all its costs are zero.
    """
    m_count = instance.machine_count
    if m_count < 2:
        raise ValidationError("cannot remove the only machine")
    if not 0 <= machine < m_count:
        raise ValidationError(f"machine index {machine} out of range")
    degradation = list(instance.degradation)
    degradation[machine] = np.eye(instance.levels[machine])
    cost_pm = instance.cost_pm.copy()
    cost_cm = instance.cost_cm.copy()
    cost_dt = instance.cost_downtime.copy()
    cost_pm[machine] = cost_cm[machine] = cost_dt[machine] = 0.0
    return _derive(
        instance,
        f"-rm-machine{machine}",
        degradation=tuple(degradation),
        cost_pm=cost_pm,
        cost_cm=cost_cm,
        cost_downtime=cost_dt,
    )


def remove_engineer(instance: Instance, engineer: int) -> Instance:
    if instance.engineer_count < 2:
        raise ValidationError("cannot remove the only engineer")
    if not 0 <= engineer < instance.engineer_count:
        raise ValidationError(f"engineer index {engineer} out of range")
    locations = (
        instance.initial_locations[:engineer] + instance.initial_locations[engineer + 1 :]
    )
    return _derive(instance, f"-rm-engineer{engineer}", initial_locations=locations)


def add_engineer(instance: Instance, location: int) -> Instance:
    if not 0 <= location < instance.machine_count:
        raise ValidationError(f"location {location} out of range")
    locations = instance.initial_locations + (location,)
    return _derive(instance, f"-add-engineer@{location}", initial_locations=locations)
