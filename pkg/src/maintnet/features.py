"""State-to-feature transformations for the classifier policies.

The main design builds one block of seven entries per location, written
from the viewpoint of the engineer whose action is being selected:

  (condition level, available engineers here, unavailable engineers here,
   remaining maintenance time, first inbound arrival time, second inbound
   arrival time, acting-engineer-is-here flag)

followed by the total number of available engineers.  Dropping that last
entry gives the second design; the third design is the raw state vector
plus the acting engineer's index.  Feature dimensions depend on the
network size but not on the engineer count for the block designs, which
is what keeps trained networks reusable when engineers are added or
removed.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .mdp import Instance, NetworkState

__all__ = [
    "FEATURE_DESIGNS",
    "feature_dimension",
    "featurize",
    "featurize_f1",
    "featurize_f2",
    "featurize_f3",
]

FEATURE_DESIGNS = {"f1": 1, "f2": 2, "f3": 3}


def feature_dimension(design: str | int, machine_count: int, engineer_count: int) -> int:
    design_id = FEATURE_DESIGNS.get(design, design) if isinstance(design, str) else design
    if design_id == 1:
        return 7 * machine_count + 1
    if design_id == 2:
        return 7 * machine_count
    if design_id == 3:
        return machine_count + 3 * engineer_count + 1
    raise ValidationError(f"unknown feature design {design!r}")


def _blocks(instance: Instance, state: NetworkState, acting: int, out: np.ndarray) -> float:
    k_count = instance.engineer_count
    total_available = 0
    for m in range(instance.machine_count):
        base = 7 * m
        n_av = n_ua = 0
        t_maint = 0
        inbound = []
        for k in range(k_count):
            if state.location[k] != m:
                continue
            if state.busy_for[k] == 0:
                n_av += 1
            else:
                n_ua += 1
                if state.maintaining[k] == 1:
                    t_maint = state.busy_for[k]
                else:
                    inbound.append(state.busy_for[k])
        inbound.sort()
        total_available += n_av
        out[base] = state.levels[m]
        out[base + 1] = n_av
        out[base + 2] = n_ua
        out[base + 3] = t_maint
        out[base + 4] = inbound[0] if len(inbound) >= 1 else 0
        out[base + 5] = inbound[1] if len(inbound) >= 2 else 0
        out[base + 6] = 1.0 if state.location[acting] == m else 0.0
    return total_available


def featurize_f1(instance: Instance, state: NetworkState, acting: int) -> np.ndarray:
    out = np.zeros(7 * instance.machine_count + 1, dtype=np.float32)
    out[-1] = _blocks(instance, state, acting, out)
    return out


def featurize_f2(instance: Instance, state: NetworkState, acting: int) -> np.ndarray:
    out = np.zeros(7 * instance.machine_count, dtype=np.float32)
    _blocks(instance, state, acting, out)
    return out


def featurize_f3(instance: Instance, state: NetworkState, acting: int) -> np.ndarray:
    m_count = instance.machine_count
    k_count = instance.engineer_count
    out = np.zeros(m_count + 3 * k_count + 1, dtype=np.float32)
    out[:m_count] = state.levels
    for k in range(k_count):
        out[m_count + 3 * k] = state.location[k]
        out[m_count + 3 * k + 1] = state.maintaining[k]
        out[m_count + 3 * k + 2] = state.busy_for[k]
    out[-1] = acting
    return out


_BY_ID = {1: featurize_f1, 2: featurize_f2, 3: featurize_f3}


def featurize(design: str | int, instance: Instance, state: NetworkState, acting: int) -> np.ndarray:
    design_id = FEATURE_DESIGNS.get(design, design) if isinstance(design, str) else design
    try:
        fn = _BY_ID[design_id]
    except KeyError:
        raise ValidationError(f"unknown feature design {design!r}") from None
    return fn(instance, state, acting)
