"""Instance documents: schema validation, loading, saving, shipped files.

Instances are stored as JSON with named degradation matrices, a travel
matrix in integer time units, repair durations, a cost structure (named or
explicit) and 0-based initial engineer locations.  The JSON schema ships
with the package (``instances/instance.schema.json``); semantic rules the
schema cannot express (row-stochastic matrices, cost ordering, index
ranges) are enforced when the in-memory instance is constructed.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ValidationError
from .mdp import Instance

__all__ = [
    "COST_STRUCTURES",
    "DEGRADATION_FAMILIES",
    "list_shipped",
    "load_instance",
    "load_shipped",
    "save_instance",
    "schema_path",
    "shipped_path",
]

# Named cost structures: (pm, cm, downtime, travel) per machine/unit.
COST_STRUCTURES: dict[str, tuple[float, float, float, float]] = {
    "C1": (0.0, 0.0, 1.0, 0.05),
    "C2": (1.0, 2.0, 10.0, 0.0),
    "C3": (1.0, 4.0, 1.0, 0.05),
}


def _chain(*probs: float) -> list[list[float]]:
    """Upper-bidiagonal matrix advancing one level with the given odds."""
    n = len(probs) + 1
    q = [[0.0] * n for _ in range(n)]
    for i, p in enumerate(probs):
        q[i][i] = 1.0 - p
        q[i][i + 1] = p
    q[n - 1][n - 1] = 1.0
    return q


# Degradation matrix library used by the shipped instances: the unit-time
# benchmark family (Q2-Q4) and the slow hospital-network family (Qt1-Qt4).
DEGRADATION_FAMILIES: dict[str, list[list[float]]] = {
    "Q2": _chain(0.2, 0.3, 0.3, 0.3),
    "Q3": _chain(0.2, 0.7, 0.7, 0.7),
    "Q4": _chain(0.2, 0.3, 0.3, 0.3, 0.3, 0.3),
    "Qt1": _chain(1 / 200),
    "Qt2": _chain(1 / 150, 1 / 50),
    "Qt3": _chain(1 / 400),
    "Qt4": _chain(1 / 300, 1 / 100),
}


def schema_path() -> Path:
    return Path(resources.files("maintnet") / "instances" / "instance.schema.json")


def _instances_dir() -> Path:
    return Path(resources.files("maintnet") / "instances")


def list_shipped() -> list[str]:
    return sorted(p.stem for p in _instances_dir().glob("*.json") if not p.name.endswith("schema.json"))


def shipped_path(name: str) -> Path:
    path = _instances_dir() / f"{name}.json"
    if not path.exists():
        raise ValidationError(f"no shipped instance named {name!r}; available: {list_shipped()}")
    return path


def load_shipped(name: str) -> Instance:
    return load_instance(shipped_path(name))


def _broadcast(value, m_count: int, field: str) -> list:
    if isinstance(value, list):
        if len(value) != m_count:
            raise ValidationError(f"{field}: expected {m_count} entries, got {len(value)}")
        return value
    return [value] * m_count


def _resolve_costs(doc: dict, m_count: int) -> tuple[list, list, list, float]:
    costs = doc["costs"]
    if "name" in costs:
        if len(costs) != 1:
            raise ValidationError("costs: a named structure takes no other keys")
        name = costs["name"]
        if name not in COST_STRUCTURES:
            raise ValidationError(f"costs: unknown structure {name!r}")
        pm, cm, dt, tr = COST_STRUCTURES[name]
        return [pm] * m_count, [cm] * m_count, [dt] * m_count, tr
    return (
        _broadcast(costs["pm"], m_count, "costs.pm"),
        _broadcast(costs["cm"], m_count, "costs.cm"),
        _broadcast(costs["downtime"], m_count, "costs.downtime"),
        float(costs["travel"]),
    )


def load_instance(path: str | Path) -> Instance:
    """Load and validate an instance document.

    Schema violations and semantic violations raise
    :class:`ValidationError` with a field-level message.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    schema = json.loads(schema_path().read_text(encoding="utf-8"))
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<document>"
        raise ValidationError(f"{path}: {where}: {first.message}")

    travel = doc["travel"]
    m_count = len(travel)
    for i, row in enumerate(travel):
        if len(row) != m_count:
            raise ValidationError(f"{path}: travel row {i} has {len(row)} entries, expected {m_count}")

    matrices = doc["degradation_matrices"]
    assignment = doc["machine_degradation"]
    if len(assignment) != m_count:
        raise ValidationError(
            f"{path}: machine_degradation: expected {m_count} entries, got {len(assignment)}"
        )
    degradation = []
    for m, key in enumerate(assignment):
        if key not in matrices:
            raise ValidationError(f"{path}: machine {m} references unknown matrix {key!r}")
        degradation.append(np.asarray(matrices[key], dtype=np.float64))

    pm, cm, dt, tr = _resolve_costs(doc, m_count)
    try:
        instance = Instance(
            name=doc["name"],
            travel=np.asarray(travel, dtype=np.int64),
            degradation=tuple(degradation),
            repair_pm=np.asarray(_broadcast(doc["repair_pm"], m_count, "repair_pm"), dtype=np.int64),
            repair_cm=np.asarray(_broadcast(doc["repair_cm"], m_count, "repair_cm"), dtype=np.int64),
            cost_pm=np.asarray(pm, dtype=np.float64),
            cost_cm=np.asarray(cm, dtype=np.float64),
            cost_downtime=np.asarray(dt, dtype=np.float64),
            cost_travel=tr,
            gamma=float(doc["gamma"]),
            initial_locations=tuple(doc["initial_locations"]),
            location_names=tuple(doc["locations"]) if "locations" in doc else None,
            coords=np.asarray(doc["coords"], dtype=np.float64) if "coords" in doc else None,
            notes=doc.get("notes", ""),
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return instance


def save_instance(instance: Instance, path: str | Path) -> None:
    """Write an instance as a loadable document (explicit costs)."""
    matrices: dict[str, list] = {}
    assignment: list[str] = []
    for q in instance.degradation:
        as_list = q.tolist()
        for key, existing in matrices.items():
            if existing == as_list:
                assignment.append(key)
                break
        else:
            key = f"D{len(matrices)}"
            matrices[key] = as_list
            assignment.append(key)
    doc = {
        "name": instance.name,
        "travel": instance.travel.tolist(),
        "degradation_matrices": matrices,
        "machine_degradation": assignment,
        "repair_pm": instance.repair_pm.tolist(),
        "repair_cm": instance.repair_cm.tolist(),
        "costs": {
            "pm": instance.cost_pm.tolist(),
            "cm": instance.cost_cm.tolist(),
            "downtime": instance.cost_downtime.tolist(),
            "travel": instance.cost_travel,
        },
        "gamma": instance.gamma,
        "initial_locations": list(instance.initial_locations),
    }
    if instance.location_names is not None:
        doc["locations"] = list(instance.location_names)
    if instance.coords is not None:
        doc["coords"] = instance.coords.tolist()
    if instance.notes:
        doc["notes"] = instance.notes
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")
