"""Dispatching heuristic, network decomposition and location clustering.

The dispatching heuristic ranks machines whose condition reached a
per-machine threshold, trims the ranking to the number of available
engineers by repeatedly dropping a farthest asset, and assigns engineers
to the remaining jobs with a minimum-travel-time assignment.  Engineers
without a job stay put; no repositioning is attempted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import mdp
from .assignment import hungarian
from .errors import ValidationError
from .mdp import EngineerAction, Instance, JointAction, MAINTAIN, NetworkState
from .policies import Policy

__all__ = [
    "DecompositionPolicy",
    "DispatchPolicy",
    "ThresholdConfig",
    "align_clusters_to_engineers",
    "induced_subinstance",
    "kmeans_clusters",
    "rank_assets",
    "reduce_ranking",
]


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-machine ranking thresholds.

    A machine enters the ranking once its condition level reaches its
    threshold.  ``state_fn`` is a hook for state-dependent thresholds; all
    shipped policies use constants.
    """

    values: tuple[int, ...]
    state_fn: Optional[Callable[[Instance, NetworkState], Sequence[int]]] = None

    @staticmethod
    def constant(instance: Instance, s: int) -> "ThresholdConfig":
        for m, n in enumerate(instance.levels):
            if not 1 <= s <= n:
                raise ValidationError(f"threshold {s} outside 1..{n} for machine {m}")
        return ThresholdConfig(values=(s,) * instance.machine_count)

    @staticmethod
    def reactive(instance: Instance) -> "ThresholdConfig":
        """Thresholds at the failed level: maintain only broken machines."""
        return ThresholdConfig(values=tuple(instance.levels))

    def resolve(self, instance: Instance, state: NetworkState) -> Sequence[int]:
        if self.state_fn is not None:
            return self.state_fn(instance, state)
        return self.values

    def describe(self, instance: Instance) -> str:
        if self.values == tuple(instance.levels):
            return "fail"
        if len(set(self.values)) == 1:
            return str(self.values[0])
        return ",".join(map(str, self.values))


def rank_assets(
    instance: Instance,
    state: NetworkState,
    thresholds: ThresholdConfig,
    exclude_targeted: bool = True,
) -> list[int]:
    """Machines at or above threshold, worst condition first.

    By default machines that already have an engineer bound to them
    (maintaining there, or traveling toward them) are skipped so the same
    job is never dispatched twice.  Ties are broken by machine index; the
    order only matters for the randomized trimming step.
    """
    values = thresholds.resolve(instance, state)
    if exclude_targeted:
        taken = {
            state.location[k]
            for k in range(instance.engineer_count)
            if state.busy_for[k] > 0
        }
    else:
        taken = {
            state.location[k]
            for k in range(instance.engineer_count)
            if state.maintaining[k] == 1
        }
    eligible = [
        m
        for m in range(instance.machine_count)
        if state.levels[m] >= values[m] and m not in taken
    ]
    return sorted(eligible, key=lambda m: (-state.levels[m], m))


def reduce_ranking(
    instance: Instance,
    state: NetworkState,
    ranked: Sequence[int],
    available: Sequence[int],
    rng: np.random.Generator,
) -> list[int]:
    """Trim the ranking to at most one job per available engineer.

    While too many assets remain, one asset whose distance to the nearest
    available engineer is largest is removed, ties broken uniformly.
    """
    remaining = list(ranked)
    limit = len(available)
    if len(remaining) <= limit:
        return remaining
    if limit == 0:
        return []
    locs = [state.location[k] for k in available]
    while len(remaining) > limit:
        dist = np.array(
            [min(instance.travel[loc, m] for loc in locs) for m in remaining], dtype=np.float64
        )
        ties = np.flatnonzero(dist == dist.max())
        drop = ties[int(rng.integers(len(ties)))]
        remaining.pop(int(drop))
    return remaining


class DispatchPolicy(Policy):
    """Threshold ranking plus minimum-travel-time dispatching.

    ``exclude_targeted`` controls whether machines an engineer is already
    traveling toward are kept out of the ranking (machines under running
    maintenance are always kept out).
    """

    def __init__(
        self,
        thresholds: ThresholdConfig,
        label: str | None = None,
        exclude_targeted: bool = True,
    ):
        self.thresholds = thresholds
        self._label = label
        self.exclude_targeted = exclude_targeted

    @property
    def name(self) -> str:
        return self._label or "dispatch"

    @staticmethod
    def reactive(instance: Instance) -> "DispatchPolicy":
        return DispatchPolicy(ThresholdConfig.reactive(instance), label="dispatch:s=fail")

    @staticmethod
    def greedy(instance: Instance, s: int) -> "DispatchPolicy":
        return DispatchPolicy(ThresholdConfig.constant(instance, s), label=f"dispatch:s={s}")

    def decide(self, instance, state, rng) -> JointAction:
        available = [k for k in range(instance.engineer_count) if state.busy_for[k] == 0]
        ranked = rank_assets(instance, state, self.thresholds, self.exclude_targeted)
        jobs = reduce_ranking(instance, state, ranked, available, rng)
        return self._assemble(instance, state, available, jobs)

    def decide_engineer(self, instance, state, k, rng) -> EngineerAction:
        if state.busy_for[k] > 0:
            return EngineerAction(state.location[k])
        return self.decide(instance, state, rng)[k]

    @staticmethod
    def _assemble(
        instance: Instance,
        state: NetworkState,
        available: Sequence[int],
        jobs: Sequence[int],
    ) -> JointAction:
        actions = [EngineerAction(loc) for loc in state.location]
        if jobs and available:
            n = len(available)
            cost = np.zeros((n, n))
            for i, k in enumerate(available):
                for j, m in enumerate(jobs):
                    cost[i, j] = instance.travel[state.location[k], m]
            assign, _ = hungarian(cost)
            maintained = {
                state.location[k]
                for k in range(instance.engineer_count)
                if state.maintaining[k] == 1
            }
            for i, k in enumerate(available):
                j = int(assign[i])
                if j >= len(jobs):
                    continue  # dummy job: stay put
                m = jobs[j]
                if m == state.location[k]:
                    if m not in maintained:
                        actions[k] = MAINTAIN
                else:
                    actions[k] = EngineerAction(m)
        return tuple(actions)

    def action_distribution(self, instance, state):
        """Exact action distribution; randomness only enters via trimming."""
        available = [k for k in range(instance.engineer_count) if state.busy_for[k] == 0]
        ranked = rank_assets(instance, state, self.thresholds, self.exclude_targeted)
        dist: dict[tuple[int, ...], float] = {}
        self._survivors(instance, state, tuple(ranked), available, 1.0, dist)
        out = []
        for jobs, p in sorted(dist.items()):
            out.append((p, self._assemble(instance, state, available, jobs)))
        return out

    @staticmethod
    def _survivors(instance, state, remaining, available, prob, out):
        if len(remaining) <= len(available) or not available:
            key = tuple(remaining) if available else ()
            out[key] = out.get(key, 0.0) + prob
            return
        locs = [state.location[k] for k in available]
        dist = [min(instance.travel[loc, m] for loc in locs) for m in remaining]
        worst = max(dist)
        ties = [i for i, d in enumerate(dist) if d == worst]
        share = prob / len(ties)
        for i in ties:
            DispatchPolicy._survivors(
                instance, state, remaining[:i] + remaining[i + 1 :], available, share, out
            )


def induced_subinstance(instance: Instance, cluster: Sequence[int], engineer: int) -> Instance:
    """Single-engineer instance restricted to the machines of one cluster."""
    machines = sorted(cluster)
    base = instance.initial_locations[engineer]
    if base not in machines:
        raise ValidationError(
            f"engineer {engineer} starts at location {base}, outside its cluster"
        )
    sub = np.ix_(machines, machines)
    return Instance(
        name=f"{instance.name}:cluster{engineer}",
        travel=instance.travel[sub],
        degradation=tuple(instance.degradation[m] for m in machines),
        repair_pm=instance.repair_pm[machines],
        repair_cm=instance.repair_cm[machines],
        cost_pm=instance.cost_pm[machines],
        cost_cm=instance.cost_cm[machines],
        cost_downtime=instance.cost_downtime[machines],
        cost_travel=instance.cost_travel,
        gamma=instance.gamma,
        initial_locations=(machines.index(base),),
        location_names=None
        if instance.location_names is None
        else tuple(instance.location_names[m] for m in machines),
        coords=None if instance.coords is None else instance.coords[machines],
        parent_hash=instance.content_hash,
    )


class DecompositionPolicy(Policy):
    """Composite policy: engineer k runs its own single-engineer policy
    on the machines of cluster k and never leaves them."""

    name = "decomposition"

    def __init__(self, instance: Instance, clusters: Sequence[Sequence[int]], sub_policies: Sequence[Policy]):
        clusters = [sorted(c) for c in clusters]
        if len(clusters) != instance.engineer_count:
            raise ValidationError("one cluster per engineer required")
        if len(sub_policies) != len(clusters):
            raise ValidationError("one sub-policy per cluster required")
        flat = sorted(m for c in clusters for m in c)
        if flat != list(range(instance.machine_count)):
            raise ValidationError("clusters must partition the machine set")
        for k, c in enumerate(clusters):
            if instance.initial_locations[k] not in c:
                raise ValidationError(f"engineer {k} does not start inside cluster {k}")
        self.clusters = tuple(tuple(c) for c in clusters)
        self.sub_policies = tuple(sub_policies)
        self.sub_instances = tuple(
            induced_subinstance(instance, c, k) for k, c in enumerate(clusters)
        )

    def decide_engineer(self, instance, state, k, rng) -> EngineerAction:
        cluster = self.clusters[k]
        sub_inst = self.sub_instances[k]
        loc = state.location[k]
        sub_state = NetworkState(
            levels=tuple(state.levels[m] for m in cluster),
            location=(cluster.index(loc),),
            maintaining=(state.maintaining[k],),
            busy_for=(state.busy_for[k],),
        )
        action = self.sub_policies[k].decide(sub_inst, sub_state, rng)[0]
        if action.is_maintain:
            return MAINTAIN
        return EngineerAction(cluster[action.target])

    def decide(self, instance, state, rng) -> JointAction:
        # Engineers act on disjoint machine sets, so no sequential update
        # is needed and double maintenance cannot occur.
        return tuple(
            self.decide_engineer(instance, state, k, rng)
            for k in range(instance.engineer_count)
        )


def kmeans_clusters(coords: np.ndarray, k: int, rng: np.random.Generator) -> list[list[int]]:
    """Partition locations into k clusters with Lloyd's algorithm.

    Seeding follows the k-means++ scheme; an empty cluster is re-seeded to
    the point farthest from its nearest center.  Deterministic given rng.
    """
    points = np.asarray(coords, dtype=np.float64)
    if points.ndim != 2:
        raise ValidationError("coordinates are required for clustering")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"cannot build {k} clusters from {n} locations")

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    for i in range(1, k):
        d2 = np.min(((points[:, None, :] - centers[None, :i, :]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            centers[i] = points[int(rng.integers(n))]
            continue
        r = rng.random() * total
        centers[i] = points[int(np.searchsorted(np.cumsum(d2), r))]

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(100):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            members = np.flatnonzero(new_labels == c)
            if members.size == 0:
                far = int(np.argmax(np.min(d2, axis=1)))
                centers[c] = points[far]
                new_labels[far] = c
            else:
                centers[c] = points[members].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    clusters = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(k)]
    return sorted(clusters)


def align_clusters_to_engineers(instance: Instance, clusters: Sequence[Sequence[int]]) -> list[list[int]]:
    """Reorder clusters so cluster k contains engineer k's base location."""
    clusters = [sorted(c) for c in clusters]
    if len(clusters) != instance.engineer_count:
        raise ValidationError("need exactly one cluster per engineer")
    containing = np.ones((len(clusters), len(clusters)))
    for k, base in enumerate(instance.initial_locations):
        for j, c in enumerate(clusters):
            if base in c:
                containing[k, j] = 0.0
    assign, total = hungarian(containing)
    if total > 0:
        raise ValidationError(
            "engineer base locations cannot be matched one-to-one with clusters"
        )
    return [clusters[int(assign[k])] for k in range(len(clusters))]
