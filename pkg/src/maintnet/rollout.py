"""Simulation-based policy improvement.

The action value of a candidate is estimated by undiscounted rollout
costs over random geometric horizons (an unbiased estimator of the
discounted value).  At each engineer decision the candidates race:
everyone receives a first block of rollouts under common random numbers,
then candidates whose confidence interval sits clearly above the current
best are eliminated, and the survivors receive further blocks until one
remains or the per-candidate budget is exhausted.  Data collection walks
epsilon-randomized trajectories and records every non-random engineer
decision as a training sample.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine, features, mdp
from .errors import CompatibilityError, IllegalActionError, ValidationError
from .mdp import EngineerAction, Instance, NetworkState
from .policies import Policy
from .seeding import derive_rng, derive_seed_block

__all__ = [
    "Dataset",
    "RolloutBudget",
    "collect_dataset",
    "estimate_q",
    "improved_action",
    "rollout_cost",
    "sample_horizon",
]

DATASET_MAGIC = b"MNTD"
DATASET_VERSION = 1


@dataclass(frozen=True)
class RolloutBudget:
    """Rollout allocation and exploration parameters."""

    r_min: int = 1500
    r_max: int = 7500
    k_race: float = 2.0
    epsilon: float = 0.02

    def __post_init__(self):
        if not 1 <= self.r_min <= self.r_max:
            raise ValidationError("need 1 <= r_min <= r_max")
        if not self.k_race > 0:
            raise ValidationError("k_race must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must lie in [0, 1]")


def sample_horizon(gamma: float, rng: np.random.Generator) -> int:
    """T with P(T = t) = (1 - gamma) * gamma^t for t >= 0."""
    if not 0.0 <= gamma < 1.0:
        raise ValidationError("discount factor must lie in [0, 1)")
    return int(rng.geometric(1.0 - gamma)) - 1


def _apply_prefix(
    instance: Instance,
    state: NetworkState,
    prefix: list[EngineerAction] | tuple[EngineerAction, ...],
) -> NetworkState:
    work = state
    for i, action in enumerate(prefix):
        if action not in mdp.legal_actions_engineer(instance, work, i):
            raise IllegalActionError(f"prefix action for engineer {i} is illegal")
        work = mdp.apply_engineer_action(instance, work, i, action)
    return work


def rollout_cost(
    instance: Instance,
    state: NetworkState,
    prefix: tuple[EngineerAction, ...],
    k: int,
    candidate: EngineerAction,
    base_policy: Policy,
    rng: np.random.Generator,
) -> float:
    """One undiscounted trajectory cost for (prefix, candidate) at ``state``.

    Engineers after k act per the base policy on the running intermediate
    state; the epoch-0 stage cost uses the fully assembled joint action,
    and the trajectory then follows the base policy for a geometric number
    of further epochs (T + 1 cost terms in total).
    """
    work = _apply_prefix(instance, state, prefix)
    if candidate not in mdp.legal_actions_engineer(instance, work, k):
        raise IllegalActionError(f"candidate action for engineer {k} is illegal")
    actions = list(prefix) + [candidate]
    work = mdp.apply_engineer_action(instance, work, k, candidate)
    for i in range(k + 1, instance.engineer_count):
        action = base_policy.decide_engineer(instance, work, i, rng)
        actions.append(action)
        work = mdp.apply_engineer_action(instance, work, i, action)
    total = mdp.stage_cost(instance, state, tuple(actions))
    horizon = sample_horizon(instance.gamma, rng)
    current = mdp.advance_time(instance, work, rng)
    for _ in range(horizon):
        joint = base_policy.decide(instance, current, rng)
        current, cost = mdp.step(instance, current, joint, rng)
        total += cost
    return total


def _candidate_ordinals(instance: Instance, work: NetworkState, k: int) -> np.ndarray:
    legal = mdp.legal_actions_engineer(instance, work, k)
    return np.asarray([mdp.action_ordinal(a, instance.machine_count) for a in legal], dtype=np.int64)


def _rollout_matrix(
    instance: Instance,
    compiled,
    base_policy: Policy,
    state: NetworkState,
    prefix_ordinals: np.ndarray,
    k: int,
    candidates: np.ndarray,
    seeds: np.ndarray,
) -> np.ndarray:
    """Rollout costs (candidates x rollouts), kernel-backed when possible."""
    ci, spec = compiled
    if spec is not None:
        return engine.rollout_kernel(ci, spec, state, prefix_ordinals, k, candidates, seeds)
    m_count = instance.machine_count
    prefix = tuple(mdp.action_from_ordinal(int(o), m_count) for o in prefix_ordinals)
    out = np.empty((candidates.shape[0], seeds.shape[0]))
    for c, ordinal in enumerate(candidates):
        action = mdp.action_from_ordinal(int(ordinal), m_count)
        for j, seed in enumerate(seeds):
            rng = np.random.Generator(np.random.Philox(key=int(seed)))
            out[c, j] = rollout_cost(instance, state, prefix, k, action, base_policy, rng)
    return out


def estimate_q(
    instance: Instance,
    state: NetworkState,
    prefix: tuple[EngineerAction, ...],
    k: int,
    candidate: EngineerAction,
    base_policy: Policy,
    r: int,
    seed_block: np.ndarray,
) -> tuple[float, float, int]:
    """Mean and sample deviation of r rollout costs for one candidate.

    Calling this for several candidates with the same ``seed_block``
    realizes common random numbers: rollout j shares its horizon and noise
    streams across all candidates.
    """
    if r < 1:
        raise ValidationError("need at least one rollout")
    if len(seed_block) < r:
        raise ValidationError("seed block shorter than the rollout count")
    work = _apply_prefix(instance, state, prefix)
    if candidate not in mdp.legal_actions_engineer(instance, work, k):
        raise IllegalActionError(f"candidate action for engineer {k} is illegal")
    compiled = _compile(instance, base_policy)
    m_count = instance.machine_count
    prefix_ordinals = np.asarray(
        [mdp.action_ordinal(a, m_count) for a in prefix], dtype=np.int64
    )
    cands = np.asarray([mdp.action_ordinal(candidate, m_count)], dtype=np.int64)
    costs = _rollout_matrix(
        instance, compiled, base_policy, state, prefix_ordinals, k, cands,
        np.asarray(seed_block[:r], dtype=np.uint64),
    )[0]
    std = float(np.std(costs, ddof=1)) if r > 1 else 0.0
    return float(np.mean(costs)), std, r


def _compile(instance: Instance, policy: Policy):
    ci = engine.compile_instance(instance)
    spec = engine.compile_policy(instance, policy)
    return ci, spec


def _race(
    instance: Instance,
    compiled,
    base_policy: Policy,
    state: NetworkState,
    prefix_ordinals: np.ndarray,
    k: int,
    candidates: np.ndarray,
    budget: RolloutBudget,
    seeds: np.ndarray,
    stats: dict | None,
) -> int:
    """Racing elimination over candidate ordinals; returns the winner.

    Rollout j of every candidate shares the random numbers of seed j, so
    candidates are compared on paired differences: a candidate is
    eliminated once the mean paired excess over the incumbent exceeds
    k_race standard errors of the difference.  Candidates whose rollouts
    are identical to the incumbent's so far are folded into it (the
    incumbent carries the lowest ordinal).  With an infinite k_race
    nothing is eliminated and the full budget decides by mean alone.
    """
    n = candidates.shape[0]
    costs = np.empty((n, budget.r_max))
    counts = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    used = 0
    spent = 0
    while True:
        block = min(budget.r_min, budget.r_max - used)
        block_costs = _rollout_matrix(
            instance, compiled, base_policy, state, prefix_ordinals, k,
            candidates[alive], seeds[used : used + block],
        )
        spent += block_costs.size
        costs[alive, used : used + block] = block_costs
        counts[alive] += block
        used += block

        means = costs[alive, :used].mean(axis=1)
        best = int(np.argmin(means))  # first minimum: lowest ordinal wins ties
        if np.isfinite(budget.k_race):
            keep = np.ones(len(alive), dtype=bool)
            for i in range(len(alive)):
                if i == best:
                    continue
                diff = costs[alive[i], :used] - costs[alive[best], :used]
                mean_diff = diff.mean()
                if not np.any(diff != 0.0):
                    keep[i] = False  # indistinguishable under shared noise
                    continue
                half = budget.k_race * diff.std(ddof=1) / np.sqrt(used)
                if mean_diff - half > 0.0:
                    keep[i] = False
            alive = alive[keep]
        if len(alive) == 1 or used >= budget.r_max:
            break
    means = costs[alive, :used].mean(axis=1)
    winner = alive[int(np.argmin(means))]
    if stats is not None:
        stats["rollouts"] = stats.get("rollouts", 0) + spent
    return int(winner)


def improved_action(
    instance: Instance,
    state: NetworkState,
    prefix: tuple[EngineerAction, ...],
    k: int,
    base_policy: Policy,
    budget: RolloutBudget,
    rng: np.random.Generator,
    stats: dict | None = None,
) -> EngineerAction:
    """Rollout-improved action for engineer k given the earlier choices.

    A single legal action is returned immediately without spending any
    rollouts.
    """
    work = _apply_prefix(instance, state, prefix)
    candidates = _candidate_ordinals(instance, work, k)
    m_count = instance.machine_count
    if candidates.shape[0] == 1:
        return mdp.action_from_ordinal(int(candidates[0]), m_count)
    seeds = rng.integers(1, 2**63, size=budget.r_max, dtype=np.uint64)
    compiled = _compile(instance, base_policy)
    prefix_ordinals = np.asarray([mdp.action_ordinal(a, m_count) for a in prefix], dtype=np.int64)
    winner = _race(
        instance, compiled, base_policy, state, prefix_ordinals, k,
        candidates, budget, seeds, stats,
    )
    return mdp.action_from_ordinal(int(candidates[winner]), m_count)


@dataclass
class Dataset:
    """Engineer-decision samples for classifier training."""

    features: np.ndarray  # (count, dim) float32
    actions: np.ndarray  # (count,) uint16 action ordinals
    engineers: np.ndarray  # (count,) uint8 acting engineer
    instance_hash: str
    feature_design_id: int
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        n = self.dimension
        header = DATASET_MAGIC + struct.pack(
            "<H32sIQ", DATASET_VERSION, self.instance_hash.encode("ascii"), n, len(self)
        )
        record = np.dtype([("f", "<f4", (n,)), ("a", "<u2"), ("k", "u1")])
        body = np.empty(len(self), dtype=record)
        body["f"] = self.features
        body["a"] = self.actions
        body["k"] = self.engineers
        path.write_bytes(header + body.tobytes())
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = dict(self.metadata)
        meta["feature_design_id"] = self.feature_design_id
        meta_path.write_text(json.dumps(meta, indent=1), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "Dataset":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:4] != DATASET_MAGIC:
            raise CompatibilityError(f"{path}: not a dataset file")
        version, hash_bytes, n, count = struct.unpack("<H32sIQ", blob[4 : 4 + 46])
        if version != DATASET_VERSION:
            raise CompatibilityError(f"{path}: unsupported dataset version {version}")
        record = np.dtype([("f", "<f4", (n,)), ("a", "<u2"), ("k", "u1")])
        body = np.frombuffer(blob[50:], dtype=record, count=count)
        metadata = {}
        design_id = 0
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        if meta_path.exists():
            metadata = json.loads(meta_path.read_text(encoding="utf-8"))
            design_id = metadata.pop("feature_design_id", 0)
        return Dataset(
            features=np.ascontiguousarray(body["f"]),
            actions=np.ascontiguousarray(body["a"]),
            engineers=np.ascontiguousarray(body["k"]),
            instance_hash=hash_bytes.decode("ascii"),
            feature_design_id=design_id,
            metadata=metadata,
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"f{i}" for i in range(self.dimension)] + ["action", "engineer"]
            )
            for i in range(len(self)):
                writer.writerow(
                    [repr(float(v)) for v in self.features[i]]
                    + [int(self.actions[i]), int(self.engineers[i])]
                )


def collect_dataset(
    instance: Instance,
    base_policy: Policy,
    budget: RolloutBudget,
    max_samples: int,
    master_seed: int,
    feature_design: str = "f1",
    progress=None,
) -> Dataset:
    """Collect rollout-improved decisions along randomized trajectories.

    Trajectories start from the initial state and restart after a
    geometric number of epochs.  Every engineer decision either explores
    (with probability epsilon, not recorded) or takes the rollout-improved
    action, which is recorded together with the feature vector of the
    intermediate state it was taken in.  All randomness is derived from
    (master_seed, trajectory, epoch, engineer), so the dataset does not
    depend on thread count.
    """
    if max_samples < 1:
        raise ValidationError("max_samples must be at least 1")
    design_id = features.FEATURE_DESIGNS[feature_design]
    dim = features.feature_dimension(design_id, instance.machine_count, instance.engineer_count)
    feats = np.empty((max_samples, dim), dtype=np.float32)
    acts = np.empty(max_samples, dtype=np.uint16)
    engs = np.empty(max_samples, dtype=np.uint8)
    compiled = _compile(instance, base_policy)
    m_count = instance.machine_count
    count = 0
    traj = 0
    empty_trajectories = 0
    while count < max_samples:
        traj_rng = derive_rng(master_seed, traj, 0)
        noise_rng = derive_rng(master_seed, traj, 1)
        epochs = sample_horizon(instance.gamma, traj_rng) + 1
        state = mdp.initial_state(instance)
        collected_before = count
        for epoch in range(epochs):
            work = state
            chosen: list[EngineerAction] = []
            prefix_ordinals = np.empty(instance.engineer_count, dtype=np.int64)
            for k in range(instance.engineer_count):
                decision_rng = derive_rng(master_seed, traj, epoch, k)
                legal = mdp.legal_actions_engineer(instance, work, k)
                if decision_rng.random() < budget.epsilon:
                    action = legal[int(decision_rng.integers(len(legal)))]
                else:
                    if len(legal) == 1:
                        action = legal[0]
                    else:
                        seeds = derive_seed_block(master_seed, budget.r_max, traj, epoch, k)
                        cands = _candidate_ordinals(instance, work, k)
                        winner = _race(
                            instance, compiled, base_policy, state,
                            prefix_ordinals[:k], k, cands, budget, seeds, None,
                        )
                        action = mdp.action_from_ordinal(int(cands[winner]), m_count)
                    feats[count] = features.featurize(design_id, instance, work, k)
                    acts[count] = mdp.action_ordinal(action, m_count)
                    engs[count] = k
                    count += 1
                chosen.append(action)
                prefix_ordinals[k] = mdp.action_ordinal(action, m_count)
                work = mdp.apply_engineer_action(instance, work, k, action)
                if count >= max_samples:
                    break
            if count >= max_samples:
                break
            state = mdp.advance_time(instance, work, noise_rng)
        if progress is not None:
            progress(count)
        if count == collected_before:
            empty_trajectories += 1
            if empty_trajectories > 10_000:
                raise ValidationError(
                    "collection is not producing samples; epsilon too high?"
                )
        traj += 1
    return Dataset(
        features=feats,
        actions=acts,
        engineers=engs,
        instance_hash=instance.content_hash,
        feature_design_id=design_id,
        metadata={
            "instance": instance.name,
            "base_policy": base_policy.name,
            "master_seed": int(master_seed),
            "r_min": budget.r_min,
            "r_max": budget.r_max,
            "k_race": budget.k_race,
            "epsilon": budget.epsilon,
            "trajectories": traj,
        },
    )
