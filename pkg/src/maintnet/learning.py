"""Classifier training and the trained-network policy.

A small multilayer perceptron (rectified linear hidden layers, one output
per travel destination plus one for maintenance) is fitted to recorded
engineer decisions with mini-batch adaptive-moment gradient descent on a
softmax cross-entropy loss.  Training runs in float64 for exact gradient
checks; the stored network is float32, and inference runs through the
same compiled forward pass the simulation kernels use, so a decision is
bitwise reproducible everywhere.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine, features, mdp
from .errors import CompatibilityError, ValidationError
from .evaluate import evaluate_policy
from .mdp import EngineerAction, Instance, JointAction, NetworkState
from .policies import Policy
from .rollout import Dataset, RolloutBudget, collect_dataset
from .seeding import derive_rng

__all__ = [
    "NetworkPolicy",
    "TrainHyperparams",
    "TrainedNetwork",
    "api_iterate",
    "network_decide",
    "train_classifier",
]

NETWORK_MAGIC = b"MNTN"
NETWORK_VERSION = 1


@dataclass(frozen=True)
class TrainHyperparams:
    hidden_widths: tuple[int, ...] = (128, 64, 64)
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 5
    max_epochs: int = 200
    test_fraction: float = 0.1

    def __post_init__(self):
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValidationError("hidden widths must be positive")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValidationError("batch size, patience and max epochs must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test fraction must lie strictly between 0 and 1")


@dataclass
class TrainedNetwork:
    """Feed-forward classifier parameters plus provenance metadata."""

    feature_design_id: int
    machine_count: int
    engineer_count: int
    hidden_widths: tuple[int, ...]
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]  # (weights, bias) per layer
    instance_hash: str
    metadata: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def forward(self, feats: np.ndarray) -> np.ndarray:
        """Logits for one feature vector (compiled, pure, float32)."""
        spec = engine.compile_policy_network(self)
        return engine.forward_kernel(spec, feats)

    def save(self, path: str | Path) -> None:
        header = NETWORK_MAGIC + struct.pack(
            "<HB32sIII",
            NETWORK_VERSION,
            self.feature_design_id,
            self.instance_hash.encode("ascii"),
            self.machine_count,
            self.engineer_count,
            len(self.hidden_widths),
        )
        header += struct.pack(f"<{len(self.hidden_widths)}I", *self.hidden_widths)
        chunks = [header]
        for w, b in self.layers:
            chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
        Path(path).write_bytes(b"".join(chunks))

    @staticmethod
    def load(path: str | Path) -> "TrainedNetwork":
        blob = Path(path).read_bytes()
        if blob[:4] != NETWORK_MAGIC:
            raise CompatibilityError(f"{path}: not a network file")
        version, design_id, hash_bytes, m_count, k_count, n_hidden = struct.unpack(
            "<HB32sIII", blob[4:51]
        )
        if version != NETWORK_VERSION:
            raise CompatibilityError(f"{path}: unsupported network version {version}")
        widths = struct.unpack(f"<{n_hidden}I", blob[51 : 51 + 4 * n_hidden])
        dims = [features.feature_dimension(design_id, m_count, k_count)]
        dims += list(widths) + [m_count + 1]
        offset = 51 + 4 * n_hidden
        layers = []
        for i in range(len(dims) - 1):
            n_in, n_out = dims[i], dims[i + 1]
            w = np.frombuffer(blob, dtype="<f4", count=n_in * n_out, offset=offset)
            offset += 4 * n_in * n_out
            b = np.frombuffer(blob, dtype="<f4", count=n_out, offset=offset)
            offset += 4 * n_out
            layers.append((w.reshape(n_in, n_out).copy(), b.copy()))
        return TrainedNetwork(
            feature_design_id=design_id,
            machine_count=m_count,
            engineer_count=k_count,
            hidden_widths=tuple(widths),
            layers=tuple(layers),
            instance_hash=hash_bytes.decode("ascii"),
        )

    def compatible_with(self, instance: Instance) -> bool:
        if self.instance_hash not in (instance.content_hash, instance.parent_hash):
            return False
        if self.machine_count != instance.machine_count:
            return False
        expected = features.feature_dimension(
            self.feature_design_id, instance.machine_count, instance.engineer_count
        )
        return expected == self.input_dim

    def require_compatible(self, instance: Instance) -> None:
        if self.instance_hash not in (instance.content_hash, instance.parent_hash):
            raise CompatibilityError(
                f"network was trained for instance {self.instance_hash}, "
                f"got {instance.content_hash}"
            )
        if self.machine_count != instance.machine_count or not self.compatible_with(instance):
            raise CompatibilityError(
                "network feature dimensions do not fit this instance"
            )


# ---------------------------------------------------------------------------
# training


def init_parameters(dims: Sequence[int], rng: np.random.Generator) -> list:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases; float64."""
    params = []
    for i in range(len(dims) - 1):
        bound = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        w = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1]))
        b = np.zeros(dims[i + 1])
        params.append([w, b])
    return params


def forward_batch(params: list, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Batched forward pass; returns logits and per-layer activations."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(params):
        z = h @ w + b
        if i < len(params) - 1:
            z = np.maximum(z, 0.0)
        acts.append(z)
        h = z
    return h, acts


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(params: list, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward_batch(params, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(y)), y]))


def loss_and_gradients(params: list, x: np.ndarray, y: np.ndarray) -> tuple[float, list]:
    """Mean cross-entropy over the batch and its parameter gradients."""
    logits, acts = forward_batch(params, x)
    probs = softmax(logits)
    n = x.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), y]))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        grads[i] = [acts[i].T @ delta, delta.sum(axis=0)]
        if i > 0:
            delta = delta @ params[i][0].T
            delta[acts[i] <= 0.0] = 0.0
    return loss, grads


class _Adam:
    def __init__(self, params: list, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [[np.zeros_like(p) for p in pair] for pair in params]
        self.v = [[np.zeros_like(p) for p in pair] for pair in params]
        self.t = 0

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for i, pair in enumerate(params):
            for j, p in enumerate(pair):
                g = grads[i][j]
                self.m[i][j] = self.beta1 * self.m[i][j] + (1 - self.beta1) * g
                self.v[i][j] = self.beta2 * self.v[i][j] + (1 - self.beta2) * g * g
                m_hat = self.m[i][j] / correct1
                v_hat = self.v[i][j] / correct2
                p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_classifier(
    dataset: Dataset,
    hyperparams: TrainHyperparams,
    rng: np.random.Generator,
    machine_count: int | None = None,
    engineer_count: int | None = None,
) -> TrainedNetwork:
    """Fit the decision classifier to a dataset.

    The dataset is shuffled and split into train/test; after each epoch
    the test loss is evaluated and training stops once it has failed to
    improve for ``patience`` consecutive passes.  The parameters achieving
    the best test loss are returned.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    design_id = dataset.feature_design_id
    dim = dataset.dimension
    if machine_count is None:
        if design_id in (1, 2):
            machine_count = dim // 7
        else:
            raise ValidationError("machine count required for the compact feature design")
    if engineer_count is None:
        if design_id == 3:
            engineer_count = (dim - machine_count - 1) // 3
        else:
            engineer_count = int(dataset.engineers.max()) + 1
    expected = features.feature_dimension(design_id, machine_count, engineer_count)
    if expected != dim:
        raise ValidationError(
            f"dataset feature dimension {dim} does not match design/instance ({expected})"
        )
    n_out = machine_count + 1
    if int(dataset.actions.max()) >= n_out:
        raise ValidationError("dataset contains an action ordinal outside the output range")

    x = dataset.features.astype(np.float64)
    y = dataset.actions.astype(np.int64)
    order = rng.permutation(len(dataset))
    n_test = max(1, int(round(len(dataset) * hyperparams.test_fraction)))
    if n_test >= len(dataset):
        raise ValidationError("dataset too small for the requested test split")
    test_idx, train_idx = order[:n_test], order[n_test:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_test, y_test = x[test_idx], y[test_idx]

    dims = [dim] + list(hyperparams.hidden_widths) + [n_out]
    params = init_parameters(dims, rng)
    opt = _Adam(params, hyperparams.learning_rate)
    best_loss = np.inf
    best_params = [[p.copy() for p in pair] for pair in params]
    bad_passes = 0
    history = []
    for epoch in range(hyperparams.max_epochs):
        perm = rng.permutation(len(x_train))
        for start in range(0, len(perm), hyperparams.batch_size):
            batch = perm[start : start + hyperparams.batch_size]
            _, grads = loss_and_gradients(params, x_train[batch], y_train[batch])
            opt.step(params, grads)
        test_loss = cross_entropy_loss(params, x_test, y_test)
        history.append(test_loss)
        if test_loss < best_loss - 1e-9:
            best_loss = test_loss
            best_params = [[p.copy() for p in pair] for pair in params]
            bad_passes = 0
        else:
            bad_passes += 1
            if bad_passes >= hyperparams.patience:
                break

    layers = tuple(
        (w.astype(np.float32), b.astype(np.float32)) for w, b in best_params
    )
    preds = np.argmax(forward_batch(best_params, x_test)[0], axis=1)
    return TrainedNetwork(
        feature_design_id=design_id,
        machine_count=machine_count,
        engineer_count=engineer_count,
        hidden_widths=tuple(hyperparams.hidden_widths),
        layers=layers,
        instance_hash=dataset.instance_hash,
        metadata={
            "epochs": len(history),
            "best_test_loss": best_loss,
            "test_accuracy": float(np.mean(preds == y_test)),
            "samples": len(dataset),
        },
    )


# ---------------------------------------------------------------------------
# the induced policy


class NetworkPolicy(Policy):
    """Sequential masked-argmax decision rule induced by a classifier."""

    def __init__(self, instance: Instance, network: TrainedNetwork, label: str | None = None):
        network.require_compatible(instance)
        self.network = network
        self._label = label
        self._spec = engine.compile_policy_network(network)

    @property
    def name(self) -> str:
        return self._label or "net"

    def decide_engineer(self, instance, state, k, rng) -> EngineerAction:
        legal = mdp.legal_actions_engineer(instance, state, k)
        if len(legal) == 1:
            return legal[0]
        feats = features.featurize(self.network.feature_design_id, instance, state, k)
        logits = engine.forward_kernel(self._spec, feats)
        allowed = np.full(logits.shape[0], -np.inf, dtype=np.float64)
        m_count = instance.machine_count
        for action in legal:
            ordinal = mdp.action_ordinal(action, m_count)
            allowed[ordinal] = logits[ordinal]
        return mdp.action_from_ordinal(int(np.argmax(allowed)), m_count)

    def action_distribution(self, instance, state):
        rng = None
        return [(1.0, self.decide(instance, state, rng))]


def network_decide(
    instance: Instance, state: NetworkState, network: TrainedNetwork
) -> JointAction:
    """Joint action of the network policy: engineers decide one at a time,
    each seeing the consequences of the earlier choices."""
    return NetworkPolicy(instance, network).decide(instance, state, None)


# ---------------------------------------------------------------------------
# the outer collect/train/evaluate loop


def api_iterate(
    instance: Instance,
    initial_policy: Policy,
    generations: int,
    budget: RolloutBudget,
    hyperparams: TrainHyperparams,
    master_seed: int,
    max_samples: int = 150_000,
    feature_design: str = "f1",
    eval_reps: int = 100_000,
    eval_mode: str = "truncated",
    progress=None,
) -> list[TrainedNetwork]:
    """Iterated policy improvement: collect, train, evaluate, repeat.

    Generation g collects its dataset under the previous generation's
    network policy (the initial policy for g = 1); every stage derives its
    seeds from (master_seed, g), so the whole run is reproducible.
    """
    if generations < 1:
        raise ValidationError("need at least one generation")
    networks: list[TrainedNetwork] = []
    base: Policy = initial_policy
    for g in range(1, generations + 1):
        dataset = collect_dataset(
            instance,
            base,
            budget,
            max_samples,
            master_seed=int(np.random.SeedSequence((master_seed, g, 1)).generate_state(1)[0]),
            feature_design=feature_design,
            progress=progress,
        )
        network = train_classifier(
            dataset,
            hyperparams,
            derive_rng(master_seed, g, 2),
            machine_count=instance.machine_count,
            engineer_count=instance.engineer_count,
        )
        network.metadata.update(
            generation=g, base_policy=base.name, master_seed=int(master_seed)
        )
        policy = NetworkPolicy(instance, network, label=f"net:gen{g}")
        report = evaluate_policy(
            instance,
            policy,
            reps=eval_reps,
            horizon_mode=eval_mode,
            master_seed=int(np.random.SeedSequence((master_seed, g, 3)).generate_state(1)[0]),
        )
        network.metadata["evaluation"] = report.as_dict()
        networks.append(network)
        base = policy
    return networks
