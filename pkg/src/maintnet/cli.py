"""Command-line interface.

Subcommands: validate, evaluate, exact, collect, train, dcl (the iterated
collect/train/evaluate loop), decompose and robust.  Policies are named by
a spec string:

    idle | random | dispatch:s=<int|fail> | net:<path> | exact:<path>
         | dec:<clusters.json>[,<sub-spec>...]

Exit status is 0 on success and 2 on any validated failure, with a
diagnostic on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import engine, exact, transforms
from .errors import MaintnetError, ValidationError
from .evaluate import evaluate_policy
from .heuristics import (
    DecompositionPolicy,
    DispatchPolicy,
    ThresholdConfig,
    align_clusters_to_engineers,
    induced_subinstance,
    kmeans_clusters,
)
from .instances import load_instance, save_instance
from .learning import NetworkPolicy, TrainedNetwork, TrainHyperparams, api_iterate, train_classifier
from .mdp import Instance
from .policies import IdlePolicy, RandomPolicy
from .rollout import Dataset, RolloutBudget, collect_dataset
from .seeding import derive_rng

__all__ = ["cli", "main", "parse_policy_spec"]


def parse_policy_spec(spec: str, instance: Instance):
    """Instantiate the policy named by a spec string for an instance."""
    if spec == "idle":
        return IdlePolicy()
    if spec == "random":
        return RandomPolicy()
    if spec.startswith("dispatch:"):
        arg = spec[len("dispatch:") :]
        if not arg.startswith("s="):
            raise ValidationError(f"bad dispatch spec {spec!r}; expected dispatch:s=<int|fail>")
        value = arg[2:]
        if value == "fail":
            return DispatchPolicy(ThresholdConfig.reactive(instance), label=spec)
        return DispatchPolicy(ThresholdConfig.constant(instance, int(value)), label=spec)
    if spec.startswith("net:"):
        network = TrainedNetwork.load(spec[4:])
        return NetworkPolicy(instance, network, label=spec)
    if spec.startswith("exact:"):
        return exact.TablePolicy.load(spec[6:], instance)
    if spec.startswith("dec:"):
        parts = spec[4:].split(",")
        doc = json.loads(Path(parts[0]).read_text(encoding="utf-8"))
        if doc.get("instance_hash") not in (instance.content_hash, instance.parent_hash):
            raise ValidationError("clusters file was built for a different instance")
        clusters = align_clusters_to_engineers(instance, doc["clusters"])
        sub_specs = parts[1:] or ["dispatch:s=fail"]
        if len(sub_specs) == 1:
            sub_specs = sub_specs * len(clusters)
        if len(sub_specs) != len(clusters):
            raise ValidationError(
                f"need one sub-policy per cluster ({len(clusters)}), got {len(sub_specs)}"
            )
        sub_instances = [induced_subinstance(instance, c, k) for k, c in enumerate(clusters)]
        sub_policies = [parse_policy_spec(s, si) for s, si in zip(sub_specs, sub_instances)]
        return DecompositionPolicy(instance, clusters, sub_policies)
    raise ValidationError(f"unknown policy spec {spec!r}")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["truncated", "geometric"], default="truncated")
    p.add_argument("--tol", type=float, default=1e-3, help="truncation tolerance")
    p.add_argument("--out", type=Path, default=None, help="CSV report path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maintnet", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="simulation thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate an instance document")
    p.add_argument("instance", type=Path)

    p = sub.add_parser("evaluate", help="Monte Carlo policy evaluation")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--policy", required=True)
    _add_eval_args(p)

    p = sub.add_parser("exact", help="optimal values for small instances")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--tol", type=float, default=1e-6, help="value-iteration residual")
    p.add_argument("--method", choices=["value-iteration", "policy-iteration"], default="value-iteration")
    p.add_argument("--cap", type=int, default=exact.DEFAULT_STATE_CAP)
    p.add_argument("--out", type=Path, default=None, help="policy table output path")

    p = sub.add_parser("collect", help="collect a rollout-improved dataset")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--policy", required=True, help="base policy spec")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--rmin", type=int, default=1500)
    p.add_argument("--rmax", type=int, default=7500)
    p.add_argument("--krace", type=float, default=2.0)
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--design", choices=["f1", "f2", "f3"], default="f1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path, default=None, help="also export samples as CSV")

    p = sub.add_parser("train", help="train a classifier on a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--layers", type=int, default=None, help="hidden layer count")
    p.add_argument("--widths", default=None, help="comma-separated hidden widths")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--design", choices=["f1", "f2", "f3"], default=None,
                   help="expected feature design (validated against the dataset)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("dcl", help="iterated collect/train/evaluate loop")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--init", required=True, help="initial policy spec")
    p.add_argument("--generations", type=int, default=1)
    p.add_argument("--samples", type=int, default=150_000)
    p.add_argument("--rmin", type=int, default=1500)
    p.add_argument("--rmax", type=int, default=7500)
    p.add_argument("--krace", type=float, default=2.0)
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--design", choices=["f1", "f2", "f3"], default="f1")
    p.add_argument("--widths", default="128,64,64")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--reps", type=int, default=100_000, help="evaluation repetitions")
    p.add_argument("--mode", choices=["truncated", "geometric"], default="truncated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", type=Path, required=True)

    p = sub.add_parser("decompose", help="cluster the network for decomposition")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--k", type=int, default=None, help="cluster count (default: engineer count)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", type=Path, required=True)

    p = sub.add_parser("robust", help="evaluate a policy on a transformed instance")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--transform", required=True,
                   help="rm-machine:<m> | rm-engineer:<k> | add-engineer:<loc>")
    p.add_argument("--policy", required=True)
    _add_eval_args(p)
    return parser


def _apply_transform(instance: Instance, spec: str) -> Instance:
    if ":" not in spec:
        raise ValidationError(f"bad transform spec {spec!r}")
    kind, arg = spec.split(":", 1)
    idx = int(arg)
    if kind == "rm-machine":
        return transforms.remove_machine(instance, idx)
    if kind == "rm-engineer":
        return transforms.remove_engineer(instance, idx)
    if kind == "add-engineer":
        return transforms.add_engineer(instance, idx)
    raise ValidationError(f"unknown transform {kind!r}")


def _report(args, instance, policy) -> int:
    report = evaluate_policy(
        instance,
        policy,
        reps=args.reps,
        horizon_mode=args.mode,
        master_seed=args.seed,
        truncation_tol=args.tol,
    )
    print(report.summary())
    if args.out is not None:
        report.write_csv(args.out)
        print(f"report written to {args.out}")
    return 0


def _parse_widths(args) -> tuple[int, ...]:
    if args.widths:
        widths = tuple(int(w) for w in str(args.widths).split(","))
        if args.layers is not None and args.layers != len(widths):
            raise ValidationError("--layers disagrees with the number of --widths entries")
        return widths
    layers = args.layers or 3
    return (128,) + (64,) * (layers - 1)


def cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads:
            engine.set_threads(args.threads)
        return _run(args)
    except MaintnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _run(args) -> int:
    if args.command == "validate":
        instance = load_instance(args.instance)
        print(
            f"{instance.name}: {instance.machine_count} machines, "
            f"{instance.engineer_count} engineers, levels {sorted(set(instance.levels))}, "
            f"gamma {instance.gamma}, hash {instance.content_hash}"
        )
        return 0

    if args.command == "evaluate":
        instance = load_instance(args.instance)
        policy = parse_policy_spec(args.policy, instance)
        return _report(args, instance, policy)

    if args.command == "exact":
        instance = load_instance(args.instance)
        index = exact.enumerate_states(instance, cap=args.cap)
        if args.method == "value-iteration":
            values, policy = exact.value_iteration(instance, index, tol=args.tol)
        else:
            values, policy = exact.policy_iteration(instance, index)
        start = index.index[exact.mdp.initial_state(instance)]
        print(
            f"{instance.name}: {len(index)} states, "
            f"J* = {instance.gamma * values[start]:.4f} (end-of-period discounting)"
        )
        if args.out is not None:
            policy.save(args.out)
            print(f"optimal policy table written to {args.out}")
        return 0

    if args.command == "collect":
        instance = load_instance(args.instance)
        policy = parse_policy_spec(args.policy, instance)
        budget = RolloutBudget(args.rmin, args.rmax, args.krace, args.epsilon)
        dataset = collect_dataset(
            instance, policy, budget, args.samples, args.seed, feature_design=args.design
        )
        dataset.save(args.out)
        print(f"{len(dataset)} samples written to {args.out}")
        if args.csv is not None:
            dataset.to_csv(args.csv)
        return 0

    if args.command == "train":
        instance = load_instance(args.instance)
        dataset = Dataset.load(args.dataset)
        if dataset.instance_hash not in (instance.content_hash, instance.parent_hash):
            raise ValidationError("dataset was collected on a different instance")
        if args.design is not None:
            from .features import FEATURE_DESIGNS, feature_dimension

            expected = feature_dimension(
                FEATURE_DESIGNS[args.design], instance.machine_count, instance.engineer_count
            )
            if expected != dataset.dimension:
                raise ValidationError(
                    f"dataset dimension {dataset.dimension} does not match design "
                    f"{args.design} (expected {expected})"
                )
            if dataset.feature_design_id == 0:
                dataset.feature_design_id = FEATURE_DESIGNS[args.design]
        hyper = TrainHyperparams(
            hidden_widths=_parse_widths(args),
            batch_size=args.batch,
            learning_rate=args.lr,
            patience=args.patience,
            max_epochs=args.max_epochs,
        )
        network = train_classifier(
            dataset,
            hyper,
            derive_rng(args.seed),
            machine_count=instance.machine_count,
            engineer_count=instance.engineer_count,
        )
        network.save(args.out)
        meta = network.metadata
        print(
            f"trained {len(hyper.hidden_widths)}-hidden-layer network: "
            f"test loss {meta['best_test_loss']:.4f}, accuracy {meta['test_accuracy']:.3f}; "
            f"written to {args.out}"
        )
        return 0

    if args.command == "dcl":
        instance = load_instance(args.instance)
        initial = parse_policy_spec(args.init, instance)
        budget = RolloutBudget(args.rmin, args.rmax, args.krace, args.epsilon)
        hyper = TrainHyperparams(hidden_widths=_parse_widths(args), batch_size=args.batch)
        args.outdir.mkdir(parents=True, exist_ok=True)
        networks = api_iterate(
            instance,
            initial,
            generations=args.generations,
            budget=budget,
            hyperparams=hyper,
            master_seed=args.seed,
            max_samples=args.samples,
            feature_design=args.design,
            eval_reps=args.reps,
            eval_mode=args.mode,
        )
        rows = []
        for net in networks:
            g = net.metadata["generation"]
            path = args.outdir / f"generation_{g}.net"
            net.save(path)
            ev = net.metadata["evaluation"]
            rows.append(ev)
            print(f"generation {g}: J = {ev['mean']:.3f} +- {ev['halfwidth']:.3f} -> {path}")
        csv_path = args.outdir / "generations.csv"
        from .evaluate import CSV_COLUMNS

        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for ev in rows:
                fh.write(",".join(str(ev[c]) for c in CSV_COLUMNS) + "\n")
        return 0

    if args.command == "decompose":
        instance = load_instance(args.instance)
        if instance.coords is None:
            raise ValidationError("instance has no coordinates; clustering needs them")
        k = args.k or instance.engineer_count
        clusters = kmeans_clusters(instance.coords, k, derive_rng(args.seed))
        clusters = align_clusters_to_engineers(instance, clusters)
        args.outdir.mkdir(parents=True, exist_ok=True)
        doc = {"instance_hash": instance.content_hash, "clusters": clusters}
        (args.outdir / "clusters.json").write_text(json.dumps(doc, indent=1), encoding="utf-8")
        for j, cluster in enumerate(clusters):
            sub = induced_subinstance(instance, cluster, j)
            save_instance(sub, args.outdir / f"cluster_{j}.json")
            names = (
                [instance.location_names[m] for m in cluster]
                if instance.location_names
                else cluster
            )
            print(f"cluster {j} (engineer {j}): {names}")
        print(f"clusters written to {args.outdir / 'clusters.json'}")
        return 0

    if args.command == "robust":
        instance = load_instance(args.instance)
        transformed = _apply_transform(instance, args.transform)
        policy = parse_policy_spec(args.policy, transformed)
        return _report(args, transformed, policy)

    raise ValidationError(f"unknown command {args.command!r}")


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
