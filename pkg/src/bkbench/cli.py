"""Command-line surface: generate, perturb, train, sweep, metrics, plot.

Each subcommand is a thin wrapper over the library with explicit --seed
flags everywhere randomness exists. Exit codes: 0 success, 2 usage or
validation error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


def _add_generate(sub):
    p = sub.add_parser("generate", help="write a synthetic dataset bundle")
    p.add_argument("--C", type=int, default=2, help="cluster/class count")
    p.add_argument("--M", type=int, default=16, help="nodes per cluster")
    p.add_argument("--N", type=int, default=600, help="samples per class")
    p.add_argument("--delta-xi", type=float, default=-0.57, help="location separation")
    p.add_argument("--omega", type=float, default=0.5, help="spread")
    p.add_argument("--alpha", type=float, default=1.8, help="skewness")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)


def _add_perturb(sub):
    p = sub.add_parser("perturb", help="apply one perturbation descriptor to a graph")
    p.add_argument("--graph", required=True, help="input edge-list TSV")
    p.add_argument(
        "--descriptor", required=True,
        help="kind:kappa[:variant][:seed], e.g. remove:0.3 or noise:2.0:replace:7",
    )
    p.add_argument("--clusters", help="cluster file (one cluster per line)")
    p.add_argument("--out", required=True, help="output TSV; provenance sidecar "
                   "is written next to it as <out>.provenance.json")


def _add_train(sub):
    p = sub.add_parser("train", help="train one model on a dataset bundle")
    p.add_argument("--bundle", required=True, help="dataset bundle directory")
    p.add_argument("--config", required=True, help="JSON with model/split fields")
    p.add_argument("--out-dir", required=True)


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="run a perturbation sweep from a config file")
    p.add_argument("--config", required=True, help="JSON sweep config")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)


def _add_metrics(sub):
    p = sub.add_parser("metrics", help="per-cluster ASPL and receptive field")
    p.add_argument("--graph", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--k", type=int, default=1, help="hop count for the receptive field")


def _add_plot(sub):
    p = sub.add_parser("plot", help="render curve SVG from an aggregates CSV")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bkbench",
        description="Synthetic benchmarks and perturbation sweeps for "
        "background-knowledge graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_perturb(sub)
    _add_train(sub)
    _add_sweep(sub)
    _add_metrics(sub)
    _add_plot(sub)
    return parser


def cmd_generate(args) -> int:
    from .synth import InvalidParamError, SynthParams, generate_dataset, overlap_coefficient, save_bundle

    try:
        params = SynthParams(
            C=args.C, M=args.M, N=args.N, delta_xi=args.delta_xi,
            omega=args.omega, alpha=args.alpha, seed=args.seed,
        )
    except InvalidParamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    dataset = generate_dataset(params)
    save_bundle(dataset, args.out_dir)
    omega = overlap_coefficient(params.delta_xi, params.omega, params.alpha)
    print(f"Omega ≈ {omega:.3f}")
    print(f"bundle written to {args.out_dir}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    from .graph import read_clusters, read_edge_tsv, write_edge_tsv
    from .perturb import PerturbError, apply_perturbation, parse_descriptor

    try:
        p = parse_descriptor(args.descriptor)
        g = read_edge_tsv(args.graph)
        clusters = read_clusters(args.clusters) if args.clusters else None
        outcome = apply_perturbation(g, p, clusters)
    except PerturbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_edge_tsv(outcome.graph, args.out)
    sidecar = str(args.out) + ".provenance.json"
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(outcome.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if outcome.clusters is not None and p.kind == "detach":
        from .graph import write_clusters

        write_clusters(outcome.clusters, str(args.out) + ".clusters")
    print(f"perturbed graph written to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .models import (
        build_model, evaluate, make_split, model_spec_from_dict,
        split_plan_from_dict, save_history_csv, train,
    )
    from .nn import save_tensors
    from .synth import load_bundle

    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    try:
        spec = model_spec_from_dict(cfg.get("model", {}))
        plan = split_plan_from_dict(cfg.get("split", {}))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    dataset = load_bundle(args.bundle)
    split = make_split(dataset, plan)
    model = build_model(
        spec, dataset.graph if spec.uses_graph else None,
        dataset.features.shape[1], dataset.n_classes,
    )
    trained = train(model, dataset, split)
    out = Path(args.out_dir)
    os.makedirs(out, exist_ok=True)
    save_tensors(out / "checkpoint.bktensors", trained.named_tensors())
    save_history_csv(trained.history, out / "loss_history.csv")
    acc_train = evaluate(trained, dataset, split[0])
    acc_test = evaluate(trained, dataset, split[1])
    print(f"{spec.name}: train_accuracy={acc_train:.4f} test_accuracy={acc_test:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import SweepConfigError, load_sweep_config, run_sweep, write_sweep_outputs

    try:
        config = load_sweep_config(args.config)
    except (SweepConfigError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_sweep(config, workers=args.workers)
    write_sweep_outputs(result, args.out_dir)
    failed = sum(1 for r in result.records if r.status == "failed") // 2
    print(f"sweep complete: {len(result.records)} records, {failed} failed cells")
    print(f"outputs in {args.out_dir}: results.csv aggregates.csv curve.svg")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .graph import cluster_aspl, k_hop_receptive_field, read_clusters, read_edge_tsv

    g = read_edge_tsv(args.graph)
    clusters = read_clusters(args.clusters)
    print(f"cluster,aspl,mean_rf_{args.k}")
    for idx, cluster in enumerate(clusters):
        aspl = cluster_aspl(g, cluster)
        rf = sum(k_hop_receptive_field(g, v, args.k) for v in cluster) / len(cluster)
        print(f"{idx},{repr(aspl)},{repr(rf)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import emit_curves
    from .sweep import SweepConfigError, parse_aggregates_csv

    try:
        with open(args.aggregates, "r", encoding="utf-8") as fh:
            rows = parse_aggregates_csv(fh.read())
    except SweepConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    emit_curves(rows, args.out)
    print(f"curve written to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "generate": cmd_generate,
    "perturb": cmd_perturb,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .graph import EdgeListParseError, GraphError
    from .models import MissingGraphError, SplitInfeasibleError
    from .synth import InvalidParamError

    try:
        return _HANDLERS[args.command](args)
    except EdgeListParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, InvalidParamError, MissingGraphError,
            SplitInfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
