"""Sweep orchestration: (model x perturbation severity x run) grids.

Every cell's randomness is derived from the master seed and the cell's
indices through a stable SHA-256 hash, so results are byte-identical no
matter how many workers execute the grid or in which order. Models that
never see the graph are trained once per run and their rows replicated
across severities (flagged in provenance).
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .models import (
    ModelSpec,
    SplitPlan,
    TrainingDivergedError,
    build_model,
    evaluate,
    make_split,
    train,
)
from .perturb import KINDS, Perturbation, apply_perturbation
from .synth import SynthDataset, SynthParams, generate_dataset, load_bundle

RESULTS_HEADER = "model,perturbation,variant,kappa,run,seed,split,status,accuracy"
AGGREGATES_HEADER = "model,perturbation,variant,kappa,n,mean,ci95"


class SweepConfigError(ValueError):
    pass


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from the given parts.

    SHA-256 over the '|'-joined string forms; independent of process,
    platform and PYTHONHASHSEED. Adding new models or severities never
    shifts the seeds of existing cells because each cell hashes its own
    indices.
    """
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class SweepConfig:
    models: tuple[ModelSpec, ...]
    perturbation_kind: str
    kappas: tuple[float, ...]
    variant: str | None = None
    synth: SynthParams | None = None
    bundle: str | None = None
    runs: int = 10
    seed: int = 0
    split: SplitPlan = SplitPlan()
    freeze_dataset: bool = False

    def __post_init__(self):
        if self.perturbation_kind not in KINDS:
            raise SweepConfigError(f"unknown perturbation {self.perturbation_kind!r}")
        if not self.kappas or list(self.kappas) != sorted(self.kappas):
            raise SweepConfigError("kappa grid must be non-empty and sorted ascending")
        if self.kappas[0] != 0:
            raise SweepConfigError("kappa grid must start at 0")
        if self.runs < 1:
            raise SweepConfigError("runs must be >= 1")
        if (self.synth is None) == (self.bundle is None):
            raise SweepConfigError("exactly one of synth/bundle must be given")
        if not self.models:
            raise SweepConfigError("at least one model spec required")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise SweepConfigError(f"duplicate model names: {names}")
        # fail fast on invalid severities before any training happens
        for kappa in self.kappas:
            Perturbation(self.perturbation_kind, kappa, self.variant, 0)


@dataclass(frozen=True)
class SweepRecord:
    model: str
    perturbation: str
    variant: str
    kappa: float
    run: int
    seed: int
    split: str
    status: str
    accuracy: float | None


@dataclass
class SweepResult:
    records: list[SweepRecord]
    shared_models: list[str]
    config: SweepConfig


def _dataset_for_run(config: SweepConfig, run: int) -> SynthDataset:
    if config.bundle is not None:
        return load_bundle(config.bundle)
    run_key = 0 if config.freeze_dataset else run
    seed = stable_seed(config.seed, "dataset", run_key)
    return generate_dataset(replace(config.synth, seed=seed))


def _records_for_cell(name, kind, variant, kappa, run, seed, status, acc_train, acc_test):
    common = dict(
        model=name,
        perturbation=kind,
        variant=variant,
        kappa=kappa,
        run=run,
        seed=seed,
        status=status,
    )
    return [
        SweepRecord(split="train", accuracy=acc_train, **common),
        SweepRecord(split="test", accuracy=acc_test, **common),
    ]


def _run_one(config: SweepConfig, run: int) -> list[SweepRecord]:
    dataset = _dataset_for_run(config, run)
    split_plan = replace(config.split, seed=stable_seed(config.seed, "split", run))
    split = make_split(dataset, split_plan)
    variant_label = (
        Perturbation(config.perturbation_kind, 0.0, config.variant).effective_variant
        or ""
    )
    records: list[SweepRecord] = []

    def train_cell(spec: ModelSpec, graph, cell_seed: int):
        seeded = replace(spec, seed=cell_seed)
        try:
            model = build_model(
                seeded,
                graph,
                dataset.features.shape[1],
                dataset.n_classes,
            )
            trained = train(model, dataset, split)
            acc_tr = evaluate(trained, dataset, split[0])
            acc_te = evaluate(trained, dataset, split[1])
            return "ok", acc_tr, acc_te
        except TrainingDivergedError:
            return "failed", None, None

    kind = config.perturbation_kind
    for m_idx, spec in enumerate(config.models):
        if not spec.uses_graph:
            cell_seed = stable_seed(config.seed, "model", run, m_idx)
            status, acc_tr, acc_te = train_cell(spec, None, cell_seed)
            for kappa in config.kappas:
                records.extend(
                    _records_for_cell(
                        spec.name, kind, variant_label, kappa, run, cell_seed,
                        status, acc_tr, acc_te,
                    )
                )
        else:
            for k_idx, kappa in enumerate(config.kappas):
                p = Perturbation(
                    kind,
                    kappa,
                    config.variant,
                    seed=stable_seed(config.seed, "perturb", run, k_idx),
                )
                outcome = apply_perturbation(dataset.graph, p, dataset.clusters)
                cell_seed = stable_seed(config.seed, "model", run, k_idx, m_idx)
                status, acc_tr, acc_te = train_cell(spec, outcome.graph, cell_seed)
                records.extend(
                    _records_for_cell(
                        spec.name, kind, variant_label, kappa, run, cell_seed,
                        status, acc_tr, acc_te,
                    )
                )
    return records


def run_sweep(config: SweepConfig, workers: int = 1) -> SweepResult:
    """Execute the grid; byte-identical output for any worker count."""
    if workers <= 1:
        per_run = [_run_one(config, r) for r in range(config.runs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(_run_one, [config] * config.runs, range(config.runs)))
    records = [rec for chunk in per_run for rec in chunk]
    model_order = {spec.name: i for i, spec in enumerate(config.models)}
    kappa_order = {k: i for i, k in enumerate(config.kappas)}
    records.sort(
        key=lambda r: (model_order[r.model], kappa_order[r.kappa], r.run, r.split)
    )
    shared = [spec.name for spec in config.models if not spec.uses_graph]
    return SweepResult(records=records, shared_models=shared, config=config)


# ---------------------------------------------------------------------------
# Aggregation: mean and two-sided 95% Student-t confidence half-width over
# the test-split accuracies of successful runs.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateRow:
    model: str
    perturbation: str
    variant: str
    kappa: float
    n: int
    mean: float | None
    ci95: float | None


def t_ci_halfwidth(values: np.ndarray) -> float:
    """t_{0.975, n-1} * s / sqrt(n); 0 for a single value."""
    n = values.size
    if n <= 1:
        return 0.0
    s = float(np.std(values, ddof=1))
    return float(stats.t.ppf(0.975, n - 1) * s / np.sqrt(n))


def aggregate(result: SweepResult) -> list[AggregateRow]:
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    meta: dict[tuple, tuple[str, str]] = {}
    for rec in result.records:
        if rec.split != "test":
            continue
        key = (rec.model, rec.kappa)
        if key not in groups:
            groups[key] = []
            order.append(key)
            meta[key] = (rec.perturbation, rec.variant)
        if rec.status == "ok" and rec.accuracy is not None:
            groups[key].append(rec.accuracy)
    rows = []
    for key in order:
        vals = np.asarray(groups[key])
        kind, variant = meta[key]
        if vals.size == 0:
            rows.append(AggregateRow(key[0], kind, variant, key[1], 0, None, None))
        else:
            rows.append(
                AggregateRow(
                    key[0], kind, variant, key[1], int(vals.size),
                    float(vals.mean()), t_ci_halfwidth(vals),
                )
            )
    return rows


# ---------------------------------------------------------------------------
# CSV serialization (headers are a stable contract; floats via repr).
# ---------------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def format_results_csv(result: SweepResult) -> str:
    lines = [RESULTS_HEADER]
    for r in result.records:
        lines.append(
            f"{r.model},{r.perturbation},{r.variant},{_fmt(r.kappa)},{r.run},"
            f"{r.seed},{r.split},{r.status},{_fmt(r.accuracy)}"
        )
    return "\n".join(lines) + "\n"


def format_aggregates_csv(rows: list[AggregateRow]) -> str:
    lines = [AGGREGATES_HEADER]
    for a in rows:
        lines.append(
            f"{a.model},{a.perturbation},{a.variant},{_fmt(a.kappa)},{a.n},"
            f"{_fmt(a.mean)},{_fmt(a.ci95)}"
        )
    return "\n".join(lines) + "\n"


def parse_aggregates_csv(text: str) -> list[AggregateRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != AGGREGATES_HEADER:
        raise SweepConfigError("not an aggregates CSV (bad header)")
    rows = []
    for ln in lines[1:]:
        model, kind, variant, kappa, n, mean, ci95 = ln.split(",")
        rows.append(
            AggregateRow(
                model, kind, variant, float(kappa), int(n),
                float(mean) if mean else None, float(ci95) if ci95 else None,
            )
        )
    return rows


def write_sweep_outputs(result: SweepResult, out_dir, svg_name="curve.svg") -> None:
    from .plotting import emit_curves

    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    with open(out / "results.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_results_csv(result))
    rows = aggregate(result)
    with open(out / "aggregates.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_aggregates_csv(rows))
    emit_curves(rows, out / svg_name)
    provenance = {
        "perturbation": result.config.perturbation_kind,
        "variant": result.config.variant,
        "kappas": list(result.config.kappas),
        "runs": result.config.runs,
        "master_seed": result.config.seed,
        "models": [spec.name for spec in result.config.models],
        "shared_models": result.shared_models,
        "freeze_dataset": result.config.freeze_dataset,
        "failed_cells": [
            [r.model, r.kappa, r.run]
            for r in result.records
            if r.status == "failed" and r.split == "test"
        ],
    }
    with open(out / "provenance.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Config file parsing (JSON; see docs/sweep_config.md).
# ---------------------------------------------------------------------------


def sweep_config_from_dict(d: dict) -> SweepConfig:
    from .models import model_spec_from_dict, split_plan_from_dict

    allowed = {
        "models", "perturbation", "dataset", "runs", "seed", "split",
        "freeze_dataset",
    }
    unknown = set(d) - allowed
    if unknown:
        raise SweepConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        models = tuple(model_spec_from_dict(m) for m in d["models"])
        pert = d["perturbation"]
        kind = pert["kind"]
        kappas = tuple(float(k) for k in pert["kappas"])
        variant = pert.get("variant")
        ds = d["dataset"]
        synth = SynthParams(**ds["synthetic"]) if "synthetic" in ds else None
        bundle = ds.get("bundle")
        split = split_plan_from_dict(d.get("split", {}))
        return SweepConfig(
            models=models,
            perturbation_kind=kind,
            kappas=kappas,
            variant=variant,
            synth=synth,
            bundle=bundle,
            runs=int(d.get("runs", 10)),
            seed=int(d.get("seed", 0)),
            split=split,
            freeze_dataset=bool(d.get("freeze_dataset", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SweepConfigError):
            raise
        raise SweepConfigError(f"bad sweep config: {exc}") from exc


def load_sweep_config(path) -> SweepConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return sweep_config_from_dict(json.load(fh))
