"""Severity-parameterized perturbation operators for background-knowledge graphs.

Five operators, each a pure function of (graph, severity kappa, seed):

  remove   delete round(kappa*|E|) edges uniformly          (missing, random)
  add      insert round(kappa*|E|) absent edges uniformly   (incorrect, random)
  noise    integer-rounded N(0, kappa^2) on edge weights;   (systematic)
           weights falling below 1 delete the edge (variant "remove") or
           delete it and insert a random replacement (variant "replace")
  isolate  strip all edges off round(kappa*n) nodes         (missing, systematic)
  detach   move round(kappa*M) nodes per source cluster into another
           cluster, fully wiring them there                 (incorrect, systematic)

kappa = 0 always leaves the graph unchanged. Every operator returns a new
graph; inputs are never mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import BkGraph, NodeSet

KINDS = ("remove", "add", "noise", "isolate", "detach")

VARIANTS = {
    "remove": (),
    "add": (),
    "noise": ("remove", "replace"),
    "isolate": ("random", "per-cluster"),
    "detach": ("drain", "exchange"),
}

_DEFAULT_VARIANT = {"noise": "remove", "isolate": "random", "detach": "drain"}


class PerturbError(ValueError):
    pass


class InvalidSeverityError(PerturbError):
    pass


class GraphSaturatedError(PerturbError):
    """Requested more new edges than absent pairs."""


class MissingClustersError(PerturbError):
    pass


class InvalidClustersError(PerturbError):
    pass


class DescriptorError(PerturbError):
    pass


@dataclass(frozen=True)
class Perturbation:
    """Descriptor of one operator application: kind, severity, variant, seed."""

    kind: str
    kappa: float
    variant: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DescriptorError(f"unknown perturbation kind {self.kind!r}")
        if self.kind in ("remove", "isolate", "detach"):
            if not (0.0 <= self.kappa <= 1.0):
                raise InvalidSeverityError(
                    f"{self.kind} requires kappa in [0, 1], got {self.kappa}"
                )
        elif self.kappa < 0.0:
            raise InvalidSeverityError(
                f"{self.kind} requires kappa >= 0, got {self.kappa}"
            )
        allowed = VARIANTS[self.kind]
        if self.variant is not None and self.variant not in allowed:
            raise DescriptorError(
                f"variant {self.variant!r} not valid for {self.kind} "
                f"(allowed: {allowed or 'none'})"
            )

    @property
    def effective_variant(self) -> str | None:
        return self.variant or _DEFAULT_VARIANT.get(self.kind)

    def label(self) -> str:
        v = self.effective_variant
        return f"{self.kind}:{self.kappa:g}" + (f":{v}" if v else "")


def parse_descriptor(text: str) -> Perturbation:
    """Parse `kind:kappa[:variant][:seed]`, e.g. `noise:2.0:replace:7`.

    An empty variant field (`remove:0.3::42`) is allowed for kinds without
    variants; a lone third field is read as a variant when it names one and
    as a seed when it is an integer.
    """
    parts = text.split(":")
    if len(parts) < 2 or len(parts) > 4:
        raise DescriptorError(f"descriptor {text!r} is not kind:kappa[:variant][:seed]")
    kind = parts[0]
    if kind not in KINDS:
        raise DescriptorError(f"unknown perturbation kind {kind!r}")
    try:
        kappa = float(parts[1])
    except ValueError:
        raise DescriptorError(f"kappa {parts[1]!r} is not a number") from None
    variant: str | None = None
    seed = 0
    rest = parts[2:]
    if len(rest) == 2:
        variant = rest[0] or None
        try:
            seed = int(rest[1])
        except ValueError:
            raise DescriptorError(f"seed {rest[1]!r} is not an integer") from None
    elif len(rest) == 1 and rest[0]:
        if rest[0] in VARIANTS[kind]:
            variant = rest[0]
        else:
            try:
                seed = int(rest[0])
            except ValueError:
                raise DescriptorError(
                    f"{rest[0]!r} is neither a {kind} variant nor an integer seed"
                ) from None
    return Perturbation(kind=kind, kappa=kappa, variant=variant, seed=seed)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def _round_half_away_arr(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5)).astype(np.int64)


def _edge_array(g: BkGraph) -> list[tuple[int, int]]:
    return list(g.edges())


def _new_edge_weight(pre_weights: np.ndarray, rng: np.random.Generator) -> int:
    # Weight policy for inserted edges: 1 on uniformly 1-weighted graphs,
    # otherwise an empirical draw from the pre-perturbation weights.
    if pre_weights.size == 0 or np.all(pre_weights == 1):
        return 1
    return int(rng.choice(pre_weights))


def remove_edges(
    g: BkGraph, kappa: float, rng: np.random.Generator, log: dict | None = None
) -> BkGraph:
    """Delete round(kappa*|E|) edges chosen uniformly without replacement.

    For a fixed generator state the removals are nested across severities: a
    permutation of the canonical edge list is drawn and the first k entries
    are deleted, so larger kappa removes a superset of edges.
    """
    if not (0.0 <= kappa <= 1.0):
        raise InvalidSeverityError(f"kappa must be in [0, 1], got {kappa}")
    edges = _edge_array(g)
    k = _round_half_away(kappa * len(edges))
    order = rng.permutation(len(edges))
    doomed = {edges[i] for i in order[:k]}
    weights = {e: w for e, w in g.edge_weight_map().items() if e not in doomed}
    if log is not None:
        log["removed_edges"] = sorted([list(e) for e in doomed])
    return g.replace_edges(weights)


def _enumerate_nonedges(weights: dict[tuple[int, int], int], n: int):
    return [
        (u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in weights
    ]


def add_edges(
    g: BkGraph, kappa: float, rng: np.random.Generator, log: dict | None = None
) -> BkGraph:
    """Insert round(kappa*|E|) edges sampled uniformly from the absent pairs.

    Sparse graphs use rejection sampling; once the request is a sizeable
    share of the absent pool the pool is enumerated instead so the draw
    cannot stall near saturation.
    """
    if kappa < 0.0:
        raise InvalidSeverityError(f"kappa must be >= 0, got {kappa}")
    n = g.node_count
    k = _round_half_away(kappa * g.edge_count)
    free = n * (n - 1) // 2 - g.edge_count
    if k > free:
        raise GraphSaturatedError(
            f"cannot add {k} edges; only {free} node pairs are absent"
        )
    pre = np.array([w for _, _, w in g.weighted_edges()], dtype=np.int64)
    weights = g.edge_weight_map()
    added: list[list[int]] = []
    if 4 * k >= free:
        pool = _enumerate_nonedges(weights, n)
        picks = rng.choice(len(pool), size=k, replace=False) if k else []
        chosen = [pool[int(i)] for i in picks]
    else:
        chosen = []
        taken = set()
        while len(chosen) < k:
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            if u == v:
                continue
            e = (u, v) if u < v else (v, u)
            if e in weights or e in taken:
                continue
            taken.add(e)
            chosen.append(e)
    for e in chosen:
        weights[e] = _new_edge_weight(pre, rng)
        added.append([e[0], e[1]])
    if log is not None:
        log["added_edges"] = sorted(added)
    return g.replace_edges(weights)


def _sample_nonedge(
    weights: dict[tuple[int, int], int], n: int, rng: np.random.Generator
) -> tuple[int, int] | None:
    """Uniform draw from the currently absent pairs; None when saturated.

    Rejection sampling while the graph is sparse enough, full enumeration
    once density makes rejection wasteful.
    """
    total = n * (n - 1) // 2
    free = total - len(weights)
    if free == 0:
        return None
    if len(weights) < 0.9 * total:
        while True:
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            if u == v:
                continue
            e = (u, v) if u < v else (v, u)
            if e not in weights:
                return e
    pool = sorted(
        (u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in weights
    )
    return pool[int(rng.integers(len(pool)))]


def weight_noise(
    g: BkGraph,
    kappa_sigma: float,
    variant: str = "remove",
    rng: np.random.Generator | None = None,
    log: dict | None = None,
) -> BkGraph:
    """Add integer-rounded zero-mean Gaussian noise to every edge weight.

    An edge whose noised weight falls below 1 is deleted; under the
    "replace" variant each deletion is followed by inserting a uniformly
    chosen absent pair with weight drawn from the pre-perturbation weight
    distribution, conserving the edge count (deletions are only dropped if
    the absent-pair pool is empty, which is logged).
    """
    if kappa_sigma < 0.0:
        raise InvalidSeverityError(f"kappa_sigma must be >= 0, got {kappa_sigma}")
    if variant not in VARIANTS["noise"]:
        raise DescriptorError(f"weight-noise variant must be one of {VARIANTS['noise']}")
    edges = _edge_array(g)
    pre = np.array([g.weight(u, v) for u, v in edges], dtype=np.int64)
    noise = _round_half_away_arr(rng.normal(0.0, kappa_sigma, size=len(edges)))
    noised = pre + noise
    weights: dict[tuple[int, int], int] = {}
    flagged: list[tuple[int, int]] = []
    for e, w in zip(edges, noised):
        if w < 1:
            flagged.append(e)
        else:
            weights[e] = int(w)
    replaced = []
    dropped = []
    if variant == "replace":
        for e in flagged:
            pick = _sample_nonedge(weights, g.node_count, rng)
            if pick is None:
                dropped.append(list(e))
                continue
            weights[pick] = _new_edge_weight(pre, rng)
            replaced.append([list(e), list(pick)])
    if log is not None:
        log["deleted_edges"] = sorted([list(e) for e in flagged])
        if variant == "replace":
            log["replacements"] = replaced
            log["dropped_replacements"] = dropped
    return g.replace_edges(weights)


def _check_partition(g: BkGraph, clusters: list[NodeSet]) -> None:
    flat = [v for cluster in clusters for v in cluster]
    if len(flat) != len(set(flat)) or sorted(flat) != list(range(g.node_count)):
        raise InvalidClustersError("clusters must partition the node set")


def isolate_nodes(
    g: BkGraph,
    kappa: float,
    variant: str = "random",
    clusters: list[NodeSet] | None = None,
    rng: np.random.Generator | None = None,
    log: dict | None = None,
) -> BkGraph:
    """Strip every incident edge off round(kappa*node_count) nodes.

    "random" picks uniformly over all nodes; "per-cluster" splits the count
    as evenly as possible across clusters, with the remainder going to the
    lowest cluster indices.
    """
    if not (0.0 <= kappa <= 1.0):
        raise InvalidSeverityError(f"kappa must be in [0, 1], got {kappa}")
    if variant not in VARIANTS["isolate"]:
        raise DescriptorError(f"isolate variant must be one of {VARIANTS['isolate']}")
    k_total = _round_half_away(kappa * g.node_count)
    if variant == "per-cluster":
        if clusters is None:
            raise MissingClustersError("per-cluster isolation requires clusters")
        _check_partition(g, clusters)
        selected: list[int] = []
        base, extra = divmod(k_total, len(clusters))
        for c, cluster in enumerate(clusters):
            k_c = base + (1 if c < extra else 0)
            if k_c > len(cluster):
                raise InvalidClustersError(
                    f"cluster {c} has {len(cluster)} nodes, cannot isolate {k_c}"
                )
            picks = rng.choice(len(cluster), size=k_c, replace=False)
            selected.extend(cluster[i] for i in picks)
    else:
        picks = rng.choice(g.node_count, size=k_total, replace=False)
        selected = [int(i) for i in picks]
    hit = set(selected)
    weights = {
        e: w for e, w in g.edge_weight_map().items()
        if e[0] not in hit and e[1] not in hit
    }
    if log is not None:
        log["isolated_nodes"] = sorted(selected)
    return g.replace_edges(weights)


def detach_rewire(
    g: BkGraph,
    clusters: list[NodeSet],
    kappa: float,
    mode: str = "drain",
    rng: np.random.Generator | None = None,
    log: dict | None = None,
) -> tuple[BkGraph, list[NodeSet]]:
    """Detach round(kappa*cluster_size) nodes per source cluster and rewire
    them into a different cluster.

    Each moved node loses all its edges, then gains an edge to every node
    currently assigned to its target cluster (original members that did not
    move out, plus nodes moved in earlier). "drain" moves nodes only from
    the last cluster into the first; "exchange" moves from every cluster c
    into cluster (c+1) mod C. Returns the new graph and updated cluster
    assignments.
    """
    if not (0.0 <= kappa <= 1.0):
        raise InvalidSeverityError(f"kappa must be in [0, 1], got {kappa}")
    if mode not in VARIANTS["detach"]:
        raise DescriptorError(f"detach mode must be one of {VARIANTS['detach']}")
    _check_partition(g, clusters)
    C = len(clusters)
    if mode == "drain":
        sources = [C - 1] if C > 1 else [0]
    else:
        sources = list(range(C))

    # Select movers per source cluster first, then detach, then attach in
    # source-cluster order so membership at attach time is well defined.
    moves: list[tuple[int, list[int]]] = []  # (target cluster, moved nodes)
    members: list[list[int]] = [list(c) for c in clusters]
    all_moved: set[int] = set()
    for c in sources:
        k = _round_half_away(kappa * len(clusters[c]))
        picks = rng.choice(len(clusters[c]), size=k, replace=False)
        moved = [clusters[c][i] for i in picks]
        target = 0 if mode == "drain" else (c + 1) % C
        moves.append((target, moved))
        moved_set = set(moved)
        members[c] = [v for v in members[c] if v not in moved_set]
        all_moved.update(moved)

    weights = {
        e: w
        for e, w in g.edge_weight_map().items()
        if e[0] not in all_moved and e[1] not in all_moved
    }
    pre = np.array([w for _, _, w in g.weighted_edges()], dtype=np.int64)
    moved_log = []
    for target, moved in moves:
        for x in moved:
            for t in members[target]:
                e = (x, t) if x < t else (t, x)
                weights[e] = _new_edge_weight(pre, rng)
            members[target].append(x)
            moved_log.append([x, target])
    new_clusters = [tuple(m) for m in members]
    if log is not None:
        log["moved_nodes"] = moved_log
    return g.replace_edges(weights), new_clusters


@dataclass
class PerturbOutcome:
    graph: BkGraph
    clusters: list[NodeSet] | None
    provenance: dict


def apply_perturbation(
    g: BkGraph, p: Perturbation, clusters: list[NodeSet] | None = None
) -> PerturbOutcome:
    """Run one descriptor against a graph, collecting audit provenance."""
    rng = np.random.default_rng(p.seed)
    log: dict = {
        "kind": p.kind,
        "kappa": p.kappa,
        "variant": p.effective_variant,
        "seed": p.seed,
    }
    new_clusters = clusters
    if p.kind == "remove":
        out = remove_edges(g, p.kappa, rng, log)
    elif p.kind == "add":
        out = add_edges(g, p.kappa, rng, log)
    elif p.kind == "noise":
        out = weight_noise(g, p.kappa, p.effective_variant, rng, log)
    elif p.kind == "isolate":
        out = isolate_nodes(g, p.kappa, p.effective_variant, clusters, rng, log)
    else:
        if clusters is None:
            raise MissingClustersError("detach-and-rewire requires clusters")
        out, new_clusters = detach_rewire(
            g, clusters, p.kappa, p.effective_variant, rng, log
        )
    return PerturbOutcome(graph=out, clusters=new_clusters, provenance=log)
