"""Undirected background-knowledge graphs: construction, diagnostics, TSV I/O.

Graphs are simple (no self-loops, no parallel edges) with positive integer
edge weights (evidence counts). Instances are immutable after construction
and safe to share across worker processes.
"""
from __future__ import annotations

import re
from collections import deque
from typing import Iterable, Iterator, Sequence

NodeSet = tuple[int, ...]


class GraphError(ValueError):
    pass


class InvalidNodeError(GraphError):
    """Endpoint outside [0, node_count)."""


class SelfLoopError(GraphError):
    """Edge with identical endpoints."""


class InvalidWeightError(GraphError):
    """Edge weight below 1 or not an integer."""


class EmptyClusterError(GraphError):
    """Diagnostic asked for an empty node set."""


class EdgeListParseError(GraphError):
    """Malformed edge-list file; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class BkGraph:
    """Simple undirected weighted graph over nodes 0..node_count-1.

    Neighbor lists are kept sorted ascending so every iteration order (and
    therefore all downstream seeded sampling) is reproducible.
    """

    __slots__ = ("node_count", "_weights", "_neighbors")

    def __init__(self, node_count: int, weights: dict[tuple[int, int], int]):
        # `weights` must already be canonical (u < v) and validated; use
        # build_graph() for untrusted input.
        self.node_count = node_count
        self._weights = weights
        nbrs: list[list[int]] = [[] for _ in range(node_count)]
        for u, v in weights:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self._neighbors: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(ns)) for ns in nbrs
        )

    @property
    def edge_count(self) -> int:
        return len(self._weights)

    def edges(self) -> Iterator[tuple[int, int]]:
        """Canonical edge order: ascending (u, v) with u < v."""
        return iter(sorted(self._weights))

    def weight(self, u: int, v: int) -> int:
        return self._weights[_canon(u, v)]

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and _canon(u, v) in self._weights

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._neighbors[v]

    def degree(self, v: int) -> int:
        return len(self._neighbors[v])

    def weighted_edges(self) -> Iterator[tuple[int, int, int]]:
        for u, v in self.edges():
            yield u, v, self._weights[(u, v)]

    def edge_weight_map(self) -> dict[tuple[int, int], int]:
        """Copy of the canonical (u < v) edge-to-weight mapping."""
        return dict(self._weights)

    def replace_edges(self, weights: dict[tuple[int, int], int]) -> "BkGraph":
        """New graph over the same nodes with a different edge set."""
        return BkGraph(self.node_count, dict(weights))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, BkGraph)
            and self.node_count == other.node_count
            and self._weights == other._weights
        )

    def __repr__(self) -> str:
        return f"BkGraph(nodes={self.node_count}, edges={self.edge_count})"


def build_graph(
    node_count: int, edge_list: Iterable[tuple[int, int, int]]
) -> BkGraph:
    """Validate and deduplicate an edge list into a BkGraph.

    Duplicate (u, v) entries are allowed in the input; the last weight wins.
    """
    if node_count < 0:
        raise InvalidNodeError(f"node_count must be non-negative, got {node_count}")
    weights: dict[tuple[int, int], int] = {}
    for u, v, w in edge_list:
        if not (0 <= u < node_count) or not (0 <= v < node_count):
            raise InvalidNodeError(
                f"edge ({u}, {v}) has an endpoint outside [0, {node_count})"
            )
        if u == v:
            raise SelfLoopError(f"self-loop on node {u} rejected")
        if int(w) != w or w < 1:
            raise InvalidWeightError(f"edge ({u}, {v}) has weight {w}; need integer >= 1")
        weights[_canon(u, v)] = int(w)
    return BkGraph(node_count, weights)


def connected_components(g: BkGraph) -> list[NodeSet]:
    """Partition of all nodes into components, ordered by smallest member."""
    seen = [False] * g.node_count
    out: list[NodeSet] = []
    for start in range(g.node_count):
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        out.append(tuple(sorted(comp)))
    return out


def _check_cluster(g: BkGraph, cluster: Sequence[int]) -> None:
    if len(cluster) == 0:
        raise EmptyClusterError("cluster must be non-empty")
    if len(set(cluster)) != len(cluster):
        raise GraphError("cluster contains duplicate node ids")
    for v in cluster:
        if not (0 <= v < g.node_count):
            raise InvalidNodeError(f"cluster node {v} outside [0, {g.node_count})")


def cluster_aspl(g: BkGraph, cluster: Sequence[int]) -> float:
    """Average shortest-path length inside the subgraph induced on `cluster`.

    Only pairs connected within the induced subgraph enter the mean; pairs in
    different induced components are excluded. Singleton clusters (and
    clusters with no connected pair at all) yield 0.
    """
    _check_cluster(g, cluster)
    members = set(cluster)
    total = 0
    pairs = 0
    for src in cluster:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if v in members and v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        total += sum(d for node, d in dist.items() if node != src)
        pairs += len(dist) - 1
    if pairs == 0:
        return 0.0
    # Each unordered pair was counted from both endpoints.
    return total / pairs


def k_hop_receptive_field(
    g: BkGraph, v: int, k: int, include_self: bool = True
) -> int:
    """Number of distinct nodes reachable from v within k edges.

    With include_self (the default, matching self-loop message passing) the
    node itself counts toward the cardinality.
    """
    if not (0 <= v < g.node_count):
        raise InvalidNodeError(f"node {v} outside [0, {g.node_count})")
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for w in g.neighbors(u):
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return len(dist) if include_self else len(dist) - 1


# ---------------------------------------------------------------------------
# Edge-list TSV format
#
# One edge per line: u<TAB>v<TAB>weight, weight optional (defaults to 1),
# lines starting with '#' are comments. The writer emits a '# nodes=N'
# header so isolated trailing nodes survive round trips; readers treat it
# as an ordinary comment but ours recovers N from it. Files without the
# header fall back to max endpoint + 1.
# ---------------------------------------------------------------------------

_NODES_HEADER = re.compile(r"#\s*nodes\s*=\s*(\d+)\s*$")


def format_edge_tsv(g: BkGraph) -> str:
    lines = [f"# nodes={g.node_count}"]
    for u, v, w in g.weighted_edges():
        lines.append(f"{u}\t{v}\t{w}")
    return "\n".join(lines) + "\n"


def write_edge_tsv(g: BkGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_edge_tsv(g))


def parse_edge_tsv(text: str) -> BkGraph:
    node_count: int | None = None
    edges: list[tuple[int, int, int]] = []
    max_node = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _NODES_HEADER.match(line)
            if m and node_count is None:
                node_count = int(m.group(1))
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise EdgeListParseError(
                f"expected 2 or 3 tab-separated fields, got {len(fields)}", lineno
            )
        try:
            u = int(fields[0])
            v = int(fields[1])
            w = int(fields[2]) if len(fields) == 3 else 1
        except ValueError as exc:
            raise EdgeListParseError(str(exc), lineno) from None
        if u == v:
            raise EdgeListParseError(f"self-loop on node {u}", lineno)
        if w < 1:
            raise EdgeListParseError(f"weight {w} below 1", lineno)
        edges.append((u, v, w))
        max_node = max(max_node, u, v)
    if node_count is None:
        node_count = max_node + 1
    return build_graph(node_count, edges)


def read_edge_tsv(path) -> BkGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_tsv(fh.read())


# ---------------------------------------------------------------------------
# Cluster files: one cluster per line, whitespace-separated node ids.
# ---------------------------------------------------------------------------


def write_clusters(clusters: Sequence[Sequence[int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cluster in clusters:
            fh.write(" ".join(str(v) for v in cluster) + "\n")


def read_clusters(path) -> list[NodeSet]:
    clusters: list[NodeSet] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                clusters.append(tuple(int(tok) for tok in line.split()))
            except ValueError as exc:
                raise EdgeListParseError(str(exc), lineno) from None
    return clusters
