import numpy as np
import pytest

from bkbench.graph import (
    EdgeListParseError,
    EmptyClusterError,
    InvalidNodeError,
    InvalidWeightError,
    SelfLoopError,
    build_graph,
    cluster_aspl,
    connected_components,
    format_edge_tsv,
    k_hop_receptive_field,
    parse_edge_tsv,
    read_clusters,
    read_edge_tsv,
    write_clusters,
    write_edge_tsv,
)
from bkbench.synth import build_cluster_graph


def complete_graph(n):
    return build_graph(n, [(u, v, 1) for u in range(n) for v in range(u + 1, n)])


def random_graph(rng, max_nodes=64):
    n = int(rng.integers(1, max_nodes + 1))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.15:
                edges.append((u, v, int(rng.integers(1, 10))))
    return build_graph(n, edges)


class TestBuild:
    def test_minimal(self):
        g = build_graph(2, [(0, 1, 1)])
        assert g.edge_count == 1
        assert g.weight(0, 1) == 1

    def test_synthetic_edge_count(self):
        g, _ = build_cluster_graph(2, 16)
        assert g.edge_count == 240  # C*M*(M-1)/2

    def test_dedup_keeps_last(self):
        g = build_graph(3, [(0, 1, 1), (1, 0, 5)])
        assert g.edge_count == 1
        assert g.weight(0, 1) == 5

    def test_out_of_range(self):
        with pytest.raises(InvalidNodeError):
            build_graph(2, [(0, 2, 1)])

    def test_self_loop(self):
        with pytest.raises(SelfLoopError):
            build_graph(2, [(1, 1, 1)])

    def test_bad_weight(self):
        with pytest.raises(InvalidWeightError):
            build_graph(2, [(0, 1, 0)])

    def test_neighbors_sorted(self):
        g = build_graph(5, [(3, 0, 1), (0, 4, 1), (1, 0, 1)])
        assert g.neighbors(0) == (1, 3, 4)


class TestAspl:
    def test_complete_cluster(self):
        g = complete_graph(16)
        assert cluster_aspl(g, tuple(range(16))) == 1.0

    def test_path(self):
        g = build_graph(3, [(0, 1, 1), (1, 2, 1)])
        assert cluster_aspl(g, (0, 1, 2)) == pytest.approx((1 + 1 + 2) / 3)

    def test_edgeless_cluster(self):
        g = build_graph(4, [])
        assert cluster_aspl(g, (0, 1, 2, 3)) == 0.0

    def test_singleton(self):
        g = complete_graph(4)
        assert cluster_aspl(g, (2,)) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyClusterError):
            cluster_aspl(complete_graph(3), ())

    def test_induced_only(self):
        # 0-1 linked through outside node 2; induced subgraph on {0,1} is
        # disconnected so the pair is excluded entirely
        g = build_graph(3, [(0, 2, 1), (1, 2, 1)])
        assert cluster_aspl(g, (0, 1)) == 0.0

    def test_complete_induced_always_one(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            g = random_graph(rng, 24)
            comp = [
                (u, v, 1) for u in range(g.node_count) for v in range(u + 1, g.node_count)
            ]
            full = build_graph(g.node_count, comp)
            if full.node_count >= 2:
                assert cluster_aspl(full, tuple(range(full.node_count))) == 1.0


class TestReceptiveField:
    def test_complete_cluster_one_hop(self):
        g = complete_graph(16)
        assert k_hop_receptive_field(g, 0, 1) == 16

    def test_isolated(self):
        g = build_graph(4, [(1, 2, 1)])
        assert k_hop_receptive_field(g, 0, 3) == 1
        assert k_hop_receptive_field(g, 0, 3, include_self=False) == 0

    def test_path_two_hops(self):
        g = build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
        assert k_hop_receptive_field(g, 0, 2) == 3

    def test_monotone_bounded(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            g = random_graph(rng, 32)
            v = int(rng.integers(g.node_count))
            prev = 0
            for k in range(1, 6):
                rf = k_hop_receptive_field(g, v, k)
                assert prev <= rf <= g.node_count
                prev = rf


class TestComponents:
    def test_complete(self):
        assert len(connected_components(complete_graph(8))) == 1

    def test_synthetic_clusters(self):
        g, _ = build_cluster_graph(2, 16)
        comps = connected_components(g)
        assert len(comps) == 2
        assert sorted(len(c) for c in comps) == [16, 16]

    def test_edgeless(self):
        comps = connected_components(build_graph(5, []))
        assert comps == [(0,), (1,), (2,), (3,), (4,)]

    def test_partition(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = random_graph(rng)
            comps = connected_components(g)
            flat = sorted(v for c in comps for v in c)
            assert flat == list(range(g.node_count))


class TestOracle:
    """Diagnostics must agree exactly with networkx on random graphs."""

    def test_against_networkx(self):
        nx = pytest.importorskip("networkx")
        rng = np.random.default_rng(77)
        for _ in range(30):
            g = random_graph(rng)
            G = nx.Graph()
            G.add_nodes_from(range(g.node_count))
            G.add_edges_from(g.edges())
            size = int(rng.integers(1, g.node_count + 1))
            cluster = tuple(
                sorted(rng.choice(g.node_count, size=size, replace=False).tolist())
            )
            sub = G.subgraph(cluster)
            total = pairs = 0
            for src, dists in nx.all_pairs_shortest_path_length(sub):
                for dst, d in dists.items():
                    if dst != src:
                        total += d
                        pairs += 1
            expected = total / pairs if pairs else 0.0
            assert cluster_aspl(g, cluster) == pytest.approx(expected, abs=1e-12)
            v = int(rng.integers(g.node_count))
            k = int(rng.integers(1, 5))
            reach = nx.single_source_shortest_path_length(G, v, cutoff=k)
            assert k_hop_receptive_field(g, v, k) == len(reach)


class TestTsv:
    def test_round_trip_bytes(self, tmp_path):
        g = build_graph(6, [(4, 1, 3), (0, 5, 1), (2, 3, 7)])
        p1 = tmp_path / "a.tsv"
        p2 = tmp_path / "b.tsv"
        write_edge_tsv(g, p1)
        write_edge_tsv(read_edge_tsv(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_preserves_isolated_nodes(self, tmp_path):
        g = build_graph(10, [(0, 1, 1)])
        path = tmp_path / "g.tsv"
        write_edge_tsv(g, path)
        assert read_edge_tsv(path).node_count == 10

    def test_optional_weight_defaults_one(self):
        g = parse_edge_tsv("0\t1\n1\t2\t4\n")
        assert g.weight(0, 1) == 1
        assert g.weight(1, 2) == 4

    def test_comments_ignored(self):
        g = parse_edge_tsv("# a comment\n0\t1\t2\n")
        assert g.edge_count == 1

    def test_canonical_order(self):
        g = build_graph(4, [(3, 2, 1), (1, 0, 1)])
        body = [ln for ln in format_edge_tsv(g).splitlines() if not ln.startswith("#")]
        assert body == ["0\t1\t1", "2\t3\t1"]

    def test_parse_error_carries_line(self):
        with pytest.raises(EdgeListParseError) as err:
            parse_edge_tsv("0\t1\t1\nnot\tan\tedge\n")
        assert err.value.line == 2
        assert "line 2" in str(err.value)

    def test_self_loop_rejected(self):
        with pytest.raises(EdgeListParseError):
            parse_edge_tsv("2\t2\t1\n")


class TestClustersFile:
    def test_round_trip(self, tmp_path):
        clusters = [(0, 1, 2), (3, 4), (5,)]
        path = tmp_path / "c.txt"
        write_clusters(clusters, path)
        assert read_clusters(path) == clusters
