import math

import numpy as np
import pytest
from scipy import integrate, stats

from bkbench.graph import connected_components
from bkbench.synth import (
    InvalidParamError,
    SynthParams,
    _blocked_features,
    build_cluster_graph,
    generate_dataset,
    load_bundle,
    overlap_coefficient,
    save_bundle,
    skew_normal_mean,
    skew_normal_pdf,
    skew_normal_sample,
)

PAPER = dict(delta_xi=-0.57, omega=0.5, alpha=1.8)


class TestClusterGraph:
    def test_paper_shape(self):
        g, clusters = build_cluster_graph(2, 16)
        assert g.node_count == 32
        assert g.edge_count == 240
        assert len(connected_components(g)) == 2
        assert clusters == [tuple(range(16)), tuple(range(16, 32))]

    def test_single_node(self):
        g, clusters = build_cluster_graph(1, 1)
        assert g.node_count == 1
        assert g.edge_count == 0
        assert clusters == [(0,)]

    def test_degree_sequence(self):
        g, _ = build_cluster_graph(3, 4)
        assert all(g.degree(v) == 3 for v in range(g.node_count))


class TestPdf:
    def test_alpha_zero_is_normal(self):
        assert skew_normal_pdf(0.0, 0.0, 1.0, 0.0) == pytest.approx(
            1.0 / math.sqrt(2 * math.pi)
        )

    def test_integrates_to_one(self):
        # independent quadrature oracle
        val, err = integrate.quad(
            lambda x: skew_normal_pdf(x, -0.285, 0.5, 1.8), -np.inf, np.inf
        )
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_reflection_identity(self):
        xs = np.linspace(-3, 3, 41)
        left = skew_normal_pdf(xs, 0.3, 0.7, 2.1)
        right = skew_normal_pdf(-xs, -0.3, 0.7, -2.1)
        assert np.allclose(left, right)

    def test_rejects_bad_omega(self):
        with pytest.raises(InvalidParamError):
            skew_normal_pdf(0.0, 0.0, 0.0, 1.0)


class TestSampling:
    def test_alpha_zero_mean(self):
        rng = np.random.default_rng(0)
        draws = skew_normal_sample(1.5, 2.0, 0.0, rng, size=100_000)
        assert abs(draws.mean() - 1.5) < 3 * 2.0 / math.sqrt(100_000)

    def test_matches_density(self):
        # KS statistic against scipy's own skew-normal CDF
        rng = np.random.default_rng(1)
        draws = skew_normal_sample(-0.285, 0.5, 1.8, rng, size=100_000)
        ks = stats.kstest(draws, stats.skewnorm(1.8, loc=-0.285, scale=0.5).cdf)
        assert ks.statistic < 0.01

    def test_closed_form_mean(self):
        rng = np.random.default_rng(2)
        draws = skew_normal_sample(-0.285, 0.5, 1.8, rng, size=200_000)
        assert draws.mean() == pytest.approx(
            skew_normal_mean(-0.285, 0.5, 1.8), abs=3e-3
        )

    def test_deterministic(self):
        a = skew_normal_sample(0.0, 1.0, 1.0, np.random.default_rng(9), size=64)
        b = skew_normal_sample(0.0, 1.0, 1.0, np.random.default_rng(9), size=64)
        assert np.array_equal(a, b)


class TestOverlap:
    def test_paper_value(self):
        assert overlap_coefficient(**PAPER) == pytest.approx(0.904, abs=0.005)

    def test_identical_distributions(self):
        assert overlap_coefficient(0.0, 0.5, 0.0) == pytest.approx(1.0, abs=1e-6)

    def test_near_disjoint(self):
        assert overlap_coefficient(-10.0, 0.5, 1.8) < 1e-3

    def test_reflection_identity(self):
        # flipping the separation sign mirrors the pair, which is the same
        # as keeping the separation and flipping the skewness
        assert overlap_coefficient(-0.57, 0.5, 1.8) == pytest.approx(
            overlap_coefficient(0.57, 0.5, -1.8), abs=1e-9
        )

    def test_below_one_when_distinct(self):
        assert overlap_coefficient(-0.3, 0.5, 1.8) < 1.0
        # same location but mirrored skews still differ
        assert overlap_coefficient(0.0, 0.5, 1.8) < 1.0

    def test_against_quadrature_oracle(self):
        # adaptive Simpson vs scipy's adaptive Gauss-Kronrod
        for d, w, a in [(-0.57, 0.5, 1.8), (-1.2, 0.3, 0.7), (0.4, 1.1, -2.0)]:
            def integrand(x):
                fa = skew_normal_pdf(x, d / 2, w, a)
                fi = skew_normal_pdf(x, -d / 2, w, -a)
                return min(fa, fi)

            ref, _ = integrate.quad(integrand, -12 * w - abs(d), 12 * w + abs(d), limit=200)
            assert overlap_coefficient(d, w, a) == pytest.approx(ref, abs=1e-5)


class TestGenerate:
    def test_paper_dimensions(self):
        ds = generate_dataset(SynthParams(seed=4))
        assert ds.features.shape == (1200, 32)
        assert ds.labels.shape == (1200,)
        assert np.bincount(ds.labels).tolist() == [600, 600]
        assert ds.graph.edge_count == 240

    def test_minimal(self):
        ds = generate_dataset(SynthParams(C=1, M=3, N=1, seed=0))
        assert ds.features.shape == (1, 3)
        assert ds.labels.tolist() == [0]

    def test_bitwise_deterministic(self):
        p = SynthParams(seed=123)
        a = generate_dataset(p)
        b = generate_dataset(p)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert a.graph == b.graph

    def test_active_block_matches_label(self):
        # regenerate the pre-shuffle blocks and confirm the shuffled rows
        # line up, then confirm each row's active block is its label's cluster
        p = SynthParams(C=3, M=4, N=50, seed=8)
        ds = generate_dataset(p)
        X, y, perm = _blocked_features(p)
        assert np.array_equal(ds.features, X[perm])
        assert np.array_equal(ds.labels, y[perm])
        for c in range(p.C):
            assert np.all(y[c * p.N : (c + 1) * p.N] == c)

    def test_mean_gap_matches_closed_form(self):
        p = SynthParams(N=4000, seed=21)
        ds = generate_dataset(p)
        active_mean = np.mean(
            [ds.features[ds.labels == c][:, list(ds.clusters[c])].mean() for c in range(2)]
        )
        inactive_mean = np.mean(
            [ds.features[ds.labels == c][:, list(ds.clusters[1 - c])].mean() for c in range(2)]
        )
        expected = skew_normal_mean(p.delta_xi / 2, p.omega, p.alpha) - skew_normal_mean(
            -p.delta_xi / 2, p.omega, -p.alpha
        )
        assert active_mean - inactive_mean == pytest.approx(expected, abs=5e-3)

    def test_rejects_bad_params(self):
        with pytest.raises(InvalidParamError):
            SynthParams(C=0)
        with pytest.raises(InvalidParamError):
            SynthParams(omega=-1.0)


class TestBundle:
    def test_round_trip_bytes(self, tmp_path):
        ds = generate_dataset(SynthParams(C=2, M=4, N=10, seed=3))
        d1 = tmp_path / "one"
        d2 = tmp_path / "two"
        save_bundle(ds, d1)
        save_bundle(load_bundle(d1), d2)
        for name in ("graph.tsv", "features.csv", "labels.csv", "meta.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name

    def test_values_exact(self, tmp_path):
        ds = generate_dataset(SynthParams(C=2, M=4, N=10, seed=3))
        save_bundle(ds, tmp_path / "b")
        back = load_bundle(tmp_path / "b")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert back.graph == ds.graph
        assert back.params == ds.params
        assert back.clusters == ds.clusters
