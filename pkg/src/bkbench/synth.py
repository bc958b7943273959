"""Synthetic graph-classification data: clustered graphs + skew-normal features.

The generator produces a fixed background-knowledge graph of C fully
connected clusters of M nodes each, plus per-sample node features where the
cluster matching a sample's class is drawn from an "active" skew-normal
distribution and every other node from the mirrored "inactive" one.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .graph import BkGraph, NodeSet, build_graph, read_edge_tsv, write_edge_tsv

SQRT_2PI = math.sqrt(2.0 * math.pi)


class InvalidParamError(ValueError):
    pass


def _phi(t: float) -> float:
    return math.exp(-0.5 * t * t) / SQRT_2PI


def _Phi(t: float) -> float:
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


def skew_normal_pdf(x, xi: float, omega: float, alpha: float):
    """Density (2/omega) * phi(t) * Phi(alpha*t) with t = (x - xi)/omega.

    Accepts scalars or numpy arrays for x.
    """
    if omega <= 0:
        raise InvalidParamError(f"omega must be positive, got {omega}")
    t = (np.asarray(x, dtype=float) - xi) / omega
    dens = (2.0 / omega) * np.exp(-0.5 * t * t) / SQRT_2PI * ndtr(alpha * t)
    if np.ndim(x) == 0:
        return float(dens)
    return dens


def skew_normal_mean(xi: float, omega: float, alpha: float) -> float:
    """Closed-form mean xi + omega * delta * sqrt(2/pi), delta = alpha/sqrt(1+alpha^2)."""
    delta = alpha / math.sqrt(1.0 + alpha * alpha)
    return xi + omega * delta * math.sqrt(2.0 / math.pi)


def skew_normal_sample(
    xi: float, omega: float, alpha: float, rng: np.random.Generator, size=None
):
    """Draw from the skew normal via the bivariate conditioning construction.

    Draws (u0, u1) standard bivariate normal with correlation
    delta = alpha/sqrt(1+alpha^2); the sign of u0 decides whether u1 is
    reflected. Exact and rejection-free, two normal draws per sample.
    """
    if omega <= 0:
        raise InvalidParamError(f"omega must be positive, got {omega}")
    delta = alpha / math.sqrt(1.0 + alpha * alpha)
    shape = (2,) if size is None else (2,) + tuple(np.atleast_1d(size))
    u = rng.standard_normal(shape)
    u0 = u[0]
    u1 = delta * u0 + math.sqrt(1.0 - delta * delta) * u[1]
    z = np.where(u0 >= 0, u1, -u1)
    out = xi + omega * z
    if size is None:
        return float(out)
    return out


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    """Classic recursive adaptive Simpson quadrature with absolute tolerance."""

    def simpson(lo, flo, hi, fhi, fmid):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, flo, hi, fhi, fmid, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flmid = f(lmid)
        frmid = f(rmid)
        left = simpson(lo, flo, mid, fmid, flmid)
        right = simpson(mid, fmid, hi, fhi, frmid)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, flo, mid, fmid, flmid, left, eps / 2.0, depth - 1) + recurse(
            mid, fmid, hi, fhi, frmid, right, eps / 2.0, depth - 1
        )

    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fmid = f(mid)
    whole = simpson(a, fa, b, fb, fmid)
    return recurse(a, fa, b, fb, fmid, whole, tol, 48)


def overlap_coefficient(delta_xi: float, omega: float, alpha: float) -> float:
    """Overlapping coefficient of the active and inactive feature densities.

    Integrates min(f_active, f_inactive) with f_active = SN(delta_xi/2,
    omega, alpha) and f_inactive = SN(-delta_xi/2, omega, -alpha), by
    adaptive Simpson quadrature to absolute tolerance 1e-6 over the union
    of both 10-omega windows. Result clamped to [0, 1].
    """
    if omega <= 0:
        raise InvalidParamError(f"omega must be positive, got {omega}")
    xi_a = delta_xi / 2.0
    xi_i = -delta_xi / 2.0

    def integrand(x: float) -> float:
        ta = (x - xi_a) / omega
        ti = (x - xi_i) / omega
        fa = (2.0 / omega) * _phi(ta) * _Phi(alpha * ta)
        fi = (2.0 / omega) * _phi(ti) * _Phi(-alpha * ti)
        return fa if fa < fi else fi

    lo = min(xi_a, xi_i) - 10.0 * omega
    hi = max(xi_a, xi_i) + 10.0 * omega
    val = _adaptive_simpson(integrand, lo, hi, 1e-6)
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class SynthParams:
    C: int = 2
    M: int = 16
    N: int = 600
    delta_xi: float = -0.57
    omega: float = 0.5
    alpha: float = 1.8
    seed: int = 0

    def __post_init__(self):
        if self.C < 1 or self.M < 1 or self.N < 1:
            raise InvalidParamError("C, M and N must all be >= 1")
        if self.omega <= 0:
            raise InvalidParamError(f"omega must be positive, got {self.omega}")


@dataclass
class SynthDataset:
    """Shared graph, per-sample node features and class labels."""

    graph: BkGraph
    features: np.ndarray  # (C*N, C*M) float64
    labels: np.ndarray  # (C*N,) int64 in [0, C)
    clusters: list[NodeSet]
    params: SynthParams

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.params.C


def build_cluster_graph(C: int, M: int) -> tuple[BkGraph, list[NodeSet]]:
    """C fully connected clusters of M nodes, no inter-cluster edges.

    Cluster c owns nodes cM..cM+M-1; every intra-cluster pair gets an edge
    of weight 1, so each node has degree M-1 and the graph has C*M*(M-1)/2
    edges in total.
    """
    if C < 1 or M < 1:
        raise InvalidParamError("C and M must be >= 1")
    edges = []
    clusters: list[NodeSet] = []
    for c in range(C):
        base = c * M
        clusters.append(tuple(range(base, base + M)))
        for i in range(M):
            for j in range(i + 1, M):
                edges.append((base + i, base + j, 1))
    return build_graph(C * M, edges), clusters


def _blocked_features(params: SynthParams):
    """Class-blocked feature matrix, labels and the shuffle permutation.

    Feature sampling and row shuffling use RNG streams spawned separately
    from the master seed, so either is stable if the other changes.
    """
    C, M, N = params.C, params.M, params.N
    feat_ss, shuffle_ss = np.random.SeedSequence(params.seed).spawn(2)
    rng = np.random.default_rng(feat_ss)
    X = np.empty((C * N, C * M), dtype=float)
    for c in range(C):
        rows = slice(c * N, (c + 1) * N)
        cols = np.arange(c * M, (c + 1) * M)
        other = np.setdiff1d(np.arange(C * M), cols)
        X[rows, cols[0] : cols[-1] + 1] = skew_normal_sample(
            params.delta_xi / 2.0, params.omega, params.alpha, rng, size=(N, M)
        )
        if other.size:
            X[np.ix_(np.arange(c * N, (c + 1) * N), other)] = skew_normal_sample(
                -params.delta_xi / 2.0, params.omega, -params.alpha, rng,
                size=(N, other.size),
            )
    y = np.repeat(np.arange(C, dtype=np.int64), N)
    perm = np.random.default_rng(shuffle_ss).permutation(C * N)
    return X, y, perm


def generate_dataset(params: SynthParams) -> SynthDataset:
    """Deterministic dataset for the given parameters (bitwise per seed)."""
    graph, clusters = build_cluster_graph(params.C, params.M)
    X, y, perm = _blocked_features(params)
    return SynthDataset(
        graph=graph,
        features=X[perm],
        labels=y[perm],
        clusters=clusters,
        params=params,
    )


# ---------------------------------------------------------------------------
# Dataset bundle directory: graph.tsv, features.csv, labels.csv, meta.json.
# Floats are written with repr() so the round trip is bit-exact.
# ---------------------------------------------------------------------------


def save_bundle(dataset: SynthDataset, out_dir) -> None:
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    write_edge_tsv(dataset.graph, out / "graph.tsv")
    n_cols = dataset.features.shape[1]
    with open(out / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(str(j) for j in range(n_cols)) + "\n")
        for row in dataset.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label\n")
        for lab in dataset.labels:
            fh.write(f"{int(lab)}\n")
    with open(out / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(asdict(dataset.params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(in_dir) -> SynthDataset:
    src = Path(in_dir)
    with open(src / "meta.json", "r", encoding="utf-8") as fh:
        params = SynthParams(**json.load(fh))
    graph = read_edge_tsv(src / "graph.tsv")
    with open(src / "features.csv", "r", encoding="utf-8") as fh:
        header = fh.readline()
        n_cols = len(header.strip().split(","))
        rows = [
            [float(tok) for tok in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    features = np.array(rows, dtype=float).reshape(len(rows), n_cols)
    with open(src / "labels.csv", "r", encoding="utf-8") as fh:
        fh.readline()
        labels = np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    clusters = [
        tuple(range(c * params.M, (c + 1) * params.M)) for c in range(params.C)
    ]
    return SynthDataset(
        graph=graph, features=features, labels=labels, clusters=clusters, params=params
    )
