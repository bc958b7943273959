"""Model zoo and training: graph-informed GNNs and feature-only baselines.

Informed kinds (GCN, GATv2, ParallelGnnMlp) read the background-knowledge
graph; uninformed kinds (MLP, LogRegL1, LinearSVM) never receive it, and
the cluster-average variants see only the cluster assignments. All models
share one interface: fit(X, y) on raw sample rows and predict(X), so the
sweep layer can treat them uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import BkGraph, NodeSet
from .nn import (
    AdamState,
    AffineLayer,
    GcnLayer,
    Gatv2Layer,
    Parameter,
    ShapeError,
    adam_step,
    normalize_adjacency,
    softmax_cross_entropy,
    zero_grads,
)
from .synth import SynthDataset

MODEL_KINDS = (
    "GCN",
    "GATv2",
    "ParallelGnnMlp",
    "MLP",
    "LogRegL1",
    "LinearSVM",
    "ClusterAvgLogReg",
    "ClusterAvgSVM",
)

INFORMED_KINDS = ("GCN", "GATv2", "ParallelGnnMlp")
CLUSTER_KINDS = ("ClusterAvgLogReg", "ClusterAvgSVM")


class MissingGraphError(ValueError):
    pass


class MissingClustersError(ValueError):
    pass


class SplitInfeasibleError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    gnn_layers: int = 3
    hidden_dim: int = 16
    gnn_kind: str = "gatv2"  # branch flavor for ParallelGnnMlp
    mlp_hidden_layers: int = 2
    mlp_hidden_dim: int = 64
    l1_lambda: float = 1e-2
    svm_c: float = 1.0
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.mlp_hidden_layers not in (2, 3):
            raise ValueError("mlp_hidden_layers must be 2 or 3")
        if self.gnn_kind not in ("gcn", "gatv2"):
            raise ValueError("gnn_kind must be 'gcn' or 'gatv2'")
        if self.gnn_layers < 1 or self.hidden_dim < 1 or self.epochs < 1:
            raise ValueError("gnn_layers, hidden_dim and epochs must be >= 1")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @property
    def uses_graph(self) -> bool:
        return self.kind in INFORMED_KINDS

    @property
    def uses_clusters(self) -> bool:
        return self.kind in CLUSTER_KINDS


@dataclass(frozen=True)
class SplitPlan:
    test_fraction: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must be in (0, 1)")


def make_split(dataset: SynthDataset, plan: SplitPlan) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test index arrays; every class present on both sides."""
    labels = dataset.labels
    n = labels.shape[0]
    rng = np.random.default_rng(plan.seed)
    train_parts, test_parts = [], []
    if plan.stratified:
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            if idx.size < 2:
                raise SplitInfeasibleError(
                    f"class {c} has {idx.size} sample(s); need at least 2"
                )
            k = int(np.floor(plan.test_fraction * idx.size + 0.5))
            k = min(max(k, 1), idx.size - 1)
            order = rng.permutation(idx.size)
            test_parts.append(idx[order[:k]])
            train_parts.append(idx[order[k:]])
    else:
        order = rng.permutation(n)
        k = int(np.floor(plan.test_fraction * n + 0.5))
        test_parts.append(order[:k])
        train_parts.append(order[k:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    for name, part in (("train", train_idx), ("test", test_idx)):
        present = np.unique(labels[part])
        if present.size != np.unique(labels).size:
            raise SplitInfeasibleError(f"{name} split is missing a class")
    return train_idx, test_idx


def cluster_average_features(dataset: SynthDataset) -> np.ndarray:
    """Per-sample mean over each cluster's feature columns; shape (rows, C)."""
    return _cluster_average(dataset.features, dataset.clusters)


def _cluster_average(X: np.ndarray, clusters: Sequence[NodeSet]) -> np.ndarray:
    out = np.empty((X.shape[0], len(clusters)))
    for c, cluster in enumerate(clusters):
        out[:, c] = X[:, list(cluster)].mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# Neural models
# ---------------------------------------------------------------------------


def _init_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFFFFFFFFFF, stream]))


class _NeuralModel:
    """Shared minibatch-Adam training loop for the layered models."""

    spec: ModelSpec

    def params(self) -> list[Parameter]:
        raise NotImplementedError

    def forward(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dlogits: np.ndarray) -> None:
        raise NotImplementedError

    def fit(self, X: np.ndarray, y: np.ndarray) -> list[float]:
        spec = self.spec
        rng = _init_rng(spec.seed, 1)
        params = self.params()
        state = AdamState(params, lr=spec.lr)
        history = []
        n = X.shape[0]
        for _ in range(spec.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, spec.batch_size):
                batch = order[start : start + spec.batch_size]
                logits = self.forward(X[batch])
                loss, dlogits = softmax_cross_entropy(logits, y[batch])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss in {spec.name} at step {state.step_count}"
                    )
                zero_grads(params)
                self.backward(dlogits)
                adam_step(params, state)
                total += loss * batch.size
            history.append(total / n)
        return history

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(X), axis=1)

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.value) for p in self.params()]


def _build_gnn_stack(kind, graph, layers, hidden, rng, prefix):
    a_hat = normalize_adjacency(graph) if kind == "gcn" else None
    stack = []
    in_dim = 1
    for i in range(layers):
        name = f"{prefix}{i}"
        if kind == "gcn":
            stack.append(GcnLayer(a_hat, in_dim, hidden, "relu", rng, name))
        else:
            stack.append(Gatv2Layer(graph, in_dim, hidden, "relu", rng, name))
        in_dim = hidden
    return stack


class GnnClassifier(_NeuralModel):
    """Message-passing layers over the shared graph, node embeddings
    concatenated in node-id order as the graph readout, then a linear
    classifier. With `parallel_mlp` a feature-row MLP branch is concatenated
    into the readout before classification."""

    def __init__(self, spec: ModelSpec, graph: BkGraph, feature_dim: int, classes: int):
        if graph is None:
            raise MissingGraphError(f"{spec.kind} requires a graph")
        if feature_dim != graph.node_count:
            raise ShapeError(
                f"feature dim {feature_dim} != node count {graph.node_count}"
            )
        self.spec = spec
        self.n_nodes = graph.node_count
        rng = _init_rng(spec.seed, 0)
        gnn_kind = {"GCN": "gcn", "GATv2": "gatv2"}.get(spec.kind, spec.gnn_kind)
        self.gnn = _build_gnn_stack(
            gnn_kind, graph, spec.gnn_layers, spec.hidden_dim, rng, "gnn"
        )
        self.parallel_mlp = spec.kind == "ParallelGnnMlp"
        readout = self.n_nodes * spec.hidden_dim
        self.mlp: list[AffineLayer] = []
        if self.parallel_mlp:
            in_dim = feature_dim
            for i in range(spec.mlp_hidden_layers):
                self.mlp.append(
                    AffineLayer(in_dim, spec.mlp_hidden_dim, "relu", rng, f"mlp{i}")
                )
                in_dim = spec.mlp_hidden_dim
            readout += spec.mlp_hidden_dim
        self.classifier = AffineLayer(readout, classes, "linear", rng, "clf")

    def params(self) -> list[Parameter]:
        out = []
        for layer in self.gnn:
            out.extend(layer.params())
        for layer in self.mlp:
            out.extend(layer.params())
        out.extend(self.classifier.params())
        return out

    def forward(self, X: np.ndarray) -> np.ndarray:
        if X.ndim != 2 or X.shape[1] != self.n_nodes:
            raise ShapeError(f"expected (batch, {self.n_nodes}) rows, got {X.shape}")
        h = X[:, :, None]
        for layer in self.gnn:
            h = layer.forward(h)
        parts = [h.reshape(X.shape[0], -1)]
        if self.parallel_mlp:
            m = X
            for layer in self.mlp:
                m = layer.forward(m)
            parts.append(m)
        self._gnn_width = parts[0].shape[1]
        return self.classifier.forward(np.concatenate(parts, axis=1))

    def backward(self, dlogits: np.ndarray) -> None:
        dcat = self.classifier.backward(dlogits)
        dgnn = dcat[:, : self._gnn_width]
        if self.parallel_mlp:
            dmlp = dcat[:, self._gnn_width :]
            for layer in reversed(self.mlp):
                dmlp = layer.backward(dmlp)
        dh = dgnn.reshape(dgnn.shape[0], self.n_nodes, self.spec.hidden_dim)
        for layer in reversed(self.gnn):
            dh = layer.backward(dh)


class MlpClassifier(_NeuralModel):
    """Plain feature-row MLP; never sees the graph."""

    def __init__(self, spec: ModelSpec, feature_dim: int, classes: int):
        self.spec = spec
        self.feature_dim = feature_dim
        rng = _init_rng(spec.seed, 0)
        self.layers: list[AffineLayer] = []
        in_dim = feature_dim
        for i in range(spec.mlp_hidden_layers):
            self.layers.append(
                AffineLayer(in_dim, spec.mlp_hidden_dim, "relu", rng, f"mlp{i}")
            )
            in_dim = spec.mlp_hidden_dim
        self.layers.append(AffineLayer(in_dim, classes, "linear", rng, "clf"))

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = X
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def backward(self, dlogits: np.ndarray) -> None:
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)


# ---------------------------------------------------------------------------
# Linear baselines
# ---------------------------------------------------------------------------


def _soft_threshold(w: np.ndarray, t: float) -> np.ndarray:
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


class _LinearBase:
    """Common scaffolding: optional cluster-average transform, checkpoints."""

    spec: ModelSpec

    def __init__(self, spec: ModelSpec, feature_dim: int, classes: int):
        self.spec = spec
        self.feature_dim = feature_dim
        self.classes = classes
        self.clusters: list[NodeSet] | None = None

    def bind_clusters(self, clusters: Sequence[NodeSet]) -> None:
        self.clusters = list(clusters)
        self.feature_dim = len(self.clusters)

    def _transform(self, X: np.ndarray) -> np.ndarray:
        if self.spec.uses_clusters:
            if self.clusters is None:
                raise MissingClustersError(
                    f"{self.spec.kind} needs cluster assignments before fitting"
                )
            return _cluster_average(X, self.clusters)
        return X

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_scores(self._transform(X)), axis=1)


class LogRegL1(_LinearBase):
    """L1-regularized logistic regression trained by proximal gradient.

    Binary problems use a single weight vector and bias; multiclass uses a
    weight column per class. The bias is never penalized.
    """

    def fit(self, X: np.ndarray, y: np.ndarray) -> list[float]:
        X = self._transform(X)
        n, d = X.shape
        lam, lr = self.spec.l1_lambda, self.spec.lr
        history = []
        if self.classes == 2:
            self.w = np.zeros(d)
            self.b = 0.0
            for _ in range(self.spec.epochs):
                f = X @ self.w + self.b
                logits = np.stack([np.zeros(n), f], axis=1)
                loss, dlogits = softmax_cross_entropy(logits, y)
                history.append(loss + lam * np.abs(self.w).sum())
                df = dlogits[:, 1]
                self.w = _soft_threshold(self.w - lr * (X.T @ df), lr * lam)
                self.b -= lr * df.sum()
        else:
            self.w = np.zeros((d, self.classes))
            self.b = np.zeros(self.classes)
            for _ in range(self.spec.epochs):
                logits = X @ self.w + self.b
                loss, dlogits = softmax_cross_entropy(logits, y)
                history.append(loss + lam * np.abs(self.w).sum())
                self.w = _soft_threshold(self.w - lr * (X.T @ dlogits), lr * lam)
                self.b -= lr * dlogits.sum(axis=0)
        return history

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        if self.classes == 2:
            f = X @ self.w + self.b
            return np.stack([np.zeros(X.shape[0]), f], axis=1)
        return X @ self.w + self.b

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [("w", np.atleast_1d(self.w)), ("b", np.atleast_1d(self.b))]


class LinearSVM(_LinearBase):
    """Linear hinge-loss machine via subgradient descent; one-vs-rest when
    there are more than two classes. Objective per machine:
    mean hinge + ||w||^2 / (2 * svm_c)."""

    def fit(self, X: np.ndarray, y: np.ndarray) -> list[float]:
        X = self._transform(X)
        n, d = X.shape
        machines = 1 if self.classes == 2 else self.classes
        self.w = np.zeros((d, machines))
        self.b = np.zeros(machines)
        lr, c_reg = self.spec.lr, self.spec.svm_c
        history = []
        targets = np.empty((n, machines))
        if machines == 1:
            targets[:, 0] = np.where(y == 1, 1.0, -1.0)
        else:
            for m in range(machines):
                targets[:, m] = np.where(y == m, 1.0, -1.0)
        for _ in range(self.spec.epochs):
            scores = X @ self.w + self.b
            margins = targets * scores
            viol = margins < 1.0
            hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0)
            history.append(float(np.mean(hinge + (self.w**2).sum(axis=0) / (2 * c_reg))))
            grad_w = self.w / c_reg - X.T @ (targets * viol) / n
            grad_b = -(targets * viol).mean(axis=0)
            self.w -= lr * grad_w
            self.b -= lr * grad_b
        return history

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        scores = X @ self.w + self.b
        if self.classes == 2:
            return np.concatenate([np.zeros((X.shape[0], 1)), scores], axis=1)
        return scores

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [("w", self.w), ("b", self.b)]


# ---------------------------------------------------------------------------
# Assembly, training, evaluation
# ---------------------------------------------------------------------------


def build_model(
    spec: ModelSpec,
    graph: BkGraph | None,
    feature_dim: int,
    classes: int,
):
    """Instantiate a model; informed kinds must be given the graph."""
    if spec.uses_graph:
        if graph is None:
            raise MissingGraphError(f"{spec.kind} requires a background graph")
        return GnnClassifier(spec, graph, feature_dim, classes)
    if spec.kind == "MLP":
        return MlpClassifier(spec, feature_dim, classes)
    if spec.kind in ("LogRegL1", "ClusterAvgLogReg"):
        return LogRegL1(spec, feature_dim, classes)
    if spec.kind in ("LinearSVM", "ClusterAvgSVM"):
        return LinearSVM(spec, feature_dim, classes)
    raise ValueError(f"unhandled kind {spec.kind!r}")


@dataclass
class TrainedModel:
    spec: ModelSpec
    model: object
    history: list[float]
    train_indices: np.ndarray
    test_indices: np.ndarray

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return self.model.named_tensors()


def train(
    model,
    dataset: SynthDataset,
    split: tuple[np.ndarray, np.ndarray],
) -> TrainedModel:
    """Fit on the train side of the split; loss history has one entry per epoch."""
    train_idx, test_idx = split
    if model.spec.uses_clusters:
        model.bind_clusters(dataset.clusters)
    history = model.fit(dataset.features[train_idx], dataset.labels[train_idx])
    return TrainedModel(model.spec, model, history, train_idx, test_idx)


def evaluate(trained: TrainedModel, dataset: SynthDataset, indices: np.ndarray) -> float:
    """Fraction of argmax-correct predictions; argmax ties resolve to the
    lowest class index."""
    preds = trained.model.predict(dataset.features[indices])
    return float(np.mean(preds == dataset.labels[indices]))


def save_history_csv(history: Sequence[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{repr(float(loss))}\n")


_SPEC_FIELDS = {f.name for f in ModelSpec.__dataclass_fields__.values()}


def model_spec_from_dict(d: dict) -> ModelSpec:
    unknown = set(d) - _SPEC_FIELDS
    if unknown:
        raise ValueError(f"unknown ModelSpec fields: {sorted(unknown)}")
    if "kind" not in d:
        raise ValueError("model spec needs a 'kind'")
    return ModelSpec(**d)


def split_plan_from_dict(d: dict) -> SplitPlan:
    allowed = {"test_fraction", "stratified", "seed"}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown SplitPlan fields: {sorted(unknown)}")
    return SplitPlan(**d)
