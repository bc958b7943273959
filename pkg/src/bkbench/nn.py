"""Dense neural-network kernel: layers with hand-derived backward passes.

Matrices are plain numpy float64 arrays throughout; everything runs in
64-bit so the finite-difference gradient checker is meaningful. Graph
layers take batches shaped (batch, nodes, features); dense layers take
(batch, features). The attention layer's inner loops are numba-compiled.

Parameter checkpoints use a tiny named-tensor container documented in
docs/formats.md; the round trip is byte-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .graph import BkGraph


class ShapeError(ValueError):
    pass


class InvalidLabelError(ValueError):
    pass


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        self.grad = np.zeros_like(self.value)


def _act(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "linear":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def _act_grad(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (pre > 0.0).astype(float)
    return np.ones_like(pre)


def normalize_adjacency(g: BkGraph) -> np.ndarray:
    """Symmetric propagation matrix D^(-1/2) (A + I) D^(-1/2).

    Edge weights enter A; the identity adds the virtual self-loop that the
    graph representation itself never stores.
    """
    n = g.node_count
    if n <= 0:
        raise ShapeError("graph must have at least one node")
    A = np.eye(n)
    for u, v, w in g.weighted_edges():
        A[u, v] = w
        A[v, u] = w
    d = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return A * inv_sqrt[:, None] * inv_sqrt[None, :]


class AffineLayer:
    """x @ W + b with optional ReLU, applied along the last axis."""

    def __init__(self, in_dim: int, out_dim: int, activation: str, rng, name: str):
        scale = math.sqrt(2.0 / in_dim) if activation == "relu" else math.sqrt(1.0 / in_dim)
        self.W = Parameter(f"{name}.W", rng.standard_normal((in_dim, out_dim)) * scale)
        self.b = Parameter(f"{name}.b", np.zeros(out_dim))
        self.activation = activation
        self.in_dim = in_dim
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected last dim {self.in_dim}, got {x.shape}")
        pre = x @ self.W.value + self.b.value
        self._cache = (x, pre)
        return _act(pre, self.activation)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, pre = self._cache
        dpre = dout * _act_grad(pre, self.activation)
        flat_x = x.reshape(-1, x.shape[-1])
        flat_d = dpre.reshape(-1, dpre.shape[-1])
        self.W.grad += flat_x.T @ flat_d
        self.b.grad += flat_d.sum(axis=0)
        return dpre @ self.W.value.T


class GcnLayer:
    """act(A_hat @ H @ W + b) over batches of per-sample node features."""

    def __init__(
        self, a_hat: np.ndarray, in_dim: int, out_dim: int, activation: str, rng, name: str
    ):
        scale = math.sqrt(2.0 / in_dim) if activation == "relu" else math.sqrt(1.0 / in_dim)
        self.a_hat = a_hat
        self.W = Parameter(f"{name}.W", rng.standard_normal((in_dim, out_dim)) * scale)
        self.b = Parameter(f"{name}.b", np.zeros(out_dim))
        self.activation = activation
        self.in_dim = in_dim
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, h: np.ndarray) -> np.ndarray:
        n = self.a_hat.shape[0]
        if h.ndim != 3 or h.shape[1] != n or h.shape[2] != self.in_dim:
            raise ShapeError(
                f"expected (batch, {n}, {self.in_dim}) node features, got {h.shape}"
            )
        smoothed = np.matmul(self.a_hat, h)
        pre = smoothed @ self.W.value + self.b.value
        self._cache = (smoothed, pre)
        return _act(pre, self.activation)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        smoothed, pre = self._cache
        dpre = dout * _act_grad(pre, self.activation)
        flat_s = smoothed.reshape(-1, smoothed.shape[-1])
        flat_d = dpre.reshape(-1, dpre.shape[-1])
        self.W.grad += flat_s.T @ flat_d
        self.b.grad += flat_d.sum(axis=0)
        dsmoothed = dpre @ self.W.value.T
        return np.matmul(self.a_hat.T, dsmoothed)


@njit(cache=True)
def _gat_forward_kernel(L, R, a, indptr, indices, alpha, msg):  # pragma: no cover
    B, n, h = L.shape
    slope = 0.2
    for b in range(B):
        for i in range(n):
            s0, s1 = indptr[i], indptr[i + 1]
            m = -1.0e300
            for e in range(s0, s1):
                j = indices[e]
                sc = 0.0
                for k in range(h):
                    p = L[b, i, k] + R[b, j, k]
                    if p < 0.0:
                        p *= slope
                    sc += a[k] * p
                alpha[b, e] = sc
                if sc > m:
                    m = sc
            tot = 0.0
            for e in range(s0, s1):
                w = np.exp(alpha[b, e] - m)
                alpha[b, e] = w
                tot += w
            for k in range(h):
                msg[b, i, k] = 0.0
            for e in range(s0, s1):
                w = alpha[b, e] / tot
                alpha[b, e] = w
                j = indices[e]
                for k in range(h):
                    msg[b, i, k] += w * R[b, j, k]


@njit(cache=True)
def _gat_backward_kernel(
    L, R, a, indptr, indices, alpha, dmsg, dL, dR, da
):  # pragma: no cover
    B, n, h = L.shape
    slope = 0.2
    for b in range(B):
        for i in range(n):
            s0, s1 = indptr[i], indptr[i + 1]
            tot = 0.0
            for e in range(s0, s1):
                j = indices[e]
                dal = 0.0
                for k in range(h):
                    dal += dmsg[b, i, k] * R[b, j, k]
                tot += alpha[b, e] * dal
            for e in range(s0, s1):
                j = indices[e]
                dal = 0.0
                for k in range(h):
                    dal += dmsg[b, i, k] * R[b, j, k]
                    dR[b, j, k] += alpha[b, e] * dmsg[b, i, k]
                de = alpha[b, e] * (dal - tot)
                for k in range(h):
                    p = L[b, i, k] + R[b, j, k]
                    q = p if p > 0.0 else slope * p
                    da[k] += de * q
                    grad = de * a[k]
                    if p < 0.0:
                        grad *= slope
                    dL[b, i, k] += grad
                    dR[b, j, k] += grad


class Gatv2Layer:
    """Single-head attention over each node's neighborhood plus itself.

    Scores follow score(i, j) = a . leaky_relu(W_l x_i + W_r x_j) with
    LeakyReLU slope 0.2; messages are the attention-weighted W_r x_j, so an
    isolated node attends to itself with weight exactly 1. Edge weights do
    not enter the attention.
    """

    def __init__(self, g: BkGraph, in_dim: int, out_dim: int, activation: str, rng, name: str):
        n = g.node_count
        nbrs = []
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            hood = sorted(set(g.neighbors(i)) | {i})
            nbrs.extend(hood)
            indptr[i + 1] = len(nbrs)
        self.indptr = indptr
        self.indices = np.asarray(nbrs, dtype=np.int64)
        self.n_nodes = n
        self.in_dim = in_dim
        self.out_dim = out_dim
        scale = math.sqrt(2.0 / in_dim)
        self.W_l = Parameter(f"{name}.W_l", rng.standard_normal((in_dim, out_dim)) * scale)
        self.W_r = Parameter(f"{name}.W_r", rng.standard_normal((in_dim, out_dim)) * scale)
        self.attn = Parameter(
            f"{name}.a", rng.standard_normal(out_dim) / math.sqrt(out_dim)
        )
        self.b = Parameter(f"{name}.b", np.zeros(out_dim))
        self.activation = activation
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.W_l, self.W_r, self.attn, self.b]

    def forward(self, h: np.ndarray) -> np.ndarray:
        if h.ndim != 3 or h.shape[1] != self.n_nodes or h.shape[2] != self.in_dim:
            raise ShapeError(
                f"expected (batch, {self.n_nodes}, {self.in_dim}) node features, "
                f"got {h.shape}"
            )
        B = h.shape[0]
        L = h @ self.W_l.value
        R = h @ self.W_r.value
        alpha = np.empty((B, self.indices.size))
        msg = np.empty((B, self.n_nodes, self.out_dim))
        _gat_forward_kernel(L, R, self.attn.value, self.indptr, self.indices, alpha, msg)
        pre = msg + self.b.value
        self._cache = (h, L, R, alpha, pre)
        return _act(pre, self.activation)

    def attention_weights(self, h: np.ndarray) -> np.ndarray:
        """Attention coefficients (batch, nnz) in CSR neighborhood order."""
        self.forward(h)
        return self._cache[3]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        h, L, R, alpha, pre = self._cache
        dpre = dout * _act_grad(pre, self.activation)
        self.b.grad += dpre.sum(axis=(0, 1))
        dL = np.zeros_like(L)
        dR = np.zeros_like(R)
        da = np.zeros_like(self.attn.value)
        _gat_backward_kernel(
            L, R, self.attn.value, self.indptr, self.indices, alpha, dpre, dL, dR, da
        )
        self.attn.grad += da
        flat_h = h.reshape(-1, self.in_dim)
        self.W_l.grad += flat_h.T @ dL.reshape(-1, self.out_dim)
        self.W_r.grad += flat_h.T @ dR.reshape(-1, self.out_dim)
        return dL @ self.W_l.value.T + dR @ self.W_r.value.T


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch, with the gradient on the logits.

    Stabilized with log-sum-exp; grad = (softmax - one_hot) / batch.
    """
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise InvalidLabelError(f"labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


class AdamState:
    """First/second moment accumulators with bias correction."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]


def adam_step(params: list[Parameter], state: AdamState) -> None:
    """One Adam update from the gradients currently stored on the params."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, m, v in zip(params, state.m, state.v):
        if p.grad.shape != p.value.shape:
            raise ShapeError(f"grad shape {p.grad.shape} != value shape {p.value.shape}")
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad**2
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def zero_grads(params: list[Parameter]) -> None:
    for p in params:
        p.grad[:] = 0.0


def grad_check(loss_and_backward, params: list[Parameter], epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_and_backward()` must return the scalar loss and leave fresh
    gradients on every parameter. Relative error per entry is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    zero_grads(params)
    loss_and_backward()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            zero_grads(params)
            up = loss_and_backward()
            flat[i] = orig - epsilon
            zero_grads(params)
            down = loss_and_backward()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Named-tensor checkpoint container (see docs/formats.md).
# ---------------------------------------------------------------------------

_MAGIC = b"BKTENSORS 1\n"


def save_tensors(path, tensors: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(f"{len(tensors)}\n".encode())
        for name, arr in tensors:
            if any(ch.isspace() for ch in name) or not name:
                raise ValueError(f"tensor name {name!r} must be non-empty, no whitespace")
            arr = np.asarray(arr, dtype="<f8")
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim} {dims}".rstrip().encode() + b"\n")
            fh.write(arr.tobytes(order="C"))


def load_tensors(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a tensor container")
        count = int(fh.readline())
        out = []
        for _ in range(count):
            header = fh.readline().decode().split()
            name, ndim = header[0], int(header[1])
            shape = tuple(int(d) for d in header[2 : 2 + ndim])
            size = int(np.prod(shape)) if shape else 1
            raw = fh.read(size * 8)
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            out.append((name, arr))
    return out
