"""Explicit ReLU networks with width / depth / size / norm bookkeeping.

A network is a list of affine layers ``(W_i, b_i)``; every layer except the
last is followed by a ReLU.  The budget of a network is

    ||(W_D, b_D)||_{1,inf} * prod_{i<D} max(||(W_i, b_i)||_{1,inf}, 1)

where ``||.||_{1,inf}`` is the largest row 1-norm of the augmented matrix
``[W b]`` (one row per neuron: incoming weights plus bias).

Combinators (composition, sums, stacking) work on rebalanced copies of their
arguments: ReLU is positively homogeneous, so the scale of every hidden layer
neuron can be pushed into the next layer without changing the computed
function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "ReluLayer",
    "ReluNetwork",
    "NormBudget",
    "evaluate",
    "softmax",
    "norm_budget",
    "layer_norm",
    "identity_network",
    "zero_network",
    "affine_network",
    "rebalance",
    "deepen",
    "compose",
    "parallel_sum",
    "parallel_pair",
    "linear_combination",
    "scale_output",
]


def _as_csr(w) -> sparse.csr_array:
    """Canonical CSR copy: float64, duplicates summed, zeros dropped, sorted."""
    if sparse.issparse(w):
        m = sparse.csr_array(w, dtype=np.float64, copy=True)
    else:
        arr = np.asarray(w, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {arr.shape}")
        m = sparse.csr_array(arr)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def layer_norm(weights, bias) -> float:
    """Largest row 1-norm of the augmented matrix ``[weights bias]``.

    Each row is one neuron: the l1 norm of its incoming weights plus |bias|.
    """
    bias = np.asarray(bias, dtype=np.float64)
    if not len(bias):
        return 0.0
    rows = np.asarray(abs(weights).sum(axis=1)).reshape(-1)
    return float((rows + np.abs(bias)).max())


class ReluLayer:
    """Affine map ``x -> W x + b``, stored as an immutable sparse matrix.

    ``weights`` may be dense or any scipy sparse matrix; ``matrix`` is the
    canonical CSR form and ``weights`` a dense copy for small layers.
    """

    __slots__ = ("matrix", "bias", "_norm")

    def __init__(self, weights, bias):
        m = _as_csr(weights)
        b = np.array(bias, dtype=np.float64, copy=True).reshape(-1)
        if b.shape[0] != m.shape[0]:
            raise ValueError(
                f"bias length {b.shape[0]} does not match weight rows {m.shape[0]}"
            )
        if not (np.all(np.isfinite(m.data)) and np.all(np.isfinite(b))):
            raise ValueError("layer entries must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "_norm", None)

    def __setattr__(self, name, value):
        raise AttributeError("ReluLayer is immutable")

    @property
    def weights(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def norm(self) -> float:
        if self._norm is None:
            object.__setattr__(self, "_norm", layer_norm(self.matrix, self.bias))
        return self._norm

    def apply(self, a: np.ndarray) -> np.ndarray:
        """Affine map on a feature-major batch ``a`` of shape (in_dim, batch)."""
        # CSR products sum each row's nonzeros in sorted column order, which
        # keeps mirrored constructions (x - x) exactly cancelling.
        z = self.matrix @ a
        z += self.bias[:, None]
        return z

    def __repr__(self) -> str:
        return f"ReluLayer({self.out_dim}x{self.in_dim}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class NormBudget:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("budget must be non-negative")

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    layers: tuple
    input_dim: int
    output_dim: int

    def __init__(self, layers: Iterable[ReluLayer], input_dim: int | None = None,
                 output_dim: int | None = None):
        layers = tuple(
            l if isinstance(l, ReluLayer) else ReluLayer(*l) for l in layers
        )
        if not layers:
            raise ValueError("a network needs at least one (output) layer")
        d = layers[0].in_dim if input_dim is None else int(input_dim)
        k = layers[-1].out_dim if output_dim is None else int(output_dim)
        if layers[0].in_dim != d:
            raise ValueError(f"first layer takes {layers[0].in_dim} inputs, expected {d}")
        if layers[-1].out_dim != k:
            raise ValueError(f"last layer emits {layers[-1].out_dim} outputs, expected {k}")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer {i} emits {a.out_dim} values but layer {i + 1} takes {b.in_dim}"
                )
        if d < 1 or k < 1:
            raise ValueError("input and output dimensions must be positive")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", d)
        object.__setattr__(self, "output_dim", k)

    # -- bookkeeping -----------------------------------------------------
    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layers) - 1

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [l.out_dim for l in self.layers]

    @property
    def width(self) -> int:
        hidden = self.widths[1:-1]
        return max(hidden) if hidden else 0

    @property
    def size(self) -> int:
        p = self.widths
        return sum(p[i + 1] * (p[i] + 1) for i in range(len(p) - 1))

    @property
    def neurons(self) -> int:
        return sum(self.widths[1:-1])

    @cached_property
    def budget(self) -> float:
        norms = [l.norm for l in self.layers]
        out = norms[-1]
        for n in norms[:-1]:
            out *= max(n, 1.0)
        return float(out)

    # -- evaluation ------------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        """JSON-ready dict; weights in CSR triplets (indptr, indices, data)."""
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {
                    "rows": l.out_dim,
                    "cols": l.in_dim,
                    "indptr": l.matrix.indptr.tolist(),
                    "indices": l.matrix.indices.tolist(),
                    "data": l.matrix.data.tolist(),
                    "bias": l.bias.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReluNetwork":
        """Inverse of :meth:`to_dict`; also accepts dense row-major ``weights``."""
        layers = []
        for i, l in enumerate(doc["layers"]):
            if "weights" in l:
                w = np.asarray(l["weights"], dtype=np.float64)
                if w.ndim == 2:
                    rows, cols = w.shape
                else:
                    rows, cols = int(l["rows"]), int(l["cols"])
                if w.size != rows * cols or int(l.get("rows", rows)) != rows:
                    raise ValueError(f"layer {i}: expected {rows * cols} weights, got {w.size}")
                w = w.reshape(rows, cols)
            else:
                rows, cols = int(l["rows"]), int(l["cols"])
                w = sparse.csr_array(
                    (np.asarray(l["data"], dtype=np.float64),
                     np.asarray(l["indices"], dtype=np.int64),
                     np.asarray(l["indptr"], dtype=np.int64)),
                    shape=(rows, cols),
                )
            layers.append(ReluLayer(w, l["bias"]))
        return cls(layers, doc["input_dim"], doc["output_dim"])

    def to_json(self) -> str:
        # repr-precision floats: json round-trips float64 exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ReluNetwork":
        return cls.from_dict(json.loads(text))


def evaluate(net: ReluNetwork, x) -> np.ndarray:
    """Evaluate ``net`` at a point (shape (d,)) or a batch (shape (n, d))."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ValueError(
            f"expected input of dimension {net.input_dim}, got shape {x.shape}"
        )
    a = np.ascontiguousarray(batch.T)
    for layer in net.layers[:-1]:
        a = layer.apply(a)
        np.maximum(a, 0.0, out=a)
    out = net.layers[-1].apply(a).T
    return out[0] if single else np.ascontiguousarray(out)


def softmax(v) -> np.ndarray:
    """Softmax along the last axis, stabilized by max-subtraction."""
    v = np.asarray(v, dtype=np.float64)
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def norm_budget(net: ReluNetwork) -> NormBudget:
    return NormBudget(net.budget)


# ---------------------------------------------------------------------------
# elementary networks


def identity_network(dim: int, depth: int = 1) -> ReluNetwork:
    """x -> x through ``depth`` hidden layers using x = relu(x) - relu(-x)."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    eye = sparse.eye_array(dim)
    layers = [ReluLayer(sparse.vstack([eye, -eye]), np.zeros(2 * dim))]
    layers += [ReluLayer(sparse.eye_array(2 * dim), np.zeros(2 * dim))
               for _ in range(depth - 1)]
    layers.append(ReluLayer(sparse.hstack([eye, -eye]), np.zeros(dim)))
    return ReluNetwork(layers)


def zero_network(input_dim: int, output_dim: int, depth: int = 1) -> ReluNetwork:
    layers = [ReluLayer(np.zeros((1, input_dim)), np.zeros(1))]
    layers += [ReluLayer(np.zeros((1, 1)), np.zeros(1)) for _ in range(depth - 1)]
    layers.append(ReluLayer(np.zeros((output_dim, 1)), np.zeros(output_dim)))
    return ReluNetwork(layers)


def affine_network(weights, bias) -> ReluNetwork:
    """Depth-0 network computing ``weights @ x + bias``."""
    return ReluNetwork([ReluLayer(weights, bias)])


def scale_output(net: ReluNetwork, c: float) -> ReluNetwork:
    last = net.layers[-1]
    return ReluNetwork(net.layers[:-1] + (ReluLayer(c * last.matrix, c * last.bias),))


# ---------------------------------------------------------------------------
# structural transforms


def rebalance(net: ReluNetwork) -> ReluNetwork:
    """Equivalent network whose live hidden neurons all have row norm 1.

    Each hidden neuron is divided by its row norm and the factor is pushed
    into the matching column of the next layer (relu is positively
    homogeneous).  The budget never increases; afterwards it equals the
    output layer's norm.
    """
    # work on raw CSR triplets; scipy's per-call overhead dominates small nets
    mats = [l.matrix for l in net.layers]
    data = [m.data.copy() for m in mats]
    bs = [np.array(l.bias) for l in net.layers]
    for i in range(len(mats) - 1):
        rows = np.repeat(np.arange(mats[i].shape[0]), np.diff(mats[i].indptr))
        c = np.abs(bs[i])
        np.add.at(c, rows, np.abs(data[i]))
        c[c == 0.0] = 1.0
        data[i] /= c[rows]
        bs[i] /= c
        data[i + 1] *= c[mats[i + 1].indices]
    return ReluNetwork([
        ReluLayer(sparse.csr_array((d, m.indices, m.indptr), shape=m.shape), b)
        for m, d, b in zip(mats, data, bs)
    ])


@lru_cache(maxsize=256)
def _identity_layer(width: int) -> ReluLayer:
    return ReluLayer(sparse.eye_array(width), np.zeros(width))


def deepen(net: ReluNetwork, depth: int) -> ReluNetwork:
    """Pad ``net`` to exactly ``depth`` hidden layers without changing values.

    Hidden activations are non-negative, so extra layers are plain identities
    (norm 1) inserted before the output layer.  A depth-0 (affine) network is
    first lifted through the relu(x) - relu(-x) splice.
    """
    if depth < net.depth:
        raise ValueError(f"cannot shrink depth {net.depth} to {depth}")
    if depth == net.depth:
        return net
    if net.depth == 0:
        out = net.layers[0]
        eye = sparse.eye_array(net.input_dim)
        net = ReluNetwork([
            ReluLayer(sparse.vstack([eye, -eye]), np.zeros(2 * net.input_dim)),
            ReluLayer(sparse.hstack([out.matrix, -out.matrix]), out.bias),
        ])
    w = net.layers[-2].out_dim
    pad = [_identity_layer(w)] * (depth - net.depth)
    return ReluNetwork(net.layers[:-1] + tuple(pad) + net.layers[-1:])


def compose(outer: ReluNetwork, inner: ReluNetwork) -> ReluNetwork:
    """Network for ``outer(inner(x))`` with depth ``inner.depth + outer.depth``.

    The affine output layer of ``inner`` is folded into the first layer of
    ``outer``, so no extra hidden layer is needed.
    """
    if inner.output_dim != outer.input_dim:
        raise ValueError(
            f"inner emits {inner.output_dim} values, outer expects {outer.input_dim}"
        )
    inner = rebalance(inner)
    outer = rebalance(outer)
    li, lo = inner.layers[-1], outer.layers[0]
    merged = ReluLayer(lo.matrix @ li.matrix, lo.matrix @ li.bias + lo.bias)
    return rebalance(
        ReluNetwork(inner.layers[:-1] + (merged,) + outer.layers[1:])
    )


def linear_combination(nets: Sequence[ReluNetwork], mixers: Sequence[np.ndarray],
                       output_dim: int | None = None) -> ReluNetwork:
    """Network for ``sum_j mixers[j] @ nets[j](x)`` over a shared input.

    All parts are rebalanced and run side by side at a common depth, so every
    hidden row has norm <= 1 and the budget is the output norm, at most
    ``sum_j ||mixers[j] (W_D^j, b_D^j)||``.
    """
    if not nets:
        raise ValueError("need at least one network")
    d = nets[0].input_dim
    mixers = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in mixers]
    if len(mixers) != len(nets):
        raise ValueError("need one mixer per network")
    k = mixers[0].shape[0] if output_dim is None else output_dim
    for net, m in zip(nets, mixers):
        if net.input_dim != d:
            raise ValueError("all parts must share the input dimension")
        if m.shape != (k, net.output_dim):
            raise ValueError(f"mixer of shape {m.shape} does not map {net.output_dim} -> {k}")

    depth = max(max(n.depth for n in nets), 1)
    parts = []
    out_bias = np.zeros(k)
    for net, m in zip(nets, mixers):
        net = deepen(rebalance(net), depth)
        last = net.layers[-1]
        mw = sparse.csr_array(m) @ last.matrix
        out_bias += m @ last.bias
        if mw.count_nonzero():
            parts.append((net, mw))

    if not parts:
        z = zero_network(d, k, depth)
        last = z.layers[-1]
        return ReluNetwork(z.layers[:-1] + (ReluLayer(last.matrix, out_bias),))

    layers = []
    for i in range(depth):
        blocks = [net.layers[i] for net, _ in parts]
        mats = [l.matrix for l in blocks]
        w = sparse.vstack(mats) if i == 0 else sparse.block_diag(mats)
        layers.append(ReluLayer(w, np.concatenate([l.bias for l in blocks])))
    layers.append(ReluLayer(sparse.hstack([mw for _, mw in parts]), out_bias))
    return ReluNetwork(layers, d, k)


def parallel_sum(a: ReluNetwork, b: ReluNetwork) -> ReluNetwork:
    """Network for ``a(x) + b(x)``; budget <= budget(a) + budget(b)."""
    if a.input_dim != b.input_dim or a.output_dim != b.output_dim:
        raise ValueError("summands must agree on input and output dimensions")
    eye = np.eye(a.output_dim)
    return linear_combination([a, b], [eye, eye])


def parallel_pair(a: ReluNetwork, b: ReluNetwork) -> ReluNetwork:
    """Network for ``(a(x), b(x))`` with output dimension K_a + K_b.

    Output rows stay separate, so the budget is at most max(budget(a), budget(b)).
    """
    if a.input_dim != b.input_dim:
        raise ValueError("paired networks must share the input dimension")
    ka, kb = a.output_dim, b.output_dim
    ma = np.vstack([np.eye(ka), np.zeros((kb, ka))])
    mb = np.vstack([np.zeros((ka, kb)), np.eye(kb)])
    return linear_combination([a, b], [ma, mb])
