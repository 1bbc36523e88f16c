"""Constructive ReLU approximation of smooth vector-valued maps.

Pipeline: hat function -> tensor partition of unity on the grid {0..N}^d ->
product gadget (sawtooth squaring + polarization, folded along a binary
tree) -> local Taylor polynomials glued by the partition of unity.

Every network built here is an ordinary :class:`ReluNetwork`; the report
compares its measured width, depth and budget against closed-form caps.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .netcore import (
    ReluLayer,
    ReluNetwork,
    affine_network,
    compose,
    deepen,
    evaluate,
    linear_combination,
    rebalance,
    scale_output,
    zero_network,
)

__all__ = [
    "TargetFunction",
    "GridIndex",
    "ApproxReport",
    "ChartReport",
    "Chart",
    "InfeasibleBuild",
    "hat",
    "hat_network",
    "partition_value",
    "partition_network",
    "partition_sum",
    "product_network",
    "multi_indices",
    "taylor_coefficients",
    "grid_resolution",
    "build_approximant",
    "build_chart_approximant",
    "constant_target",
    "coordinate_target",
    "sin_product_target",
    "gaussian_bump_target",
    "named_target",
    "TARGETS",
]


class InfeasibleBuild(ValueError):
    """The requested construction exceeds the desk-scale guard."""


# ---------------------------------------------------------------------------
# target functions


@dataclass(frozen=True, eq=False)
class TargetFunction:
    """Smooth map [0,1]^d -> R^K with a partial-derivative oracle.

    ``derivative_oracle(s, x)`` returns the mixed partial ``d^s f`` at the
    rows of ``x`` (shape (n, d)) as an (n, K) array; ``s`` is a tuple of d
    non-negative integers.  ``holder_bound`` is an upper bound on the
    C^{0,tau} norm of every output channel.
    """

    dim_in: int
    dim_out: int
    tau: float
    holder_bound: float
    value_oracle: Callable[[np.ndarray], np.ndarray]
    derivative_oracle: Callable[[tuple, np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        if self.dim_in < 1 or self.dim_out < 1:
            raise ValueError("dimensions must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.holder_bound > 0:
            raise ValueError("holder_bound must be positive")

    @property
    def smoothness_r(self) -> int:
        return int(math.ceil(self.tau) - 1)

    @property
    def nu(self) -> float:
        return self.tau - self.smoothness_r

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.asarray(self.value_oracle(x), dtype=np.float64).reshape(len(x), self.dim_out)

    def derivative(self, s: Sequence[int], x) -> np.ndarray:
        s = tuple(int(v) for v in s)
        if len(s) != self.dim_in or min(s) < 0:
            raise ValueError(f"bad multi-index {s} for input dimension {self.dim_in}")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if sum(s) == 0:
            return self(x)
        return np.asarray(self.derivative_oracle(s, x), dtype=np.float64).reshape(len(x), self.dim_out)

    def scaled(self, c: float) -> "TargetFunction":
        return TargetFunction(
            self.dim_in, self.dim_out, self.tau, abs(c) * self.holder_bound,
            lambda x: c * self.value_oracle(x),
            lambda s, x: c * self.derivative_oracle(s, x),
            name=self.name,
        )


def _split_tau(tau: float) -> tuple[int, float]:
    r = int(math.ceil(tau) - 1)
    return r, tau - r


def _separable_bound(factor_sup: Callable[[int], float], d: int, tau: float) -> float:
    """C^{0,tau} bound of a product of d identical 1-D factors.

    ``factor_sup(j)`` bounds the j-th derivative of one factor on [0,1].
    Holder quotients of top derivatives use min(2 sup, Lip |x-y|) and the
    Euclidean distance.
    """
    r, nu = _split_tau(tau)

    def sup(alpha):
        return math.prod(factor_sup(a) for a in alpha)

    low = max(sup(a) for a in multi_indices(d, r))
    top = 0.0
    for a in multi_indices(d, r):
        if sum(a) != r:
            continue
        grad = math.sqrt(sum(
            sup(tuple(a[j] + (j == i) for j in range(d))) ** 2 for i in range(d)
        ))
        top = max(top, (2 * sup(a)) ** (1 - nu) * grad ** nu)
    return max(low, top)


def constant_target(c: float = 0.5, d: int = 1, K: int = 1, tau: float = 1.0) -> TargetFunction:
    cv = np.full(K, float(c))
    return TargetFunction(
        d, K, tau, max(abs(c), 1e-300),
        lambda x: np.tile(cv, (len(x), 1)),
        lambda s, x: np.zeros((len(x), K)),
        name="constant",
    )


def coordinate_target(d: int = 1, K: int = 1, tau: float = 1.0) -> TargetFunction:
    """Channel c returns coordinate ``c mod d``."""
    r, nu = _split_tau(tau)
    idx = np.arange(K) % d

    def deriv(s, x):
        out = np.zeros((len(x), K))
        if sum(s) == 1:
            j = s.index(1)
            out[:, idx == j] = 1.0
        return out

    bound = d ** ((1 - nu) / 2) if r == 0 else 1.0
    return TargetFunction(d, K, tau, bound, lambda x: x[:, idx], deriv, name="coordinate")


def sin_product_target(d: int = 1, K: int = 1, tau: float = 1.0,
                       freq: float = 2 * math.pi, amplitude: float | None = None) -> TargetFunction:
    """``A * prod_i sin(freq x_i + phase_c)`` with phase ``c*pi/(2K)`` per channel.

    The default amplitude normalizes the C^{0,tau} bound to 1.
    """
    phases = np.arange(K) * math.pi / (2 * K)

    def fsup(j):
        return freq ** j

    bound1 = _separable_bound(fsup, d, tau)
    A = 1.0 / bound1 if amplitude is None else float(amplitude)

    def value(x):
        return A * np.prod(np.sin(freq * x[:, :, None] + phases), axis=1)

    def deriv(s, x):
        s = np.asarray(s)[None, :, None]
        terms = freq ** s * np.sin(freq * x[:, :, None] + phases + s * math.pi / 2)
        return A * np.prod(terms, axis=1)

    return TargetFunction(d, K, tau, abs(A) * bound1, value, deriv, name="sin-product")


def gaussian_bump_target(d: int = 1, K: int = 1, tau: float = 1.0, width: float = 0.25,
                         amplitude: float | None = None) -> TargetFunction:
    """Isotropic Gaussian bumps; channel c is centred at ``(c+1)/(K+1)`` in every coordinate."""
    from numpy.polynomial import hermite

    centres = (np.arange(K) + 1.0) / (K + 1.0)
    scale = 1.0 / (width * math.sqrt(2.0))

    def factor_deriv(j, t):
        # d^j/dt^j exp(-z^2), z = (t - c) * scale, via physicists' Hermite polynomials
        z = (t[..., None] - centres) * scale
        coef = np.zeros(j + 1)
        coef[j] = 1.0
        return (-scale) ** j * hermite.hermval(z, coef) * np.exp(-z * z)

    grid = np.linspace(0.0, 1.0, 4001)
    sups = {}

    def fsup(j):
        if j not in sups:
            sups[j] = float(np.abs(factor_deriv(j, grid)).max())
        return sups[j]

    bound1 = _separable_bound(fsup, d, tau)
    A = 1.0 / bound1 if amplitude is None else float(amplitude)

    def value(x):
        return A * np.prod(factor_deriv(0, x), axis=1)

    def deriv(s, x):
        out = np.ones((len(x), K))
        for i, j in enumerate(s):
            out *= factor_deriv(j, x[:, i])
        return A * out

    return TargetFunction(d, K, tau, abs(A) * bound1, value, deriv, name="gaussian-bump")


TARGETS = {
    "constant": constant_target,
    "coordinate": coordinate_target,
    "sin-product": sin_product_target,
    "sin": sin_product_target,
    "gaussian-bump": gaussian_bump_target,
}


def named_target(name: str, d: int, K: int, tau: float) -> TargetFunction:
    try:
        factory = TARGETS[name]
    except KeyError:
        raise ValueError(f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None
    if factory is constant_target:
        return constant_target(0.5, d, K, tau)
    return factory(d=d, K=K, tau=tau)


# ---------------------------------------------------------------------------
# hat function and partition of unity


def hat(t) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(t, dtype=np.float64)))


def hat_network() -> ReluNetwork:
    """relu(1 - relu(t) - relu(-t)): width 2, depth 2, budget 2."""
    return ReluNetwork([
        ReluLayer([[1.0], [-1.0]], [0.0, 0.0]),
        ReluLayer([[-1.0, -1.0]], [1.0]),
        ReluLayer([[1.0]], [0.0]),
    ])


@dataclass(frozen=True)
class GridIndex:
    n: tuple
    N: int

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        object.__setattr__(self, "n", n)
        if self.N < 1:
            raise ValueError("grid resolution N must be positive")
        if not n or any(v < 0 or v > self.N for v in n):
            raise ValueError(f"grid index {n} outside {{0..{self.N}}}^d")

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def node(self) -> np.ndarray:
        return np.asarray(self.n, dtype=np.float64) / self.N


def partition_value(index: GridIndex, x) -> np.ndarray:
    """Exact ``prod_i hat(N x_i - n_i)`` at a point or batch of points."""
    x = np.asarray(x, dtype=np.float64)
    vals = hat(index.N * x - np.asarray(index.n, dtype=np.float64))
    return np.prod(vals, axis=-1)


def partition_sum(x, N: int) -> np.ndarray:
    """Sum of every partition function on {0..N}^d at ``x`` (point or batch)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    grid = np.arange(N + 1, dtype=np.float64)
    # (n, d, N+1) table of hat(N x_i - j); the sum over the tensor grid factorizes
    # but is evaluated term by term to check the identity, not assume it.
    table = hat(N * xb[:, :, None] - grid)
    d = xb.shape[1]
    total = np.zeros(len(xb))
    for idx in itertools.product(range(N + 1), repeat=d):
        total += np.prod(table[:, np.arange(d), idx], axis=1)
    return total[0] if single else total


# ---------------------------------------------------------------------------
# layer-by-layer network builder


class _Builder:
    """Accumulates layers of neurons given as sparse pre-activation forms.

    A form is ``(terms, const)`` with ``terms`` a list of ``(column, weight)``
    over the current top layer (or the raw input before any layer exists).
    """

    def __init__(self, input_dim: int):
        self.input_dim = input_dim
        self.layers: list[list[tuple[list, float]]] = []

    def add_layer(self, forms: list[tuple[list, float]]) -> list[int]:
        self.layers.append(forms)
        return list(range(len(forms)))

    def network(self, outputs: list[tuple[list, float]]) -> ReluNetwork:
        layers = []
        width = self.input_dim
        for forms in self.layers + [outputs]:
            rows, cols, vals = [], [], []
            for i, (terms, _) in enumerate(forms):
                for col, val in terms:
                    rows.append(i)
                    cols.append(col)
                    vals.append(val)
            w = sparse.coo_array((vals, (rows, cols)), shape=(len(forms), width))
            layers.append(ReluLayer(w, [const for _, const in forms]))
            width = len(forms)
        return ReluNetwork(layers, self.input_dim, len(outputs))


def _lin(*parts) -> tuple[list, float]:
    """Linear combination of forms: ``_lin((c1, f1), (c2, f2), ...)``."""
    terms, const = [], 0.0
    for c, (t, k) in parts:
        terms.extend((col, c * w) for col, w in t)
        const += c * k
    return terms, const


def _const(c: float) -> tuple[list, float]:
    return [], float(c)


def _neuron(j: int) -> tuple[list, float]:
    return [(j, 1.0)], 0.0


def _product_tree(b: _Builder, forms: list, m: int) -> tuple[list, float]:
    """Append layers approximating the product of ``forms`` (values in [-1,1]).

    Each pair (a, c) is replaced by f(|a+c|/2) - f(|a-c|/2) where f is the
    piecewise-linear interpolant of t^2 from ``m`` sawtooth compositions;
    error per pair <= 2^{-2m-1}.  Mirror neurons of a pair are laid out
    interleaved so that an exactly zero factor yields an exactly zero output.
    Returns the output form over the final layer.
    """
    while len(forms) > 1:
        pairs = [(forms[i], forms[i + 1]) for i in range(0, len(forms) - 1, 2)]
        carry = forms[-1] if len(forms) % 2 else None
        last_level = len(forms) == 2

        # absolute values: [u+, v+, u-, v-] per pair
        layer, pos = [], []
        for a, c in pairs:
            u = _lin((0.5, a), (0.5, c))
            v = _lin((0.5, a), (-0.5, c))
            base = len(layer)
            layer += [u, v, _lin((-1.0, u)), _lin((-1.0, v))]
            pos.append(base)
        if carry is not None:
            cbase = len(layer)
            layer += [carry, _lin((-1.0, carry))]
        b.add_layer(layer)
        # u = n[u+] + n[u-], v = n[v+] + n[v-]
        sides = [
            (_lin((1.0, _neuron(p)), (1.0, _neuron(p + 2))),
             _lin((1.0, _neuron(p + 1)), (1.0, _neuron(p + 3))))
            for p in pos
        ]
        carry_cols = (cbase, cbase + 1) if carry is not None else None

        # sawtooth layers: [p_u, p_v, q_u, q_v, S_u, S_v] per pair
        for s in range(1, m + 1):
            layer, newpos = [], []
            for k, (u, v) in enumerate(sides):
                if s == 1:
                    blocks = [(_lin((2.0, x), (1.0, _const(-1.0))),
                               _lin((-2.0, x), (1.0, _const(1.0))),
                               x) for x in (u, v)]
                else:
                    p0 = pos[k]
                    blocks = []
                    for side in (0, 1):
                        pc, qc, sc = p0 + side, p0 + 2 + side, p0 + 4 + side
                        # g_{s-1} = 1 - p - q
                        g = _lin((-1.0, _neuron(pc)), (-1.0, _neuron(qc)), (1.0, _const(1.0)))
                        blocks.append((
                            _lin((2.0, g), (1.0, _const(-1.0))),
                            _lin((-2.0, g), (1.0, _const(1.0))),
                            _lin((1.0, _neuron(sc)), (-(0.25 ** (s - 1)), g)),
                        ))
                base = len(layer)
                (pu, qu, su), (pv, qv, sv) = blocks
                layer += [pu, pv, qu, qv, su, sv]
                newpos.append(base)
            if carry_cols is not None:
                cb = len(layer)
                layer += [_neuron(carry_cols[0]), _neuron(carry_cols[1])]
                carry_cols = (cb, cb + 1)
            b.add_layer(layer)
            pos = newpos

        # F = f_m(u) and the pair output D = F_u - F_v, written with the two
        # mirrored terms adjacent so equal sides cancel exactly
        if m == 0:
            diffs = [
                ([(p, 1.0), (p + 1, -1.0), (p + 2, 1.0), (p + 3, -1.0)], 0.0) for p in pos
            ]
        else:
            w = 0.25 ** m
            diffs = [
                ([(p, w), (p + 1, -w), (p + 2, w), (p + 3, -w), (p + 4, 1.0), (p + 5, -1.0)], 0.0)
                for p in pos
            ]
        if last_level:
            return diffs[0]

        # splice D into relu(D), relu(-D) so the next level sees clean zeros
        layer = []
        new_forms = []
        for dform in diffs:
            base = len(layer)
            layer += [dform, _lin((-1.0, dform))]
            new_forms.append(([(base, 1.0), (base + 1, -1.0)], 0.0))
        if carry_cols is not None:
            cb = len(layer)
            layer += [_neuron(carry_cols[0]), _neuron(carry_cols[1])]
            new_forms.append(([(cb, 1.0), (cb + 1, -1.0)], 0.0))
        b.add_layer(layer)
        forms = new_forms
    return forms[0]


def product_network(d: int, k: int) -> ReluNetwork:
    """Approximate x_1 * ... * x_d on [-1,1]^d.

    Error <= (d-1) 2^{-2k-1}; output exactly 0 when a coordinate is 0.
    """
    if d < 2:
        raise ValueError("product_network needs d >= 2")
    if k < 0:
        raise ValueError("k must be non-negative")
    b = _Builder(d)
    out = _product_tree(b, [_neuron(i) for i in range(d)], k)
    return rebalance(b.network([out]))


def _leaf_layers(b: _Builder, node: np.ndarray, N: int, s: Sequence[int]) -> list:
    """Two layers computing hat(N x_i - n_i) and copies of (x_i - n_i/N)."""
    d = len(node)
    first = []
    for i in range(d):
        t = ([(i, float(N))], -N * node[i])
        first += [t, _lin((-1.0, t))]
    copies = []
    for i in range(d):
        for _ in range(s[i]):
            t = ([(i, 1.0)], -node[i])
            copies.append(len(first))
            first += [t, _lin((-1.0, t))]
    b.add_layer(first)
    second = [([(2 * i, -1.0), (2 * i + 1, -1.0)], 1.0) for i in range(d)]
    carried = []
    for c in copies:
        carried.append(len(second))
        second += [_neuron(c), _neuron(c + 1)]
    b.add_layer(second)
    forms = [_neuron(i) for i in range(d)]
    forms += [([(c, 1.0), (c + 1, -1.0)], 0.0) for c in carried]
    return forms


def _local_network(node: np.ndarray, N: int, s: Sequence[int], k: int) -> ReluNetwork:
    """Network for partition_n(x) * (x - n/N)^s."""
    b = _Builder(len(node))
    forms = _leaf_layers(b, node, N, s)
    out = _product_tree(b, forms, k) if len(forms) > 1 else forms[0]
    return b.network([out])


def partition_network(index: GridIndex, k: int) -> ReluNetwork:
    """ReLU realization of the partition function at grid node ``index``."""
    return _local_network(index.node, index.N, (0,) * index.d, k)


# ---------------------------------------------------------------------------
# Taylor assembly


def multi_indices(d: int, r: int) -> list[tuple]:
    """All s in N^d with |s|_1 <= r, ordered by degree then lexicographically."""
    out = []
    for deg in range(r + 1):
        for s in itertools.product(range(deg + 1), repeat=d):
            if sum(s) == deg:
                out.append(tuple(s))
    return sorted(out, key=lambda s: (sum(s), tuple(-v for v in s)))


def taylor_coefficients(f: TargetFunction, index: GridIndex) -> dict:
    """``{s: d^s f(n/N) / s!}`` for every |s|_1 <= r, one entry per channel."""
    x0 = index.node[None, :]
    out = {}
    for s in multi_indices(f.dim_in, f.smoothness_r):
        fact = math.prod(math.factorial(v) for v in s)
        out[s] = f.derivative(s, x0)[0] / fact
    return out


def grid_resolution(k: int, tau: float) -> int:
    """N = ceil(2^{2k/tau}), robust to the float rounding of exact powers."""
    e = 2 * k / tau
    if abs(e - round(e)) < 1e-12:
        return 2 ** int(round(e))
    return int(math.ceil(2.0 ** e))


@dataclass
class ApproxReport:
    l2_error: float
    linf_error: float
    width: int
    depth: int
    budget: float
    k: int
    N: int
    l2_stderr: float = 0.0
    d: int = 1
    K: int = 1
    r: int = 0
    tau: float = 1.0
    target: str = "custom"
    rescale: float = 1.0
    seed: int = 0
    mc_samples: int = 0
    grid_step: float = 0.0
    error_bound: float = math.inf
    caps: dict = field(default_factory=dict)

    @property
    def caps_ok(self) -> bool:
        return all(v["ok"] for v in self.caps.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["caps_ok"] = self.caps_ok
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def structural_caps(d: int, K: int, r: int, k: int, N: int) -> dict:
    """Closed-form width / depth / budget caps for the assembled approximant."""
    gamma = (r + 1) * d ** r
    cells = (N + 1) ** d
    return {
        "width": K * gamma * cells * (6 * k + 3) * (d + r),
        "depth": (k + 1) * (d + r) + 2,
        "budget": 6 * gamma * cells * N * (d + r) ** 7 * (2 * (d + r)) ** (k + 1),
    }


def _estimate_size(d: int, r: int, k: int, N: int) -> tuple[int, int]:
    """Rough (width, nonzero count) of the assembled network."""
    depth = (k + 1) * (d + r) + 2
    per = sum(3 * (d + sum(s)) + 4 for s in multi_indices(d, r))
    cells = (N + 1) ** d
    return per * cells, 3 * per * cells * depth


def _mc_points(d: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.random((n, d))


def _grid_points(d: int, m: int) -> np.ndarray:
    """The tensor grid {0, 1/m, ..., 1}^d as an (n, d) array."""
    axis = np.linspace(0.0, 1.0, m + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def _measurement_plan(net: ReluNetwork, d: int, N: int, mc_samples: int,
                      eval_work: float) -> tuple[int, int]:
    """(MC sample count, grid divisions) within ``eval_work`` multiply-adds.

    The full plan is ``mc_samples`` points plus a grid of step 1/(8N).  When
    that exceeds the work budget the grid is coarsened first, then the MC
    sample shrinks; a coarse grid avoids multiples of N, whose points sit on
    interpolation nodes.
    """
    nnz = max(sum(l.nnz for l in net.layers), 1)
    points = max(int(eval_work // nnz), 2)
    m = 8 * N
    if (m + 1) ** d + mc_samples > points:
        m = max(int((points / 2) ** (1.0 / d)) - 1, 1)
        m = min(m, 8 * N)
        if m < 8 * N and m % N == 0 and m > 1:
            m -= 1
    n_mc = int(min(mc_samples, max(points - (m + 1) ** d, 2)))
    return n_mc, m


def _batched(net: ReluNetwork, x: np.ndarray, floats: int = 10_000_000) -> np.ndarray:
    """Evaluate in chunks holding about ``floats`` activations at a time."""
    batch = max(1, floats // max(net.width, 1))
    return np.vstack([evaluate(net, x[i:i + batch]) for i in range(0, len(x), batch)])


def _measure(predict, f, mc_x, grid_x):
    err_mc = np.linalg.norm(predict(mc_x) - f(mc_x), axis=1)
    err_grid = np.linalg.norm(predict(grid_x) - f(grid_x), axis=1)
    sq = err_mc ** 2
    l2 = float(np.sqrt(sq.mean()))
    se_sq = float(sq.std(ddof=1) / np.sqrt(len(sq))) if len(sq) > 1 else 0.0
    l2_se = se_sq / (2 * l2) if l2 > 0 else 0.0
    linf = float(max(err_mc.max(), err_grid.max()))
    return l2, l2_se, linf


def _assemble(f: TargetFunction, k: int, max_cells: int, max_nonzeros: int):
    d, K, r = f.dim_in, f.dim_out, f.smoothness_r
    N = grid_resolution(k, f.tau)
    cells = (N + 1) ** d
    if cells > max_cells:
        raise InfeasibleBuild(
            f"k={k}, tau={f.tau}, d={d} needs (N+1)^d = {cells} cells (N={N}); "
            f"guard is {max_cells}"
        )
    depth = (k + 1) * (d + r) + 2
    width, nnz = _estimate_size(d, r, k, N)
    if nnz > max_nonzeros:
        raise InfeasibleBuild(
            f"k={k}, tau={f.tau}, d={d}: network of width ~{width} needs ~{nnz} "
            f"stored weights; limit is {max_nonzeros}"
        )

    rescale = max(f.holder_bound, 1.0)
    nets, mixers = [], []
    for n in itertools.product(range(N + 1), repeat=d):
        index = GridIndex(n, N)
        coeffs = taylor_coefficients(f, index)
        for s, c in coeffs.items():
            c = c / rescale
            if not np.any(c):
                continue
            sub = deepen(_local_network(index.node, N, s, k), depth)
            nets.append(sub)
            mixers.append(c.reshape(K, 1))
    if nets:
        net = linear_combination(nets, mixers, K)
    else:
        net = zero_network(d, K, depth)
    net = deepen(net, depth)
    if rescale != 1.0:
        net = scale_output(net, rescale)
    return net, N, rescale


def build_approximant(f: TargetFunction, k: int, *, seed: int = 0,
                      mc_samples: int = 100_000, max_cells: int = 1_000_000,
                      max_nonzeros: int = 20_000_000,
                      eval_work: float = 1e10) -> tuple[ReluNetwork, ApproxReport]:
    """Assemble the partition-of-unity Taylor network for ``f`` at accuracy ``k``.

    Targets with ``holder_bound > 1`` are approximated after division by the
    bound and the output layer is scaled back; the factor is reported.  Error
    measurement is capped at ``eval_work`` multiply-adds (see the report's
    ``mc_samples`` and ``grid_step`` for what was actually used).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    d, K, r = f.dim_in, f.dim_out, f.smoothness_r
    net, N, rescale = _assemble(f, k, max_cells, max_nonzeros)

    n_mc, m = _measurement_plan(net, d, N, mc_samples, eval_work)
    mc_x = _mc_points(d, n_mc, seed)
    l2, l2_se, linf = _measure(lambda x: _batched(net, x), f, mc_x, _grid_points(d, m))

    caps = structural_caps(d, K, r, k, N)
    bound = rescale * math.sqrt(K) * 2 ** d * d ** r * (
        N ** (-f.tau) + 3 * (d + r) * (r + 1) * 2.0 ** (-2 * k)
    )
    report = ApproxReport(
        l2_error=l2, linf_error=linf, width=net.width, depth=net.depth,
        budget=net.budget, k=k, N=N, l2_stderr=l2_se, d=d, K=K, r=r, tau=f.tau,
        target=f.name, rescale=rescale, seed=seed, mc_samples=n_mc,
        grid_step=1.0 / m, error_bound=bound,
        caps={
            "width": {"value": net.width, "cap": caps["width"], "ok": net.width <= caps["width"]},
            "depth": {"value": net.depth, "cap": caps["depth"], "ok": net.depth == caps["depth"]},
            "budget": {"value": net.budget / rescale, "cap": caps["budget"],
                       "ok": net.budget / rescale <= caps["budget"]},
        },
    )
    return net, report


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True, eq=False)
class Chart:
    """Linear chart: patch ``origin + embedding @ u`` for u in [0,1]^s.

    The chart map is ``zeta(x) = pinv(embedding) @ (x - origin)``.
    """

    embedding: np.ndarray
    origin: np.ndarray
    target: TargetFunction

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.embedding, dtype=np.float64))
        o = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "embedding", e)
        object.__setattr__(self, "origin", o)
        if e.shape[0] != o.shape[0]:
            raise ValueError("embedding rows must match the ambient dimension")
        if e.shape[1] != self.target.dim_in:
            raise ValueError(
                f"chart is {e.shape[1]}-dimensional but target takes {self.target.dim_in} inputs"
            )
        if e.shape[1] >= e.shape[0]:
            raise ValueError("chart dimension must be below the ambient dimension")

    @property
    def ambient_dim(self) -> int:
        return self.embedding.shape[0]

    @property
    def chart_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def zeta(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.linalg.pinv(self.embedding)
        return a, -a @ self.origin

    @property
    def jacobian(self) -> float:
        e = self.embedding
        return float(np.sqrt(np.linalg.det(e.T @ e)))

    def embed(self, u: np.ndarray) -> np.ndarray:
        return self.origin + u @ self.embedding.T


@dataclass
class ChartReport:
    l2_error: float
    linf_error: float
    width: int
    depth: int
    budget: float
    k: int
    N: int
    per_chart_l2: list
    native_l2: list
    native_linf: list
    ambient_dim: int
    chart_dim: int
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def build_chart_approximant(charts: Sequence[Chart], k: int, *, seed: int = 0,
                            mc_samples: int = 100_000,
                            **kwargs) -> tuple[ReluNetwork, ChartReport]:
    """Sum of per-chart approximants, each composed with its linear chart map.

    Errors are measured on points sampled from each patch against that patch's
    target; patches are assumed disjoint with targets vanishing off their own
    patch.
    """
    if not charts:
        raise ValueError("need at least one chart")
    dims = {(c.ambient_dim, c.chart_dim, c.target.dim_out) for c in charts}
    if len(dims) != 1:
        raise ValueError(f"inconsistent chart dimensions: {sorted(dims)}")
    (D_amb, s, K), = dims

    parts, natives = [], []
    for j, c in enumerate(charts):
        net, rep = build_approximant(c.target, k, seed=seed + j,
                                     mc_samples=max(mc_samples // len(charts), 2), **kwargs)
        natives.append(rep)
        a, off = c.zeta
        parts.append(compose(net, affine_network(a, off)))
    net = parts[0] if len(parts) == 1 else linear_combination(parts, [np.eye(K)] * len(parts), K)

    # same sample points as each native build, mapped onto its patch
    per_l2, sq_total, linf = [], 0.0, 0.0
    for j, (c, rep) in enumerate(zip(charts, natives)):
        u = _mc_points(s, rep.mc_samples, seed + j)
        grid_u = _grid_points(s, int(round(1.0 / rep.grid_step)))
        l2, _, lmax = _measure(lambda x, c=c: _batched(net, c.embed(x)), c.target, u, grid_u)
        per_l2.append(l2)
        sq_total += c.jacobian * l2 ** 2
        linf = max(linf, lmax)
    report = ChartReport(
        l2_error=float(math.sqrt(sq_total)), linf_error=linf, width=net.width,
        depth=net.depth, budget=net.budget, k=k, N=natives[0].N,
        per_chart_l2=per_l2, native_l2=[r.l2_error for r in natives],
        native_linf=[r.linf_error for r in natives], ambient_dim=D_amb, chart_dim=s,
        seed=seed,
    )
    return net, report
