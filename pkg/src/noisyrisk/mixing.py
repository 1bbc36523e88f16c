"""Stationary finite Markov chains, their beta-mixing coefficients and the
independent-block construction used to compare dependent and independent
samples.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ._random import make_rng

__all__ = [
    "MixingChain",
    "TableEmitter",
    "BumpEmitter",
    "CellEmitter",
    "ChainPath",
    "BlockScheme",
    "BetaProfile",
    "SwapResult",
    "sample_states",
    "sample_path",
    "beta_coefficients",
    "independent_blocks",
    "block_swap_gap",
    "agreement_functional",
    "agreement_gap_exact",
    "chain_from_dict",
]

_TOL = 1e-12


# ---------------------------------------------------------------------------
# emission of (x, y) from states


@dataclass(frozen=True, eq=False)
class TableEmitter:
    """Each state emits a fixed point and a fixed class label."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=np.float64)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(-1))
        if len(self.points) != len(self.labels):
            raise ValueError("need one point and one label per state")

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def emit(self, states: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
        return self.points[states], self.labels[states]

    def to_dict(self) -> dict:
        return {"kind": "table", "points": self.points.tolist(), "labels": self.labels.tolist()}


@dataclass(frozen=True, eq=False)
class BumpEmitter:
    """Gaussian cloud around a per-state centre, clipped to [0,1]^d; fixed label per state."""

    centers: np.ndarray
    labels: np.ndarray
    width: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=np.float64)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(-1))
        if len(self.centers) != len(self.labels):
            raise ValueError("need one centre and one label per state")

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def emit(self, states: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers[states]
        x = np.clip(c + self.width * rng.standard_normal(c.shape), 0.0, 1.0)
        return x, self.labels[states]

    def to_dict(self) -> dict:
        return {"kind": "gaussian-bump", "centers": self.centers.tolist(),
                "labels": self.labels.tolist(), "width": self.width}


class CellEmitter:
    """State s picks cell s of a ``grid^d`` partition of [0,1]^d; x is uniform
    in that cell and y is drawn from ``label_probs(x)`` (an (n, K) array).

    With a uniform stationary law the x-marginal is uniform on [0,1]^d.
    """

    def __init__(self, grid: int, d: int, label_probs: Callable[[np.ndarray], np.ndarray]):
        if grid < 1 or d < 1:
            raise ValueError("grid and d must be positive")
        self.grid, self.d, self.label_probs = int(grid), int(d), label_probs

    @property
    def states(self) -> int:
        return self.grid ** self.d

    def emit(self, states: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
        states = np.asarray(states)
        corner = np.stack(np.unravel_index(states.reshape(-1), (self.grid,) * self.d), axis=-1)
        x = (corner + rng.random(corner.shape)) / self.grid
        probs = np.asarray(self.label_probs(x), dtype=np.float64)
        cum = np.cumsum(probs, axis=1)
        y = (rng.random(len(x))[:, None] >= cum[:, :-1]).sum(axis=1)
        return x.reshape(states.shape + (self.d,)), y.reshape(states.shape)

    def to_dict(self) -> dict:
        return {"kind": "cells", "grid": self.grid, "d": self.d}


# ---------------------------------------------------------------------------
# chains


class MixingChain:
    """Finite stationary Markov chain with an optional (x, y) emitter."""

    def __init__(self, transition, stationary=None, emitter=None):
        t = np.array(transition, dtype=np.float64, copy=True)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise ValueError("transition must be a square matrix")
        if not np.all(np.isfinite(t)) or t.min() < 0:
            raise ValueError("transition entries must be non-negative")
        if np.abs(t.sum(axis=1) - 1.0).max() > _TOL:
            raise ValueError("transition rows must sum to 1")
        pi = self._stationary(t) if stationary is None else np.array(stationary, dtype=np.float64)
        if pi.shape != (t.shape[0],) or pi.min() < 0 or abs(pi.sum() - 1.0) > _TOL:
            raise ValueError("stationary law must be a distribution over the states")
        if np.abs(pi @ t - pi).max() > _TOL:
            raise ValueError("stationary law is not invariant under the transition")
        t.setflags(write=False)
        pi.setflags(write=False)
        self.transition, self.stationary, self.emitter = t, pi, emitter

    @staticmethod
    def _stationary(t: np.ndarray) -> np.ndarray:
        m = t.shape[0]
        # solve pi (T - I) = 0 with sum(pi) = 1 in the least-squares sense
        a = np.vstack([(t - np.eye(m)).T, np.ones(m)])
        b = np.zeros(m + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(a, b, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    @property
    def m(self) -> int:
        return self.transition.shape[0]

    # -- constructors ------------------------------------------------------
    @classmethod
    def iid(cls, pi, emitter=None) -> "MixingChain":
        """Every row equals ``pi``: an independent sequence."""
        pi = np.asarray(pi, dtype=np.float64)
        return cls(np.tile(pi, (len(pi), 1)), pi, emitter)

    @classmethod
    def sticky(cls, m: int, stay: float, emitter=None) -> "MixingChain":
        """``T = stay I + (1 - stay)/m 11^T``; uniform stationary law, beta_s = stay^s (1 - 1/m)."""
        if not 0.0 <= stay <= 1.0:
            raise ValueError("stay must lie in [0, 1]")
        t = np.full((m, m), (1.0 - stay) / m) + stay * np.eye(m)
        return cls(t, np.full(m, 1.0 / m), emitter)

    @classmethod
    def two_state(cls, stay: float, emitter=None) -> "MixingChain":
        """Symmetric 2-state chain with stay-probability ``stay``; eigenvalue 2 stay - 1."""
        return cls([[stay, 1.0 - stay], [1.0 - stay, stay]], [0.5, 0.5], emitter)

    def to_dict(self) -> dict:
        out = {"states": self.m, "transition": self.transition.tolist(),
               "stationary": self.stationary.tolist()}
        if self.emitter is not None and hasattr(self.emitter, "to_dict"):
            out["emit"] = self.emitter.to_dict()
        return out


def _emitter_from_dict(doc, m: int, label_probs=None):
    if isinstance(doc, list):
        return TableEmitter([e["x"] for e in doc], [e["y"] for e in doc])
    kind = doc.get("kind")
    if kind == "table":
        return TableEmitter(doc["points"], doc["labels"])
    if kind == "gaussian-bump":
        return BumpEmitter(doc["centers"], doc["labels"], doc.get("width", 0.1))
    if kind == "cells":
        if label_probs is None:
            raise ValueError("a cells emitter needs a label model")
        em = CellEmitter(doc["grid"], doc["d"], label_probs)
        if em.states != m:
            raise ValueError(f"cells emitter has {em.states} cells but the chain has {m} states")
        return em
    raise ValueError(f"unknown emitter kind {kind!r}")


def chain_from_dict(doc: dict, label_probs=None) -> MixingChain:
    """Build a chain from ``{states, transition, emit}`` or a named family.

    Named families: ``{"kind": "sticky", "states": m, "stay": p}``,
    ``{"kind": "two_state", "stay": p}``, ``{"kind": "iid", "stationary": [...]}``.
    """
    kind = doc.get("kind")
    if kind == "sticky":
        chain = MixingChain.sticky(int(doc["states"]), float(doc["stay"]))
    elif kind == "two_state":
        chain = MixingChain.two_state(float(doc["stay"]))
    elif kind == "iid":
        chain = MixingChain.iid(doc["stationary"])
    elif "transition" in doc:
        chain = MixingChain(doc["transition"], doc.get("stationary"))
        states = doc.get("states")
        count = len(states) if isinstance(states, list) else states
        if count is not None and count != chain.m:
            raise ValueError(f"'states' says {count} but the transition is {chain.m} x {chain.m}")
    else:
        raise ValueError("chain document needs a 'transition' matrix or a known 'kind'")
    if "emit" in doc:
        chain.emitter = _emitter_from_dict(doc["emit"], chain.m, label_probs)
    return chain


# ---------------------------------------------------------------------------
# sampling


def sample_states(chain: MixingChain, length: int, paths: int = 1, seed=0) -> np.ndarray:
    """(paths, length) state indices; each path starts from the stationary law."""
    if length < 0 or paths < 1:
        raise ValueError("length must be >= 0 and paths >= 1")
    rng = make_rng(seed)
    out = np.empty((paths, length), dtype=np.int64)
    if length == 0:
        return out
    cum_pi = np.cumsum(chain.stationary)
    cum_t = np.cumsum(chain.transition, axis=1)
    out[:, 0] = np.minimum(np.searchsorted(cum_pi, rng.random(paths), side="right"), chain.m - 1)
    for t in range(1, length):
        u = rng.random(paths)
        rows = cum_t[out[:, t - 1]]
        out[:, t] = np.minimum((u[:, None] >= rows).sum(axis=1), chain.m - 1)
    return out


@dataclass(frozen=True, eq=False)
class ChainPath:
    states: np.ndarray
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.states)

    def dataset(self, K: int):
        from .noise import LabeledDataset

        if self.x is None:
            raise ValueError("path has no emitted points")
        return LabeledDataset(self.x, self.y, K)


def sample_path(chain: MixingChain, length: int, seed=0) -> ChainPath:
    """One stationary path; points and labels are emitted when the chain has an emitter."""
    rng = make_rng(seed)
    states = sample_states(chain, length, 1, rng)[0]
    if chain.emitter is None:
        return ChainPath(states)
    x, y = chain.emitter.emit(states, rng)
    return ChainPath(states, x, y)


# ---------------------------------------------------------------------------
# beta coefficients


@dataclass
class BetaProfile:
    lags: list
    beta: list

    def __post_init__(self):
        if any(b < -_TOL or b > 1 + _TOL for b in self.beta):
            raise ValueError("beta coefficients must lie in [0, 1]")

    def at(self, s: int) -> float:
        return self.beta[self.lags.index(s)]

    def envelope_ok(self, tol: float = 1e-12) -> bool:
        """Non-increasing up to ``tol``."""
        b = np.asarray(self.beta)
        return bool(np.all(np.diff(b) <= tol))

    def to_csv(self) -> str:
        lines = ["s,beta_s"] + [f"{s},{b!r}" for s, b in zip(self.lags, self.beta)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return asdict(self)


def beta_coefficients(chain: MixingChain, max_lag: int) -> BetaProfile:
    """``beta_s = sum_i pi_i TV((T^s)_i, pi)`` for s = 1..max_lag.

    Uses ``T^s - 1 pi^T = (T - 1 pi^T)^s`` so that an independent chain gives
    exact zeros and small coefficients avoid cancellation.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    pi = chain.stationary
    dev = chain.transition - pi[None, :]
    power = np.eye(chain.m)
    lags, beta = [], []
    for s in range(1, max_lag + 1):
        power = power @ dev
        tv = 0.5 * np.abs(power).sum(axis=1)
        lags.append(s)
        beta.append(float(min(pi @ tv, 1.0)))
    return BetaProfile(lags, beta)


# ---------------------------------------------------------------------------
# independent blocks


@dataclass(frozen=True)
class BlockScheme:
    """Block length ``a_n`` and count ``mu_n``; a path of 2n = 2 a_n mu_n points."""

    a_n: int
    mu_n: int

    def __post_init__(self):
        if self.a_n < 1 or self.mu_n < 1:
            raise ValueError("a_n and mu_n must be positive")

    @property
    def n(self) -> int:
        return self.a_n * self.mu_n

    @property
    def path_length(self) -> int:
        return 2 * self.n

    def odd_indices(self) -> np.ndarray:
        """(mu_n, a_n) zero-based positions of the blocks G_1, ..., G_mu."""
        j = np.arange(self.mu_n)[:, None]
        return 2 * j * self.a_n + np.arange(self.a_n)[None, :]

    def even_indices(self) -> np.ndarray:
        """(mu_n, a_n) zero-based positions of the blocks H_1, ..., H_mu."""
        return self.odd_indices() + self.a_n


def independent_blocks(path, scheme: BlockScheme, chain: MixingChain, seed=0):
    """Odd blocks of ``path`` plus ``mu_n`` fresh, mutually independent stationary blocks.

    ``path`` is an array whose first axis is time (or the last axis for a
    batch of paths, shape (paths, 2n)).  Returns ``(odd, ib)`` state blocks,
    each of shape (..., mu_n, a_n).
    """
    arr = np.asarray(path.states if isinstance(path, ChainPath) else path)
    if arr.shape[-1] != scheme.path_length:
        raise ValueError(
            f"path has length {arr.shape[-1]} but the scheme needs 2 a_n mu_n = {scheme.path_length}"
        )
    odd = arr[..., scheme.odd_indices()]
    lead = arr.shape[:-1]
    count = int(np.prod(lead, dtype=np.int64)) * scheme.mu_n
    fresh = sample_states(chain, scheme.a_n, count, seed)
    ib = fresh.reshape(lead + (scheme.mu_n, scheme.a_n))
    return odd, ib


def agreement_functional(blocks: np.ndarray) -> np.ndarray:
    """Fraction of consecutive blocks whose first states agree; values in [0, 1]."""
    first = blocks[..., 0]
    if first.shape[-1] < 2:
        return np.zeros(first.shape[:-1])
    return (first[..., 1:] == first[..., :-1]).mean(axis=-1)


def agreement_gap_exact(chain: MixingChain, scheme: BlockScheme) -> float:
    """Exact |E g(odd blocks) - E g(IB)| for :func:`agreement_functional`.

    Consecutive odd-block starts are 2 a_n steps apart.
    """
    if scheme.mu_n < 2:
        return 0.0
    pi = chain.stationary
    t2a = np.linalg.matrix_power(chain.transition, 2 * scheme.a_n)
    return float(abs(pi @ np.diag(t2a) - pi @ pi))


@dataclass
class SwapResult:
    a_n: int
    mu_n: int
    trials: int
    mean_original: float
    mean_ib: float
    gap: float
    stderr: float
    bound: float
    beta_a: float
    passed: bool
    exact_gap: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def block_swap_gap(g: Callable[[np.ndarray], np.ndarray], chain: MixingChain,
                   scheme: BlockScheme, trials: int, seed=0, g_bound: float = 1.0) -> SwapResult:
    """Monte-Carlo |E g(odd blocks) - E g(independent blocks)| against
    ``g_bound (mu_n - 1) beta_{a_n}``; passes within three standard errors.

    ``g`` maps (trials, mu_n, a_n) state blocks to (trials,) values in
    [0, g_bound].
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    rng = make_rng(seed)
    paths = sample_states(chain, scheme.path_length, trials, rng)
    odd, ib = independent_blocks(paths, scheme, chain, rng)
    go = np.asarray(g(odd), dtype=np.float64)
    gi = np.asarray(g(ib), dtype=np.float64)
    gap = abs(go.mean() - gi.mean())
    se = float(np.sqrt(go.var(ddof=1) / trials + gi.var(ddof=1) / trials))
    beta_a = beta_coefficients(chain, scheme.a_n).beta[-1]
    bound = g_bound * (scheme.mu_n - 1) * beta_a
    exact = agreement_gap_exact(chain, scheme) if g is agreement_functional else None
    return SwapResult(scheme.a_n, scheme.mu_n, trials, float(go.mean()), float(gi.mean()),
                      float(gap), se, float(bound), float(beta_a), bool(gap <= bound + 3 * se),
                      exact)
