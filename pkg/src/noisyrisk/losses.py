"""Classification losses on the probability simplex.

Three families: l_p distances, cross entropy and reverse cross entropy.  Each
is scored on softmax outputs; ``LossSpec.lipschitz_lambda`` is the Lipschitz
constant of ``a -> loss(softmax(a), q)`` in the Euclidean norm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ._random import make_rng, uniform_simplex
from .netcore import softmax

__all__ = [
    "SimplexLabel",
    "LossSpec",
    "ClampWarning",
    "CE_FLOOR",
    "one_hot",
    "loss",
    "loss_with_flag",
    "batch_loss",
    "loss_table",
    "symmetry_constant",
    "asymmetry_witness",
    "LipschitzAudit",
    "lipschitz_audit",
]

CE_FLOOR = 1e-300
SIMPLEX_TOL = 1e-12


class ClampWarning(RuntimeWarning):
    """A cross-entropy prediction had a zero on a supported class."""


@dataclass(frozen=True, eq=False)
class SimplexLabel:
    """A point of the probability simplex; one-hot vectors are class labels."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64, copy=True).reshape(-1)
        if p.size < 1:
            raise ValueError("empty label")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ValueError("simplex components must be finite and non-negative")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex components sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def K(self) -> int:
        return self.p.size

    @classmethod
    def from_logits(cls, z) -> "SimplexLabel":
        return cls(softmax(np.asarray(z, dtype=np.float64)))


def one_hot(j: int, K: int) -> SimplexLabel:
    e = np.zeros(K)
    e[j] = 1.0
    return SimplexLabel(e)


_KINDS = ("lp", "cross_entropy", "reverse_cross_entropy")


@dataclass(frozen=True)
class LossSpec:
    """Loss family plus the class count it is used with.

    ``p`` is the exponent of the l_p family; ``A`` (< 0) is the value taken
    by log 0 in reverse cross entropy.
    """

    kind: str
    K: int
    p: float = 1.0
    A: float = -4.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; choose from {_KINDS}")
        if self.K < 2:
            raise ValueError("need at least two classes")
        if self.kind == "lp" and not self.p >= 1:
            raise ValueError("l_p loss needs p >= 1")
        if self.kind == "reverse_cross_entropy" and not self.A < 0:
            raise ValueError("reverse cross entropy needs A < 0")

    @classmethod
    def lp(cls, K: int, p: float = 1.0) -> "LossSpec":
        return cls("lp", K, p=p)

    @classmethod
    def cross_entropy(cls, K: int) -> "LossSpec":
        return cls("cross_entropy", K)

    @classmethod
    def reverse_cross_entropy(cls, K: int, A: float = -4.0) -> "LossSpec":
        return cls("reverse_cross_entropy", K, A=A)

    @classmethod
    def parse(cls, name: str, K: int, A: float = -4.0) -> "LossSpec":
        """Parse ``l1``, ``l2``, ``lp:<p>``, ``ce`` or ``rce``."""
        key = name.strip().lower()
        if key in ("ce", "cross_entropy", "cross-entropy"):
            return cls.cross_entropy(K)
        if key in ("rce", "reverse_cross_entropy", "reverse-ce", "reverse_ce"):
            return cls.reverse_cross_entropy(K, A)
        if key.startswith("lp:"):
            return cls.lp(K, float(key[3:]))
        if key.startswith("l") and key[1:].replace(".", "", 1).isdigit():
            return cls.lp(K, float(key[1:]))
        raise ValueError(f"cannot parse loss {name!r}")

    @property
    def name(self) -> str:
        if self.kind == "lp":
            return f"l{self.p:g}"
        return "ce" if self.kind == "cross_entropy" else "rce"

    @property
    def lipschitz_lambda(self) -> float:
        lam = math.sqrt(2.0) * self.K
        return -lam * self.A if self.kind == "reverse_cross_entropy" else lam

    @property
    def symmetric(self) -> bool:
        """Closed-form symmetry: l1 and reverse CE sum to a constant over labels."""
        return (self.kind == "lp" and self.p == 1.0) or self.kind == "reverse_cross_entropy"

    @property
    def c0(self) -> float | None:
        """Closed-form symmetry constant, if the loss is symmetric."""
        if self.kind == "lp" and self.p == 1.0:
            return 2.0 * (self.K - 1)
        if self.kind == "reverse_cross_entropy":
            return -self.A * (self.K - 1)
        return None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["name"] = self.name
        out["lipschitz_lambda"] = self.lipschitz_lambda
        return out


def _rows(v, K: int) -> np.ndarray:
    if isinstance(v, SimplexLabel):
        v = v.p
    a = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if a.shape[-1] != K:
        raise ValueError(f"expected vectors of length {K}, got shape {a.shape}")
    return a


def _batch(spec: LossSpec, pred: np.ndarray, label: np.ndarray) -> tuple[np.ndarray, bool]:
    if spec.kind == "lp":
        diff = np.abs(pred - label)
        if spec.p == 1.0:
            return diff.sum(axis=-1), False
        return (diff ** spec.p).sum(axis=-1) ** (1.0 / spec.p), False
    if spec.kind == "cross_entropy":
        support = label > 0
        clamped = bool(np.any(support & (pred < CE_FLOOR)))
        logp = np.log(np.maximum(pred, CE_FLOOR))
        return -np.where(support, label * logp, 0.0).sum(axis=-1), clamped
    # reverse CE: log of the label clipped below at A, so log 0 = A
    with np.errstate(divide="ignore"):
        logq = np.maximum(np.log(label), spec.A)
    return -(pred * logq).sum(axis=-1), False


def loss_with_flag(spec: LossSpec, prediction, label) -> tuple[float, bool]:
    """Loss value plus whether the cross-entropy floor was used."""
    pred = _rows(prediction, spec.K)[0]
    lab = _rows(label, spec.K)[0]
    value, clamped = _batch(spec, pred, lab)
    return float(value), clamped


def loss(spec: LossSpec, prediction, label) -> float:
    """``loss(prediction, label)``; warns with :class:`ClampWarning` on a CE clamp."""
    value, clamped = loss_with_flag(spec, prediction, label)
    if clamped:
        warnings.warn(f"cross entropy clamped a zero probability to {CE_FLOOR}", ClampWarning,
                      stacklevel=2)
    return value


def batch_loss(spec: LossSpec, predictions, labels) -> np.ndarray:
    """Row-wise losses for (n, K) predictions and (n, K) labels."""
    pred = _rows(predictions, spec.K)
    lab = _rows(labels, spec.K)
    value, clamped = _batch(spec, pred, lab)
    if clamped:
        warnings.warn(f"cross entropy clamped a zero probability to {CE_FLOOR}", ClampWarning,
                      stacklevel=2)
    return value


def loss_table(spec: LossSpec, predictions) -> np.ndarray:
    """``L[i, j] = loss(predictions[i], e_j)`` for every class j."""
    pred = _rows(predictions, spec.K)
    if spec.kind == "lp":
        if spec.p == 1.0:
            return 2.0 * (1.0 - pred)
        out = np.empty((len(pred), spec.K))
        eye = np.eye(spec.K)
        for j in range(spec.K):
            out[:, j] = _batch(spec, pred, np.broadcast_to(eye[j], pred.shape))[0]
        return out
    if spec.kind == "cross_entropy":
        if np.any(pred < CE_FLOOR):
            warnings.warn(f"cross entropy clamped a zero probability to {CE_FLOOR}",
                          ClampWarning, stacklevel=2)
        return -np.log(np.maximum(pred, CE_FLOOR))
    return -spec.A * (1.0 - pred)


def symmetry_constant(spec: LossSpec, f_values: Sequence, tol: float = 1e-9) -> float | None:
    """``sum_j loss(f, e_j)`` if it is the same for every sampled prediction, else None."""
    pred = _rows(f_values, spec.K)
    if not len(pred):
        raise ValueError("need at least one prediction")
    sums = loss_table(spec, pred).sum(axis=1)
    if sums.max() - sums.min() > tol:
        return None
    return float(sums.mean())


def asymmetry_witness(spec: LossSpec, trials: int = 1000, seed=0, tol: float = 1e-9):
    """Two predictions whose label-sums differ by more than ``tol``, or None."""
    rng = make_rng(seed)
    base = np.full(spec.K, 1.0 / spec.K)
    s0 = loss_table(spec, base).sum()
    for q in uniform_simplex(rng, trials, spec.K):
        s1 = loss_table(spec, q).sum()
        if abs(s1 - s0) > tol:
            return {"pred_a": base.tolist(), "sum_a": float(s0),
                    "pred_b": q.tolist(), "sum_b": float(s1)}
    return None


@dataclass
class LipschitzAudit:
    loss: str
    K: int
    trials: int
    skipped: int
    max_ratio: float
    bound: float
    passed: bool
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def lipschitz_audit(spec: LossSpec, trials: int = 100_000, seed=0,
                    scale: float = 3.0, chunk: int = 50_000) -> LipschitzAudit:
    """Largest ``|l(softmax a, q) - l(softmax b, q)| / ||a - b||`` over random draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = make_rng(seed)
    worst, skipped, done = 0.0, 0, 0
    while done < trials:
        n = min(chunk, trials - done)
        a = scale * rng.standard_normal((n, spec.K))
        b = scale * rng.standard_normal((n, spec.K))
        q = uniform_simplex(rng, n, spec.K)
        gap = np.linalg.norm(a - b, axis=1)
        ok = gap > 0
        skipped += int((~ok).sum())
        diff = np.abs(_batch(spec, softmax(a), q)[0] - _batch(spec, softmax(b), q)[0])
        if ok.any():
            worst = max(worst, float((diff[ok] / gap[ok]).max()))
        done += n
    bound = spec.lipschitz_lambda
    return LipschitzAudit(spec.name, spec.K, trials, skipped, worst, bound, worst <= bound,
                          seed if isinstance(seed, int) else 0)
