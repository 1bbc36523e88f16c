"""Label-noise channels, labelled datasets and noise-tolerance checks."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._random import make_rng
from .losses import LossSpec, batch_loss, loss_table

__all__ = [
    "NoiseChannel",
    "LabeledDataset",
    "ToleranceVerdict",
    "corrupt",
    "empirical_risk",
    "exact_noisy_empirical_risk",
    "sampled_noisy_empirical_risk",
    "affine_noisy_risk",
    "hypothesis_predictions",
    "tolerance_check",
    "random_instance",
    "find_tolerance_witness",
]

_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class NoiseChannel:
    """Column-stochastic matrix: ``eta[i, j] = P(noisy label i | clean label j)``."""

    eta: np.ndarray
    uniform_rate: float | None = None

    def __post_init__(self):
        e = np.array(self.eta, dtype=np.float64, copy=True)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 2:
            raise ValueError(f"channel must be a K x K matrix with K >= 2, got {e.shape}")
        if not np.all(np.isfinite(e)) or e.min() < 0 or e.max() > 1:
            raise ValueError("channel entries must lie in [0, 1]")
        if np.abs(e.sum(axis=0) - 1.0).max() > _TOL:
            raise ValueError("channel columns must sum to 1")
        e.setflags(write=False)
        object.__setattr__(self, "eta", e)

    @property
    def K(self) -> int:
        return self.eta.shape[0]

    @classmethod
    def identity(cls, K: int) -> "NoiseChannel":
        return cls(np.eye(K), 0.0)

    @classmethod
    def uniform(cls, K: int, eta: float) -> "NoiseChannel":
        """Every wrong label has probability ``eta``; needs 0 <= eta <= 1/K.

        ``eta = 0`` gives the identity channel.
        """
        if not 0.0 <= eta <= 1.0 / K + _TOL:
            raise ValueError(f"uniform noise rate must lie in [0, 1/K] = [0, {1.0 / K:g}]")
        m = np.full((K, K), float(eta))
        np.fill_diagonal(m, 1.0 - (K - 1) * eta)
        return cls(m, float(eta))

    def class_weights(self, labels: np.ndarray) -> np.ndarray:
        """(n, K) table of ``P(noisy = j | clean = labels[i])``."""
        return self.eta[:, np.asarray(labels, dtype=np.int64)].T

    def to_dict(self) -> dict:
        return {"K": self.K, "eta": self.eta.tolist(), "uniform_rate": self.uniform_rate}


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Points ``x`` (n, d) with integer clean labels and optional noisy labels."""

    x: np.ndarray
    labels: np.ndarray
    K: int
    noisy_labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.labels, copy=True)
        if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
            raise ValueError("x must be (n, d) and labels (n,)")
        if not np.all(np.isfinite(x)):
            raise ValueError("points must be finite")
        y = self._check_labels(y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", y)
        if self.noisy_labels is not None:
            z = self._check_labels(np.array(self.noisy_labels, copy=True))
            if z.shape != y.shape:
                raise ValueError("noisy labels must match clean labels in length")
            object.__setattr__(self, "noisy_labels", z)
        for a in (self.x, self.labels, self.noisy_labels):
            if a is not None:
                a.setflags(write=False)

    def _check_labels(self, y: np.ndarray) -> np.ndarray:
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.K):
            raise ValueError(f"labels must lie in 0..{self.K - 1}")
        return y

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def onehot(self, noisy: bool = False) -> np.ndarray:
        y = self.noisy_labels if noisy else self.labels
        if y is None:
            raise ValueError("dataset has no noisy labels")
        out = np.zeros((self.n, self.K))
        out[np.arange(self.n), y] = 1.0
        return out

    def with_noisy(self, noisy: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.x, self.labels, self.K, noisy)

    # -- CSV -------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = [f"x{i}" for i in range(self.d)] + ["label"]
        if self.noisy_labels is not None:
            header.append("noisy_label")
        w.writerow(header)
        for i in range(self.n):
            row = [repr(float(v)) for v in self.x[i]] + [int(self.labels[i])]
            if self.noisy_labels is not None:
                row.append(int(self.noisy_labels[i]))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, K: int | None = None) -> "LabeledDataset":
        """Read a CSV file written by :meth:`to_csv`."""
        return cls.from_csv_text(Path(path).read_text(), K)

    @classmethod
    def from_csv_text(cls, text: str, K: int | None = None) -> "LabeledDataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header, body = rows[0], rows[1:]
        if "label" not in header:
            raise ValueError("CSV needs a 'label' column")
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        li = header.index("label")
        ni = header.index("noisy_label") if "noisy_label" in header else None
        x = np.array([[float(r[i]) for i in xcols] for r in body]).reshape(len(body), len(xcols))
        y = np.array([int(r[li]) for r in body], dtype=np.int64)
        z = np.array([int(r[ni]) for r in body], dtype=np.int64) if ni is not None else None
        if K is None:
            K = int(max(y.max(initial=0), -1 if z is None else z.max(initial=0))) + 1
            K = max(K, 2)
        return cls(x, y, K, z)


def corrupt(channel: NoiseChannel, data: LabeledDataset, seed=0) -> LabeledDataset:
    """Draw each noisy label independently from the channel column of its clean label."""
    if channel.K != data.K:
        raise ValueError("channel and dataset disagree on the class count")
    rng = make_rng(seed)
    cum = np.cumsum(channel.eta[:, data.labels], axis=0)
    cum[-1] = 1.0
    u = rng.random(data.n)
    noisy = (u[None, :] >= cum).sum(axis=0)
    return data.with_noisy(np.minimum(noisy, data.K - 1))


def _preds(f_values, data: LabeledDataset) -> np.ndarray:
    p = np.asarray(f_values, dtype=np.float64)
    if p.shape != (data.n, data.K):
        raise ValueError(f"expected predictions of shape {(data.n, data.K)}, got {p.shape}")
    return p


def empirical_risk(spec: LossSpec, f_values, data: LabeledDataset, noisy: bool = False) -> float:
    """Average loss of the predictions against the clean (or sampled noisy) labels."""
    return float(batch_loss(spec, _preds(f_values, data), data.onehot(noisy)).mean())


def exact_noisy_empirical_risk(spec: LossSpec, f_values, data: LabeledDataset,
                               channel: NoiseChannel) -> float:
    """``(1/n) sum_i sum_j P(e_j | y_i) loss(f(x_i), e_j)`` with no sampling."""
    p = _preds(f_values, data)
    weights = channel.class_weights(data.labels)
    return float((weights * loss_table(spec, p)).sum(axis=1).mean())


def sampled_noisy_empirical_risk(spec: LossSpec, f_values, data: LabeledDataset,
                                 channel: NoiseChannel, draws: int, seed=0) -> float:
    """Average over ``draws`` independent corruptions of the noisy empirical risk."""
    rng = make_rng(seed)
    table = loss_table(spec, _preds(f_values, data))
    total = 0.0
    for _ in range(draws):
        z = corrupt(channel, data, rng).noisy_labels
        total += table[np.arange(data.n), z].mean()
    return total / draws


def affine_noisy_risk(spec: LossSpec, clean_risk: float, eta: float) -> float:
    """``C0 eta + (1 - eta K) clean_risk`` for a symmetric loss under uniform noise."""
    if spec.c0 is None:
        raise ValueError(f"{spec.name} is not symmetric")
    return spec.c0 * eta + (1.0 - eta * spec.K) * clean_risk


def hypothesis_predictions(grid, data: LabeledDataset) -> np.ndarray:
    """(H, n, K) predictions from a grid of callables or precomputed arrays."""
    out = []
    for h in grid:
        p = h(data.x) if callable(h) else h
        out.append(_preds(p, data))
    if not out:
        raise ValueError("hypothesis grid is empty")
    return np.stack(out)


def _argmin_set(risks: np.ndarray) -> list[int]:
    m = risks.min()
    return [int(i) for i in np.flatnonzero(risks <= m + _TOL * max(1.0, abs(m)))]


@dataclass
class ToleranceVerdict:
    loss: str
    K: int
    eta: float
    passed: bool
    clean_argmin: list
    noisy_argmin: list
    boundary: bool
    ranking_preserved: bool
    clean_risks: list = field(default_factory=list)
    noisy_risks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def tolerance_check(spec: LossSpec, hypothesis_grid: Sequence, data: LabeledDataset,
                    channel: NoiseChannel) -> ToleranceVerdict:
    """Compare clean and channel-expected noisy empirical-risk minimizers over a grid.

    At the boundary rate 1/K every hypothesis minimizes the noisy risk of a
    symmetric loss, so there only containment of the clean minimizers is
    required.
    """
    preds = hypothesis_predictions(hypothesis_grid, data)
    weights = channel.class_weights(data.labels)
    onehot = data.onehot()
    clean = np.array([(onehot * loss_table(spec, p)).sum(axis=1).mean() for p in preds])
    noisy = np.array([(weights * loss_table(spec, p)).sum(axis=1).mean() for p in preds])
    a_clean, a_noisy = _argmin_set(clean), _argmin_set(noisy)
    rate = channel.uniform_rate
    boundary = rate is not None and abs(rate - 1.0 / channel.K) <= _TOL
    passed = set(a_clean) <= set(a_noisy) if boundary else a_clean == a_noisy
    ranking = bool(np.array_equal(np.argsort(clean, kind="stable"), np.argsort(noisy, kind="stable")))
    return ToleranceVerdict(spec.name, channel.K, float(rate) if rate is not None else float("nan"),
                            bool(passed), a_clean, a_noisy, bool(boundary), ranking,
                            clean.tolist(), noisy.tolist())


def random_instance(K: int, n: int = 20, hypotheses: int = 200, d: int = 2, seed=0,
                    concentration: float = 1.0):
    """Random dataset plus a grid of constant-per-point simplex predictions."""
    rng = make_rng(seed)
    x = rng.random((n, d))
    y = rng.integers(0, K, size=n)
    data = LabeledDataset(x, y, K)
    grid = rng.dirichlet(np.full(K, concentration), size=(hypotheses, n))
    return data, list(grid)


def find_tolerance_witness(spec: LossSpec, K: int, eta: float, instances: int = 200,
                           seed=0, **kwargs) -> dict | None:
    """Search random instances for one where clean and noisy minimizers differ."""
    rng = make_rng(seed)
    channel = NoiseChannel.uniform(K, eta)
    for t in range(instances):
        data, grid = random_instance(K, seed=rng, **kwargs)
        v = tolerance_check(spec, grid, data, channel)
        if not v.passed:
            return {"instance": t, "loss": spec.name, "K": K, "eta": eta,
                    "clean_argmin": v.clean_argmin, "noisy_argmin": v.noisy_argmin,
                    "clean_risk": [v.clean_risks[i] for i in v.clean_argmin],
                    "noisy_risk": [v.noisy_risks[i] for i in v.noisy_argmin]}
    return None
