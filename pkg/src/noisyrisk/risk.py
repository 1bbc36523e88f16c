"""Empirical risk minimization, Rademacher estimates, excess-risk bounds.

Training is plain full-batch gradient descent with hand-written backprop on
small dense ReLU networks; expected risks come from tensor-grid quadrature
against a known generative model ``Y ~ Cat(softmax(kappa0(X)))`` with
``X ~ U[0,1]^d``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._random import make_rng
from .approx import TargetFunction, _batched, build_approximant, named_target
from .losses import CE_FLOOR, LossSpec, loss_table
from .mixing import CellEmitter, MixingChain, beta_coefficients, sample_path
from .netcore import ReluLayer, ReluNetwork, evaluate, rebalance, softmax
from .noise import LabeledDataset, NoiseChannel, corrupt

__all__ = [
    "TrainConfig",
    "TrainableNetwork",
    "TrainingDiverged",
    "TruthModel",
    "FiniteTruth",
    "Decomposition",
    "RiskReport",
    "RademacherEstimate",
    "ExperimentConfig",
    "objective_weights",
    "train_erm",
    "rademacher_bound",
    "rademacher_estimate",
    "expected_risk",
    "statistical_gap",
    "bound_terms",
    "best_class_approximant",
    "decomposition_report",
    "excess_risk_experiment",
]


class TrainingDiverged(RuntimeError):
    """The training risk became non-finite."""


# ---------------------------------------------------------------------------
# dense parameter helpers


def _forward(ws, bs, x):
    """Point-major forward pass; returns pre-activations and activations."""
    acts = [x]
    pre = []
    a = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(ws) - 1 else z
        acts.append(a)
    return pre, acts


def _backward(ws, pre, acts, dout):
    """Gradients of ``sum(dout * output)`` with respect to every weight and bias."""
    gw, gb = [None] * len(ws), [None] * len(ws)
    delta = dout
    for i in range(len(ws) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ ws[i]) * (pre[i - 1] > 0)
    return gw, gb


def _budget(ws, bs) -> float:
    norms = [float((np.abs(w).sum(axis=1) + np.abs(b)).max()) for w, b in zip(ws, bs)]
    out = norms[-1]
    for n in norms[:-1]:
        out *= max(n, 1.0)
    return out


def _project(ws, bs, cap: float):
    """Rebalance (function-preserving) and shrink the output layer to budget <= cap."""
    ws = [w.copy() for w in ws]
    bs = [b.copy() for b in bs]
    for i in range(len(ws) - 1):
        c = np.abs(ws[i]).sum(axis=1) + np.abs(bs[i])
        c[c == 0.0] = 1.0
        ws[i] /= c[:, None]
        bs[i] /= c
        ws[i + 1] *= c[None, :]
    m = _budget(ws, bs)
    if m > cap:
        ws[-1] *= cap / m
        bs[-1] *= cap / m
    return ws, bs


def _init(dims: Sequence[int], rng) -> tuple[list, list]:
    ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        ws.append(rng.standard_normal((b, a)) * math.sqrt(2.0 / a))
        bs.append(np.zeros(b))
    return ws, bs


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings.

    ``optimizer`` is ``"gd"`` (plain steps) or ``"normalized"`` (steps of
    length ``lr`` along the gradient direction).  ``budget`` projects the
    network onto the norm-constrained class after every step.
    """

    lr: float = 0.5
    max_steps: int = 10_000
    tol: float = 1e-8
    restarts: int = 5
    seed: int = 0
    budget: float | None = None
    optimizer: str = "gd"

    def __post_init__(self):
        if self.lr <= 0 or self.max_steps < 0 or self.restarts < 1:
            raise ValueError("need lr > 0, max_steps >= 0, restarts >= 1")
        if self.optimizer not in ("gd", "normalized"):
            raise ValueError("optimizer must be 'gd' or 'normalized'")


@dataclass(eq=False)
class TrainableNetwork:
    """Dense weights under training plus optimizer state."""

    weights: list
    biases: list
    lr: float
    steps: int = 0
    risk: float = math.inf
    history: list = field(default_factory=list)
    restart: int = 0

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def network(self) -> ReluNetwork:
        return ReluNetwork([ReluLayer(w, b) for w, b in zip(self.weights, self.biases)])

    @property
    def budget(self) -> float:
        return _budget(self.weights, self.biases)

    def logits(self, x) -> np.ndarray:
        return _forward(self.weights, self.biases, np.atleast_2d(np.asarray(x, dtype=np.float64)))[1][-1]

    def predict(self, x) -> np.ndarray:
        return softmax(self.logits(x))


def objective_weights(data: LabeledDataset, mode: str = "clean",
                      channel: NoiseChannel | None = None) -> np.ndarray:
    """(n, K) class weights of the training objective.

    ``clean`` and ``noisy`` are one-hot tables of the clean / sampled noisy
    labels; ``expected`` is the channel expectation ``P(noisy = j | y_i)``.
    """
    if mode == "clean":
        return data.onehot()
    if mode == "noisy":
        return data.onehot(noisy=True)
    if mode == "expected":
        if channel is None:
            raise ValueError("expected-noise objective needs a channel")
        return channel.class_weights(data.labels)
    raise ValueError(f"unknown objective mode {mode!r}")


def _risk_and_grad(spec: LossSpec, logits: np.ndarray, weights: np.ndarray):
    """Mean weighted loss and its gradient with respect to the logits."""
    n = len(logits)
    p = softmax(logits)
    table = loss_table(spec, p)
    risk = float((weights * table).sum(axis=1).mean())
    if spec.kind == "cross_entropy":
        dz = p * weights.sum(axis=1, keepdims=True) - weights
        return risk, dz / n
    if spec.kind == "reverse_cross_entropy":
        g = spec.A * weights
    elif spec.p == 1.0:
        g = -2.0 * weights
    else:
        q = spec.p
        g = np.zeros_like(p)
        for j in range(spec.K):
            diff = p.copy()
            diff[:, j] -= 1.0
            lj = np.maximum(table[:, j], 1e-300)
            g += weights[:, [j]] * np.abs(diff) ** (q - 1) * np.sign(diff) * lj[:, None] ** (1 - q)
    dz = p * (g - (g * p).sum(axis=1, keepdims=True))
    return risk, dz / n


def _train_once(ws, bs, spec, x, weights, cfg: TrainConfig, restart: int) -> TrainableNetwork:
    lr = cfg.lr
    pre, acts = _forward(ws, bs, x)
    risk, dz = _risk_and_grad(spec, acts[-1], weights)
    if not math.isfinite(risk):
        raise TrainingDiverged(f"initial risk is {risk}")
    history = [risk]
    steps = 0
    while steps < cfg.max_steps:
        gw, gb = _backward(ws, pre, acts, dz)
        scale = lr
        if cfg.optimizer == "normalized":
            gnorm = math.sqrt(sum(float((g * g).sum()) for g in gw + gb))
            if gnorm == 0.0:
                break
            scale = lr / gnorm
        new_ws = [w - scale * g for w, g in zip(ws, gw)]
        new_bs = [b - scale * g for b, g in zip(bs, gb)]
        if cfg.budget is not None:
            new_ws, new_bs = _project(new_ws, new_bs, cfg.budget)
        new_pre, new_acts = _forward(new_ws, new_bs, x)
        new_risk, new_dz = _risk_and_grad(spec, new_acts[-1], weights)
        steps += 1
        if not all(np.all(np.isfinite(w)) for w in new_ws) or not math.isfinite(new_risk):
            raise TrainingDiverged(
                f"risk became {new_risk} at step {steps} (lr={lr}, restart={restart}, "
                f"last finite risk {risk})"
            )
        if new_risk > risk and cfg.optimizer == "gd":
            # overshoot: halve the step and retry from the current point
            lr *= 0.5
            if lr < 1e-12:
                break
            continue
        improvement = (risk - new_risk) / max(abs(risk), 1e-300)
        ws, bs, pre, acts, dz = new_ws, new_bs, new_pre, new_acts, new_dz
        risk = new_risk
        history.append(risk)
        if improvement < cfg.tol:
            break
    return TrainableNetwork(ws, bs, lr, steps, risk, history, restart)


def train_erm(arch: Sequence[int], spec: LossSpec, data: LabeledDataset,
              config: TrainConfig | None = None, *, class_weights=None,
              init: tuple[list, list] | None = None) -> TrainableNetwork:
    """Approximate empirical risk minimizer over networks with layer widths ``arch``.

    ``arch`` is ``[d, hidden..., K]``.  The objective is
    ``mean_i sum_j class_weights[i, j] loss(softmax(net(x_i)), e_j)``
    (one-hot clean labels by default).  Runs ``config.restarts`` seeded
    initializations and keeps the lowest final risk.
    """
    cfg = config or TrainConfig()
    arch = [int(a) for a in arch]
    if data.n < 1:
        raise ValueError("training data is empty")
    if arch[0] != data.d or arch[-1] != data.K or arch[-1] != spec.K:
        raise ValueError(f"architecture {arch} does not match data (d={data.d}, K={data.K})")
    weights = data.onehot() if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (data.n, data.K):
        raise ValueError("class_weights must have shape (n, K)")
    rng = make_rng(cfg.seed)
    best = None
    for r in range(cfg.restarts):
        if init is not None and r == 0:
            ws = [np.array(w, dtype=np.float64) for w in init[0]]
            bs = [np.array(b, dtype=np.float64) for b in init[1]]
        else:
            ws, bs = _init(arch, rng)
        if cfg.budget is not None:
            ws, bs = _project(ws, bs, cfg.budget)
        run = _train_once(ws, bs, spec, data.x, weights, cfg, r)
        if best is None or run.risk < best.risk:
            best = run
    return best


# ---------------------------------------------------------------------------
# Rademacher complexity


@dataclass
class RademacherEstimate:
    estimate: float
    std_error: float
    theoretical_bound: float
    n: int
    dims: list
    budget: float
    radius: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.estimate <= self.theoretical_bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def rademacher_bound(n: int, d: int, depth: int, radius: float, budget: float) -> float:
    """``2 B sqrt(D + 2 + ln d) M / sqrt(n)``."""
    return 2.0 * radius * math.sqrt(depth + 2 + math.log(d)) * budget / math.sqrt(n)


def _ascent(dims, cap, x, eps, rng, steps, restarts, bias):
    best = 0.0
    n = len(x)
    for _ in range(restarts):
        ws, bs = _init(dims, rng)
        bs = [rng.standard_normal(b.shape) * 0.1 for b in bs] if bias else bs
        ws, bs = _project(ws, bs, cap)
        m = _budget(ws, bs)
        ws[-1] *= cap / m
        bs[-1] *= cap / m
        for t in range(steps):
            pre, acts = _forward(ws, bs, x)
            val = float(eps @ acts[-1][:, 0]) / n
            best = max(best, abs(val))
            # ascend on |value|: follow the sign of the current value
            sgn = 1.0 if val >= 0 else -1.0
            gw, gb = _backward(ws, pre, acts, sgn * eps[:, None] / n)
            if not bias:
                gb = [np.zeros_like(g) for g in gb]
            gnorm = math.sqrt(sum(float((g * g).sum()) for g in gw + gb))
            if gnorm == 0.0:
                break
            step = 0.5 * cap / (1.0 + t) ** 0.5 / gnorm
            ws = [w + step * g for w, g in zip(ws, gw)]
            bs = [b + step * g for b, g in zip(bs, gb)]
            ws, bs = _project(ws, bs, cap)
        pre, acts = _forward(ws, bs, x)
        best = max(best, abs(float(eps @ acts[-1][:, 0]) / n))
    return best


def rademacher_estimate(dims: Sequence[int], budget: float, x, trials: int = 20, seed=0,
                        steps: int = 200, restarts: int = 5, radius: float | None = None,
                        bias: bool = True) -> RademacherEstimate:
    """Monte-Carlo ``E sup_f |(1/n) sum_i eps_i f(x_i)|`` over scalar networks
    with widths ``dims`` (``dims[-1] == 1``) and budget <= ``budget``.

    The inner sup is approximated by projected gradient ascent, so the
    estimate is a lower bound on the true Rademacher average.  ``radius``
    defaults to the largest Euclidean norm in ``x``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dims = [int(v) for v in dims]
    if dims[0] != x.shape[1] or dims[-1] != 1:
        raise ValueError("dims must run from the data dimension to a single output")
    n = len(x)
    if n < 1:
        raise ValueError("need at least one point")
    B = float(np.linalg.norm(x, axis=1).max()) if radius is None else float(radius)
    rng = make_rng(seed)
    vals = np.empty(trials)
    for t in range(trials):
        eps = rng.choice([-1.0, 1.0], size=n)
        vals[t] = _ascent(dims, budget, x, eps, rng, steps, restarts, bias)
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = rademacher_bound(n, dims[0], len(dims) - 2, B, budget)
    return RademacherEstimate(float(vals.mean()), se, bound, n, dims, float(budget), B, trials)


# ---------------------------------------------------------------------------
# generative truth and expected risks


class TruthModel:
    """``X ~ U[0,1]^d`` and ``Y | X ~ Cat(softmax(kappa0(X)))``."""

    def __init__(self, kappa0: TargetFunction, quad_step: float = 1.0 / 256):
        self.kappa0 = kappa0
        self.d, self.K = kappa0.dim_in, kappa0.dim_out
        if self.K < 2:
            raise ValueError("need at least two classes")
        self.quad_step = quad_step
        self._quad = None

    @classmethod
    def named(cls, name: str, d: int, K: int, tau: float = 1.0, scale: float = 4.0,
              **kwargs) -> "TruthModel":
        return cls(named_target(name, d, K, tau).scaled(scale), **kwargs)

    def logits(self, x) -> np.ndarray:
        return self.kappa0(x)

    def probs(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def sample(self, n: int, seed=0) -> LabeledDataset:
        rng = make_rng(seed)
        x = rng.random((n, self.d))
        return LabeledDataset(x, self._draw(self.probs(x), rng), self.K)

    @staticmethod
    def _draw(probs: np.ndarray, rng) -> np.ndarray:
        cum = np.cumsum(probs, axis=1)
        return (rng.random(len(probs))[:, None] >= cum[:, :-1]).sum(axis=1)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint rule on the grid of step ``quad_step`` (d <= 3)."""
        if self._quad is None:
            if self.d > 3:
                raise ValueError("tensor quadrature supports d <= 3")
            m = int(round(1.0 / self.quad_step))
            axis = (np.arange(m) + 0.5) / m
            mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
            pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
            self._quad = (pts, np.full(len(pts), 1.0 / len(pts)))
        return self._quad

    def law(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadrature points, weights and class probabilities at those points."""
        pts, w = self.quadrature()
        return pts, w, self.probs(pts)

    def chain(self, grid: int, stay: float) -> MixingChain:
        """Sticky chain over the ``grid^d`` cells; its path marginal is this model."""
        em = CellEmitter(grid, self.d, self.probs)
        return MixingChain.sticky(em.states, stay, em)


class FiniteTruth:
    """A finitely supported law: ``P(X = points[i]) = weights[i]``, ``P(Y | X) = probs[i]``."""

    def __init__(self, points, weights, probs):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.weights = np.asarray(weights, dtype=np.float64)
        self.label_probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        if len(self.points) != len(self.weights) or len(self.points) != len(self.label_probs):
            raise ValueError("points, weights and probs must have matching lengths")
        if abs(self.weights.sum() - 1.0) > 1e-12 or self.weights.min() < 0:
            raise ValueError("weights must be a probability vector")
        self.d, self.K = self.points.shape[1], self.label_probs.shape[1]

    def law(self):
        return self.points, self.weights, self.label_probs


def expected_risk(spec: LossSpec, predict: Callable[[np.ndarray], np.ndarray], truth,
                  channel: NoiseChannel | None = None) -> float:
    """``E loss(predict(X), Y)`` (or against ``Y^eta`` through ``channel``) by quadrature."""
    pts, w, probs = truth.law()
    total = 0.0
    chunk = 65_536
    for i in range(0, len(pts), chunk):
        x = pts[i:i + chunk]
        py = probs[i:i + chunk]
        if channel is not None:
            py = py @ channel.eta.T
        total += float(w[i:i + chunk] @ (py * loss_table(spec, predict(x))).sum(axis=1))
    return total


def _predictor(net) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(net, TrainableNetwork):
        return net.predict
    if isinstance(net, ReluNetwork):
        return lambda x: softmax(_batched(net, x))
    return net


def statistical_gap(net, spec: LossSpec, data: LabeledDataset, truth,
                    channel: NoiseChannel | None = None, noisy: bool = False) -> float:
    """``|expected risk - empirical risk|`` of one network (clean or noisy labels)."""
    f = _predictor(net)
    emp = float((data.onehot(noisy) * loss_table(spec, f(data.x))).sum(axis=1).mean())
    return abs(expected_risk(spec, f, truth, channel if noisy else None) - emp)


# ---------------------------------------------------------------------------
# bounds and decompositions


def bound_terms(lam: float, K: int, M: float, D: int, d: int, n: int, a_n: int,
                beta_a: float, tau: float) -> tuple[float, float, float]:
    """Statistical, dependence and approximation terms of the excess-risk bound."""
    root_k = math.sqrt(K)
    t1 = 8.0 * lam * root_k * M * math.sqrt(D + 2 + math.log(d)) / math.sqrt(n * a_n)
    t2 = 4.0 * lam * root_k * n * beta_a / a_n
    t3 = lam * root_k * M ** (-tau / (d + 1))
    return t1, t2, t3


def _l2_to_truth(net: ReluNetwork | None, truth: TruthModel, scale: float = 1.0) -> float:
    pts, w = truth.quadrature()
    kappa = truth.logits(pts)
    approx = 0.0 if net is None else scale * _batched(net, pts)
    return float(math.sqrt(w @ ((approx - kappa) ** 2).sum(axis=1)))


def best_class_approximant(truth: TruthModel, budget: float, max_k: int = 2):
    """Best available member of the budget-``budget`` class: the zero network or a
    constructive approximant shrunk to fit.  Returns (network or None, L2 error).
    """
    best_net, best_err = None, _l2_to_truth(None, truth)
    for k in range(1, max_k + 1):
        try:
            net, _ = build_approximant(truth.kappa0, k, mc_samples=2, eval_work=1e6)
        except ValueError:
            break
        c = min(1.0, budget / net.budget)
        err = _l2_to_truth(net, truth, c)
        if err < best_err:
            best_err = err
            last = net.layers[-1]
            best_net = ReluNetwork(net.layers[:-1] + (ReluLayer(c * last.matrix, c * last.bias),))
    return best_net, best_err


@dataclass
class Decomposition:
    excess: float
    gap_trained: float
    gap_reference: float
    approx_term: float
    statistical_cap: float
    lemma_sum: float
    holds: bool
    cap_holds: bool

    @property
    def tightness(self) -> float:
        return self.excess / self.lemma_sum if self.lemma_sum > 0 else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tightness"] = self.tightness
        return out


def decomposition_report(net, spec: LossSpec, data: LabeledDataset, truth: TruthModel,
                         class_budget: float, depth: int | None = None, reference=None,
                         channel: NoiseChannel | None = None, noisy: bool = False) -> Decomposition:
    """Excess risk against its split into two generalization gaps plus an
    approximation term ``lambda * ||kappa_ref - kappa0||_2``.

    ``reference`` defaults to :func:`best_class_approximant`.  The statistical
    cap is ``4 lambda sqrt(K) M sqrt(D + 2 + ln d) / sqrt(n)`` (inputs in the
    unit cube, so the radius is at most sqrt(d)).
    """
    ch = channel if noisy else None
    if depth is None:
        if not isinstance(net, (TrainableNetwork, ReluNetwork)):
            raise ValueError("depth is needed when net is a bare callable")
        depth = len(net.weights) - 1 if isinstance(net, TrainableNetwork) else net.depth
    f = _predictor(net)
    f0 = truth.probs
    excess = abs(expected_risk(spec, f, truth, ch) - expected_risk(spec, f0, truth, ch))
    if reference is None:
        reference, err = best_class_approximant(truth, class_budget)
    else:
        err = _l2_to_truth(reference, truth)
    ref = (lambda x: softmax(np.zeros((len(x), truth.K)))) if reference is None else _predictor(reference)
    g1 = statistical_gap(f, spec, data, truth, channel, noisy)
    g2 = statistical_gap(ref, spec, data, truth, channel, noisy)
    lam = spec.lipschitz_lambda
    approx_term = lam * err
    cap = 4.0 * lam * math.sqrt(truth.K) * class_budget * math.sqrt(truth.d) * math.sqrt(
        depth + 2 + math.log(truth.d)) / math.sqrt(data.n)
    total = g1 + g2 + approx_term
    return Decomposition(excess, g1, g2, approx_term, cap, total,
                         bool(excess <= total * (1 + 1e-12) + 1e-15),
                         bool(excess <= 2 * cap + approx_term))


# ---------------------------------------------------------------------------
# experiment grid


@dataclass
class RiskReport:
    n: int
    a_n: int
    eta: float
    M: float
    clean_empirical: float
    noisy_empirical: float
    clean_expected: float
    noisy_expected: float
    clean_excess: float
    noisy_excess: float
    statistical_gap: float
    approx_error: float
    term1: float
    term2: float
    term3: float
    beta_a: float
    ratio: float
    train_steps: int
    seed: int

    @property
    def bound_terms(self) -> tuple[float, float, float]:
        return self.term1, self.term2, self.term3

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = ("n", "a_n", "eta", "M", "clean_excess", "noisy_excess",
               "term1", "term2", "term3", "ratio")


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    K: int = 2
    target: str = "sin-product"
    tau: float = 1.0
    logit_scale: float = 4.0
    loss: str = "l1"
    A: float = -4.0
    stay: float = 0.5
    cells: int = 4
    n_grid: tuple = (256, 1024)
    a_grid: tuple = (1, 4)
    eta_grid: tuple = (0.0, 0.1, 0.3)
    M_grid: tuple = (8.0,)
    width: int = 16
    depth: int = 2
    lr: float = 0.5
    max_steps: int = 2000
    restarts: int = 2
    seed: int = 0
    quad_step: float = 1.0 / 256
    approx_max_k: int = 2

    def truth(self) -> TruthModel:
        return TruthModel.named(self.target, self.d, self.K, self.tau, self.logit_scale,
                                quad_step=self.quad_step)


def excess_risk_experiment(config: ExperimentConfig) -> list[RiskReport]:
    """Sample, corrupt, train and score every (n, a_n, eta, M) grid point."""
    cfg = config
    if cfg.d > 3:
        raise ValueError("quadrature needs d <= 3")
    truth = cfg.truth()
    spec = LossSpec.parse(cfg.loss, cfg.K, cfg.A)
    chain = truth.chain(cfg.cells, cfg.stay)
    max_a = max(cfg.a_grid)
    betas = beta_coefficients(chain, max_a)
    approx_cache = {}
    reports = []
    arch = [cfg.d] + [cfg.width] * cfg.depth + [cfg.K]
    for i_n, n in enumerate(cfg.n_grid):
        for i_a, a_n in enumerate(cfg.a_grid):
            if n % a_n:
                raise ValueError(f"a_n={a_n} does not divide n={n}")
            for i_e, eta in enumerate(cfg.eta_grid):
                channel = NoiseChannel.uniform(cfg.K, eta)
                for i_m, M in enumerate(cfg.M_grid):
                    seq = np.random.SeedSequence([cfg.seed, i_n, i_a, i_e, i_m])
                    rng = make_rng(seq)
                    path = sample_path(chain, n, rng)
                    data = corrupt(channel, path.dataset(cfg.K), rng)
                    tc = TrainConfig(lr=cfg.lr, max_steps=cfg.max_steps, restarts=cfg.restarts,
                                     seed=int(seq.generate_state(1)[0]), budget=M)
                    net = train_erm(arch, spec, data, tc,
                                    class_weights=objective_weights(data, "noisy"))
                    f = net.predict
                    ce = expected_risk(spec, f, truth)
                    ne = expected_risk(spec, f, truth, channel)
                    c0 = expected_risk(spec, truth.probs, truth)
                    n0 = expected_risk(spec, truth.probs, truth, channel)
                    cemp = float((data.onehot() * loss_table(spec, f(data.x))).sum(axis=1).mean())
                    nemp = float((data.onehot(True) * loss_table(spec, f(data.x))).sum(axis=1).mean())
                    if M not in approx_cache:
                        approx_cache[M] = best_class_approximant(truth, M, cfg.approx_max_k)[1]
                    beta_a = betas.at(a_n)
                    t1, t2, t3 = bound_terms(spec.lipschitz_lambda, cfg.K, M, cfg.depth, cfg.d,
                                             n, a_n, beta_a, cfg.tau)
                    clean_x, noisy_x = abs(ce - c0), abs(ne - n0)
                    reports.append(RiskReport(
                        n=n, a_n=a_n, eta=eta, M=M, clean_empirical=cemp, noisy_empirical=nemp,
                        clean_expected=ce, noisy_expected=ne, clean_excess=clean_x,
                        noisy_excess=noisy_x, statistical_gap=abs(ne - nemp),
                        approx_error=approx_cache[M], term1=t1, term2=t2, term3=t3,
                        beta_a=beta_a, ratio=clean_x / (t1 + t2 + t3), train_steps=net.steps,
                        seed=cfg.seed,
                    ))
    return reports
