"""Train networks on dependent noisy data and compare excess risk with the bound terms."""
import numpy as np

from noisyrisk.losses import LossSpec
from noisyrisk.risk import (ExperimentConfig, TrainConfig, TruthModel, decomposition_report,
                            excess_risk_experiment, rademacher_estimate, statistical_gap, train_erm)

# Rademacher complexity of a small norm-constrained class, estimated and bounded
x = np.random.default_rng(0).random((200, 2)) / np.sqrt(2)
r = rademacher_estimate([2, 8, 1], 1.0, x, trials=10, steps=100, restarts=3, radius=1.0)
print(f"Rademacher estimate {r.estimate:.4f} +- {r.std_error:.4f}, bound {r.theoretical_bound:.4f}")

# the generalization gap of trained networks shrinks with n
truth = TruthModel.named("sin-product", 2, 2, 1.0, 4.0)
spec = LossSpec.lp(2)
for n in (64, 256, 1024):
    gaps = [statistical_gap(train_erm([2, 8, 2], spec, truth.sample(n, [n, s]),
                                      TrainConfig(max_steps=300, restarts=1, seed=s, budget=4.0)),
                            spec, truth.sample(n, [n, s]), truth) for s in range(10)]
    print(f"n={n:5d} median gap {np.median(gaps):.4f}")

data = truth.sample(256, 5)
net = train_erm([2, 8, 2], spec, data, TrainConfig(max_steps=300, restarts=1, budget=4.0))
dec = decomposition_report(net, spec, data, truth, 4.0)
print(f"excess {dec.excess:.4f} <= gaps {dec.gap_trained:.4f} + {dec.gap_reference:.4f} "
      f"+ approximation {dec.approx_term:.4f}: {dec.holds}")

# the full pipeline on a sticky chain with label noise
cfg = ExperimentConfig(n_grid=(256,), a_grid=(1, 4), eta_grid=(0.0, 0.2), max_steps=500)
for rep in excess_risk_experiment(cfg):
    print(f"n={rep.n} a={rep.a_n} eta={rep.eta}: clean excess {rep.clean_excess:.4f} "
          f"noisy excess {rep.noisy_excess:.4f} terms {np.round(rep.bound_terms, 3)} ratio {rep.ratio:.2e}")
