"""Symmetric losses shrug off uniform label noise; cross entropy does not."""
import numpy as np

from noisyrisk._random import make_rng, uniform_simplex
from noisyrisk.losses import LossSpec, asymmetry_witness, lipschitz_audit, symmetry_constant
from noisyrisk.noise import (NoiseChannel, affine_noisy_risk, corrupt, empirical_risk,
                             exact_noisy_empirical_risk, find_tolerance_witness, random_instance,
                             tolerance_check)

K = 3
preds = uniform_simplex(make_rng(0), 100, K)
for name in ("l1", "rce", "ce"):
    spec = LossSpec.parse(name, K)
    audit = lipschitz_audit(spec, 20_000, seed=1)
    print(f"{name:3s} C0={symmetry_constant(spec, preds)} lambda={spec.lipschitz_lambda:.3f} "
          f"audited max ratio={audit.max_ratio:.3f}")
print("cross entropy is not symmetric, e.g.", asymmetry_witness(LossSpec.cross_entropy(K), 10))

# corrupt a dataset and check the affine identity
data, grid = random_instance(K, 30, 200, seed=2)
channel = NoiseChannel.uniform(K, 0.2)
big, _ = random_instance(K, 20_000, 1, seed=3)
noisy = corrupt(channel, big, 3)
print("observed flip rate", np.mean(noisy.labels != noisy.noisy_labels), "expected", 0.2 * (K - 1))
spec = LossSpec.lp(K)
clean = empirical_risk(spec, grid[0], data)
print("noisy risk", exact_noisy_empirical_risk(spec, grid[0], data, channel),
      "affine form", affine_noisy_risk(spec, clean, 0.2))

# minimizers over a hypothesis grid survive the noise for l1 but not always for CE
v = tolerance_check(spec, grid, data, channel)
print("l1 argmin clean", v.clean_argmin, "noisy", v.noisy_argmin)
w = find_tolerance_witness(LossSpec.cross_entropy(K), K, 0.25, instances=200, seed=0)
print("CE witness: clean argmin", w["clean_argmin"], "noisy argmin", w["noisy_argmin"])
