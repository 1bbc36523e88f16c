"""Build ReLU approximants of a smooth target and watch the error fall with k."""
import numpy as np

from noisyrisk.approx import (Chart, build_approximant, build_chart_approximant, gaussian_bump_target,
                              hat_network, partition_sum, product_network, sin_product_target)
from noisyrisk.netcore import evaluate

# the hat function is a two-neuron network
t = np.linspace(-1.5, 1.5, 7)
print("hat", evaluate(hat_network(), t[:, None])[:, 0])

# tensor-product hats form a partition of unity on the cube
x = np.random.default_rng(0).random((1000, 2))
print("partition of unity, max |sum - 1|:", np.abs(partition_sum(x, 8) - 1).max())

# products of d numbers in [-1, 1] from sawtooth squares
net = product_network(3, 6)
x = np.random.default_rng(1).uniform(-1, 1, (5000, 3))
print("product d=3 k=6: width", net.width, "depth", net.depth,
      "max error", np.abs(evaluate(net, x)[:, 0] - x.prod(axis=1)).max())

# the full construction: Taylor polynomials glued by the partition
f = sin_product_target(1, 2, 1.0)
for k in (1, 2, 3, 4):
    _, rep = build_approximant(f, k, mc_samples=20_000)
    print(f"k={k} N={rep.N:4d} width={rep.width:4d} depth={rep.depth} budget={rep.budget:9.1f} "
          f"L2={rep.l2_error:.2e} Linf={rep.linf_error:.2e} caps_ok={rep.caps_ok}")

# a two-dimensional manifold in R^10: error follows the chart dimension
q = np.linalg.qr(np.random.default_rng(0).standard_normal((10, 2)))[0]
charts = [Chart(q * 0.5, np.full(10, 0.1), sin_product_target(2, 1, 2.0)),
          Chart(q[:, ::-1] * 0.5, np.full(10, 0.6), gaussian_bump_target(2, 1, 2.0))]
_, rep = build_chart_approximant(charts, 2, mc_samples=20_000)
print("charts in d=10: per-chart L2", np.round(rep.per_chart_l2, 5), "native d=2 L2", np.round(rep.native_l2, 5))
