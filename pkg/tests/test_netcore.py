import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyrisk.approx import hat_network
from noisyrisk.netcore import (
    ReluLayer,
    ReluNetwork,
    compose,
    deepen,
    evaluate,
    identity_network,
    layer_norm,
    linear_combination,
    norm_budget,
    parallel_pair,
    parallel_sum,
    rebalance,
    softmax,
    zero_network,
)


def tiny_identity():
    return ReluNetwork([ReluLayer([[1.0]], [0.0]), ReluLayer([[1.0]], [0.0])])


def random_net(rng, d, k, depth, width=4, scale=1.0):
    dims = [d] + [width] * depth + [k]
    return ReluNetwork([
        ReluLayer(scale * rng.standard_normal((b, a)), scale * rng.standard_normal(b))
        for a, b in zip(dims[:-1], dims[1:])
    ])


@st.composite
def nets(draw, d=None, k=None, min_depth=0):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    d = d or draw(st.integers(1, 3))
    k = k or draw(st.integers(1, 3))
    depth = draw(st.integers(min_depth, 3))
    width = draw(st.integers(1, 5))
    scale = draw(st.floats(0.1, 2.0))
    return random_net(np.random.default_rng(seed), d, k, depth, width, scale)


# evaluation


def test_identity_net_at_two():
    assert evaluate(tiny_identity(), [2.0]) == pytest.approx([2.0])


def test_hat_net_values():
    net = hat_network()
    assert evaluate(net, [0.0])[0] == 1.0
    assert evaluate(net, [0.5])[0] == 0.5


def test_output_layer_has_no_relu():
    net = ReluNetwork([ReluLayer([[1.0]], [0.0]), ReluLayer([[-1.0]], [0.0])])
    assert evaluate(net, [3.0])[0] == -3.0


def test_batch_matches_pointwise():
    net = random_net(np.random.default_rng(1), 3, 2, 2)
    x = np.random.default_rng(2).random((7, 3))
    batch = evaluate(net, x)
    for row, xi in zip(batch, x):
        np.testing.assert_allclose(row, evaluate(net, xi), rtol=0, atol=1e-14)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        evaluate(tiny_identity(), [1.0, 2.0])


def test_layer_chain_validated():
    with pytest.raises(ValueError):
        ReluNetwork([ReluLayer(np.ones((2, 1)), np.zeros(2)), ReluLayer(np.ones((1, 3)), np.zeros(1))])


def test_layer_rejects_bad_shapes_and_values():
    with pytest.raises(ValueError):
        ReluLayer(np.ones((2, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        ReluLayer([[np.nan]], [0.0])


def test_structure_counts():
    net = random_net(np.random.default_rng(0), 3, 2, 2, width=4)
    assert net.depth == 2
    assert net.width == 4
    assert net.size == 4 * 4 + 4 * 5 + 2 * 5
    assert net.neurons == 8


# softmax


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    for t in (-800.0, 0.0, 3.0, 900.0):
        np.testing.assert_allclose(softmax([t, t, t]), [1 / 3] * 3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(softmax([math.log(2.0), 0.0]), [2 / 3, 1 / 3], rtol=0, atol=1e-15)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
def test_softmax_on_simplex(v):
    p = softmax(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


# norm budget


def test_budget_examples():
    assert norm_budget(tiny_identity()).value == 1.0
    net = ReluNetwork([ReluLayer([[2.0]], [0.5]), ReluLayer([[1.0]], [0.0])])
    assert norm_budget(net).value == 2.5
    assert norm_budget(hat_network()).value <= 3.0


def test_layer_norm_is_row_sum_with_bias():
    w = np.array([[1.0, -2.0], [0.5, 0.5]])
    b = np.array([0.25, -3.0])
    assert layer_norm(w, b) == 4.0


def test_budget_uses_max_one_for_hidden():
    net = ReluNetwork([ReluLayer([[0.25]], [0.0]), ReluLayer([[3.0]], [0.0])])
    assert net.budget == 3.0


# serialization


def test_json_round_trip_exact():
    net = random_net(np.random.default_rng(3), 2, 3, 2)
    back = ReluNetwork.from_json(net.to_json())
    for a, b in zip(net.layers, back.layers):
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)
    doc = net.to_dict()
    assert doc["input_dim"] == 2 and doc["output_dim"] == 3
    assert doc["layers"][0]["rows"] == 4 and doc["layers"][0]["cols"] == 2


def test_from_dict_accepts_dense_weights():
    doc = {"input_dim": 1, "output_dim": 1,
           "layers": [{"weights": [[2.0]], "bias": [0.5]}, {"weights": [[1.0]], "bias": [0.0]}]}
    assert ReluNetwork.from_dict(doc).budget == 2.5


# combinators


def test_compose_identity_keeps_function():
    rng = np.random.default_rng(4)
    f = random_net(rng, 2, 2, 2)
    g = compose(identity_network(2), f)
    x = rng.random((100, 2))
    np.testing.assert_allclose(evaluate(g, x), evaluate(f, x), rtol=0, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(nets(), st.data())
def test_compose_lemma(inner, data):
    outer = data.draw(nets(d=inner.output_dim))
    g = compose(outer, inner)
    x = np.random.default_rng(0).uniform(-2, 2, (1000, inner.input_dim))
    np.testing.assert_allclose(evaluate(g, x), evaluate(outer, evaluate(inner, x)), rtol=0, atol=1e-10)
    assert g.depth == inner.depth + outer.depth
    assert g.width <= max(inner.width, outer.width, 1)
    assert g.budget <= outer.budget * max(inner.budget, 1.0) * (1 + 1e-12)


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose(identity_network(3), identity_network(2))


def test_sum_with_zero_net():
    rng = np.random.default_rng(5)
    f = random_net(rng, 2, 1, 2)
    g = parallel_sum(f, zero_network(2, 1))
    x = rng.random((100, 2))
    np.testing.assert_allclose(evaluate(g, x), evaluate(f, x), rtol=0, atol=1e-10)


def test_hat_doubling():
    assert evaluate(parallel_sum(hat_network(), hat_network()), [0.0])[0] == pytest.approx(2.0, abs=1e-15)


def test_sum_width_additive_equal_depth():
    rng = np.random.default_rng(6)
    a, b = random_net(rng, 2, 1, 2, 3), random_net(rng, 2, 1, 2, 5)
    assert parallel_sum(a, b).width == a.width + b.width


@settings(max_examples=60, deadline=None)
@given(nets(min_depth=1), st.data())
def test_sum_lemma(a, data):
    b = data.draw(nets(d=a.input_dim, k=a.output_dim, min_depth=1))
    g = parallel_sum(a, b)
    x = np.random.default_rng(1).uniform(-2, 2, (1000, a.input_dim))
    np.testing.assert_allclose(evaluate(g, x), evaluate(a, x) + evaluate(b, x), rtol=0, atol=1e-10)
    assert g.depth == max(a.depth, b.depth, 1)
    assert g.budget <= (a.budget + b.budget) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(nets(min_depth=1), st.data())
def test_pair_lemma(a, data):
    b = data.draw(nets(d=a.input_dim, min_depth=1))
    g = parallel_pair(a, b)
    x = np.random.default_rng(2).uniform(-2, 2, (1000, a.input_dim))
    np.testing.assert_allclose(evaluate(g, x), np.hstack([evaluate(a, x), evaluate(b, x)]), rtol=0, atol=1e-10)
    assert g.output_dim == a.output_dim + b.output_dim
    assert g.depth == max(a.depth, b.depth, 1)
    assert g.budget <= max(a.budget, b.budget) * (1 + 1e-12)


def test_affine_parts_pay_the_splice_factor():
    # an affine map lifted through relu(x) - relu(-x) doubles its weight norm
    a = ReluNetwork([ReluLayer([[0.25]], [0.0])])
    g = parallel_sum(a, a)
    np.testing.assert_allclose(evaluate(g, [[1.0], [-2.0]]), [[0.5], [-1.0]])
    assert g.budget <= 2 * (a.budget + a.budget)


def test_pair_same_net():
    f = random_net(np.random.default_rng(7), 2, 2, 1)
    x = np.random.default_rng(8).random((5, 2))
    out = evaluate(parallel_pair(f, f), x)
    np.testing.assert_allclose(out[:, :2], out[:, 2:], rtol=0, atol=1e-12)


def test_sum_dimension_mismatch():
    with pytest.raises(ValueError):
        parallel_sum(identity_network(2), identity_network(3))
    with pytest.raises(ValueError):
        parallel_pair(identity_network(2), identity_network(3))


def test_linear_combination_mixes():
    rng = np.random.default_rng(9)
    a, b = random_net(rng, 2, 2, 1), random_net(rng, 2, 3, 2)
    ma, mb = rng.standard_normal((1, 2)), rng.standard_normal((1, 3))
    g = linear_combination([a, b], [ma, mb])
    x = rng.random((50, 2))
    want = evaluate(a, x) @ ma.T + evaluate(b, x) @ mb.T
    np.testing.assert_allclose(evaluate(g, x), want, rtol=0, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(nets())
def test_rebalance_and_splice_keep_values(f):
    x = np.random.default_rng(3).uniform(-2, 2, (1000, f.input_dim))
    r = rebalance(f)
    np.testing.assert_allclose(evaluate(r, x), evaluate(f, x), rtol=0, atol=1e-10)
    assert r.budget <= f.budget * (1 + 1e-12)
    deep = deepen(f, f.depth + 2)
    assert deep.depth == f.depth + 2
    np.testing.assert_allclose(evaluate(deep, x), evaluate(f, x), rtol=0, atol=1e-10)
    spliced = compose(identity_network(f.output_dim), f)
    np.testing.assert_allclose(evaluate(spliced, x), evaluate(f, x), rtol=0, atol=1e-10)


def test_identity_network_splice():
    net = identity_network(3, depth=3)
    x = np.random.default_rng(10).uniform(-5, 5, (20, 3))
    np.testing.assert_array_equal(evaluate(net, x), x)
    # hidden rows have norm 1, the recombining output row [1, -1] has norm 2
    assert net.budget == 2.0


def test_layers_are_read_only():
    layer = ReluLayer([[1.0]], [0.0])
    with pytest.raises(ValueError):
        layer.bias[0] = 1.0
