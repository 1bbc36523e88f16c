import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyrisk._random import make_rng, uniform_simplex
from noisyrisk.losses import (
    ClampWarning,
    LossSpec,
    SimplexLabel,
    asymmetry_witness,
    batch_loss,
    lipschitz_audit,
    loss,
    loss_table,
    loss_with_flag,
    one_hot,
    symmetry_constant,
)
from noisyrisk.netcore import softmax


def test_simplex_label_validation():
    SimplexLabel([0.2, 0.8])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            SimplexLabel(bad)
    assert SimplexLabel.from_logits([0.0, 0.0]).p.tolist() == [0.5, 0.5]


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10))
def test_softmax_accepted_by_validator(v):
    SimplexLabel(softmax(v))


def test_spec_validation_and_parse():
    with pytest.raises(ValueError):
        LossSpec.lp(2, 0.5)
    with pytest.raises(ValueError):
        LossSpec.reverse_cross_entropy(3, 1.0)
    with pytest.raises(ValueError):
        LossSpec("hinge", 2)
    assert LossSpec.parse("l1", 3) == LossSpec.lp(3, 1.0)
    assert LossSpec.parse("lp:2.5", 3).p == 2.5
    assert LossSpec.parse("ce", 3).kind == "cross_entropy"
    assert LossSpec.parse("rce", 3, -2.0).A == -2.0
    with pytest.raises(ValueError):
        LossSpec.parse("mse", 3)


@pytest.mark.parametrize("K", [2, 3, 5, 10])
def test_lambda_table(K):
    assert LossSpec.lp(K, 3.0).lipschitz_lambda == math.sqrt(2) * K
    assert LossSpec.cross_entropy(K).lipschitz_lambda == math.sqrt(2) * K
    assert LossSpec.reverse_cross_entropy(K, -4.0).lipschitz_lambda == math.sqrt(2) * K * 4.0


def test_loss_examples():
    half = [0.5, 0.5]
    e1 = one_hot(0, 2)
    assert loss(LossSpec.lp(2), half, e1) == 1.0
    assert loss(LossSpec.reverse_cross_entropy(2, -4.0), half, e1) == 2.0
    q = [0.3, 0.7]
    assert loss(LossSpec.lp(2, 2.0), q, q) == 0.0
    entropy = -(0.3 * math.log(0.3) + 0.7 * math.log(0.7))
    assert loss(LossSpec.cross_entropy(2), q, q) == pytest.approx(entropy, rel=1e-15)


def test_ce_clamp_is_flagged():
    spec = LossSpec.cross_entropy(2)
    value, clamped = loss_with_flag(spec, [1.0, 0.0], [0.0, 1.0])
    assert clamped and value == pytest.approx(-math.log(1e-300))
    with pytest.warns(ClampWarning):
        loss(spec, [1.0, 0.0], [0.0, 1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        loss(spec, [1.0, 0.0], [1.0, 0.0])


def test_loss_table_matches_pointwise():
    rng = make_rng(0)
    preds = uniform_simplex(rng, 20, 4)
    for spec in (LossSpec.lp(4), LossSpec.lp(4, 3.0), LossSpec.cross_entropy(4),
                 LossSpec.reverse_cross_entropy(4)):
        table = loss_table(spec, preds)
        for j in range(4):
            col = batch_loss(spec, preds, np.tile(np.eye(4)[j], (20, 1)))
            np.testing.assert_allclose(table[:, j], col, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("K", [2, 3, 5, 10])
def test_symmetry_constants(K):
    preds = uniform_simplex(make_rng(K), 100, K)
    assert symmetry_constant(LossSpec.lp(K), preds) == pytest.approx(2 * (K - 1), abs=1e-12)
    assert symmetry_constant(LossSpec.reverse_cross_entropy(K, -4.0), preds) == pytest.approx(
        4 * (K - 1), abs=1e-12)
    assert symmetry_constant(LossSpec.cross_entropy(K), preds) is None
    if K == 2:
        # with two classes both distances are 2^(1/p) scalings of |p1 - 1| and p1
        assert symmetry_constant(LossSpec.lp(K, 2.0), preds) == pytest.approx(math.sqrt(2), abs=1e-12)
    else:
        assert symmetry_constant(LossSpec.lp(K, 2.0), preds) is None


def test_ce_two_point_sums_differ():
    spec = LossSpec.cross_entropy(2)
    a = loss_table(spec, [0.5, 0.5]).sum()
    b = loss_table(spec, [0.9, 0.1]).sum()
    assert abs(a - b) > 0.1
    assert asymmetry_witness(spec, 10) is not None
    assert asymmetry_witness(LossSpec.lp(2), 200) is None


def test_symmetry_needs_samples():
    with pytest.raises(ValueError):
        symmetry_constant(LossSpec.lp(2), np.empty((0, 2)))


@settings(max_examples=50)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_nonnegativity(K, seed):
    rng = make_rng(seed)
    preds = uniform_simplex(rng, 10, K)
    labels = uniform_simplex(rng, 10, K)
    for spec in (LossSpec.lp(K), LossSpec.lp(K, 2.0), LossSpec.reverse_cross_entropy(K)):
        assert np.all(batch_loss(spec, preds, labels) >= 0)
    assert np.all(batch_loss(LossSpec.cross_entropy(K), preds, labels) >= -1e-12)


def test_audit_examples():
    a = lipschitz_audit(LossSpec.lp(3), 20_000, seed=1)
    assert a.passed and a.max_ratio <= math.sqrt(2) * 3
    b = lipschitz_audit(LossSpec.reverse_cross_entropy(2, -4.0), 20_000, seed=2)
    assert b.passed and b.bound == pytest.approx(11.3137, abs=1e-4)
    assert a.skipped == 0
    with pytest.raises(ValueError):
        lipschitz_audit(LossSpec.lp(2), 0)


def test_audit_deterministic():
    a = lipschitz_audit(LossSpec.cross_entropy(3), 5000, seed=9)
    b = lipschitz_audit(LossSpec.cross_entropy(3), 5000, seed=9)
    assert a.to_dict() == b.to_dict()
