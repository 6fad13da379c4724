import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groupdir.errors import ConfigError, InvalidGroupError, InvalidPriorError, NonFiniteInputError
from groupdir.softlabel import (
    SoftLabelCodec,
    encode_soft_logits,
    entropy,
    hard_ce_loss,
    la_ce_loss,
    soft_ce_loss,
    soft_target,
    soft_target_matrix,
)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_encode_extremes():
    for G in (2, 5, 13):
        c = SoftLabelCodec(G, 1.0)
        np.testing.assert_array_equal(encode_soft_logits(c, 0), np.arange(G, 0, -1))
        np.testing.assert_array_equal(encode_soft_logits(c, G - 1), np.arange(1, G + 1))


def test_encode_demo_group3_of6():
    np.testing.assert_array_equal(encode_soft_logits(SoftLabelCodec(6, 1.0), 3), [3, 4, 5, 6, 5, 4])


def test_encode_invalid_group():
    with pytest.raises(InvalidGroupError):
        encode_soft_logits(SoftLabelCodec(4), 4)
    with pytest.raises(InvalidGroupError):
        soft_target(SoftLabelCodec(4), -1)


def test_codec_validation():
    with pytest.raises(ConfigError):
        SoftLabelCodec(1)
    with pytest.raises(ConfigError):
        SoftLabelCodec(4, 0.0)


def test_soft_target_two_groups():
    np.testing.assert_allclose(soft_target(SoftLabelCodec(2), 0).probs,
                               [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-12)
    p = soft_target(SoftLabelCodec(2), 0).probs
    assert abs(p[0] - 0.731059) < 1e-6 and abs(p[1] - 0.268941) < 1e-6


def test_soft_target_symmetry_example():
    p = soft_target(SoftLabelCodec(5), 2).probs
    assert p[1] == p[3] and p[0] == p[4]


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.5])
def test_soft_target_invariants_all_pairs(beta):
    for G in range(2, 51):
        codec = SoftLabelCodec(G, beta)
        for g in range(G):
            q = soft_target(codec, g).probs
            assert abs(q.sum() - 1) <= 1e-9
            assert np.all((q > 0) & (q < 1))
            assert np.argmax(q) == g
            for k in range(1, G):
                if g - k >= 0 and g + k < G:
                    assert q[g - k] == q[g + k]
            d = np.abs(np.arange(G) - g)
            order = np.argsort(d, kind="stable")
            # strictly decreasing in |j - g|
            for a, b in zip(order[:-1], order[1:]):
                if d[b] > d[a]:
                    assert q[b] < q[a]


def test_soft_target_large_beta_is_onehot():
    assert soft_target(SoftLabelCodec(5, 100.0), 2).probs.max() > 1 - 1e-10


def test_soft_target_matrix_rows():
    c = SoftLabelCodec(7, 1.0)
    m = soft_target_matrix(c, [0, 3, 6])
    for row, g in zip(m, [0, 3, 6]):
        np.testing.assert_allclose(row, soft_target(c, g).probs, atol=1e-15)


def test_soft_ce_examples():
    v, g = soft_ce_loss([0.0, 0.0], np.array([0.5, 0.5]))
    assert abs(v - math.log(2)) < 1e-12
    np.testing.assert_allclose(g, [0, 0], atol=1e-15)
    v, g = soft_ce_loss([0.0, 0.0], np.array([1.0, 0.0]))
    assert abs(v - math.log(2)) < 1e-12
    np.testing.assert_allclose(g, [-0.5, 0.5], atol=1e-15)


def test_hard_ce_examples():
    v, g = hard_ce_loss([0.0, 0.0], 0)
    assert abs(v - math.log(2)) < 1e-12
    np.testing.assert_allclose(g, [-0.5, 0.5])
    assert hard_ce_loss([50.0, 0.0], 0).value < 1e-20
    logits = np.array([0.3, -1.2, 2.0])
    a, b = hard_ce_loss(logits, 1), soft_ce_loss(logits, np.array([0.0, 1.0, 0.0]))
    assert a.value == b.value
    np.testing.assert_array_equal(a.grad_logits, b.grad_logits)


def test_la_examples():
    v, _ = la_ce_loss([0.0, 0.0], 1, [0.9, 0.1], tau=1.0)
    assert abs(v - math.log(10)) < 1e-12
    logits = np.array([0.4, -0.7, 1.3, 0.1])
    ce = hard_ce_loss(logits, 2)
    for tau in (0.0, 1.0, 3.7):
        la = la_ce_loss(logits, 2, np.full(4, 0.25), tau)
        assert abs(la.value - ce.value) <= 1e-12
        np.testing.assert_allclose(la.grad_logits, ce.grad_logits, atol=1e-12)
    la0 = la_ce_loss(logits, 2, [0.1, 0.2, 0.3, 0.4], 0.0)
    assert la0.value == ce.value


def test_la_invalid_prior():
    with pytest.raises(InvalidPriorError):
        la_ce_loss([0.0, 0.0], 0, [1.0, 0.0])
    with pytest.raises(InvalidPriorError):
        la_ce_loss([0.0, 0.0], 0, [0.6, 0.6])


def test_non_finite():
    with pytest.raises(NonFiniteInputError):
        hard_ce_loss([np.nan, 0.0], 0)
    with pytest.raises(NonFiniteInputError):
        soft_ce_loss([np.inf, 0.0], np.array([0.5, 0.5]))


def _random_case(seed):
    rng = np.random.default_rng(seed)
    G = int(rng.integers(2, 8))
    logits = rng.normal(scale=2.0, size=G)
    g = int(rng.integers(0, G))
    prior = rng.uniform(0.05, 1.0, size=G)
    return logits, g, prior / prior.sum(), SoftLabelCodec(G, float(rng.uniform(0.3, 2.0)))


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    logits, g, prior, codec = _random_case(seed)
    q = soft_target(codec, g).probs
    losses = [
        lambda l: soft_ce_loss(l, q),
        lambda l: hard_ce_loss(l, g),
        lambda l: la_ce_loss(l, g, prior, 1.0),
    ]
    for f in losses:
        fd = central_diff(lambda l: f(l).value, logits)
        an = f(logits).grad_logits
        assert np.max(np.abs(fd - an)) <= 1e-5 * max(1.0, np.max(np.abs(an)))


def test_batched_gradient_is_mean():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 5))
    g = np.array([0, 4, 2, 2])
    v, grad = hard_ce_loss(logits, g)
    fd = central_diff(lambda l: hard_ce_loss(l, g).value, logits)
    np.testing.assert_allclose(grad, fd, atol=1e-8)
    assert abs(v - np.mean([hard_ce_loss(logits[i], g[i]).value for i in range(4)])) < 1e-12


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_shift_invariance(seed, c):
    logits, g, prior, codec = _random_case(seed)
    q = soft_target(codec, g).probs
    for f in (lambda l: soft_ce_loss(l, q), lambda l: hard_ce_loss(l, g), lambda l: la_ce_loss(l, g, prior)):
        a, b = f(logits), f(logits + c)
        assert abs(a.value - b.value) <= 1e-9 * max(1.0, abs(a.value))
        np.testing.assert_allclose(a.grad_logits, b.grad_logits, atol=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_soft_ce_at_least_entropy(seed):
    logits, g, _, codec = _random_case(seed)
    q = soft_target(codec, g).probs
    assert soft_ce_loss(logits, q).value >= entropy(q) - 1e-12
    assert abs(soft_ce_loss(np.log(q), q).value - entropy(q)) < 1e-12
