import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_conv
from resnetlab.conv import toeplitz_mc
from resnetlab.diagnostics import (
    NormSequence,
    cauchy_tail_test,
    classify,
    diagnose,
    filter_norm_bound,
    norm_sequence,
    partial_sum_biases,
    partial_sum_weights,
    product_bound,
    tail_bound,
)
from resnetlab.generator import GeneratorConfig, generate, perturb_identity
from resnetlab.model import DenseNetWeights, NetworkSpec, ResidualBlockWeights, forward_network
from resnetlab.tensor import norm_induced


def dense_spec(n, d=8, q=1):
    return NetworkSpec.from_dict({"form": "matrix", "n": n, "q": q, "d_res": d})


def test_filter_bound_examples():
    w = np.array([[0, 1, 0], [2, 0, 3], [0, 0, 0]], dtype=float)[None, None]
    assert filter_norm_bound(w, 1) == 6.0
    assert filter_norm_bound(w, math.inf) == 6.0
    assert norm_induced(toeplitz_mc(w, 4), 1) <= 6.0
    assert filter_norm_bound(np.zeros((2, 3, 3, 3)), 2) == 0.0


def test_filter_bound_channel_maxima():
    w = np.zeros((2, 3, 1, 1))
    w[:, :, 0, 0] = [[1, 2, 3], [4, 5, 6]]
    assert filter_norm_bound(w, 1) == 9.0   # worst input channel
    assert filter_norm_bound(w, math.inf) == 15.0   # worst output channel
    assert filter_norm_bound(w, 2) == pytest.approx(math.sqrt(9 * 15))


def test_partial_sums_by_hand():
    geo = NormSequence([[2.0 ** -k] for k in range(30)], [[0.0]] * 30)
    for n in (0, 5, 29):
        assert partial_sum_weights(geo, n) == 2 - 2.0 ** -n
    assert partial_sum_biases(geo, 29) == 0.0
    assert product_bound(geo, 0, 29) <= math.e ** 2
    unit = NormSequence([[1.0]] * 10, [[1.0]] * 10)
    assert partial_sum_weights(unit, 9) == 10.0
    pair = NormSequence([[0.5, 3.0], [2.0, 0.25]], [[1.0, 2.0], [4.0, 8.0]])
    np.testing.assert_array_equal(pair.weight_terms(), [1.5, 0.5])
    np.testing.assert_array_equal(pair.bias_terms(), [3.0 * 1 + 2, 0.25 * 4 + 8])
    assert product_bound(NormSequence([[0.0]] * 4, [[0.0]] * 4), 0, 3) == 1.0


def test_norm_sequence_rejects_bad_layout():
    with pytest.raises(ValueError):
        NormSequence([[1.0]], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        NormSequence([[-1.0]], [[1.0]])


def test_tails_of_identity_and_truncated_nets():
    zero = DenseNetWeights((ResidualBlockWeights((np.zeros((4, 4)),), (np.zeros(4),)),) * 6)
    assert not cauchy_tail_test(zero, 16, range(6)).any()
    w = generate(GeneratorConfig(dense_spec(8, 4), seed=2))
    K = 4
    blocks = w.blocks[:K + 1] + tuple(ResidualBlockWeights((np.zeros((4, 4)),), (np.zeros(4),)) for _ in range(4))
    tails = cauchy_tail_test(DenseNetWeights(blocks), 32, range(9))
    assert not tails[K + 1:].any() and tails[K] > 0


def test_tails_decay_below_threshold():
    # per-block tails jitter with the activation patterns, so compare window maxima
    w = generate(GeneratorConfig(dense_spec(2047, 8), seed=0))
    tails = cauchy_tail_test(w, 32, range(1, 2048))
    window_max = [tails[2 ** j - 1:2 ** (j + 1) - 1].max() for j in range(2, 11)]
    assert all(b < a for a, b in zip(window_max, window_max[1:]))
    assert tails[-200:].max() < 1e-6


def test_tails_within_series_mass_bound():
    w = generate(GeneratorConfig(dense_spec(300, 6), seed=1))
    ns = norm_sequence(w, 1)
    S1, S2 = np.cumsum(ns.weight_terms()), np.cumsum(ns.bias_terms())
    PB = np.cumprod(ns.weight_terms() + 1)
    X = np.random.default_rng(0).uniform(size=(32, 6))
    deepest = forward_network(w, X, 300)
    for n in range(0, 300, 20):
        tail = np.abs(forward_network(w, X, n) - deepest).max()
        assert tail <= 10 * PB[-1] * ((S1[-1] - S1[n]) + (S2[-1] - S2[n]))
        assert tail <= tail_bound(ns, n, 300, 6.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from([1, math.inf]))
def test_rigorous_tail_bound(d, seed, p):
    rng = np.random.default_rng(seed)
    w = generate(GeneratorConfig(dense_spec(12, d, q=2), decay=1.5, scale=float(rng.uniform(0.1, 2)),
                                 seed=seed % 1000, p=p))
    ns = norm_sequence(w, p)
    X = rng.uniform(size=(8, d))
    top = forward_network(w, X, 12)
    radius = d if p == 1 else 1.0
    for n in range(12):
        assert np.abs(forward_network(w, X, n) - top).max() <= tail_bound(ns, n, 12, radius) * (1 + 1e-12)


def test_classify_labels():
    depths = np.arange(1, 101)
    assert classify(depths, np.zeros(100), 1e-8)[0] == "flat"
    assert classify(depths, depths ** -2.0, 1e-8)[0] == "summable"
    assert classify(depths, np.ones(100), 1e-8)[0] == "growing"
    assert classify(depths, 1.0 / depths, 1e-8)[0] == "unclear"
    assert classify(depths[:2], [1, 1], 1e-8)[0] == "unclear"


def test_diagnose_verdicts():
    conv = diagnose(generate(GeneratorConfig(dense_spec(300), seed=0)), samples=16)
    assert conv.verdict == "converged"
    assert abs(conv.S1[-1] - math.pi ** 2 / 6) / (math.pi ** 2 / 6) < 0.01
    flat = diagnose(generate(GeneratorConfig(dense_spec(300), decay=0, seed=0)), samples=16)
    assert flat.verdict == "diverged"
    np.testing.assert_array_equal(flat.S1, np.arange(1, 302))
    bias = diagnose(generate(GeneratorConfig(dense_spec(300), bias_decay=0, seed=0)), samples=16)
    assert bias.verdict == "diverged" and bias.S1[-1] < 2 and bias.S2[-1] == 301


def test_identity_fixture_report():
    w = perturb_identity(generate(GeneratorConfig(dense_spec(40, 5), seed=3)), 0.0)
    rep = diagnose(w, samples=8)
    assert not rep.S1.any() and not rep.S2.any() and not rep.tail.any()
    assert np.all(rep.product_bound == 1.0)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "depth,S1,S2,productBound,tail" and lines[1] == "0,0.0,0.0,1.0,0.0"


def test_report_monotone_and_json(rng):
    rep = diagnose(generate(GeneratorConfig(dense_spec(60, 4, q=2), seed=5)), p=math.inf, depths=range(0, 61, 3))
    for arr in (rep.S1, rep.S2, rep.product_bound):
        assert np.all(np.diff(arr) >= 0)
    assert np.all(rep.product_bound <= np.exp(rep.S1) * (1 + 1e-12))
    doc = rep.to_json()
    assert doc["p"] == "inf" and doc["depths"][-1] == 60 and doc["verdict"] in ("converged", "diverged", "inconclusive")
    with pytest.raises(ValueError):
        diagnose(generate(GeneratorConfig(dense_spec(5, 3))), depths=[9])


def test_conv_norms_and_alternative(rng):
    rw = random_conv(rng, 3, 4, 1, 2)
    ns = norm_sequence(rw, 1)
    assert ns.n == 3
    for k, blk in enumerate(rw.blocks, start=1):
        for m, w in enumerate(blk.masks):
            assert norm_induced(toeplitz_mc(w, 4), 1) <= ns.weights[k][m] + 1e-12
            assert ns.biases[k][m] == pytest.approx(16 * np.abs(blk.biases[m]).sum(), rel=1e-14)
    rep = diagnose(rw, samples=8)
    assert rep.S1_alt[0] == filter_norm_bound(rw.sampling.masks[0], 1)
    np.testing.assert_allclose(rep.S1_alt - rep.S1, rep.S1_alt[0] - rep.S1[0], atol=1e-12)
