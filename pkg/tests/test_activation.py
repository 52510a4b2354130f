import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dense
from resnetlab.activation import (
    PatternTrace,
    accumulate_piece,
    activation_matrix,
    activation_pattern,
    explicit_eval,
    trace_forward,
)
from resnetlab.model import DenseNetWeights, ResidualBlockWeights, forward_network


def zero_net(n, d, q=2):
    first = ResidualBlockWeights((np.zeros((d, d)),), (np.zeros(d),))
    blk = ResidualBlockWeights(tuple(np.zeros((d, d)) for _ in range(q)), tuple(np.zeros(d) for _ in range(q)))
    return DenseNetWeights((first,) + (blk,) * n)


def test_pattern_examples():
    mask = activation_pattern(np.eye(2), np.zeros(2), [1, -1])
    np.testing.assert_array_equal(activation_matrix(mask), np.diag([1.0, 0.0]))
    # exactly zero pre-activation counts as inactive
    assert not activation_pattern([[1.0, -1.0]], [0.0], [0.5, 0.5])[0]
    assert activation_pattern(np.ones((3, 2)), 100 * np.ones(3), [0.7, -0.2]).all()


def test_zero_network_trace(rng):
    w = zero_net(3, 4)
    x = rng.uniform(0.05, 0.95, size=4)
    trace = trace_forward(w, x, 3)
    for block in trace.masks[1:]:
        assert not block[0].any()
        assert block[-1].all()
    piece = accumulate_piece(w, trace, 3)
    np.testing.assert_array_equal(piece.A, np.eye(4))
    np.testing.assert_array_equal(piece.B, np.zeros(4))
    np.testing.assert_array_equal(explicit_eval(w, x, 3), x)


def test_relu_is_mask_times_preactivation(rng):
    w = random_dense(rng, 3, 5)
    x = rng.uniform(size=5)
    trace = trace_forward(w, x, 3)
    h = x
    for bw, masks in zip(w.blocks, trace.masks):
        block_in = h
        for m, (W, b) in enumerate(zip(bw.mats, bw.biases)):
            z = W @ h + b + (block_in if m == bw.q - 1 else 0)
            np.testing.assert_array_equal(np.maximum(z, 0), activation_matrix(masks[m]) @ z)
            h = np.maximum(z, 0)


def test_single_block_piece(rng):
    W, b = rng.normal(size=(4, 4)), rng.normal(size=4)
    w = DenseNetWeights((ResidualBlockWeights((W,), (b,)),))
    x = rng.uniform(size=4)
    trace = trace_forward(w, x, 0)
    J = activation_matrix(trace.masks[0][0])
    piece = accumulate_piece(w, trace, 0)
    np.testing.assert_allclose(piece.A, J @ W + J)
    np.testing.assert_allclose(piece.B, J @ b)


def test_trace_stable_under_tiny_moves(rng):
    w = random_dense(rng, 3, 6)
    checked = 0
    while checked < 20:
        x = rng.uniform(0.01, 0.99, size=6)
        trace = trace_forward(w, x, 3)
        if trace.margin < 1e-6:
            continue
        for _ in range(5):
            u = rng.normal(size=6)
            assert trace_forward(w, x + 1e-9 * u / np.linalg.norm(u), 3) == trace
        checked += 1


def test_piecewise_linearity(rng):
    w = random_dense(rng, 2, 5)
    x = rng.uniform(0.1, 0.9, size=5)
    trace = trace_forward(w, x, 2)
    piece = accumulate_piece(w, trace, 2)
    found = 0
    for _ in range(200):
        x2 = np.clip(x + rng.normal(0, 1e-3, size=5), 0, 1)
        if trace_forward(w, x2, 2) == trace:
            diff = forward_network(w, x, 2) - forward_network(w, x2, 2)
            np.testing.assert_allclose(diff, piece.A @ (x - x2), atol=1e-12)
            found += 1
    assert found > 0


def test_trace_equality_semantics():
    a = PatternTrace(((np.array([True]),),), 1.0)
    b = PatternTrace(((np.array([True]),), (np.array([False]),)), 1.0)
    assert a != b and a == PatternTrace(((np.array([True]),),), 0.5)
    assert a != "trace"
    assert a.to_json() == {"margin": 1.0, "masks": [[[1]]]}


def test_explicit_eval_rejects_outside_cube(rng):
    w = random_dense(rng, 1, 3)
    with pytest.raises(ValueError):
        explicit_eval(w, [1.5, 0, 0], 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 4), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_explicit_matches_recursive(n, d, seed):
    rng = np.random.default_rng(seed)
    w = random_dense(rng, n, d)
    x = rng.uniform(size=d)
    for depth in range(n + 1):
        assert np.abs(explicit_eval(w, x, depth) - forward_network(w, x, depth)).max() <= 1e-10
