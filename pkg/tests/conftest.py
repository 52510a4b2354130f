import numpy as np
import pytest

from resnetlab.model import ConvBlockWeights, DenseNetWeights, ResidualBlockWeights, ResNetWeights


def random_dense(rng, n, d_res, max_q=3, max_width=12, scale=0.5, d_out=0):
    """Random matrix-form network; hidden widths vary per layer."""
    blocks = [ResidualBlockWeights((rng.normal(0, scale, (d_res, d_res)),), (rng.normal(0, scale, d_res),))]
    for _ in range(n):
        q = int(rng.integers(1, max_q + 1))
        widths = [d_res] + [int(rng.integers(1, max_width + 1)) for _ in range(q - 1)] + [d_res]
        mats = tuple(rng.normal(0, scale / np.sqrt(widths[m]), (widths[m + 1], widths[m])) for m in range(q))
        biases = tuple(rng.normal(0, scale, widths[m + 1]) for m in range(q))
        blocks.append(ResidualBlockWeights(mats, biases))
    out_w = out_b = None
    if d_out:
        out_w, out_b = rng.normal(size=(d_out, d_res)), rng.normal(size=d_out)
    return DenseNetWeights(tuple(blocks), out_w, out_b)


def random_conv(rng, n, d, c_in, c_res, q=2, f=1, d_out=2, scale=0.3):
    side = 2 * f + 1
    sampling = ConvBlockWeights((rng.normal(0, scale, (c_res, c_in, side, side)),), (rng.normal(0, scale, c_res),))
    blocks = []
    for _ in range(n):
        masks = tuple(rng.normal(0, scale, (c_res, c_res, side, side)) for _ in range(q))
        blocks.append(ConvBlockWeights(masks, tuple(rng.normal(0, scale, c_res) for _ in range(q))))
    out_w = rng.normal(size=(d_out, c_res)) if d_out else None
    out_b = rng.normal(size=d_out) if d_out else None
    return ResNetWeights(d, sampling, tuple(blocks), out_w, out_b)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
