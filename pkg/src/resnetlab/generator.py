"""Synthetic weight sequences with prescribed norm decay.

Block ``k`` gets layer norms whose product is ``scale * (k+1)**-decay`` and
bias norms ``bias_scale * (k+1)**-bias_decay`` (conv biases measured as
replicated over the image grid). Randomness comes from
numpy's PCG64 bit generator; block ``k`` draws from
``SeedSequence(seed, spawn_key=(1, k))`` and the output layer from
``spawn_key=(2, 0)``, so a given (config, seed) always yields the same
weights and blocks can be drawn independently.
"""
import math
from dataclasses import dataclass

import numpy as np

from resnetlab.diagnostics import filter_norm_bound, grid_bias_norm
from resnetlab.model import (
    ConvBlockWeights,
    DenseNetWeights,
    NetworkSpec,
    ResidualBlockWeights,
    ResNetWeights,
)
from resnetlab.tensor import check_p, matrix_norm, vector_norm

MAX_REDRAWS = 16


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    spec: NetworkSpec
    decay: float = 2.0
    scale: float = 1.0
    bias_decay: float = 2.0
    bias_scale: float = 1.0
    seed: int = 0
    p: float = 1

    def __post_init__(self):
        if not (self.decay >= 0):
            raise ConfigError("decay must be >= 0")
        if not (self.scale > 0):
            raise ConfigError("scale must be > 0")
        if not (self.bias_decay >= 0) or not (self.bias_scale >= 0):
            raise ConfigError("bias decay and scale must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        object.__setattr__(self, "p", check_p(self.p))

    def to_dict(self):
        p = self.p if math.isfinite(self.p) else "inf"
        return {"spec": self.spec.to_dict(), "decay": self.decay, "scale": self.scale,
                "bias_decay": {"exponent": self.bias_decay, "scale": self.bias_scale},
                "seed": self.seed, "p": p}

    @classmethod
    def from_dict(cls, data):
        try:
            spec = NetworkSpec.from_dict(data["spec"])
            bias = data.get("bias_decay", {})
            if not isinstance(bias, dict):
                bias = {"exponent": bias}
            p = data.get("p", 1)
            return cls(spec=spec, decay=float(data.get("decay", 2.0)), scale=float(data.get("scale", 1.0)),
                       bias_decay=float(bias.get("exponent", 2.0)), bias_scale=float(bias.get("scale", 1.0)),
                       seed=int(data.get("seed", 0)), p=math.inf if p in ("inf", "infinity") else float(p))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid generator config: {exc}") from None


def block_rng(seed, k):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, k))))


def _draw(rng, shape):
    for _ in range(MAX_REDRAWS):
        a = rng.uniform(-1.0, 1.0, size=shape)
        if np.any(a != 0.0):
            return a
    raise RuntimeError(f"{MAX_REDRAWS} consecutive all-zero draws of shape {shape}")


GRID_BITS = 40


def _scaled(a, target, norm, exact=True):
    """``a`` rescaled to ``norm(a) == target``.

    Entries are snapped to a dyadic grid ``2**-GRID_BITS`` relative to the
    target, where the absolute sums behind the 1/inf norms are exact. When
    the target itself lies on that grid (unit norms, say) the leftover gap
    is moved onto one entry, so the norm hits the target bit for bit and
    partial sums of such norms are integral. ``exact=False`` skips that
    search (interpolated norms rarely admit it).
    """
    if target == 0.0:
        return np.zeros_like(a)
    a = a * (target / norm(a))
    grid = 2.0 ** (math.frexp(target)[1] - GRID_BITS)
    snapped = np.round(a / grid) * grid
    if not np.any(snapped):
        return a
    a = snapped
    if not exact or np.round(target / grid) * grid != target:
        return a
    flat = a.reshape(-1)
    for i in np.argsort(-np.abs(flat), kind="stable"):
        n0 = norm(a)
        if n0 == target:
            break
        keep = flat[i]
        step = math.copysign(1.0, keep) * (target - n0)
        flat[i] = keep + step
        n1 = norm(a)
        if n1 != target and n1 != n0:
            # entry enters the norm with some weight (replicated biases): one secant step
            flat[i] = keep + step * (target - n0) / (n1 - n0)
        if norm(a) != target:
            flat[i] = keep
    return a


def generate(cfg):
    """Random weights whose per-block norm products hit their targets.

    The block target is spread evenly over its layers (q-th root each).
    Returns :class:`DenseNetWeights` or :class:`ResNetWeights` by
    ``cfg.spec.form``.
    """
    spec, p = cfg.spec, cfg.p
    exact = p in (1, math.inf)
    conv = spec.form == "conv"
    if conv:
        cells = spec.d * spec.d

        def wnorm(a):
            return filter_norm_bound(a, p)

        def bnorm(a):
            return grid_bias_norm(a, cells, p)
    else:
        def wnorm(a):
            return matrix_norm(a, p)

        def bnorm(a):
            return vector_norm(a, p)

    layers = []
    for k in range(spec.n + 1):
        rng = block_rng(cfg.seed, k)
        q = spec.q[k]
        per_layer = (cfg.scale * (k + 1.0) ** -cfg.decay) ** (1.0 / q)
        bias_target = cfg.bias_scale * (k + 1.0) ** -cfg.bias_decay
        ws, bs = [], []
        for m in range(1, q + 1):
            c_out, c_prev = spec.c[k][m], spec.c[k][m - 1]
            if conv:
                side = 2 * spec.f[k][m - 1] + 1
                shape = (c_out, c_prev, side, side)
            else:
                shape = (c_out, c_prev)
            ws.append(_scaled(_draw(rng, shape), per_layer, wnorm, exact))
            bs.append(_scaled(_draw(rng, c_out), bias_target, bnorm, exact))
        layers.append((tuple(ws), tuple(bs)))

    out_w = out_b = None
    if spec.d_out > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(2, 0))))
        width = spec.res_width
        out_w = rng.uniform(-1.0, 1.0, size=(spec.d_out, width)) / math.sqrt(width)
        out_b = rng.uniform(-1.0, 1.0, size=spec.d_out)
    if conv:
        return ResNetWeights(spec.d, ConvBlockWeights(*layers[0]),
                             tuple(ConvBlockWeights(*lay) for lay in layers[1:]), out_w, out_b)
    return DenseNetWeights(tuple(ResidualBlockWeights(*lay) for lay in layers), out_w, out_b, d_in=spec.d_in)


def perturb_identity(weights, eps, p=1):
    """Shrink every layer of block ``k`` to norm ``eps * (k+1)**-2``.

    Directions are kept; ``eps = 0`` yields the identity network on the unit
    cube. In conv form the sampling layer has no shortcut, so it is left
    untouched and only blocks ``1..n`` shrink.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    p = check_p(p)
    exact = p in (1, math.inf)

    def bnorm(a):
        return vector_norm(a, p)

    if isinstance(weights, DenseNetWeights):
        def wnorm(a):
            return matrix_norm(a, p)

        blocks = []
        for k, bw in enumerate(weights.blocks):
            t = eps * (k + 1.0) ** -2
            blocks.append(ResidualBlockWeights(
                tuple(_scaled(W, t, wnorm, exact) if np.any(W) else W for W in bw.mats),
                tuple(_scaled(b, t, bnorm, exact) if np.any(b) else b for b in bw.biases)))
        return DenseNetWeights(tuple(blocks), weights.output_w, weights.output_b, d_in=weights.d_in)
    if isinstance(weights, ResNetWeights):
        cells = weights.d * weights.d

        def wnorm(a):
            return filter_norm_bound(a, p)

        def gnorm(a):
            return grid_bias_norm(a, cells, p)

        def shrink(blk, k):
            t = eps * (k + 1.0) ** -2
            return ConvBlockWeights(
                tuple(_scaled(w, t, wnorm, exact) if np.any(w) else w for w in blk.masks),
                tuple(_scaled(b, t, gnorm, exact) if np.any(b) else b for b in blk.biases))

        return ResNetWeights(weights.d, weights.sampling,
                             tuple(shrink(blk, k) for k, blk in enumerate(weights.blocks, start=1)),
                             weights.output_w, weights.output_b)
    raise TypeError(f"unsupported weights type {type(weights).__name__}")
