"""JSON weight files.

Layout (both forms)::

    {"format": "resnetlab-weights", "version": 1, "form": "matrix" | "conv",
     "spec": {n, q, c, d_in, d_res, d_out[, d, f]},
     "sampling": {"w": ..., "b": [...]},
     "blocks": [[{"w": ..., "b": [...]}, ...], ...],   # blocks 1..n
     "output": {"w": [[...]], "b": [...]} | null}

Matrix form: ``sampling.w`` is the embedded ``d_res x d_res`` block-0
matrix and every ``w`` is a nested row list. Conv form: every ``w`` is a
``(c_out, c_in, 2f+1, 2f+1)`` nested list and every ``b`` holds one scalar
per output channel. Shapes are checked against ``spec`` on load.
"""
import json

import numpy as np

from resnetlab.model import (
    ConvBlockWeights,
    DenseNetWeights,
    NetworkSpec,
    ResidualBlockWeights,
    ResNetWeights,
)

FORMAT = "resnetlab-weights"


class WeightFileError(ValueError):
    """Weight file is malformed or inconsistent with its declared spec."""


def _layer(w, b):
    return {"w": np.asarray(w).tolist(), "b": np.asarray(b).tolist()}


def to_dict(weights):
    if isinstance(weights, DenseNetWeights):
        first, rest = weights.blocks[0], weights.blocks[1:]
        sampling = _layer(first.mats[0], first.biases[0])
        blocks = [[_layer(W, b) for W, b in zip(bw.mats, bw.biases)] for bw in rest]
    elif isinstance(weights, ResNetWeights):
        sampling = _layer(weights.sampling.masks[0], weights.sampling.biases[0])
        blocks = [[_layer(w, b) for w, b in zip(blk.masks, blk.biases)] for blk in weights.blocks]
    else:
        raise TypeError(f"cannot serialise {type(weights).__name__}")
    spec = weights.spec()
    output = None
    if weights.output_w is not None:
        output = _layer(weights.output_w, weights.output_b)
    return {"format": FORMAT, "version": 1, "form": spec.form, "spec": spec.to_dict(),
            "sampling": sampling, "blocks": blocks, "output": output}


def dumps(weights):
    return json.dumps(to_dict(weights), separators=(",", ":")) + "\n"


def save(weights, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(weights))


def _array(obj, ndim, what):
    try:
        a = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise WeightFileError(f"{what}: not a numeric array ({exc})") from None
    if a.ndim != ndim:
        raise WeightFileError(f"{what}: expected {ndim}-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise WeightFileError(f"{what}: non-finite entries")
    return a


def _check(cond, msg):
    if not cond:
        raise WeightFileError(msg)


def from_dict(data):
    try:
        return _from_dict(data)
    except WeightFileError:
        raise
    except (KeyError, TypeError, IndexError) as exc:
        raise WeightFileError(f"malformed weight file: {exc!r}") from None
    except ValueError as exc:
        raise WeightFileError(str(exc)) from None


def _from_dict(data):
    _check(isinstance(data, dict) and data.get("format") == FORMAT, f"not a {FORMAT} document")
    spec = NetworkSpec.from_dict({**data["spec"], "form": data["form"]})
    blocks = data["blocks"]
    _check(isinstance(blocks, list) and len(blocks) == spec.n, f"expected {spec.n} blocks, found {len(blocks)}")
    layers = [[data["sampling"]]] + blocks
    conv = spec.form == "conv"
    parsed = []
    for k, block in enumerate(layers):
        _check(isinstance(block, list) and len(block) == spec.q[k], f"block {k}: expected {spec.q[k]} layers")
        ws, bs = [], []
        for m, layer in enumerate(block, start=1):
            where = f"block {k} layer {m}"
            c_out, c_prev = spec.c[k][m], spec.c[k][m - 1]
            if conv:
                w = _array(layer["w"], 4, where + " w")
                side = 2 * spec.f[k][m - 1] + 1
                _check(w.shape == (c_out, c_prev, side, side),
                       f"{where}: mask shape {w.shape}, spec wants {(c_out, c_prev, side, side)}")
            else:
                w = _array(layer["w"], 2, where + " w")
                _check(w.shape == (c_out, c_prev), f"{where}: matrix shape {w.shape}, spec wants {(c_out, c_prev)}")
            b = _array(layer["b"], 1, where + " b")
            _check(b.size == c_out, f"{where}: bias length {b.size}, spec wants {c_out}")
            ws.append(w)
            bs.append(b)
        parsed.append((tuple(ws), tuple(bs)))
    out_w = out_b = None
    if data.get("output") is not None:
        out_w = _array(data["output"]["w"], 2, "output w")
        out_b = _array(data["output"]["b"], 1, "output b")
        _check(out_w.shape == (spec.d_out, spec.res_width),
               f"output matrix shape {out_w.shape}, spec wants {(spec.d_out, spec.res_width)}")
        _check(out_b.size == spec.d_out, "output bias length mismatch")
    if conv:
        return ResNetWeights(spec.d, ConvBlockWeights(*parsed[0]),
                             tuple(ConvBlockWeights(*p) for p in parsed[1:]), out_w, out_b)
    return DenseNetWeights(tuple(ResidualBlockWeights(*p) for p in parsed), out_w, out_b, d_in=spec.d_in)


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"invalid JSON: {exc}") from None
    return from_dict(data)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
