"""Residual networks in matrix form and in convolutional form.

Matrix form (:class:`DenseNetWeights`) is the general network with shortcut
connections: block ``k`` maps ``R^d_res -> R^d_res`` by ``q_k`` affine+ReLU
layers whose last pre-activation also receives the block input. Block 0 is
the sampling layer, embedded as a one-layer residual block.

Convolutional form (:class:`ResNetWeights`) holds filter masks and
per-channel bias scalars; :func:`lower_to_matrix` turns it into matrix form.

Forward functions accept a single vector or a batch of row vectors.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from resnetlab.conv import as_mask, conv_mc_direct, radius, toeplitz_mc
from resnetlab.tensor import as_matrix, as_stack, as_vector, global_average_pool, vec_stack


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a network.

    ``c[k]`` lists the widths ``c^(k)_0 .. c^(k)_{q_k}`` of block ``k``. In
    matrix form these are vector lengths and ``c[0] == (d_res, d_res)``; in
    conv form they are channel counts, ``c[0] == (c_in, c_res)`` and ``f[k]``
    holds the filter radius of every layer.
    """

    n: int
    q: Tuple[int, ...]
    c: Tuple[Tuple[int, ...], ...]
    d_res: int
    d_in: int
    d_out: int = 0
    form: str = "matrix"
    f: Optional[Tuple[Tuple[int, ...], ...]] = None
    d: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        object.__setattr__(self, "c", tuple(tuple(int(v) for v in row) for row in self.c))
        if self.f is not None:
            object.__setattr__(self, "f", tuple(tuple(int(v) for v in row) for row in self.f))
        self.validate()

    @property
    def res_width(self):
        """Width of the residual stream: d_res (matrix) or c_res (conv)."""
        return self.c[0][-1]

    def validate(self):
        if self.form not in ("matrix", "conv"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if len(self.q) != self.n + 1 or len(self.c) != self.n + 1:
            raise ValueError("q and c need n + 1 entries (blocks 0..n)")
        if self.q[0] != 1:
            raise ValueError("block 0 (sampling) must have q_0 = 1")
        if min(self.q) < 1:
            raise ValueError("every block needs at least one layer")
        for k, (qk, ck) in enumerate(zip(self.q, self.c)):
            if len(ck) != qk + 1:
                raise ValueError(f"block {k}: c needs q_k + 1 = {qk + 1} widths, got {len(ck)}")
            if min(ck) < 1:
                raise ValueError(f"block {k}: widths must be positive")
            if k > 0 and (ck[0] != self.res_width or ck[-1] != self.res_width):
                raise ValueError(f"block {k}: c_0 and c_q must equal the residual width {self.res_width}")
        if self.d_in > self.d_res:
            raise ValueError(f"d_in={self.d_in} exceeds d_res={self.d_res}")
        if self.form == "matrix":
            if self.c[0] != (self.d_res, self.d_res):
                raise ValueError("matrix form: block 0 must be d_res x d_res (embedded sampling layer)")
        else:
            if self.d is None or self.f is None:
                raise ValueError("conv form needs d and f")
            if len(self.f) != self.n + 1 or any(len(fk) != qk for fk, qk in zip(self.f, self.q)):
                raise ValueError("f needs one radius per layer")
            for fk in self.f:
                for r in fk:
                    if r < 0 or r + 1 > self.d:
                        raise ValueError(f"filter radius {r} violates f + 1 <= d = {self.d}")
            c_in, c_res = self.c[0]
            if c_in > c_res:
                raise ValueError("conv form needs c_in <= c_res")
            if self.d_res != self.d * self.d * c_res or self.d_in != self.d * self.d * c_in:
                raise ValueError("conv form needs d_res = d^2 c_res and d_in = d^2 c_in")

    def to_dict(self):
        out = {"form": self.form, "n": self.n, "q": list(self.q), "c": [list(r) for r in self.c],
               "d_in": self.d_in, "d_res": self.d_res, "d_out": self.d_out}
        if self.form == "conv":
            out["d"] = self.d
            out["f"] = [list(r) for r in self.f]
        return out

    @classmethod
    def from_dict(cls, data):
        """Build from a dict; ``q``, ``f`` may be scalars and ``c`` may be
        replaced by a scalar hidden ``width`` (matrix) or ``channels`` /
        ``c_in`` / ``width`` (conv)."""
        form = data.get("form", "matrix")
        n = int(data["n"])
        q = data.get("q", 1)
        q = [1] + [int(q)] * n if np.isscalar(q) else list(q)
        if form == "matrix":
            d_res = int(data["d_res"])
            c = data.get("c")
            if c is None:
                width = int(data.get("width", d_res))
                c = [[d_res, d_res]] + [[d_res] + [width] * (qk - 1) + [d_res] for qk in q[1:]]
            return cls(n=n, q=q, c=c, d_res=d_res, d_in=int(data.get("d_in", d_res)),
                       d_out=int(data.get("d_out", 0)), form="matrix")
        d = int(data["d"])
        c = data.get("c")
        if c is None:
            c_res = int(data["channels"])
            c_in = int(data.get("c_in", c_res))
            width = int(data.get("width", c_res))
            c = [[c_in, c_res]] + [[c_res] + [width] * (qk - 1) + [c_res] for qk in q[1:]]
        f = data.get("f", 1)
        if np.isscalar(f):
            f = [[int(f)] * qk for qk in q]
        return cls(n=n, q=q, c=c, d=d, f=f, d_res=d * d * c[0][1], d_in=d * d * c[0][0],
                   d_out=int(data.get("d_out", 0)), form="conv")


@dataclass(frozen=True)
class ResidualBlockWeights:
    """Weights ``W_1..W_q`` and biases ``b_1..b_q`` of one residual block."""

    mats: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(as_matrix(m, "weight matrix") for m in self.mats)
        biases = tuple(as_vector(b, "bias vector") for b in self.biases)
        if not mats or len(mats) != len(biases):
            raise ValueError("a block needs matching, non-empty weight and bias lists")
        for m, (W, b) in enumerate(zip(mats, biases), start=1):
            if W.shape[0] != b.size:
                raise ValueError(f"layer {m}: W is {W.shape}, bias has length {b.size}")
            if m > 1 and W.shape[1] != mats[m - 2].shape[0]:
                raise ValueError(f"layer {m}: W is {W.shape}, previous layer outputs {mats[m - 2].shape[0]}")
        if mats[-1].shape[0] != mats[0].shape[1]:
            raise ValueError("last layer width must equal block input width (shortcut)")
        object.__setattr__(self, "mats", mats)
        object.__setattr__(self, "biases", biases)

    @property
    def q(self):
        return len(self.mats)

    @property
    def width(self):
        return self.mats[0].shape[1]


@dataclass(frozen=True)
class DenseNetWeights:
    """Blocks ``0..n`` of a matrix-form network, plus an optional output map."""

    blocks: Tuple[ResidualBlockWeights, ...]
    output_w: Optional[np.ndarray] = None
    output_b: Optional[np.ndarray] = None
    d_in: Optional[int] = None

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("need at least block 0")
        if blocks[0].q != 1:
            raise ValueError("block 0 must have a single layer")
        width = blocks[0].width
        for k, bw in enumerate(blocks):
            if bw.width != width:
                raise ValueError(f"block {k} has width {bw.width}, expected {width}")
        object.__setattr__(self, "blocks", blocks)
        if self.output_w is not None:
            ow = as_matrix(self.output_w, "output matrix")
            ob = as_vector(self.output_b if self.output_b is not None else np.zeros(ow.shape[0]), "output bias")
            if ow.shape[1] != width or ob.size != ow.shape[0]:
                raise ValueError(f"output layer shapes {ow.shape}/{ob.shape} do not fit d_res={width}")
            object.__setattr__(self, "output_w", ow)
            object.__setattr__(self, "output_b", ob)
        if self.d_in is None:
            object.__setattr__(self, "d_in", width)

    @property
    def n(self):
        return len(self.blocks) - 1

    @property
    def d_res(self):
        return self.blocks[0].width

    def spec(self):
        c = [tuple([bw.width] + [W.shape[0] for W in bw.mats]) for bw in self.blocks]
        d_out = 0 if self.output_w is None else self.output_w.shape[0]
        return NetworkSpec(n=self.n, q=[bw.q for bw in self.blocks], c=c, d_res=self.d_res,
                           d_in=self.d_in, d_out=d_out, form="matrix")


@dataclass(frozen=True)
class ConvBlockWeights:
    """Filter masks ``(c_m, c_{m-1}, k, k)`` and per-channel bias scalars."""

    masks: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        masks = tuple(as_mask(w) for w in self.masks)
        biases = tuple(as_vector(b, "bias") for b in self.biases)
        if not masks or len(masks) != len(biases):
            raise ValueError("a block needs matching, non-empty mask and bias lists")
        for m, (w, b) in enumerate(zip(masks, biases), start=1):
            if w.shape[0] != b.size:
                raise ValueError(f"layer {m}: mask has {w.shape[0]} output channels, bias has {b.size}")
            if m > 1 and w.shape[1] != masks[m - 2].shape[0]:
                raise ValueError(f"layer {m}: mask expects {w.shape[1]} input channels, got {masks[m - 2].shape[0]}")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "biases", biases)

    @property
    def q(self):
        return len(self.masks)


@dataclass(frozen=True)
class ResNetWeights:
    """Convolutional network: sampling layer, residual blocks, output layer.

    ``blocks`` holds blocks ``1..n``; the sampling layer is stored apart.
    """

    d: int
    sampling: ConvBlockWeights
    blocks: Tuple[ConvBlockWeights, ...] = field(default_factory=tuple)
    output_w: Optional[np.ndarray] = None
    output_b: Optional[np.ndarray] = None

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if self.sampling.q != 1:
            raise ValueError("sampling layer is a single convolution")
        c_in = self.sampling.masks[0].shape[1]
        c_res = self.sampling.masks[0].shape[0]
        if c_in > c_res:
            raise ValueError(f"need c_in <= c_res, got {c_in} > {c_res}")
        for k, blk in enumerate(blocks, start=1):
            if blk.masks[0].shape[1] != c_res or blk.masks[-1].shape[0] != c_res:
                raise ValueError(f"block {k}: first/last layer must have {c_res} channels")
        for k, blk in enumerate((self.sampling,) + blocks):
            for w in blk.masks:
                if radius(w) + 1 > self.d:
                    raise ValueError(f"block {k}: radius {radius(w)} violates f + 1 <= d = {self.d}")
        if self.output_w is not None:
            ow = as_matrix(self.output_w, "output matrix")
            ob = as_vector(self.output_b if self.output_b is not None else np.zeros(ow.shape[0]), "output bias")
            if ow.shape[1] != c_res or ob.size != ow.shape[0]:
                raise ValueError(f"output layer shapes {ow.shape}/{ob.shape} do not fit c_res={c_res}")
            object.__setattr__(self, "output_w", ow)
            object.__setattr__(self, "output_b", ob)

    @property
    def n(self):
        return len(self.blocks)

    @property
    def c_in(self):
        return self.sampling.masks[0].shape[1]

    @property
    def c_res(self):
        return self.sampling.masks[0].shape[0]

    def spec(self):
        all_blocks = (self.sampling,) + self.blocks
        c = [(self.c_in, self.c_res)] + [tuple([self.c_res] + [w.shape[0] for w in b.masks]) for b in self.blocks]
        f = [tuple(radius(w) for w in b.masks) for b in all_blocks]
        d_out = 0 if self.output_w is None else self.output_w.shape[0]
        dd = self.d * self.d
        return NetworkSpec(n=self.n, q=[b.q for b in all_blocks], c=c, d_res=dd * self.c_res,
                           d_in=dd * self.c_in, d_out=d_out, form="conv", f=f, d=self.d)


def check_unit_cube(x, name="input"):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 1.0:
        raise ValueError(f"{name} must lie in the unit cube [0, 1]")
    return x


def embed_sampling(W_s, b_s, d_in, d_res):
    """Sampling layer ``sigma(W_s x + b_s)`` as a one-layer residual block.

    The block matrix is ``[W_s 0] - I`` so that, on ``[x; 0]``, the shortcut
    cancels and the block reproduces the sampling layer.
    """
    W_s = as_matrix(W_s, "sampling matrix")
    b_s = as_vector(b_s, "sampling bias")
    if W_s.shape != (d_res, d_in) or b_s.size != d_res:
        raise ValueError(f"sampling layer must be {d_res}x{d_in} with bias {d_res}, got {W_s.shape}, {b_s.size}")
    if d_in > d_res:
        raise ValueError("need d_in <= d_res")
    W0 = np.zeros((d_res, d_res))
    W0[:, :d_in] = W_s
    W0 -= np.eye(d_res)
    return ResidualBlockWeights((W0,), (b_s.copy(),))


def pad_input(x, d_res):
    """``[x; 0]`` in ``R^d_res`` (batched along rows)."""
    x = np.asarray(x, dtype=np.float64)
    pad = d_res - x.shape[-1]
    if pad < 0:
        raise ValueError(f"input of length {x.shape[-1]} exceeds d_res={d_res}")
    widths = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
    return np.pad(x, widths)


def _apply_block(bw, X):
    h = X
    for W, b in zip(bw.mats[:-1], bw.biases[:-1]):
        h = np.maximum(h @ W.T + b, 0.0)
    return np.maximum(h @ bw.mats[-1].T + X + bw.biases[-1], 0.0)


def _as_batch(x, width):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"input must have length {width}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input has non-finite entries")
    return X, single


def forward_block(bw, x):
    """One residual block: ``q-1`` ReLU layers, then ReLU(W_q h + x + b_q)."""
    X, single = _as_batch(x, bw.width)
    out = _apply_block(bw, X)
    return out[0] if single else out


def forward_network(w, x, depth):
    """Compose blocks ``0..depth``; ``depth < 0`` returns ``x`` unchanged."""
    if depth > w.n:
        raise ValueError(f"depth {depth} exceeds the {w.n} available blocks")
    X, single = _as_batch(x, w.d_res)
    for k in range(depth + 1):
        X = _apply_block(w.blocks[k], X)
    return X[0] if single else X


def iterate_network(w, x, depths):
    """Yield ``(depth, output)`` for each requested depth in one forward sweep."""
    X, single = _as_batch(x, w.d_res)
    todo = sorted(set(int(t) for t in depths))
    if todo and todo[-1] > w.n:
        raise ValueError(f"depth {todo[-1]} exceeds the {w.n} available blocks")
    k = -1
    for t in todo:
        while k < t:
            k += 1
            X = _apply_block(w.blocks[k], X)
        yield t, (X[0] if single else X).copy()


def apply_output(w, h):
    if w.output_w is None:
        raise ValueError("network has no output layer")
    return np.asarray(h) @ w.output_w.T + w.output_b


def _conv_layer(x, mask, bias):
    return conv_mc_direct(x, mask) + bias[:, None, None]


def forward_resnet_features(rw, x, depth=None):
    """Conv-form pipeline up to the last residual block (before pooling)."""
    x = as_stack(x)
    if x.shape[0] != rw.c_in or x.shape[1] != rw.d:
        raise ValueError(f"input must be ({rw.c_in}, {rw.d}, {rw.d}), got {x.shape}")
    depth = rw.n if depth is None else depth
    h = np.maximum(_conv_layer(x, rw.sampling.masks[0], rw.sampling.biases[0]), 0.0)
    for blk in rw.blocks[:depth]:
        z = h
        for mask, bias in zip(blk.masks[:-1], blk.biases[:-1]):
            z = np.maximum(_conv_layer(z, mask, bias), 0.0)
        h = np.maximum(_conv_layer(z, blk.masks[-1], blk.biases[-1]) + h, 0.0)
    return h


def forward_resnet(rw, x):
    """Sampling conv, residual blocks, global average pooling, affine output."""
    x = check_unit_cube(as_stack(x))
    if rw.output_w is None:
        raise ValueError("network has no output layer")
    h = forward_resnet_features(rw, x)
    pooled = global_average_pool(vec_stack(h), rw.d, rw.c_res)
    return rw.output_w @ pooled + rw.output_b


def pooling_matrix(d, channels):
    """Matrix form of :func:`global_average_pool`."""
    return np.kron(np.eye(channels), np.full((1, d * d), 1.0 / (d * d)))


def lower_to_matrix(rw):
    """Replace every filter by its Toeplitz matrix and every bias scalar by
    ``d^2`` copies; the sampling layer becomes block 0."""
    d = rw.d
    dd = d * d
    W_s = toeplitz_mc(rw.sampling.masks[0], d)
    b_s = np.repeat(rw.sampling.biases[0], dd)
    blocks = [embed_sampling(W_s, b_s, dd * rw.c_in, dd * rw.c_res)]
    for blk in rw.blocks:
        mats = tuple(toeplitz_mc(w, d) for w in blk.masks)
        biases = tuple(np.repeat(b, dd) for b in blk.biases)
        blocks.append(ResidualBlockWeights(mats, biases))
    out_w = out_b = None
    if rw.output_w is not None:
        out_w = rw.output_w @ pooling_matrix(d, rw.c_res)
        out_b = rw.output_b
    return DenseNetWeights(tuple(blocks), out_w, out_b, d_in=dd * rw.c_in)
