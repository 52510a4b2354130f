"""Activation patterns and the affine piece ``N(x) = A x + B`` they select.

A ReLU firing pattern is a boolean mask; the corresponding activation matrix
is ``diag(mask)``. Patterns are read off pointwise from one forward pass, so
regions are never enumerated.
"""
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from resnetlab.model import check_unit_cube
from resnetlab.tensor import as_matrix, as_vector

DEFAULT_MARGIN = 1e-6


def activation_pattern(W, b, x):
    """Mask of units with ``(W x + b)_j > 0``; exact zeros are inactive."""
    z = as_matrix(W) @ as_vector(x) + as_vector(b)
    return z > 0.0


def activation_matrix(mask):
    return np.diag(np.asarray(mask, dtype=np.float64))


@dataclass(frozen=True)
class PatternTrace:
    """Masks ``J^(k)_m`` for blocks ``0..depth`` realised by one input.

    ``margin`` is the smallest ``|pre-activation|`` met along the way; inputs
    closer than that to a switching hyperplane may share the trace only
    by accident.
    """

    masks: Tuple[Tuple[np.ndarray, ...], ...]
    margin: float

    @property
    def depth(self):
        return len(self.masks) - 1

    def __eq__(self, other):
        if not isinstance(other, PatternTrace):
            return NotImplemented
        if len(self.masks) != len(other.masks):
            return False
        return all(len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))
                   for a, b in zip(self.masks, other.masks))

    __hash__ = None

    def to_json(self):
        return {"margin": self.margin,
                "masks": [[m.astype(int).tolist() for m in block] for block in self.masks]}


class AffinePiece(NamedTuple):
    A: np.ndarray
    B: np.ndarray


def trace_forward(w, x, depth):
    """Forward pass recording the firing pattern of every layer.

    The last layer of each block is read from its full pre-activation
    ``W_q h + x + b_q``, shortcut included.
    """
    if depth > w.n:
        raise ValueError(f"depth {depth} exceeds the {w.n} available blocks")
    h = as_vector(x, "input")
    if h.size != w.d_res:
        raise ValueError(f"input must have length {w.d_res}")
    masks = []
    margin = np.inf
    for bw in w.blocks[:depth + 1]:
        block_in = h
        layer = []
        for m, (W, b) in enumerate(zip(bw.mats, bw.biases), start=1):
            z = W @ h + b
            if m == bw.q:
                z = z + block_in
            layer.append(z > 0.0)
            margin = min(margin, float(np.abs(z).min()))
            h = np.maximum(z, 0.0)
        masks.append(tuple(layer))
    return PatternTrace(tuple(masks), margin)


def _masked(mask, W):
    return mask[:, None] * W


def block_factor(bw, masks):
    """``J_q W_q ... J_1 W_1 + J_q`` for one block."""
    P = _masked(masks[0], bw.mats[0])
    for mask, W in zip(masks[1:], bw.mats[1:]):
        P = _masked(mask, W) @ P
    return P + np.diag(masks[-1].astype(np.float64))


def block_offset(bw, masks):
    """``sum_m (J_q W_q ... J_{m+1} W_{m+1}) J_m b_m`` for one block."""
    total = np.zeros(bw.width)
    for m in range(bw.q):
        v = masks[m] * bw.biases[m]
        for mm in range(m + 1, bw.q):
            v = masks[mm] * (bw.mats[mm] @ v)
        total += v
    return total


def accumulate_piece(w, trace, depth):
    """``A_n`` and ``B_n`` of the explicit formula for blocks ``0..depth``.

    ``A = F_n ... F_0`` with ``F_k = prod_m J_m W_m + J_q`` (later blocks on
    the left); ``B = sum_k (F_n ... F_{k+1}) offset_k``.
    """
    if trace.depth < depth:
        raise ValueError(f"trace covers depth {trace.depth}, need {depth}")
    d = w.d_res
    R = np.eye(d)
    B = np.zeros(d)
    for k in range(depth, -1, -1):
        bw, masks = w.blocks[k], trace.masks[k]
        B += R @ block_offset(bw, masks)
        R = R @ block_factor(bw, masks)
    return AffinePiece(R, B)


def explicit_eval(w, x, depth):
    """Evaluate the network through its affine piece at ``x``."""
    x = check_unit_cube(as_vector(x, "input"))
    piece = accumulate_piece(w, trace_forward(w, x, depth), depth)
    return piece.A @ x + piece.B
