"""Partial sums of the convergence series, product bounds and tail tests.

For block ``k`` with layer norms ``a_1..a_q`` and bias norms ``b_1..b_q``:

* weight term  ``prod_m a_m``                       (summed into S1)
* bias term    ``sum_m (prod_{m' > m} a_m') b_m``   (summed into S2)
* product factor ``prod_m a_m + 1``                 (multiplied into productBound)

Bounded S1 and S2 are sufficient for pointwise convergence as blocks are
appended. :func:`cauchy_tail_test` measures the convergence directly on
sampled inputs.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from resnetlab.conv import as_mask
from resnetlab.model import DenseNetWeights, ResNetWeights, iterate_network, lower_to_matrix, pad_input
from resnetlab.tensor import check_p, interpolate, matrix_norm, vector_norm

TOL_CAUCHY = 1e-8
TOL_TAIL = 1e-6
WINDOW = 0.25
SLOPE_MARGIN = 0.25


def filter_norm_bound(w, p):
    """Upper bound on ``||T(w)||_p`` that does not depend on the image size.

    Interpolates between the largest per-input-channel and the largest
    per-output-channel absolute tap sum.
    """
    w = as_mask(w)
    p = check_p(p)
    sums = np.abs(w).sum(axis=(2, 3))  # (c_out, c_in)
    col = float(sums.sum(axis=0).max())
    row = float(sums.sum(axis=1).max())
    return interpolate(col, row, p)


def grid_bias_norm(b, cells, p):
    """p-norm of per-channel bias scalars each repeated over ``cells`` pixels."""
    return vector_norm(np.repeat(np.asarray(b, dtype=np.float64), cells), p)


@dataclass(frozen=True)
class NormSequence:
    """Per-block, per-layer weight and bias norms under one norm index.

    ``alt_first`` replaces the block-0 weight norm when the sampling layer is
    taken as ``[W_s 0]`` instead of the embedded ``[W_s 0] - I``.
    """

    weights: Tuple[Tuple[float, ...], ...]
    biases: Tuple[Tuple[float, ...], ...]
    p: float = 1
    alt_first: Optional[float] = None

    def __post_init__(self):
        ws = tuple(tuple(float(v) for v in row) for row in self.weights)
        bs = tuple(tuple(float(v) for v in row) for row in self.biases)
        if len(ws) != len(bs) or any(len(a) != len(b) or not a for a, b in zip(ws, bs)):
            raise ValueError("weights and biases need the same non-empty per-block layout")
        if any(v < 0 for row in ws + bs for v in row):
            raise ValueError("norms must be nonnegative")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n(self):
        return len(self.weights) - 1

    def weight_terms(self):
        return np.array([math.prod(row) for row in self.weights])

    def bias_terms(self):
        out = np.empty(len(self.weights))
        for k, (ws, bs) in enumerate(zip(self.weights, self.biases)):
            out[k] = sum(math.prod(ws[m + 1:]) * bs[m] for m in range(len(ws)))
        return out

    def with_alt_first(self):
        """Copy using ``alt_first`` as the block-0 weight norm."""
        if self.alt_first is None:
            return self
        ws = ((self.alt_first,),) + self.weights[1:]
        return NormSequence(ws, self.biases, self.p)


def _check_depth(ns, depth):
    if depth < 0 or depth > ns.n:
        raise ValueError(f"depth {depth} outside 0..{ns.n}")


def partial_sum_weights(ns, depth):
    _check_depth(ns, depth)
    return float(ns.weight_terms()[:depth + 1].sum())


def partial_sum_biases(ns, depth):
    _check_depth(ns, depth)
    return float(ns.bias_terms()[:depth + 1].sum())


def product_bound(ns, start, stop):
    """``prod_{k=start}^{stop} (prod_m ||W^(k)_m|| + 1)``."""
    if start > stop:
        raise ValueError("need start <= stop")
    _check_depth(ns, start)
    _check_depth(ns, stop)
    return float(np.prod(ns.weight_terms()[start:stop + 1] + 1.0))


def tail_bound(ns, start, stop, input_norm):
    """Bound on ``||N_stop(x) - N_start(x)||_p`` for ``||x||_p <= input_norm``.

    Each block moves its nonnegative input by at most
    ``weight_term * ||input|| + bias_term`` and every state is bounded by
    ``productBound * (||x|| + S2)``.
    """
    a = ns.weight_terms()
    b = ns.bias_terms()
    lo = start + 1
    state = float(np.prod(a[:stop + 1] + 1.0)) * (input_norm + b[:stop + 1].sum())
    return float(a[lo:stop + 1].sum() * state + b[lo:stop + 1].sum())


def norm_sequence(weights, p=1):
    """Exact norms (p in {1, inf}) or interpolation bounds for every layer.

    Matrix-form weights use induced norms of the stored matrices. Conv-form
    weights use :func:`filter_norm_bound` per filter and the norm of each
    bias as replicated over the ``d x d`` grid; block 0 uses the embedded
    ``[T(w_s) 0] - I``.
    """
    p = check_p(p)
    if isinstance(weights, DenseNetWeights):
        ws = [[matrix_norm(W, p) for W in bw.mats] for bw in weights.blocks]
        bs = [[vector_norm(b, p) for b in bw.biases] for bw in weights.blocks]
        W0 = weights.blocks[0].mats[0]
        alt = matrix_norm(W0 + np.eye(*W0.shape), p)
        return NormSequence(ws, bs, p, alt)
    if isinstance(weights, ResNetWeights):
        block0 = lower_to_matrix(ResNetWeights(weights.d, weights.sampling)).blocks[0]
        ws = [[matrix_norm(block0.mats[0], p)]]
        dd = weights.d * weights.d
        bs = [[grid_bias_norm(weights.sampling.biases[0], dd, p)]]
        for blk in weights.blocks:
            ws.append([filter_norm_bound(w, p) for w in blk.masks])
            bs.append([grid_bias_norm(b, dd, p) for b in blk.biases])
        alt = filter_norm_bound(weights.sampling.masks[0], p)
        return NormSequence(ws, bs, p, alt)
    raise TypeError(f"unsupported weights type {type(weights).__name__}")


def cauchy_tail_test(w, samples, depths, seed=0, input_dim=None):
    """Largest sup-norm change of the network output between tested depths.

    Draws ``samples`` uniform points of ``[0,1]^input_dim`` (zero-padded to
    ``d_res``). Entry ``j`` compares depth ``depths[j]`` with
    ``depths[j-1]``; the first entry compares with depth ``depths[0] - 1``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    depths = [int(t) for t in depths]
    if not depths or any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be a non-empty increasing sequence")
    input_dim = w.d_res if input_dim is None else input_dim
    rng = np.random.Generator(np.random.PCG64(seed))
    X = pad_input(rng.uniform(0.0, 1.0, size=(samples, input_dim)), w.d_res)
    wanted = [depths[0] - 1] + depths
    tails = np.empty(len(depths))
    with np.errstate(invalid="ignore", over="ignore"):
        states = dict(iterate_network(w, X, [t for t in wanted if t >= 0]))
        states[-1] = X
        for j, t in enumerate(depths):
            diff = np.abs(states[t] - states[wanted[j]])
            tails[j] = float(diff.max()) if np.all(np.isfinite(diff)) else math.inf
    return tails


def classify(depths, increments, tol, window=WINDOW, margin=SLOPE_MARGIN):
    """Label the trailing behaviour of a nonnegative increment sequence.

    Returns ``(label, slope)`` where label is ``flat`` (all increments in the
    window at most ``tol``), ``summable`` (log-log decay slope below
    ``-1 - margin``), ``growing`` (slope above ``-1 + margin``, so the
    partial sums grow faster than logarithmically) or ``unclear``.
    """
    depths = np.asarray(depths, dtype=float)
    inc = np.asarray(increments, dtype=float)
    k = max(3, int(math.ceil(window * len(depths))))
    if len(depths) < 3:
        return "unclear", math.nan
    d, v = depths[-k:], inc[-k:]
    if not np.all(np.isfinite(v)):
        return "growing", math.nan
    if v.max() <= tol:
        return "flat", math.nan
    pos = v > 0
    if pos.sum() < 3:
        return "unclear", math.nan
    slope = float(np.polyfit(np.log(d[pos] + 1.0), np.log(v[pos]), 1)[0])
    if slope < -1.0 - margin:
        return "summable", slope
    if slope > -1.0 + margin:
        return "growing", slope
    return "unclear", slope


def _increments(terms, depths):
    """Average per-block increase of ``cumsum(terms)`` between tested depths."""
    cum = np.concatenate([[0.0], np.cumsum(terms)])
    prev = np.concatenate([[depths[0] - 1], depths[:-1]])
    return (cum[depths + 1] - cum[prev + 1]) / (depths - prev)


@dataclass
class DiagnosticsReport:
    depths: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    product_bound: np.ndarray
    tail: np.ndarray
    verdict: str
    p: float
    S1_alt: np.ndarray = None
    product_bound_alt: np.ndarray = None
    classes: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    CSV_COLUMNS = ("depth", "S1", "S2", "productBound", "tail")

    def rows(self):
        for row in zip(self.depths, self.S1, self.S2, self.product_bound, self.tail):
            yield (int(row[0]),) + tuple(float(v) for v in row[1:])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])
        return buf.getvalue()

    def to_json(self):
        def lst(a):
            return None if a is None else [float(v) if math.isfinite(v) else str(v) for v in a]

        return {
            "verdict": self.verdict,
            "p": self.p if math.isfinite(self.p) else "inf",
            "depths": [int(t) for t in self.depths],
            "S1": lst(self.S1),
            "S2": lst(self.S2),
            "productBound": lst(self.product_bound),
            "tail": lst(self.tail),
            "S1_alt": lst(self.S1_alt),
            "productBound_alt": lst(self.product_bound_alt),
            "classes": {k: {"label": lab, "slope": None if math.isnan(s) else s}
                        for k, (lab, s) in self.classes.items()},
            "settings": self.settings,
        }


def _verdict(classes):
    s1, s2, tail = classes["S1"][0], classes["S2"][0], classes["tail"][0]
    if s1 == "growing" or s2 == "growing":
        return "diverged"
    ok = ("flat", "summable")
    if s1 in ok and s2 in ok and tail in ok:
        return "converged"
    return "inconclusive"


def diagnose(weights, p=1, depths=None, samples=64, seed=0,
             tol_cauchy=TOL_CAUCHY, tol_tail=TOL_TAIL):
    """Assemble partial sums, product bounds and tails; issue a verdict.

    The verdict looks at the last quarter of the tested depths: S1, S2 and
    the tails must each be flat (below their tolerance) or decay faster than
    ``1/n`` for ``converged``; S1 or S2 growing faster than ``log n`` gives
    ``diverged``.
    """
    p = check_p(p)
    ns = norm_sequence(weights, p)
    if isinstance(weights, ResNetWeights):
        dense = lower_to_matrix(weights)
        input_dim = dense.d_in
    else:
        dense = weights
        input_dim = None
    depths = np.arange(ns.n + 1) if depths is None else np.asarray(sorted(set(int(t) for t in depths)))
    if depths.size == 0 or depths[0] < 0 or depths[-1] > ns.n:
        raise ValueError(f"depths must lie in 0..{ns.n}")
    a, b = ns.weight_terms(), ns.bias_terms()
    S1 = np.cumsum(a)[depths]
    S2 = np.cumsum(b)[depths]
    PB = np.cumprod(a + 1.0)[depths]
    alt = ns.with_alt_first()
    a_alt = alt.weight_terms()
    S1_alt = np.cumsum(a_alt)[depths]
    PB_alt = np.cumprod(a_alt + 1.0)[depths]
    tail = cauchy_tail_test(dense, samples, depths, seed, input_dim)
    steps = np.diff(np.concatenate([[depths[0] - 1], depths])).astype(float)
    classes = {
        "S1": classify(depths, _increments(a, depths), tol_cauchy),
        "S2": classify(depths, _increments(b, depths), tol_cauchy),
        "tail": classify(depths, tail / steps, tol_tail),
    }
    settings = {"samples": samples, "seed": seed, "tolerance_cauchy": tol_cauchy,
                "tolerance_tail": tol_tail, "window": WINDOW, "slope_margin": SLOPE_MARGIN}
    return DiagnosticsReport(depths, S1, S2, PB, tail, _verdict(classes), p,
                             S1_alt, PB_alt, classes, settings)
