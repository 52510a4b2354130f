"""Inner loops for zero-padded convolution and Toeplitz assembly.

Each kernel exists twice: a loop version compiled by numba and a
vectorised numpy version. ``conv1d``, ``conv2d`` and ``toeplitz_fill``
dispatch on :data:`resnetlab._accel.ENABLED`; both variants stay importable
so they can be compared against each other.
"""
import numpy as np

from resnetlab import _accel
from resnetlab._accel import njit


@njit
def conv1d_loop(x, w):
    d = x.shape[0]
    f = (w.shape[0] - 1) // 2
    y = np.zeros(d)
    for i in range(d):
        acc = 0.0
        for j in range(max(-i, -f), min(d - 1 - i, f) + 1):
            acc += x[i + j] * w[f - j]
        y[i] = acc
    return y


@njit
def conv2d_loop(x, w):
    d = x.shape[0]
    f = (w.shape[0] - 1) // 2
    y = np.zeros((d, d))
    for i in range(d):
        lo1 = max(-i, -f)
        hi1 = min(d - 1 - i, f)
        for j in range(d):
            lo2 = max(-j, -f)
            hi2 = min(d - 1 - j, f)
            acc = 0.0
            for k1 in range(lo1, hi1 + 1):
                for k2 in range(lo2, hi2 + 1):
                    acc += x[i + k1, j + k2] * w[f - k1, f - k2]
            y[i, j] = acc
    return y


@njit
def toeplitz_fill_loop(w, d):
    c_out, c_in, k, _ = w.shape
    f = (k - 1) // 2
    dd = d * d
    out = np.zeros((dd * c_out, dd * c_in))
    for i in range(c_out):
        for j in range(c_in):
            for bi in range(d):
                for bj in range(max(0, bi - f), min(d, bi + f + 1)):
                    row = f - bj + bi
                    for r in range(d):
                        for c in range(max(0, r - f), min(d, r + f + 1)):
                            out[i * dd + bi * d + r, j * dd + bj * d + c] = w[i, j, row, f - c + r]
    return out


def conv1d_numpy(x, w):
    d = x.shape[0]
    f = (w.shape[0] - 1) // 2
    xp = np.pad(x, f)
    y = np.zeros(d)
    for j in range(-f, f + 1):
        y += w[f - j] * xp[f + j:f + j + d]
    return y


def conv2d_numpy(x, w):
    d = x.shape[0]
    f = (w.shape[0] - 1) // 2
    xp = np.pad(x, f)
    y = np.zeros((d, d))
    for k1 in range(-f, f + 1):
        for k2 in range(-f, f + 1):
            y += w[f - k1, f - k2] * xp[f + k1:f + k1 + d, f + k2:f + k2 + d]
    return y


def toeplitz_fill_numpy(w, d):
    c_out, c_in, k, _ = w.shape
    f = (k - 1) // 2
    dd = d * d
    # every (bi, r) -> (bj, c) pair within the band, as flat index arrays
    offs = np.arange(-f, f + 1)
    base = np.arange(d)
    src = base[:, None] + offs[None, :]
    ok = (src >= 0) & (src < d)
    rr, _ = np.nonzero(ok)
    cc = src[ok]
    # (rr, cc) enumerates the band of a d x d Toeplitz block; the same band
    # pattern repeats at block level, so take its outer product
    tap = f - (cc - rr)
    blk_r = np.repeat(rr, len(rr))
    blk_c = np.repeat(cc, len(rr))
    blk_t = np.repeat(tap, len(rr))
    in_r = np.tile(rr, len(rr))
    in_c = np.tile(cc, len(rr))
    in_t = np.tile(tap, len(rr))
    rows = blk_r * d + in_r
    cols = blk_c * d + in_c
    out = np.zeros((c_out, dd, c_in, dd))
    out[:, rows, :, cols] = w[:, :, blk_t, in_t].transpose(2, 0, 1)
    return out.reshape(dd * c_out, dd * c_in)


if _accel.ENABLED:
    conv1d = conv1d_loop
    conv2d = conv2d_loop
    toeplitz_fill = toeplitz_fill_loop
else:
    conv1d = conv1d_numpy
    conv2d = conv2d_numpy
    toeplitz_fill = toeplitz_fill_numpy
