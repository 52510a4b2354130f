"""Zero-padded, stride-1 convolution and its Toeplitz matrices.

Filter layouts (numpy arrays, 0-based):

* 1-D mask: ``(2f+1,)`` taps ``w_0 .. w_2f``
* 2-D mask: ``(2f+1, 2f+1)``
* multi-channel mask: ``(c_out, c_in, 2f+1, 2f+1)``

The ``*_direct`` functions evaluate the convolution sums as written and are
the oracles for the matrix routes.
"""
import numpy as np

from resnetlab import kernels
from resnetlab.tensor import as_stack, as_vector


def radius(w):
    k = np.asarray(w).shape[-1]
    if k % 2 != 1:
        raise ValueError(f"filter side must be odd (2f+1), got {k}")
    return (k - 1) // 2


def as_mask1d(w):
    w = as_vector(w, "filter mask")
    radius(w)
    return w


def as_mask2d(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"2-D filter mask must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("filter mask has non-finite entries")
    radius(w)
    return w


def as_mask(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"multi-channel filter mask must be (c_out, c_in, k, k), got {w.shape}")
    if min(w.shape[:2]) < 1:
        raise ValueError(f"filter mask needs at least one channel, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("filter mask has non-finite entries")
    radius(w)
    return w


def _check_radius(f, d):
    if f + 1 > d:
        raise ValueError(f"filter radius f={f} needs f + 1 <= d, got d={d}")


def conv1d_direct(x, w):
    x = as_vector(x)
    w = as_mask1d(w)
    if x.size < 1:
        raise ValueError("empty input")
    return kernels.conv1d(x, w)


def toeplitz_1d(w, d):
    """``d x d`` matrix with ``T[i, j] = w[f - j + i]`` inside the band."""
    w = as_mask1d(w)
    f = radius(w)
    _check_radius(f, d)
    i, j = np.indices((d, d))
    k = f - j + i
    band = np.abs(j - i) <= f
    out = np.zeros((d, d))
    out[band] = w[k[band]]
    return out


def conv2d_direct(x, w):
    x = as_stack(x, "input")
    if x.shape[0] != 1:
        raise ValueError("conv2d_direct takes a single d x d grid")
    return kernels.conv2d(np.ascontiguousarray(x[0]), as_mask2d(w))


def toeplitz_2d(w, d):
    """Block-Toeplitz ``d^2 x d^2`` matrix with ``vec(y^T) = T vec(x^T)``."""
    w = as_mask2d(w)
    _check_radius(radius(w), d)
    return kernels.toeplitz_fill(np.ascontiguousarray(w[None, None]), d)


def conv_mc_direct(x, w):
    """Channel ``i`` of the output is ``sum_j conv2d(x_j, w[i, j])``."""
    x = as_stack(x, "input")
    w = as_mask(w)
    c_out, c_in = w.shape[:2]
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, filter expects {c_in}")
    d = x.shape[1]
    y = np.zeros((c_out, d, d))
    for j in range(c_in):
        xj = np.ascontiguousarray(x[j])
        for i in range(c_out):
            y[i] += kernels.conv2d(xj, np.ascontiguousarray(w[i, j]))
    return y


def toeplitz_mc(w, d):
    """``(d^2 c_out) x (d^2 c_in)`` block matrix of blocks ``T(w[i, j])``."""
    w = as_mask(w)
    _check_radius(radius(w), d)
    return kernels.toeplitz_fill(np.ascontiguousarray(w), d)
