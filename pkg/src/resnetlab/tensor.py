"""Dense vector/matrix primitives: vec, ReLU, pooling and induced norms.

Vectors are 1-D float64 arrays, matrices are 2-D row-major float64 arrays
and image stacks are ``(channels, d, d)`` arrays.
"""
import math

import numpy as np


def as_vector(v, name="vector"):
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_stack(x, name="image stack"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[1] < 1 or a.shape[0] < 1:
        raise ValueError(f"{name} must have shape (channels, d, d), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def vec(m):
    """Stack the columns of ``m`` top to bottom."""
    return as_matrix(m).ravel(order="F")


def vec_stack(x):
    """Multi-channel vec: ``vec(x_j^T)`` for each channel, channel 1 first.

    ``vec(x_j^T)`` is the row-major flattening of channel ``j``.
    """
    return as_stack(x).reshape(-1).copy()


def unvec_stack(v, d, channels):
    """Inverse of :func:`vec_stack`."""
    v = as_vector(v)
    if v.size != d * d * channels:
        raise ValueError(f"length {v.size} does not match d={d}, channels={channels}")
    return v.reshape(channels, d, d).copy()


def relu(v):
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def norm_induced(m, p):
    """Exact induced matrix norm for ``p`` in {1, inf}.

    p=1 is the largest absolute column sum, p=inf the largest absolute row
    sum. Other ``p`` have no cheap closed form; use :func:`norm_p_bound`.
    """
    m = as_matrix(m)
    if p == 1:
        axis = 0
    elif p == math.inf:
        axis = 1
    else:
        raise ValueError(f"exact induced norm only for p in {{1, inf}}, got {p!r}")
    if m.size == 0:
        return 0.0
    return float(np.abs(m).sum(axis=axis).max())


def norm_p_bound(m, p):
    """Riesz-Thorin upper bound ``||m||_1^(1/p) * ||m||_inf^(1 - 1/p)``."""
    p = check_p(p)
    n1 = norm_induced(m, 1)
    ninf = norm_induced(m, math.inf)
    return interpolate(n1, ninf, p)


def interpolate(n1, ninf, p):
    if p == 1:
        return float(n1)
    if p == math.inf:
        return float(ninf)
    t = 1.0 / p
    return float(n1 ** t * ninf ** (1.0 - t))


def matrix_norm(m, p):
    """Exact norm where available (p in {1, inf}), interpolation bound otherwise."""
    p = check_p(p)
    if p in (1, math.inf):
        return norm_induced(m, p)
    return norm_p_bound(m, p)


def vector_norm(v, p):
    p = check_p(p)
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v, ord=p))


def check_p(p):
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"norm index must satisfy p >= 1, got {p!r}")
    if p == 1:
        return 1
    return p


def global_average_pool(v, d, channels):
    """Per-channel mean of a vec_stack'ed image stack."""
    v = as_vector(v)
    if v.size != d * d * channels:
        raise ValueError(f"length {v.size} does not match d={d}, channels={channels}")
    return v.reshape(channels, d * d).mean(axis=1)
