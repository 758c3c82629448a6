"""Input validation helpers shared by the public entry points."""

import numbers

import numpy as np


class ParameterError(ValueError):
    """Raised when a numeric parameter is outside its admissible range."""


def check_matrix(m, name="matrix", dtype=None):
    """Return ``m`` as a finite 2-D ndarray or raise ``ValueError``."""
    a = np.asarray(m) if dtype is None else np.asarray(m, dtype=dtype)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_vector(v, n=None, name="vector", allow_batch=False):
    """Return ``v`` as a finite complex array of length ``n``.

    With ``allow_batch`` a 2-D array of column vectors is accepted as well.
    """
    a = np.asarray(v)
    if a.ndim == 2 and not allow_batch:
        raise ValueError(f"{name} must be 1-D")
    if a.ndim not in (1, 2):
        raise ValueError(f"{name} must be 1-D" + (" or 2-D" if allow_batch else ""))
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} has length {a.shape[0]}, expected {n}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_index_set(idx, n, name="indices"):
    """Sorted, distinct, in-range integer index array (0-based)."""
    a = np.asarray(idx, dtype=np.int64).ravel()
    if a.size and (a.min() < 0 or a.max() >= n):
        raise ParameterError(f"{name} out of range [0, {n})")
    if a.size > 1 and np.any(np.diff(a) <= 0):
        raise ParameterError(f"{name} must be sorted and distinct")
    return a


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    return np.random.default_rng(np.random.PCG64(int(seed)))


def probe_random_state(seed, stream=1):
    """Generator independent of ``check_random_state(seed)`` (jumped PCG64)."""
    if seed is None:
        seed = 0
    return np.random.Generator(np.random.PCG64(int(seed)).jumped(stream))
