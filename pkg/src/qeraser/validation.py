"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import BinningError, DomainError, OrderingError


def check_finite(value, name="value"):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return arr


def check_positive(value, name="value", strict=True):
    value = float(value)
    if not np.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    if strict and value <= 0:
        raise DomainError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return value


def check_probability(value, name="value"):
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_in_scan(x, halfwidth, name="x"):
    """Return ``x`` as a float array after checking ``|x| <= halfwidth``."""
    arr = check_finite(x, name)
    if np.any(np.abs(arr) > halfwidth):
        raise DomainError(
            f"{name} outside the scan range [-{halfwidth!r}, {halfwidth!r}]"
        )
    return arr


def check_time_ordered(t, name="stream", strict=False):
    """Raise :class:`OrderingError` unless ``t`` is sorted ascending."""
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        return t
    steps = np.diff(t)
    bad = steps <= 0 if strict else steps < 0
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OrderingError(
            f"{name} is not time-ordered at index {i + 1}: "
            f"{t[i]!r} then {t[i + 1]!r}"
        )
    return t


def check_bin_edges(edges):
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise BinningError("bin edges need at least two values")
    if not np.all(np.isfinite(edges)):
        raise BinningError("bin edges must be finite")
    if np.any(np.diff(edges) <= 0):
        raise BinningError("bin edges must be strictly increasing")
    return edges
