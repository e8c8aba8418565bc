"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError


def check_points(xi, name="xi") -> np.ndarray:
    """Return ``xi`` as a finite float array of shape ``(n, 3)``.

    A single point of shape ``(3,)`` is promoted to ``(1, 3)``.
    """
    arr = np.asarray(xi, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_delta(delta, name="delta") -> float:
    """``delta`` as a float in ``(0, 1)``."""
    try:
        d = float(delta)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} must be a number") from exc
    if not 0 < d < 1:
        raise DomainError(f"{name} must lie in (0, 1), got {d}")
    return d


def is_dyadic(x) -> bool:
    """Whether ``x`` is an exact power of two."""
    m, _ = np.frexp(float(x))
    return float(x) > 0 and m == 0.5


def check_exponent(p, lo=2.0, hi=6.0, name="p") -> float:
    p = float(p)
    if not lo <= p <= hi:
        raise DomainError(f"{name} must lie in [{lo}, {hi}], got {p}")
    return p


def check_positive_pairs(points) -> np.ndarray:
    """``(n, 2)`` array of positive ``(scale, value)`` pairs, ``n >= 3``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected (scale, value) pairs")
    if len(arr) < 3:
        raise ValueError("need at least three points")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("scales and values must be finite and positive")
    return arr
