"""Numerics on finite probability vectors.

The central routine is :func:`project_min_excess`, which finds the
distribution inside a total-variation ball that carries the least probability
mass above a per-outcome budget.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError

NORMALIZATION_TOL = 1e-9

ArrayLike = Union["Categorical", Sequence[float], np.ndarray]


class Categorical:
    """A validated probability vector over ``{0, ..., m-1}``.

    The array is stored read-only; arithmetic never renormalizes unless
    :meth:`normalized` is called explicitly.
    """

    __slots__ = ("probs",)

    def __init__(self, probs, *, tol: float = NORMALIZATION_TOL):
        arr = np.array(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("a categorical needs a non-empty 1-d probability vector")
        if not np.all(np.isfinite(arr)):
            raise DomainError("probabilities must be finite")
        if np.any(arr < 0):
            raise DomainError(f"negative probability {arr.min()!r}")
        total = arr.sum()
        if abs(total - 1.0) > tol:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        arr.flags.writeable = False
        self.probs = arr

    @classmethod
    def uniform(cls, m: int) -> "Categorical":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def point_mass(cls, m: int, x: int) -> "Categorical":
        arr = np.zeros(m)
        arr[x] = 1.0
        return cls(arr)

    def normalized(self) -> "Categorical":
        return Categorical(self.probs / self.probs.sum())

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i):
        return self.probs[i]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Categorical):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"Categorical({np.array2string(self.probs, precision=4, separator=', ')})"


def as_categorical(p: ArrayLike) -> Categorical:
    return p if isinstance(p, Categorical) else Categorical(p)


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or np.isnan(value):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def plus_part_excess(p: ArrayLike, thresh: float) -> float:
    """Total mass above ``thresh``: ``sum(max(p(x) - thresh, 0))``."""
    _check_unit("thresh", thresh)
    probs = as_categorical(p).probs
    return float(np.maximum(probs - thresh, 0.0).sum())


def tv_distance(p: ArrayLike, q: ArrayLike) -> float:
    a, b = as_categorical(p).probs, as_categorical(q).probs
    if a.size != b.size:
        raise DomainError(f"alphabet sizes differ: {a.size} vs {b.size}")
    return float(0.5 * np.abs(a - b).sum())


@dataclass(frozen=True)
class ProjectionResult:
    projected: Categorical
    objective: float
    mass_moved: float


def excess_closed_form(q: ArrayLike, alpha: float, eps: float) -> float:
    """Minimum of ``sum((P - alpha)_+)`` over the TV ball of radius ``eps``.

    Equals ``max((S - eps)_+, (1 - m*alpha)_+)`` with ``S`` the excess of ``q``.
    When the deficit below ``alpha`` is at least ``eps`` this is ``(S - eps)_+``.
    """
    probs = as_categorical(q).probs
    _check_unit("alpha", alpha)
    if eps < 0:
        raise DomainError("eps must be non-negative")
    excess = float(np.maximum(probs - alpha, 0.0).sum())
    return max(max(excess - eps, 0.0), max(1.0 - probs.size * alpha, 0.0))


def project_min_excess(q: ArrayLike, alpha: float, eps: float) -> ProjectionResult:
    """Greedy transport of up to ``eps`` mass from above ``alpha`` to below it.

    Donors are drained in decreasing order of excess, receivers are filled in
    increasing index order, so the output is deterministic.  If the deficit
    below ``alpha`` is smaller than ``eps`` the receivers are filled exactly to
    ``alpha`` and the remaining budget is left unused.
    """
    _check_unit("alpha", alpha)
    if not eps >= 0:
        raise DomainError(f"eps must be non-negative, got {eps!r}")
    src = as_categorical(q)
    probs = src.probs.copy()

    excess = np.maximum(probs - alpha, 0.0)
    deficit = np.maximum(alpha - probs, 0.0)
    budget = min(eps, float(excess.sum()), float(deficit.sum()))

    if budget > 0:
        remaining = budget
        # stable sort keeps the lowest index first among equal excesses
        for x in np.argsort(-excess, kind="stable"):
            if remaining <= 0 or excess[x] <= 0:
                break
            take = min(excess[x], remaining)
            probs[x] -= take
            remaining -= take
        remaining = budget
        for x in range(probs.size):
            if remaining <= 0:
                break
            if deficit[x] <= 0:
                continue
            give = min(deficit[x], remaining)
            probs[x] += give
            remaining -= give

    projected = Categorical(probs)
    objective = float(np.maximum(projected.probs - alpha, 0.0).sum())
    return ProjectionResult(projected=projected, objective=objective, mass_moved=budget)


def aggregate(p: ArrayLike, labels: Sequence[int], num_classes: int | None = None) -> np.ndarray:
    """Sum the entries of ``p`` that share a class label."""
    probs = as_categorical(p).probs
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != probs.shape:
        raise DomainError("one class label per outcome is required")
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    return np.bincount(labels, weights=probs, minlength=k)
