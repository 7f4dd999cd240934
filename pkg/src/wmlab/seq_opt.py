"""Exact small-instance schemes, detectors and error evaluation.

Outcomes are a flattened alphabet (a sequence alphabet ``V^T`` is just a
larger ``V``).  A detector is a boolean matrix ``accept[x, zeta]`` and a
scheme is a joint matrix ``P[x, zeta]``.  For a fixed detector the least
achievable Type-II error under the worst-case Type-I constraint is a small
linear program; sweeping every detector gives the universal minimum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .dist import ArrayLike, Categorical, as_categorical, excess_closed_form, project_min_excess
from .errors import CapacityError, DomainError

MAX_LP_VARIABLES = 64
MAX_SWEEP_LPS = 20000
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class Detector:
    accept: np.ndarray

    def __post_init__(self):
        arr = np.array(self.accept, dtype=bool)
        if arr.ndim != 2:
            raise DomainError("acceptance matrix must be 2-d (outcomes x symbols)")
        arr.flags.writeable = False
        object.__setattr__(self, "accept", arr)

    @property
    def shape(self):
        return self.accept.shape

    @classmethod
    def from_g(cls, g: Sequence[int], num_outcomes: int) -> "Detector":
        """``1{x = g(zeta)}``; entries of ``g`` equal to -1 mark redundant symbols."""
        g = np.asarray(g, dtype=np.int64)
        acc = np.zeros((num_outcomes, g.size), dtype=bool)
        for z, x in enumerate(g):
            if x >= 0:
                acc[x, z] = True
        return cls(acc)

    @classmethod
    def merged(cls, merge: Sequence[int], num_groups: Optional[int] = None, redundant: int = 1) -> "Detector":
        """``1{f(x) = zeta}``: one symbol per group plus ``redundant`` unused ones."""
        merge = np.asarray(merge, dtype=np.int64)
        k = int(merge.max()) + 1 if num_groups is None else num_groups
        acc = np.zeros((merge.size, k + redundant), dtype=bool)
        acc[np.arange(merge.size), merge] = True
        return cls(acc)

    @classmethod
    def nothing(cls, num_outcomes: int, num_symbols: int) -> "Detector":
        return cls(np.zeros((num_outcomes, num_symbols), dtype=bool))

    @classmethod
    def everything(cls, num_outcomes: int, num_symbols: int) -> "Detector":
        return cls(np.ones((num_outcomes, num_symbols), dtype=bool))


def is_gamma_star(det: Detector) -> bool:
    """True when the detector reads ``1{x = g(zeta)}`` for a surjective ``g``.

    Columns accept at most one outcome (empty columns are redundant symbols)
    and every outcome is accepted by some column.
    """
    acc = det.accept
    return bool((acc.sum(axis=0) <= 1).all() and (acc.sum(axis=1) >= 1).all())


@dataclass(frozen=True)
class JointScheme:
    joint: np.ndarray

    def __post_init__(self):
        arr = np.array(self.joint, dtype=np.float64)
        if arr.ndim != 2 or (arr < -1e-15).any():
            raise DomainError("joint must be a non-negative 2-d matrix")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise DomainError(f"joint mass is {arr.sum()!r}, not 1")
        arr = np.maximum(arr, 0.0)
        arr.flags.writeable = False
        object.__setattr__(self, "joint", arr)

    @property
    def marginal_x(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def marginal_aux(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def _check_g(g: Sequence[int], m: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.int64)
    if g.ndim != 1 or ((g < -1) | (g >= m)).any():
        raise DomainError("g must map symbols to outcome ids or -1")
    if not np.isin(np.arange(m), g).all():
        raise DomainError("g must be surjective onto the outcomes")
    return g


def build_optimal_scheme(q: ArrayLike, alpha: float, eps: float, g: Sequence[int]) -> JointScheme:
    """Joint law meeting the Type-I budget with least Type-II error.

    Each outcome keeps ``min(P*(x), alpha)`` on its own symbols (split evenly
    among the preimages under ``g``) and sends the overflow to the redundant
    symbols (``g == -1``), where ``P*`` is the TV-ball projection of ``q``.
    """
    probs = as_categorical(q).probs
    m = probs.size
    g = _check_g(g, m)
    target = project_min_excess(probs, alpha, eps).projected.probs
    accepted = np.minimum(target, alpha)
    overflow = np.maximum(target - alpha, 0.0)
    redundant = np.flatnonzero(g < 0)
    if overflow.sum() > 0 and redundant.size == 0:
        raise DomainError("mass above alpha needs at least one redundant symbol")
    joint = np.zeros((m, g.size))
    for x in range(m):
        pre = np.flatnonzero(g == x)
        joint[x, pre] = accepted[x] / pre.size
        if redundant.size:
            joint[x, redundant] = overflow[x] / redundant.size
    return JointScheme(joint)


def _check_pair(scheme: JointScheme, det: Detector):
    if scheme.joint.shape != det.shape:
        raise DomainError(f"scheme shape {scheme.joint.shape} does not match detector {det.shape}")


def exact_type1_worst(scheme: JointScheme, det: Detector) -> float:
    """Worst case over text laws independent of the symbols; point masses suffice."""
    _check_pair(scheme, det)
    return float((det.accept * scheme.marginal_aux[None, :]).sum(axis=1).max())


def exact_type2(scheme: JointScheme, det: Detector) -> float:
    _check_pair(scheme, det)
    return float(1.0 - (scheme.joint * det.accept).sum())


@dataclass(frozen=True)
class LPResult:
    value: float
    feasible: bool
    joint: Optional[np.ndarray] = None


def lp_min_type2(det: Detector, q: ArrayLike, alpha: float, eps: float) -> LPResult:
    """Least Type-II error over joint laws for a fixed detector.

    Variables are ``P[x, zeta]`` and slacks ``t[x] >= |P_X(x) - q(x)|`` with
    ``sum(t) <= 2 eps``; the worst-case Type-I error must stay within alpha.
    """
    probs = as_categorical(q).probs
    acc = det.accept.astype(np.float64)
    m, z = acc.shape
    if probs.size != m:
        raise DomainError("detector rows do not match the distribution")
    if m * z > MAX_LP_VARIABLES:
        raise CapacityError(f"{m}x{z} detector exceeds {MAX_LP_VARIABLES} LP variables")
    if not 0 <= alpha <= 1 or not eps >= 0:
        raise DomainError("need 0 <= alpha <= 1 and eps >= 0")
    nv = m * z + m
    c = np.concatenate([-acc.ravel(), np.zeros(m)])

    rows, rhs = [], []
    row_sum = np.zeros((m, nv))
    for x in range(m):
        row_sum[x, x * z:(x + 1) * z] = 1.0
    slack = np.zeros((m, nv))
    slack[:, m * z:] = -np.eye(m)
    rows.append(row_sum + slack)
    rhs.append(probs)
    rows.append(-row_sum + slack)
    rhs.append(-probs)
    budget = np.zeros((1, nv))
    budget[0, m * z:] = 1.0
    rows.append(budget)
    rhs.append([2.0 * eps])
    # worst-case Type-I for the point mass at x: sum_zeta accept[x, zeta] * P_zeta(zeta)
    col_sum = np.zeros((z, nv))
    for zeta in range(z):
        col_sum[zeta, zeta:m * z:z] = 1.0
    rows.append(acc @ col_sum)
    rhs.append(np.full(m, alpha))

    a_eq = np.zeros((1, nv))
    a_eq[0, :m * z] = 1.0
    res = linprog(c, A_ub=np.vstack(rows), b_ub=np.concatenate([np.ravel(r) for r in rhs]),
                  A_eq=a_eq, b_eq=[1.0], bounds=(0, None), method="highs", options=_LP_OPTIONS)
    if res.status == 2:
        return LPResult(1.0, False, None)
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    value = min(1.0, max(0.0, 1.0 + float(res.fun)))
    return LPResult(value, True, res.x[:m * z].reshape(m, z))


def _column_types(m: int) -> List[tuple]:
    return [tuple(bits) for bits in itertools.product((0, 1), repeat=m)]


def _pad(columns: Sequence[tuple], aux_size: int) -> np.ndarray:
    cols = list(columns)
    filler = next((c for c in cols if any(c)), cols[0])
    cols += [filler] * (aux_size - len(cols))
    return np.array(cols, dtype=bool).T


@dataclass(frozen=True)
class SweepResult:
    value: float
    closed_form: float
    detector: Detector
    gamma_star_found: bool
    num_lps: int


def universal_min_type2(q: ArrayLike, alpha: float, eps: float, aux_size: int,
                        max_lps: int = MAX_SWEEP_LPS) -> SweepResult:
    """Least Type-II error over every detector with ``aux_size`` symbols.

    Symbols are exchangeable and two symbols with identical acceptance columns
    can be merged without changing the LP value, so it suffices to sweep sets
    of distinct column patterns of size ``1..aux_size``.
    """
    probs = as_categorical(q).probs
    m = probs.size
    if aux_size < 1:
        raise DomainError("aux_size must be positive")
    if m * aux_size > MAX_LP_VARIABLES:
        raise CapacityError(f"{m} outcomes x {aux_size} symbols is too large to sweep")
    types = _column_types(m)
    total = sum(_ncr(len(types), k) for k in range(1, min(aux_size, len(types)) + 1))
    if total > max_lps:
        raise CapacityError(f"sweep needs {total} LPs, limit is {max_lps}")

    best, best_det, star = np.inf, None, False
    found = []
    for k in range(1, min(aux_size, len(types)) + 1):
        for cols in itertools.combinations(types, k):
            det = Detector(_pad(cols, aux_size))
            res = lp_min_type2(det, probs, alpha, eps)
            found.append((res.value, det))
            best = min(best, res.value)
    # among near-minimizers prefer the optimal detector shape
    near = [d for v, d in found if v <= best + 1e-9]
    star_dets = [d for d in near if is_gamma_star(d)]
    star = bool(star_dets)
    best_det = star_dets[0] if star else near[0]
    return SweepResult(float(best), excess_closed_form(probs, alpha, eps), best_det, star, total)


def brute_force_min_type2(q: ArrayLike, alpha: float, eps: float, aux_size: int) -> SweepResult:
    """Unpruned sweep over all ``2^(m * aux_size)`` acceptance matrices."""
    probs = as_categorical(q).probs
    m = probs.size
    if m * aux_size > 12:
        raise CapacityError("unpruned sweep is limited to 12 matrix entries")
    best, best_det, star = np.inf, None, False
    values = []
    for bits in itertools.product((False, True), repeat=m * aux_size):
        det = Detector(np.array(bits).reshape(m, aux_size))
        v = lp_min_type2(det, probs, alpha, eps).value
        values.append((v, det))
        best = min(best, v)
    near = [d for v, d in values if v <= best + 1e-9]
    star_dets = [d for d in near if is_gamma_star(d)]
    best_det = star_dets[0] if star_dets else near[0]
    return SweepResult(float(best), excess_closed_form(probs, alpha, eps), best_det,
                       bool(star_dets), len(values))


def _ncr(n, k):
    from math import comb
    return comb(n, k)


def merged_excess_min(masses: np.ndarray, alpha: float, eps: float) -> float:
    """``min over the TV ball of sum_s (P(s) - alpha)_+`` for group masses."""
    masses = np.asarray(masses, dtype=np.float64)
    return project_min_excess(masses / masses.sum(), alpha, eps).objective


def merged_detector_min_type2(q: ArrayLike, alpha: float, eps: float, merge: Sequence[int]) -> float:
    """Least Type-II error of the detector ``1{f(x) = zeta}``.

    Moving mass between groups is the only useful use of the TV budget, so the
    minimum is the excess projection applied to the group totals.
    """
    probs = as_categorical(q).probs
    merge = np.asarray(merge, dtype=np.int64)
    if merge.shape != probs.shape or merge.min() < 0:
        raise DomainError("merge must assign a group to every outcome")
    groups = np.bincount(merge, weights=probs)
    groups = groups[np.bincount(merge) > 0]
    return merged_excess_min(groups, alpha, eps)


def min_excess_lp(q: ArrayLike, alpha: float, eps: float) -> float:
    """Independent LP for ``min sum (P - alpha)_+`` over the TV ball (test oracle)."""
    probs = as_categorical(q).probs
    m = probs.size
    # variables: P (m), excess e (m), slack t (m)
    c = np.concatenate([np.zeros(m), np.ones(m), np.zeros(m)])
    eye, zero = np.eye(m), np.zeros((m, m))
    a_ub = np.vstack([
        np.hstack([eye, -eye, zero]),
        np.hstack([eye, zero, -eye]),
        np.hstack([-eye, zero, -eye]),
        np.concatenate([np.zeros(2 * m), np.ones(m)])[None, :],
    ])
    b_ub = np.concatenate([np.full(m, alpha), probs, -probs, [2 * eps]])
    a_eq = np.concatenate([np.ones(m), np.zeros(2 * m)])[None, :]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=(0, None),
                  method="highs", options=_LP_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return float(res.fun)
