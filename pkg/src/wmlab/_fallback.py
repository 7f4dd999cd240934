"""Pure-Python twin of the compiled kernels in ``_kernels.pyx``.

Scalar ``math.log`` is used on purpose: numpy's vectorized log can differ from
libm in the last bit, which would break agreement with the compiled path.
"""
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
TWO_M53 = 2.0 ** -53
U_MIN = 2.0 ** -64
U_MAX = 1.0 - 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _uniform(seed: int, i: int) -> float:
    u = float(mix64(seed + (i + 1) * GOLDEN) >> 11) * TWO_M53
    return min(max(u, U_MIN), U_MAX)


def _gumbel(seed: int, i: int) -> float:
    return -math.log(-math.log(_uniform(seed, i)))


def uniform_vector(seed: int, size: int) -> np.ndarray:
    return np.array([_uniform(seed, i) for i in range(size)], dtype=np.float64)


def gumbel_vector(seed: int, size: int) -> np.ndarray:
    return np.array([_gumbel(seed, i) for i in range(size)], dtype=np.float64)


def _argmax_scores(masses, seed):
    best, best_score = -1, 0.0
    for i, p in enumerate(masses):
        if p > 0.0:
            score = math.log(p) + _gumbel(seed, i)
            if best < 0 or score > best_score:
                best, best_score = i, score
    return best


def gumbel_argmax_seeded(p, seed: int) -> int:
    return _argmax_scores([float(v) for v in p], int(seed))


def gumbel_argmax_many(p, seeds) -> np.ndarray:
    masses = [float(v) for v in p]
    return np.array([_argmax_scores(masses, int(s)) for s in seeds], dtype=np.int64)


def plus_excess(q, eta: float) -> float:
    total = 0.0
    for v in q:
        d = float(v) - eta
        if d > 0.0:
            total += d
    return total


def _aux_masses(q, inv_perm, eta):
    qs = [float(v) for v in q]
    masses = [min(qs[int(x)], eta) for x in inv_perm]
    masses.append(plus_excess(qs, eta))
    return masses


def aux_select(q, inv_perm, eta: float, seed: int) -> int:
    return _argmax_scores(_aux_masses(q, inv_perm, eta), int(seed))


def aux_select_rows(rows, seeds, inv_perm, eta: float) -> np.ndarray:
    return np.array(
        [aux_select(row, inv_perm, eta, int(s)) for row, s in zip(rows, seeds)],
        dtype=np.int64,
    )


def residual_sample(q, eta: float, u: float) -> int:
    total = plus_excess(q, eta)
    if total <= 0.0:
        return -1
    target = u * total
    acc, last = 0.0, -1
    for x, v in enumerate(q):
        d = float(v) - eta
        if d > 0.0:
            acc += d
            last = x
            if acc > target:
                return x
    return last


def categorical_sample(p, u: float) -> int:
    vals = [float(v) for v in p]
    total = 0.0
    for v in vals:
        total += v
    target = u * total
    acc, last = 0.0, -1
    for x, v in enumerate(vals):
        if v > 0.0:
            acc += v
            last = x
            if acc > target:
                return x
    return last
