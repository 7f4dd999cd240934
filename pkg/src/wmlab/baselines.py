"""Reference watermarks: green/red list boosting and plain Gumbel-max sampling.

Both reuse the context seeding of :mod:`wmlab.prg`, so comparisons differ in
the scheme only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .dist import ArrayLike, as_categorical
from .errors import DomainError
from .lm import NgramModel
from .prg import WatermarkKey, seed_from_context
from .token_wm import DetectionReport


@dataclass(frozen=True)
class GreenRedParams:
    rho: float = 0.5
    delta: float = 2.0
    n: int = 1

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise DomainError("rho must lie in (0, 1)")
        if not self.delta >= 0:
            raise DomainError("delta must be non-negative")
        if self.n < 1:
            raise DomainError("hash window must be at least 1")

    def green_size(self, m: int) -> int:
        k = int(round(self.rho * m))
        if not 0 < k < m:
            raise DomainError(f"rho={self.rho} leaves no green or no red tokens for m={m}")
        return k


def green_mask(key: WatermarkKey, context: Sequence[int], m: int, size: int) -> np.ndarray:
    """The ``size`` tokens with the smallest keyed uniforms form the green list."""
    u = kernels.uniform_vector(seed_from_context(key, context), m)
    mask = np.zeros(m, dtype=bool)
    mask[np.argsort(u, kind="stable")[:size]] = True
    return mask


def boosted(q: ArrayLike, green: np.ndarray, delta: float) -> np.ndarray:
    probs = as_categorical(q).probs
    w = probs * np.exp(delta * np.asarray(green, dtype=np.float64))
    return w / w.sum()


def kgw_generate(model: NgramModel, prompt: Sequence[int], key: WatermarkKey,
                 params: GreenRedParams, T: int, seed: int = 0) -> List[int]:
    m = model.vocab_size
    size = params.green_size(m)
    rng = np.random.default_rng(seed)
    ctx = [int(t) for t in prompt]
    out = []
    for _ in range(T):
        green = green_mask(key, out[max(0, len(out) - params.n):], m, size)
        p = boosted(model.ntp_array(ctx), green, params.delta)
        x = kernels.categorical_sample(p, float(rng.random()))
        out.append(x)
        ctx.append(x)
    return out


def kgw_detect(text: Sequence[int], key: WatermarkKey, params: GreenRedParams, vocab_size: int,
               lam: Optional[float] = None) -> DetectionReport:
    """Green-hit fraction; ``lam`` thresholds the fraction (default z = 4)."""
    if len(text) == 0:
        raise DomainError("cannot score empty text")
    text = [int(t) for t in text]
    size = params.green_size(vocab_size)
    rho = size / vocab_size
    hits = [bool(green_mask(key, text[max(0, t - params.n):t], vocab_size, size)[x])
            for t, x in enumerate(text)]
    T = len(text)
    count = sum(hits)
    z = (count - rho * T) / math.sqrt(T * rho * (1 - rho))
    if lam is None:
        lam = rho + 4.0 * math.sqrt(rho * (1 - rho) / T)
    score = count / T
    return DetectionReport(hits, score, lam, "watermarked" if score >= lam else "unwatermarked", 0,
                           meta={"count": count, "z": z, "rho": rho})


def gumbelmax_generate(model: NgramModel, prompt: Sequence[int], key: WatermarkKey, n: int,
                       T: int) -> List[int]:
    """``argmax log q(x) + G(x)`` with Gumbel noise keyed on the last ``n`` tokens."""
    ctx = [int(t) for t in prompt]
    out = []
    for _ in range(T):
        s = seed_from_context(key, out[max(0, len(out) - n):])
        x = kernels.gumbel_argmax_seeded(model.ntp_array(ctx), s)
        out.append(int(x))
        ctx.append(int(x))
    return out


def gumbelmax_statistics(text: Sequence[int], key: WatermarkKey, n: int, vocab_size: int) -> np.ndarray:
    """Per-token ``-log(1 - u_t(x_t))``; unit exponential for key-independent text."""
    text = [int(t) for t in text]
    stats = np.empty(len(text))
    for t, x in enumerate(text):
        if not 0 <= x < vocab_size:
            raise DomainError(f"token id {x} outside vocabulary")
        u = kernels.uniform_vector(seed_from_context(key, text[max(0, t - n):t]), vocab_size)[x]
        stats[t] = -math.log1p(-u)
    return stats


def gumbelmax_detect(text: Sequence[int], key: WatermarkKey, n: int, vocab_size: int,
                     lam: float = 2.0) -> DetectionReport:
    """Mean per-token statistic; ``lam`` thresholds the mean."""
    if len(text) == 0:
        raise DomainError("cannot score empty text")
    stats = gumbelmax_statistics(text, key, n, vocab_size)
    score = float(stats.mean())
    return DetectionReport([bool(s > 1.0) for s in stats], score, lam,
                           "watermarked" if score >= lam else "unwatermarked", 0,
                           meta={"sum": float(stats.sum())})
