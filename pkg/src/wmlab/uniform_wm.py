"""Watermark variant whose auxiliary symbol is uniform over the vocabulary.

Each step draws the symbol uniformly from the context seed and then samples
the token from the row of the maximal coupling between ``q`` and the uniform
law, so the token's own symbol is hit with probability ``sum(min(q, 1/m))``.
Detection needs no model at all.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import kernels
from .dist import ArrayLike, as_categorical, project_min_excess
from .errors import DomainError
from .lm import NgramModel
from .prg import MASK64, AuxAlphabet, WatermarkKey, derive_aux_alphabet, seed_from_context
from .token_wm import DetectionReport, GenerationTrace

GOLDEN = 0x9E3779B97F4A7C15


def uniform_symbol(seed: int, m: int) -> int:
    """Symbol in ``0..m-1`` from the first draw of the seed's stream (multiply-shift)."""
    return (kernels.mix64((int(seed) + GOLDEN) & MASK64) * m) >> 64


def uniform_modified_ntp(q: ArrayLike, zeta: int, aux: AuxAlphabet) -> np.ndarray:
    """Conditional token law given symbol ``zeta`` under the maximal coupling."""
    probs = as_categorical(q).probs
    m = probs.size
    if m != aux.vocab_size:
        raise DomainError("distribution and auxiliary alphabet differ in size")
    x0 = aux.g(zeta)
    tv = 0.5 * np.abs(probs - 1.0 / m).sum()
    out = np.zeros(m)
    out[x0] = m * min(probs[x0], 1.0 / m)
    short = max(1.0 / m - probs[x0], 0.0)
    if tv > 0 and short > 0:
        over = np.maximum(probs - 1.0 / m, 0.0)
        over[x0] = 0.0
        out += m * over * short / tv
    elif tv == 0:
        # q is exactly uniform: the coupling is the diagonal
        out[:] = 0.0
        out[x0] = 1.0
    return out / out.sum()


def uniform_generate(model: NgramModel, prompt: Sequence[int], key: WatermarkKey, T: int,
                     context_window: int = 1, eps: float = 0.0, seed: int = 0,
                     aux: Optional[AuxAlphabet] = None) -> GenerationTrace:
    if T < 1:
        raise DomainError("T must be at least 1")
    m = model.vocab_size
    aux = aux or derive_aux_alphabet(key, m)
    rng = np.random.default_rng(seed)
    ctx = [int(t) for t in prompt]
    tokens, zetas = [], []
    for _ in range(T):
        q = model.ntp_array(ctx)
        if eps > 0:
            q = project_min_excess(q, 1.0 / m, eps).projected.probs
        s = seed_from_context(key, tokens[max(0, len(tokens) - context_window):])
        zeta = uniform_symbol(s, m)
        x = kernels.categorical_sample(uniform_modified_ntp(q, zeta, aux), float(rng.random()))
        tokens.append(x)
        zetas.append(zeta)
        ctx.append(x)
    return GenerationTrace(tokens, zetas, [False] * T, [0.0] * T)


def uniform_detect(text: Sequence[int], key: WatermarkKey, lam: float, vocab_size: int,
                   context_window: int = 1, aux: Optional[AuxAlphabet] = None) -> DetectionReport:
    if len(text) == 0:
        raise DomainError("cannot score empty text")
    aux = aux or derive_aux_alphabet(key, vocab_size)
    text = [int(t) for t in text]
    matches = []
    for t, x in enumerate(text):
        if not 0 <= x < vocab_size:
            raise DomainError(f"token id {x} outside vocabulary")
        s = seed_from_context(key, text[max(0, t - context_window):t])
        matches.append(aux.h(x) == uniform_symbol(s, vocab_size))
    score = float(np.mean(matches))
    return DetectionReport(matches, score, lam,
                           "watermarked" if score > lam else "unwatermarked", 0,
                           meta={"T": len(text), "context_window": context_window})


def uniform_min_type2(q: ArrayLike, aux_size: int, eps: float) -> float:
    """Least Type-II error when the symbol law is forced uniform over ``aux_size`` values."""
    probs = as_categorical(q).probs
    if aux_size < probs.size:
        raise DomainError("aux_size must be at least the alphabet size")
    return project_min_excess(probs, 1.0 / aux_size, eps).objective
