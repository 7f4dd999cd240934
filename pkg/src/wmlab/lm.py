"""Order-n Markov language models over integer token ids.

Conditional probabilities are Laplace-smoothed counts with backoff: an unseen
context falls back to its longest seen suffix and finally to the uniform
distribution, so lookups never fail.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .dist import Categorical
from .errors import DomainError

Context = Tuple[int, ...]


def _ctx_key(ctx: Context) -> str:
    return ",".join(str(t) for t in ctx)


def _parse_ctx(key: str) -> Context:
    return tuple(int(t) for t in key.split(",")) if key else ()


class NgramModel:
    """Immutable n-gram model.

    ``counts`` maps every context of length ``0..order`` seen in training to
    its next-token counts.  ``table`` holds explicit probability rows that take
    precedence over counts; it is how hand-built models are expressed.
    """

    def __init__(self, order: int, vocab_size: int, smoothing: float = 1.0,
                 counts: Optional[Mapping[Context, Mapping[int, int]]] = None,
                 table: Optional[Mapping[Context, Sequence[float]]] = None):
        if order < 0:
            raise DomainError("order must be non-negative")
        if vocab_size < 2:
            raise DomainError("vocab_size must be at least 2")
        if not smoothing > 0:
            raise DomainError("smoothing must be positive")
        self.order = int(order)
        self.vocab_size = int(vocab_size)
        self.smoothing = float(smoothing)
        self.counts: Dict[Context, Dict[int, int]] = {}
        for ctx, row in (counts or {}).items():
            ctx = tuple(int(t) for t in ctx)
            self._check_context(ctx)
            clean = {int(x): int(c) for x, c in row.items() if int(c) > 0}
            for x in clean:
                self._check_token(x)
            if clean:
                self.counts[ctx] = clean
        self.table: Dict[Context, np.ndarray] = {}
        for ctx, probs in (table or {}).items():
            ctx = tuple(int(t) for t in ctx)
            self._check_context(ctx)
            row = Categorical(probs).probs
            if row.size != self.vocab_size:
                raise DomainError(f"table row for {ctx} has size {row.size}, expected {self.vocab_size}")
            self.table[ctx] = row
        self._cache: Dict[Context, np.ndarray] = {}

    def _check_token(self, x: int) -> None:
        if not 0 <= x < self.vocab_size:
            raise DomainError(f"token id {x} outside vocabulary of size {self.vocab_size}")

    def _check_context(self, ctx: Context) -> None:
        if len(ctx) > self.order:
            raise DomainError(f"context {ctx} longer than order {self.order}")
        for x in ctx:
            self._check_token(x)

    def _row(self, ctx: Context) -> np.ndarray:
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        row = None
        for k in range(len(ctx), -1, -1):
            suffix = ctx[len(ctx) - k:]
            if suffix in self.table:
                row = self.table[suffix]
                break
            seen = self.counts.get(suffix)
            if seen:
                arr = np.full(self.vocab_size, self.smoothing)
                for x, c in seen.items():
                    arr[x] += c
                row = arr / (sum(seen.values()) + self.smoothing * self.vocab_size)
                break
        if row is None:
            row = np.full(self.vocab_size, 1.0 / self.vocab_size)
        row = np.ascontiguousarray(row, dtype=np.float64)
        row.flags.writeable = False
        self._cache[ctx] = row
        return row

    def context_of(self, prefix: Sequence[int]) -> Context:
        if self.order == 0:
            return ()
        return tuple(int(t) for t in prefix[-self.order:])

    def ntp_array(self, prefix: Sequence[int]) -> np.ndarray:
        """Next-token probabilities as a read-only array (no validation copy)."""
        ctx = self.context_of(prefix)
        for x in ctx:
            self._check_token(x)
        return self._row(ctx)

    def ntp(self, prefix: Sequence[int]) -> Categorical:
        return Categorical(self.ntp_array(prefix))

    # serialization

    def to_json(self) -> dict:
        out = {
            "order": self.order,
            "vocab_size": self.vocab_size,
            "smoothing": self.smoothing,
            "counts": {
                _ctx_key(ctx): {str(x): c for x, c in sorted(row.items())}
                for ctx, row in sorted(self.counts.items(), key=lambda kv: (len(kv[0]), kv[0]))
            },
        }
        if self.table:
            out["table"] = {
                _ctx_key(ctx): [float(v) for v in row]
                for ctx, row in sorted(self.table.items(), key=lambda kv: (len(kv[0]), kv[0]))
            }
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "NgramModel":
        try:
            counts = {_parse_ctx(k): {int(x): int(c) for x, c in row.items()}
                      for k, row in obj.get("counts", {}).items()}
            table = {_parse_ctx(k): row for k, row in obj.get("table", {}).items()}
            return cls(int(obj["order"]), int(obj["vocab_size"]), float(obj["smoothing"]),
                       counts=counts, table=table)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"malformed model file: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "NgramModel":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DomainError(f"model file is not JSON: {exc}") from None
        return cls.from_json(obj)

    def __repr__(self):
        return f"NgramModel(order={self.order}, vocab_size={self.vocab_size}, contexts={len(self.counts) + len(self.table)})"


def train(corpus: Iterable[Sequence[int]], order: int, smoothing: float = 1.0,
          vocab_size: Optional[int] = None) -> NgramModel:
    """Count next tokens after every context suffix of length ``0..order``."""
    seqs = [list(map(int, s)) for s in corpus]
    if not any(seqs):
        raise DomainError("empty corpus")
    if order < 0:
        raise DomainError("order must be non-negative")
    if not smoothing > 0:
        raise DomainError("smoothing must be positive")
    top = max(max(s) for s in seqs if s)
    if min(min(s) for s in seqs if s) < 0:
        raise DomainError("token ids must be non-negative")
    m = top + 1 if vocab_size is None else vocab_size
    if top >= m:
        raise DomainError(f"token id {top} outside vocabulary of size {m}")
    counts: Dict[Context, Dict[int, int]] = {}
    for s in seqs:
        for t, x in enumerate(s):
            for k in range(min(order, t) + 1):
                row = counts.setdefault(tuple(s[t - k:t]), {})
                row[x] = row.get(x, 0) + 1
    return NgramModel(order, max(m, 2), smoothing, counts=counts)


def sample_sequence(model: NgramModel, prompt: Sequence[int], length: int, seed: int) -> List[int]:
    """Ancestral sampling of ``length`` tokens after ``prompt``."""
    if length < 1:
        raise DomainError("length must be at least 1")
    rng = np.random.default_rng(seed)
    ctx = list(prompt)
    out = []
    for u in rng.random(length):
        x = kernels.categorical_sample(model.ntp_array(ctx), float(u))
        out.append(x)
        ctx.append(x)
    return out


def entropy_rate(model: NgramModel, samples: int, length: int, seed: int,
                 prompt: Sequence[int] = ()) -> float:
    """Monte-Carlo bits per token along sampled sequences."""
    if samples < 1 or length < 1:
        raise DomainError("samples and length must be positive")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(samples):
        ctx = list(prompt)
        for u in rng.random(length):
            p = model.ntp_array(ctx)
            x = kernels.categorical_sample(p, float(u))
            total -= math.log2(p[x])
            ctx.append(x)
    return total / (samples * length)


def random_markov_model(order: int, vocab_size: int, concentration: float, seed: int,
                        smoothing: float = 1.0, mix: float = 1.0) -> NgramModel:
    """Model with Dirichlet rows for every context of length ``0..order``.

    Each full-context row is ``(1 - mix) * base + mix * own``, where ``base``
    is a Dirichlet row keyed on the last token only and ``own`` is specific to
    the context.  ``mix = 1`` gives independent rows; small ``mix`` gives a
    model close to its order-1 reduction.  Small ``concentration`` yields
    peaked, low-entropy rows.
    """
    if not concentration > 0:
        raise DomainError("concentration must be positive")
    if not 0 <= mix <= 1:
        raise DomainError("mix must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    alpha = np.full(vocab_size, concentration)
    base = rng.dirichlet(alpha, size=vocab_size)
    table = {}
    for k in range(order + 1):
        for ctx in np.ndindex(*([vocab_size] * k)):
            own = rng.dirichlet(alpha)
            row = own if k < 2 else (1 - mix) * base[ctx[-1]] + mix * own
            table[tuple(int(t) for t in ctx)] = row / row.sum()
    return NgramModel(order, vocab_size, smoothing, table=table)


def read_corpus(path) -> List[List[int]]:
    """One whitespace-separated sequence of token ids per line; blank lines skipped."""
    seqs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                seqs.append([int(p) for p in parts])
            except ValueError:
                raise DomainError(f"line {lineno}: malformed token id in {line.strip()!r}") from None
    if not seqs:
        raise DomainError("empty corpus")
    return seqs


def write_corpus(path, seqs: Iterable[Sequence[int]]) -> None:
    with open(path, "w") as fh:
        for s in seqs:
            fh.write(" ".join(str(int(t)) for t in s) + "\n")
