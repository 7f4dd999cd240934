"""Token-level watermark with a redundant auxiliary symbol.

At every step the auxiliary distribution gives each token's symbol
``min(q(x), eta)`` and puts the overflow ``sum((q - eta)_+)`` on the redundant
symbol.  A Gumbel-max draw keyed on the context window picks the symbol; a
non-redundant symbol fixes the token, the redundant one triggers a draw from
the overflow.  The induced token law is exactly ``q``.

Detection recomputes the symbols from a surrogate model and counts positions
where the token's own symbol was chosen.  No prompt is needed: seed windows
and surrogate contexts use the scored text only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import kernels
from .dist import ArrayLike, Categorical, as_categorical
from .errors import DomainError, PreconditionError
from .lm import NgramModel
from .prg import AuxAlphabet, WatermarkKey, derive_aux_alphabet, seed_from_context


@dataclass(frozen=True)
class SchemeParams:
    eta: float = 0.2
    lam: float = 0.5
    context_window: int = 1
    T: int = 200

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}")
        # thresholds at or above 1 are allowed; a score can never exceed them
        if not self.lam >= 0:
            raise DomainError(f"lambda must be non-negative, got {self.lam!r}")
        if self.context_window < 1:
            raise DomainError("context_window must be at least 1")
        if self.T < 1:
            raise DomainError("T must be at least 1")


@dataclass
class GenerationTrace:
    tokens: List[int]
    aux_ids: List[int]
    redundant_flags: List[bool]
    # mass of the redundant symbol at each step, sum((q_t - eta)_+)
    redundant_probs: List[float] = field(default_factory=list)

    @property
    def redundant_count(self) -> int:
        return int(sum(self.redundant_flags))


@dataclass
class DetectionReport:
    per_token_match: List[bool]
    score: float
    threshold: float
    decision: str
    redundant_count: int
    meta: dict = field(default_factory=dict)

    @property
    def watermarked(self) -> bool:
        return self.decision == "watermarked"


def ceil_count(T: int, lam: float) -> int:
    """``ceil(T * lam)``, immune to float noise such as ``50 * 0.28``."""
    return int(math.ceil(round(T * lam, 9)))


def build_aux_dist(q: ArrayLike, aux: AuxAlphabet, eta: float) -> Categorical:
    probs = as_categorical(q).probs
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta!r}")
    if probs.size != aux.vocab_size:
        raise DomainError("distribution and auxiliary alphabet differ in size")
    out = np.empty(aux.size)
    out[:-1] = np.minimum(probs[aux.inv_perm], eta)
    out[-1] = kernels.plus_excess(np.ascontiguousarray(probs), float(eta))
    return Categorical(out)


def residual_dist(q: ArrayLike, eta: float) -> Categorical:
    probs = as_categorical(q).probs
    over = np.maximum(probs - eta, 0.0)
    total = over.sum()
    if total <= 0:
        raise PreconditionError("no mass above eta; the redundant symbol cannot be drawn")
    return Categorical(over / total)


def induced_marginal(q: ArrayLike, eta: float, aux: Optional[AuxAlphabet] = None) -> np.ndarray:
    """Token law induced by one generation step, computed analytically.

    Token ``x`` is emitted when its own symbol ``h(x)`` is drawn, or when the
    redundant symbol is drawn and the residual law then picks ``x``.
    """
    probs = as_categorical(q).probs
    aux = aux or AuxAlphabet.from_permutation(range(probs.size))
    symbols = build_aux_dist(probs, aux, eta).probs
    out = symbols[aux.perm].copy()
    if symbols[-1] > 0:
        out += symbols[-1] * residual_dist(probs, eta).probs
    return out


def _aux_for(model_vocab: int, key: WatermarkKey, aux: Optional[AuxAlphabet]) -> AuxAlphabet:
    if aux is None:
        return derive_aux_alphabet(key, model_vocab)
    if aux.vocab_size != model_vocab:
        raise DomainError(f"model vocabulary {model_vocab} does not match auxiliary alphabet {aux.vocab_size}")
    return aux


def sample_step(q: np.ndarray, aux: AuxAlphabet, eta: float, seed: int, u: float):
    """One generation step: keyed symbol draw, then the token it stands for.

    Returns ``(token, symbol)``.  The redundant symbol is resolved by sampling
    the residual law with the uniform ``u``.
    """
    zeta = int(kernels.aux_select(q, aux.inv_perm, eta, seed))
    if zeta == aux.redundant_id:
        x = kernels.residual_sample(q, eta, u)
        if x < 0:
            raise PreconditionError("redundant symbol drawn with zero mass")
        return int(x), zeta
    return int(aux.inv_perm[zeta]), zeta


def generate(model: NgramModel, prompt: Sequence[int], key: WatermarkKey, params: SchemeParams,
             seed: int = 0, aux: Optional[AuxAlphabet] = None) -> GenerationTrace:
    aux = _aux_for(model.vocab_size, key, aux)
    rng = np.random.default_rng(seed)
    m, eta, n = aux.vocab_size, float(params.eta), params.context_window
    ctx = [int(t) for t in prompt]
    tokens, zetas, flags, rprobs = [], [], [], []
    for _ in range(params.T):
        q = model.ntp_array(ctx)
        s = seed_from_context(key, tokens[max(0, len(tokens) - n):])
        x, zeta = sample_step(q, aux, eta, s, float(rng.random()))
        rprobs.append(kernels.plus_excess(q, eta))
        tokens.append(x)
        zetas.append(int(zeta))
        flags.append(zeta == m)
        ctx.append(x)
    return GenerationTrace(tokens, zetas, flags, rprobs)


def reconstruct_aux(surrogate: NgramModel, text: Sequence[int], key: WatermarkKey,
                    params: SchemeParams, aux: AuxAlphabet) -> np.ndarray:
    """Auxiliary symbols a detector infers for every position of ``text``."""
    n = params.context_window
    text = [int(t) for t in text]
    rows = np.empty((len(text), aux.vocab_size))
    seeds = np.empty(len(text), dtype=np.uint64)
    for t in range(len(text)):
        rows[t] = surrogate.ntp_array(text[:t])
        seeds[t] = seed_from_context(key, text[max(0, t - n):t])
    return kernels.aux_select_rows(rows, seeds, aux.inv_perm, float(params.eta))


def detect(surrogate: NgramModel, text: Sequence[int], key: WatermarkKey, params: SchemeParams,
           aux: Optional[AuxAlphabet] = None) -> DetectionReport:
    if len(text) == 0:
        raise DomainError("cannot score empty text")
    aux = _aux_for(surrogate.vocab_size, key, aux)
    tokens = np.asarray(text, dtype=np.int64)
    bad = tokens[(tokens < 0) | (tokens >= aux.vocab_size)]
    if bad.size:
        raise DomainError(f"token id {int(bad[0])} outside the surrogate vocabulary of size {aux.vocab_size}")
    zetas = reconstruct_aux(surrogate, tokens.tolist(), key, params, aux)
    matches = aux.perm[tokens] == zetas
    score = float(matches.mean())
    return DetectionReport(
        per_token_match=[bool(v) for v in matches],
        score=score,
        threshold=params.lam,
        decision="watermarked" if score > params.lam else "unwatermarked",
        redundant_count=int((zetas == aux.redundant_id).sum()),
        meta={"eta": params.eta, "T": len(tokens), "context_window": params.context_window},
    )


def _check_calibration(alpha, T, lam):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0 < lam < 1:
        raise DomainError(f"lambda must lie in (0, 1), got {lam!r}")
    if T < 1:
        raise DomainError("T must be at least 1")


def calibrate_eta(alpha: float, T: int, lam: float) -> float:
    """Largest token-level budget whose union bound keeps sequence FPR at ``alpha``."""
    _check_calibration(alpha, T, lam)
    k = ceil_count(T, lam)
    log_eta = (math.log(alpha) - math.log(math.comb(T, k))) / k
    return min(1.0, math.exp(log_eta))


def sequence_fpr_bound_count(T: int, eta: float, k: int) -> float:
    """``min(1, C(T, k) * eta**k)`` in log space."""
    if not 0 <= k <= T:
        raise DomainError(f"count {k} outside 0..{T}")
    if not 0 <= eta <= 1:
        raise DomainError(f"eta must lie in [0, 1], got {eta!r}")
    if k == 0:
        return 1.0
    if eta == 0:
        return 0.0
    return min(1.0, math.exp(math.log(math.comb(T, k)) + k * math.log(eta)))


def sequence_fpr_bound(T: int, eta: float, lam: float) -> float:
    if not 0 < lam < 1:
        raise DomainError(f"lambda must lie in (0, 1), got {lam!r}")
    return sequence_fpr_bound_count(T, eta, ceil_count(T, lam))


@dataclass(frozen=True)
class ReplaceableEstimate:
    analytic: float
    empirical: float
    stderr: float
    num_sequences: int


def expected_replaceable(model: NgramModel, prompt: Sequence[int], key: WatermarkKey,
                         params: SchemeParams, num_sequences: int, seed: int = 0) -> ReplaceableEstimate:
    """Expected number of redundant positions per sequence.

    ``analytic`` averages the per-step redundant masses along each trace;
    ``empirical`` averages realized redundant counts.  ``stderr`` is the
    standard error of their per-trace difference.  Sequence ``i`` uses
    ``key.child(i)``, so traces are independent draws of the symbol noise.
    """
    if num_sequences < 1:
        raise DomainError("num_sequences must be at least 1")
    ss = np.random.SeedSequence(seed)
    analytic, empirical = [], []
    for i, child in enumerate(ss.spawn(num_sequences)):
        tr = generate(model, prompt, key.child(i), params, seed=int(child.generate_state(1)[0]))
        analytic.append(float(sum(tr.redundant_probs)))
        empirical.append(tr.redundant_count)
    a = np.asarray(analytic)
    e = np.asarray(empirical, dtype=float)
    diff = e - a
    stderr = float(diff.std(ddof=1) / math.sqrt(num_sequences)) if num_sequences > 1 else float("nan")
    return ReplaceableEstimate(float(a.mean()), float(e.mean()), stderr, num_sequences)


def trace_record(trace: GenerationTrace) -> dict:
    return {"tokens": list(map(int, trace.tokens)),
            "redundant": [int(f) for f in trace.redundant_flags]}


def report_record(report: DetectionReport, tokens: Sequence[int]) -> dict:
    return {"tokens": list(map(int, tokens)), "score": report.score,
            "matches": [int(v) for v in report.per_token_match],
            "decision": report.decision, "threshold": report.threshold}


def write_jsonl(path, records: Iterable[dict], header: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> List[dict]:
    """Records of a JSONL file, skipping an optional header line."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path} line {lineno} is not JSON ({exc.msg}); texts are JSONL records "
                                  'like {"tokens": [3, 1, 4]}') from None
            if "header" in rec and "tokens" not in rec:
                continue
            if "tokens" not in rec:
                raise DomainError(f"line {lineno}: record has no tokens")
            out.append(rec)
    return out
