"""Evaluation harness: ROC analysis, substitution attacks, false-alarm and
missed-detection studies, and the concentration bound on missed detection.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import DomainError
from .lm import NgramModel, sample_sequence
from .prg import WatermarkKey
from .token_wm import (GenerationTrace, SchemeParams, detect, sequence_fpr_bound_count)

SOURCES = ("unigram", "contextual-ngram", "uniform")


@dataclass(frozen=True)
class RocCurve:
    # (fpr, tpr, threshold) with thresholds decreasing, starting at +inf
    points: List[Tuple[float, float, float]]
    auc: float


def roc(scores_watermarked: Sequence[float], scores_human: Sequence[float]) -> RocCurve:
    """Threshold sweep with ``score >= threshold`` flagged; trapezoid AUC.

    Tied scores move FPR and TPR together, so the trapezoid area equals the
    tie-aware Mann-Whitney statistic.
    """
    pos = np.asarray(scores_watermarked, dtype=np.float64)
    neg = np.asarray(scores_human, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise DomainError("both score sets must be non-empty")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_sorted, neg_sorted = np.sort(pos), np.sort(neg)
    tpr = (pos.size - np.searchsorted(pos_sorted, thresholds, side="left")) / pos.size
    fpr = (neg.size - np.searchsorted(neg_sorted, thresholds, side="left")) / neg.size
    fpr = np.concatenate([[0.0], fpr])
    tpr = np.concatenate([[0.0], tpr])
    thr = np.concatenate([[np.inf], thresholds])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve([(float(f), float(t), float(h)) for f, t, h in zip(fpr, tpr, thr)], auc)


def pairwise_auc(scores_watermarked: Sequence[float], scores_human: Sequence[float]) -> float:
    """Quadratic-time win fraction with half credit for ties."""
    pos = np.asarray(scores_watermarked, dtype=np.float64)[:, None]
    neg = np.asarray(scores_human, dtype=np.float64)[None, :]
    return float(((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.size * neg.size))


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """TPR at the operating point reached before FPR exceeds the target.

    Walking down the thresholds, the TPR is kept while FPR stays below the
    target; a point landing exactly on the target is taken and the walk stops.
    """
    if not 0 < fpr_target < 1:
        raise DomainError("fpr_target must lie in (0, 1)")
    best = 0.0
    for f, t, _ in curve.points:
        if f < fpr_target - 1e-12:
            best = t
        elif abs(f - fpr_target) <= 1e-12:
            return t
        else:
            break
    return best


@dataclass(frozen=True)
class AttackConfig:
    mask_rate: float = 0.5
    substitution_source: str = "contextual-ngram"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.mask_rate <= 1:
            raise DomainError("mask_rate must lie in [0, 1]")
        if self.substitution_source not in SOURCES:
            raise DomainError(f"substitution_source must be one of {SOURCES}")


def substitution_attack(text: Sequence[int], cfg: AttackConfig,
                        source_model: Optional[NgramModel] = None) -> Tuple[List[int], float]:
    """Mask ``round(mask_rate * T)`` positions and redraw each from the source.

    A redraw may reproduce the original token; the returned fraction counts
    positions that actually changed.
    """
    text = [int(t) for t in text]
    if not text:
        return [], 0.0
    if cfg.substitution_source != "uniform" and source_model is None:
        raise DomainError("a source model is required for model-based substitution")
    rng = np.random.default_rng(cfg.seed)
    T = len(text)
    k = int(round(cfg.mask_rate * T))
    masked = np.sort(rng.choice(T, size=k, replace=False)) if k else np.array([], dtype=int)
    out = list(text)
    for t, u in zip(masked, rng.random(k)):
        if cfg.substitution_source == "uniform":
            m = source_model.vocab_size if source_model is not None else max(text) + 1
            out[t] = int(u * m)
        elif cfg.substitution_source == "unigram":
            out[t] = kernels.categorical_sample(source_model.ntp_array(()), float(u))
        else:
            out[t] = kernels.categorical_sample(source_model.ntp_array(out[:t]), float(u))
    changed = sum(a != b for a, b in zip(out, text))
    return out, changed / T


def calibrate_mask_rate(texts: Sequence[Sequence[int]], source: str, source_model: Optional[NgramModel],
                        target: float = 0.35, seed: int = 0, rounds: int = 4) -> float:
    """Mask rate whose average replaced fraction on ``texts`` is close to ``target``.

    Starts from a pilot at full masking and rescales the rate by the ratio of
    target to observed replacement for a few rounds.
    """
    if not 0 < target <= 1:
        raise DomainError("target must lie in (0, 1]")

    def replaced(rate):
        return float(np.mean([substitution_attack(t, AttackConfig(rate, source, seed + i), source_model)[1]
                              for i, t in enumerate(texts)]))

    observed = replaced(1.0)
    if observed <= 0:
        raise DomainError("the source never changes a token")
    rate = min(1.0, target / observed)
    for _ in range(rounds):
        observed = replaced(rate)
        if observed <= 0:
            break
        rate = min(1.0, rate * target / observed)
    return rate


def type2_bound(delta: float, psi: float, phi: float, a: float) -> float:
    """Janson bound on ``P(sum of matches <= a * delta)``."""
    if not (delta > 0 and psi > 0 and phi > 0):
        raise DomainError("delta, psi and phi must be positive")
    if not 0 <= a <= 1:
        raise DomainError("a must lie in [0, 1]")
    gap = 1.0 - a
    exponent = min(gap * gap * delta * delta / (8.0 * phi + 2.0 * delta), gap * delta / (6.0 * psi))
    return math.exp(-exponent)


@dataclass(frozen=True)
class JansonTerms:
    delta: float
    psi: float
    phi: float


def janson_terms(traces: Sequence[GenerationTrace], n: int) -> JansonTerms:
    """Estimate the bound's inputs from generation traces.

    Position ``t`` matches with probability ``1 - r_t`` given its context,
    ``r_t`` being the redundant mass.  Positions within ``n`` of each other
    are treated as dependent.
    """
    if not traces:
        raise DomainError("need at least one trace")
    T = min(len(tr.tokens) for tr in traces)
    u = np.array([1.0 - np.asarray(tr.redundant_probs[:T]) for tr in traces])
    ind = np.array([~np.asarray(tr.redundant_flags[:T], dtype=bool) for tr in traces], dtype=float)
    mean_u = u.mean(axis=0)
    delta = float(mean_u.sum())
    psi = 0.0
    phi = 0.0
    for i in range(T):
        lo, hi = max(0, i - n), min(T, i + n + 1)
        neigh = [j for j in range(lo, hi) if j != i]
        psi = max(psi, float(mean_u[neigh].sum()) if neigh else 0.0)
        if neigh:
            phi += float((ind[:, i:i + 1] * ind[:, neigh]).sum(axis=1).mean())
    return JansonTerms(delta, max(psi, 1e-12), max(phi / 2.0, 1e-12))


def human_texts(model: NgramModel, num: int, T: int, seed: int) -> List[List[int]]:
    ss = np.random.SeedSequence(seed)
    return [sample_sequence(model, [], T, int(c.generate_state(1)[0])) for c in ss.spawn(num)]


def _key_list(key, num: int) -> List[WatermarkKey]:
    if isinstance(key, WatermarkKey):
        return [key] * num
    keys = list(key)
    if len(keys) != num:
        raise DomainError(f"{len(keys)} keys for {num} sequences")
    return keys


def fpr_study(human_source: NgramModel, key, params: SchemeParams, num_sequences: int,
              counts: Sequence[int], surrogate: Optional[NgramModel] = None, seed: int = 0,
              texts: Optional[Sequence[Sequence[int]]] = None) -> List[Dict]:
    """Empirical vs bounded false-alarm rate on key-independent text.

    ``key`` is one key or a list with one key per sequence.  A row for match
    count ``k`` uses the threshold ``(k - 1/2) / T``, so the strict comparison
    flags exactly the sequences with at least ``k`` matches.
    """
    if num_sequences < 1:
        raise DomainError("num_sequences must be positive")
    surrogate = surrogate or human_source
    if texts is None:
        texts = human_texts(human_source, num_sequences, params.T, seed)
    keys = _key_list(key, len(texts))
    match_counts = np.array([sum(detect(surrogate, t, k, params).per_token_match)
                             for t, k in zip(texts, keys)])
    T = params.T
    rows = []
    for k in counts:
        lam = (k - 0.5) / T
        empirical = float((match_counts / T > lam).mean())
        theoretical = sequence_fpr_bound_count(T, params.eta, k) if 0 <= k <= T else 0.0
        rows.append({"count": int(k), "lambda": lam, "theoretical": theoretical,
                     "empirical": empirical, "n": len(texts)})
    return rows


def missed_detection_rates(match_rows: np.ndarray, expected_rows: np.ndarray,
                           lengths: Sequence[int], a: float) -> List[float]:
    """Fraction of sequences whose prefix match count is at most ``a`` times its expectation.

    ``match_rows`` holds per-token match indicators, ``expected_rows`` the
    per-token match probabilities, one row per watermarked sequence.
    """
    rates = []
    for T in lengths:
        count = match_rows[:, :T].sum(axis=1)
        expected = expected_rows[:, :T].sum(axis=1).mean()
        rates.append(float((count <= a * expected).mean()))
    return rates


def log_linear_fit(lengths: Sequence[int], rates: Sequence[float]):
    """Least-squares line through ``log(rate)`` against length; returns (slope, intercept, max relative error)."""
    x = np.asarray(lengths, dtype=float)
    y = np.log(np.asarray(rates, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    rel = float(np.max(np.abs(y - fit) / np.abs(fit)))
    return float(slope), float(intercept), rel


def write_csv(path, rows: Sequence[Dict], fields: Sequence[str], header: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_roc_csv(path, curve: RocCurve, header: Optional[str] = None) -> None:
    """One row per operating point; the AUC is repeated on every row."""
    rows = [{"fpr": f, "tpr": t, "threshold": h, "auc": curve.auc} for f, t, h in curve.points]
    write_csv(path, rows, ["fpr", "tpr", "threshold", "auc"], header)
