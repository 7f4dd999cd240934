"""Self-checks behind ``wmlab verify``; each returns rows plus an overall verdict."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .dist import excess_closed_form, project_min_excess
from .frobust import LatentMap, build_frobust_scheme, default_images, robust_detector, robust_errors, robust_min_type2
from .lm import random_markov_model
from .prg import AuxAlphabet, WatermarkKey
from .seq_opt import Detector, build_optimal_scheme, exact_type1_worst, exact_type2, universal_min_type2
from .token_wm import SchemeParams, induced_marginal
from .evaluation import fpr_study


@dataclass
class Verdict:
    kind: str
    rows: List[Dict]
    passed: bool


def universal_grid(m: int, points: int, seed: int = 0):
    """Deterministic (q, alpha, eps) grid: one random q, a product of alpha and eps levels."""
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(m))
    na = int(math.ceil(math.sqrt(points)))
    ne = int(math.ceil(points / na))
    alphas = np.linspace(0.1, 0.9, na)
    epss = np.linspace(0.0, 0.3, ne)
    grid = [(float(a), float(e)) for a in alphas for e in epss][:points]
    return q, grid


def verify_universal_minimum(vocab: int, aux: int, grid: int, seed: int = 0, tol: float = 1e-9) -> Verdict:
    q, pairs = universal_grid(vocab, grid, seed)
    rows = []
    for a, e in pairs:
        res = universal_min_type2(q, a, e, aux)
        ok = abs(res.value - res.closed_form) <= tol and res.gamma_star_found
        rows.append({"q": " ".join(f"{v:.6f}" for v in q), "alpha": a, "eps": e,
                     "closed_form": res.closed_form, "sweep_min": res.value,
                     "delta": abs(res.value - res.closed_form),
                     "matching_detector_shape": "gamma_star" if res.gamma_star_found else "other",
                     "pass": ok})
    return Verdict("theorem1", rows, all(r["pass"] for r in rows))


def random_instances(trials: int, seed: int, max_m: int = 6):
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        m = int(rng.integers(2, max_m + 1))
        q = rng.dirichlet(np.full(m, float(rng.choice([0.3, 1.0, 3.0]))))
        yield m, q, float(rng.uniform(0.02, 1.0)), float(rng.uniform(0.0, 0.5))


def verify_scheme(trials: int, seed: int = 0, tol: float = 1e-12) -> Verdict:
    rows = []
    for m, q, a, e in random_instances(trials, seed):
        g = list(range(m)) + [-1]
        sch = build_optimal_scheme(q, a, e, g)
        det = Detector.from_g(g, m)
        t1, t2 = exact_type1_worst(sch, det), exact_type2(sch, det)
        cf = excess_closed_form(q, a, e)
        ok = t1 <= a + tol and abs(t2 - cf) <= tol
        rows.append({"m": m, "alpha": a, "eps": e, "type1": t1, "type2": t2, "closed_form": cf,
                     "delta": abs(t2 - cf), "pass": ok})
    return Verdict("scheme", rows, all(r["pass"] for r in rows))


def verify_frobust(trials: int, seed: int = 0, tol: float = 1e-12) -> Verdict:
    rng = np.random.default_rng(seed)
    rows = []
    for m, q, a, e in random_instances(trials, seed, max_m=6):
        K = int(rng.integers(1, min(3, m) + 1))
        labels = np.concatenate([np.arange(K), rng.integers(0, K, size=m - K)])
        f = LatentMap(rng.permutation(labels))
        images = default_images(f.K)
        sch = build_frobust_scheme(q, a, e, f, images)
        t1, t2 = robust_errors(sch, robust_detector(images, f), f)
        target = robust_min_type2(q, a, e, f)
        ok = t1 <= a + tol and abs(t2 - target) <= tol
        rows.append({"m": m, "K": f.K, "alpha": a, "eps": e, "robust_type1": t1, "robust_type2": t2,
                     "robust_min": target, "delta": abs(t2 - target), "pass": ok})
    return Verdict("frobust", rows, all(r["pass"] for r in rows))


def verify_distortion(trials: int, seed: int = 0, tol: float = 1e-9) -> Verdict:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        m = int(rng.integers(2, 65))
        q = rng.dirichlet(np.full(m, float(rng.choice([0.05, 0.3, 1.0]))))
        eta = float(rng.uniform(0.01, 1.0))
        aux = AuxAlphabet.from_permutation(rng.permutation(m))
        dev = float(np.abs(induced_marginal(q, eta, aux) - q).max())
        rows.append({"m": m, "eta": eta, "max_deviation": dev, "pass": dev < tol})
    return Verdict("distortion", rows, all(r["pass"] for r in rows))


def verify_type1(eta: float, T: int, num: int, counts=(14, 15, 16, 17), vocab: int = 16,
                 seed: int = 0, context_window: Optional[int] = None) -> Verdict:
    """Empirical false alarms on key-independent synthetic text against the bound.

    Sequence ``i`` is scored with its own derived key.  The hash window
    defaults to the whole prefix: the bound needs fresh noise at every
    position, and a short window over a small vocabulary repeats.
    """
    model = random_markov_model(1, vocab, 1.0, seed)
    master = WatermarkKey.from_seed(seed)
    keys = [master.child(i) for i in range(num)]
    params = SchemeParams(eta=eta, lam=0.5, context_window=context_window or T, T=T)
    rows = fpr_study(model, keys, params, num, counts, seed=seed + 1)
    for r in rows:
        r["pass"] = r["empirical"] <= r["theoretical"]
    return Verdict("type1", rows, all(r["pass"] for r in rows))
