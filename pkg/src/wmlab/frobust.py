"""Watermarks that survive substitution within a latent equivalence class.

A latent map sends every outcome to one of ``K`` classes.  The adversary may
replace the text by any member of its class, so acceptance must depend on
the class only; the achievable Type-II error is the excess of class totals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dist import ArrayLike, aggregate, as_categorical, project_min_excess
from .errors import DomainError
from .seq_opt import Detector, JointScheme

# a symbol's image: ("class", k), ("token", x) or ("none",) for redundant symbols
Image = Tuple


@dataclass(frozen=True)
class LatentMap:
    labels: np.ndarray

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64)
        if lab.ndim != 1 or lab.size == 0 or lab.min() < 0:
            raise DomainError("labels must be a non-empty list of class ids")
        if set(np.unique(lab)) != set(range(int(lab.max()) + 1)):
            raise DomainError("class ids must be 0..K-1 with no empty class")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def classes(self) -> List[List[int]]:
        return [np.flatnonzero(self.labels == k).tolist() for k in range(self.K)]

    def members(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.labels == self.labels[x])

    @classmethod
    def identity(cls, m: int) -> "LatentMap":
        return cls(np.arange(m))

    @classmethod
    def from_classes(cls, classes: Sequence[Sequence[int]]) -> "LatentMap":
        flat = [x for c in classes for x in c]
        if sorted(flat) != list(range(len(flat))):
            raise DomainError("classes must partition 0..n-1")
        labels = np.empty(len(flat), dtype=np.int64)
        for k, c in enumerate(classes):
            labels[list(c)] = k
        return cls(labels)

    def coarsen(self, a: int, b: int) -> "LatentMap":
        """Merge class ``b`` into class ``a`` and relabel densely."""
        lab = np.where(self.labels == b, a, self.labels)
        _, dense = np.unique(lab, return_inverse=True)
        return LatentMap(dense)

    def to_json(self) -> dict:
        return {"K": self.K, "classes": self.classes}

    @classmethod
    def from_json(cls, obj) -> "LatentMap":
        try:
            lm = cls.from_classes(obj["classes"])
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed latent map: {exc}") from None
        if "K" in obj and int(obj["K"]) != lm.K:
            raise DomainError(f"K={obj['K']} but {lm.K} classes listed")
        return lm

    @classmethod
    def load(cls, path) -> "LatentMap":
        return cls.from_json(json.loads(Path(path).read_text()))


def robust_min_type2(q: ArrayLike, alpha: float, eps: float, f: LatentMap) -> float:
    probs = as_categorical(q).probs
    if probs.size != f.size:
        raise DomainError("latent map does not cover the alphabet")
    totals = aggregate(probs, f.labels, f.K)
    return project_min_excess(totals / totals.sum(), alpha, eps).objective


def robust_projection(q: ArrayLike, alpha: float, eps: float, f: LatentMap) -> np.ndarray:
    """Outcome law within TV ``eps`` of ``q`` whose class totals are the projected ones.

    Mass is removed from or added to a class proportionally to its members, so
    the TV distance equals the movement of class totals.
    """
    probs = as_categorical(q).probs
    totals = aggregate(probs, f.labels, f.K)
    target = project_min_excess(totals / totals.sum(), alpha, eps).projected.probs
    out = probs.copy()
    for k, members in enumerate(f.classes):
        if totals[k] > 0:
            out[members] = probs[members] * (target[k] / totals[k])
        else:
            out[members] = target[k] / len(members)
    return out


def default_images(K: int) -> List[Image]:
    return [("class", k) for k in range(K)] + [("none",)]


def robust_detector(images: Sequence[Image], f: LatentMap) -> Detector:
    """``1{x = g(zeta) or f(x) = g(zeta)}`` as an acceptance matrix."""
    acc = np.zeros((f.size, len(images)), dtype=bool)
    for z, img in enumerate(images):
        if img[0] == "class":
            acc[:, z] = f.labels == img[1]
        elif img[0] == "token":
            acc[img[1], z] = True
        elif img[0] != "none":
            raise DomainError(f"unknown symbol image {img!r}")
    return Detector(acc)


def build_frobust_scheme(q: ArrayLike, alpha: float, eps: float, f: LatentMap,
                         images: Optional[Sequence[Image]] = None) -> JointScheme:
    """Joint law where each class keeps ``min(total, alpha)`` on class-level symbols.

    Accepted mass of a class is spread over its members in proportion to their
    probability and over the symbols that accept the whole class; a singleton
    class may instead use a token symbol.  The rest goes to redundant symbols.
    """
    images = list(default_images(f.K) if images is None else images)
    target = robust_projection(q, alpha, eps, f)
    totals = aggregate(target, f.labels, f.K)
    redundant = [z for z, img in enumerate(images) if img[0] == "none"]
    joint = np.zeros((f.size, len(images)))
    for k, members in enumerate(f.classes):
        carriers = [z for z, img in enumerate(images)
                    if (img[0] == "class" and img[1] == k)
                    or (img[0] == "token" and len(members) == 1 and img[1] == members[0])]
        if not carriers:
            raise DomainError(f"no auxiliary symbol accepts every member of class {k}")
        if totals[k] <= 0:
            continue
        keep = min(totals[k], alpha) / totals[k]
        for x in members:
            joint[x, carriers] = target[x] * keep / len(carriers)
            if keep < 1:
                if not redundant:
                    raise DomainError("mass above alpha needs at least one redundant symbol")
                joint[x, redundant] = target[x] * (1 - keep) / len(redundant)
    return JointScheme(joint)


def robust_errors(scheme: JointScheme, det: Detector, f: LatentMap) -> Tuple[float, float]:
    """Worst-case Type-I and Type-II errors against within-class substitution."""
    acc = det.accept
    if scheme.joint.shape != acc.shape or acc.shape[0] != f.size:
        raise DomainError("scheme, detector and latent map disagree in shape")
    best = np.zeros_like(acc)
    worst = np.zeros_like(acc)
    for x in range(f.size):
        cls = f.members(x)
        best[x] = acc[cls].any(axis=0)
        worst[x] = acc[cls].all(axis=0)
    type1 = float((best * scheme.marginal_aux[None, :]).sum(axis=1).max())
    type2 = float(1.0 - (scheme.joint * worst).sum())
    return type1, type2
