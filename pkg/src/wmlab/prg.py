"""Keyed pseudorandomness shared by generation and detection.

* :func:`derive_aux_alphabet` turns a key into the token-to-symbol bijection.
* :func:`seed_from_context` hashes a context window with the key.
* :func:`gumbel_vector` expands a seed into standard Gumbel variates.

Seeds are the first 8 bytes (big-endian) of a 128-bit BLAKE2b digest of
``len(window) (1 byte) || big-endian uint32 token ids || key``.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .dist import ArrayLike
from .errors import DomainError

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class WatermarkKey:
    """Shared secret; 16 to 64 opaque bytes."""

    secret: bytes = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.secret, (bytes, bytearray)):
            raise DomainError("key material must be bytes")
        if not 16 <= len(self.secret) <= 64:
            raise DomainError(f"key must be 16-64 bytes, got {len(self.secret)}")
        object.__setattr__(self, "secret", bytes(self.secret))

    @classmethod
    def from_hex(cls, text: str) -> "WatermarkKey":
        try:
            return cls(bytes.fromhex(text.strip()))
        except ValueError as exc:
            raise DomainError(f"malformed hex key: {exc}") from None

    @classmethod
    def from_seed(cls, seed: int) -> "WatermarkKey":
        """Deterministic 32-byte key for experiments."""
        return cls(hashlib.blake2b(b"wmlab-key" + struct.pack(">Q", seed & MASK64), digest_size=32).digest())

    @classmethod
    def generate(cls) -> "WatermarkKey":
        return cls(os.urandom(32))

    def hex(self) -> str:
        return self.secret.hex()

    def child(self, index: int) -> "WatermarkKey":
        """Independent-looking key for the ``index``-th sequence of an experiment."""
        body = b"wmlab-child" + struct.pack(">Q", index & MASK64) + self.secret
        return WatermarkKey(hashlib.blake2b(body, digest_size=32).digest())


def _stream(seed: int):
    """Infinite 64-bit counter stream; used where a few draws per key suffice."""
    i = 0
    while True:
        yield kernels.mix64((seed + (i + 1) * 0x9E3779B97F4A7C15) & MASK64)
        i += 1


@dataclass(frozen=True)
class AuxAlphabet:
    """Tokens ``0..m-1`` mapped to symbols by ``perm``; symbol ``m`` is redundant."""

    perm: np.ndarray
    inv_perm: np.ndarray = field(repr=False)

    @property
    def vocab_size(self) -> int:
        return int(self.perm.size)

    @property
    def size(self) -> int:
        return int(self.perm.size) + 1

    @property
    def redundant_id(self) -> int:
        return int(self.perm.size)

    def h(self, x: int) -> int:
        return int(self.perm[x])

    def g(self, zeta: int) -> int:
        if not 0 <= zeta < self.perm.size:
            raise DomainError(f"symbol {zeta} has no preimage")
        return int(self.inv_perm[zeta])

    @classmethod
    def from_permutation(cls, perm: Sequence[int]) -> "AuxAlphabet":
        perm = np.asarray(perm, dtype=np.int64)
        m = perm.size
        if m < 2 or not np.array_equal(np.sort(perm), np.arange(m)):
            raise DomainError("perm must be a permutation of 0..m-1 with m >= 2")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(m, dtype=np.int64)
        perm.flags.writeable = False
        inv.flags.writeable = False
        return cls(perm=perm, inv_perm=inv)


def derive_aux_alphabet(key: WatermarkKey, vocab_size: int) -> AuxAlphabet:
    """Keyed Fisher-Yates shuffle of the vocabulary."""
    if vocab_size < 2:
        raise DomainError("vocab_size must be at least 2")
    digest = hashlib.blake2b(
        b"aux-perm" + struct.pack(">I", vocab_size) + key.secret, digest_size=16
    ).digest()
    stream = _stream(int.from_bytes(digest[:8], "big"))
    perm = list(range(vocab_size))
    for i in range(vocab_size - 1, 0, -1):
        # 64-bit multiply-shift; bias is below 2**-40 for any realistic vocabulary
        j = (next(stream) * (i + 1)) >> 64
        perm[i], perm[j] = perm[j], perm[i]
    return AuxAlphabet.from_permutation(perm)


def seed_from_context(key: WatermarkKey, context: Sequence[int]) -> int:
    window = [int(t) for t in context]
    if len(window) > 255:
        raise DomainError("context windows are limited to 255 tokens")
    try:
        body = struct.pack(f">B{len(window)}I", len(window), *window)
    except struct.error:
        raise DomainError(f"token ids must fit in 32 bits: {window}") from None
    digest = hashlib.blake2b(body + key.secret, digest_size=16).digest()
    return int.from_bytes(digest[:8], "big")


def context_window(tokens: Sequence[int], t: int, n: int) -> Sequence[int]:
    """The up-to-``n`` tokens preceding position ``t``."""
    return tokens[max(0, t - n):t]


def gumbel_vector(seed: int, size: int) -> np.ndarray:
    if size < 1:
        raise DomainError("size must be positive")
    return kernels.gumbel_vector(int(seed) & MASK64, int(size))


def uniform_vector(seed: int, size: int) -> np.ndarray:
    """The uniform deviates underlying :func:`gumbel_vector`."""
    if size < 1:
        raise DomainError("size must be positive")
    return kernels.uniform_vector(int(seed) & MASK64, int(size))


def gumbel_argmax(p: ArrayLike, g: np.ndarray) -> int:
    """``argmax log p + g`` over the support of ``p``; ties go to the smallest id."""
    probs = p.probs if hasattr(p, "probs") else np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if probs.shape != g.shape:
        raise DomainError(f"size mismatch: {probs.shape} vs {g.shape}")
    support = probs > 0
    if not support.any():
        raise DomainError("gumbel_argmax needs at least one positive mass")
    with np.errstate(divide="ignore"):
        scores = np.where(support, np.log(np.where(support, probs, 1.0)) + g, -np.inf)
    return int(np.argmax(scores))


def gumbel_argmax_seeded(p: ArrayLike, seed: int) -> int:
    """Fused seed-to-choice draw; the path used by generation and detection."""
    probs = np.ascontiguousarray(p.probs if hasattr(p, "probs") else p, dtype=np.float64)
    choice = kernels.gumbel_argmax_seeded(probs, int(seed) & MASK64)
    if choice < 0:
        raise DomainError("gumbel_argmax needs at least one positive mass")
    return int(choice)
