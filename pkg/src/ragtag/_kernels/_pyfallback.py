"""Pure-Python kernels: trigram hash embedding and exact cosine top-k scans.

This module is the reference implementation. The compiled extension in
``_native.pyx`` mirrors it operation for operation, in the same floating-point
order, so both backends produce bit-identical vectors and scores.
"""

from __future__ import annotations

import math
from typing import Sequence

BACKEND = "python"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Synthetic boundary codepoints padding the trigram window, so one- and
# two-character inputs still produce at least one trigram.
_STX = 0x02
_ETX = 0x03


def _mix(h: int, value: int) -> int:
    return ((h ^ value) * _FNV_PRIME) & _MASK64


def hash_embed(text: str, dim: int, seed: int) -> list[float]:
    """Feature-hash character trigrams of ``text`` into a unit-norm vector.

    Each trigram is FNV-1a hashed together with ``seed``; the hash picks a
    bucket (low bits) and a sign (top bit). If signed counts cancel to the
    zero vector, the hash is re-salted deterministically until they do not.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if not text:
        raise ValueError("text must be non-empty")
    cps = [_STX] + [ord(ch) for ch in text] + [_ETX]
    n_grams = len(cps) - 2
    salt = 0
    while True:
        acc = [0.0] * dim
        for i in range(n_grams):
            h = _mix(_FNV_OFFSET, seed)
            h = _mix(h, salt)
            h = _mix(h, cps[i])
            h = _mix(h, cps[i + 1])
            h = _mix(h, cps[i + 2])
            if (h >> 63) & 1:
                acc[h % dim] -= 1.0
            else:
                acc[h % dim] += 1.0
        ss = 0.0
        for v in acc:
            ss += v * v
        if ss > 0.0:
            break
        salt += 1
    norm = math.sqrt(ss)
    return [v / norm for v in acc]


class Index:
    """Dense row store supporting exact cosine scoring against a query."""

    def __init__(self, vectors: Sequence[Sequence[float]]):
        if not vectors:
            raise ValueError("vectors must be non-empty")
        dim = len(vectors[0])
        if dim == 0:
            raise ValueError("vectors must have positive dimension")
        rows: list[list[float]] = []
        norms: list[float] = []
        for i, vec in enumerate(vectors):
            if len(vec) != dim:
                raise ValueError(f"row {i} has dimension {len(vec)}, expected {dim}")
            row = [float(x) for x in vec]
            ss = 0.0
            for x in row:
                ss += x * x
            if ss == 0.0:
                raise ValueError(f"zero vector at row {i}")
            rows.append(row)
            norms.append(math.sqrt(ss))
        self._rows = rows
        self._norms = norms
        self._dim = dim

    @property
    def n(self) -> int:
        return len(self._rows)

    @property
    def dim(self) -> int:
        return self._dim

    def _query_norm(self, query: Sequence[float]) -> float:
        if len(query) != self._dim:
            raise ValueError(f"query has dimension {len(query)}, expected {self._dim}")
        ss = 0.0
        for x in query:
            ss += x * x
        if ss == 0.0:
            raise ValueError("query is the zero vector")
        return math.sqrt(ss)

    def score_all(self, query: Sequence[float]) -> list[float]:
        """Cosine similarity of ``query`` against every row, in row order."""
        q = [float(x) for x in query]
        q_norm = self._query_norm(q)
        dim = self._dim
        out = []
        for row, r_norm in zip(self._rows, self._norms):
            s = 0.0
            for j in range(dim):
                s += row[j] * q[j]
            s = s / (r_norm * q_norm)
            # Rounding can push identical vectors a last-place unit past 1;
            # a cosine is clamped to its mathematical range.
            if s > 1.0:
                s = 1.0
            elif s < -1.0:
                s = -1.0
            out.append(s)
        return out

    def top_k(self, query: Sequence[float], k: int) -> list[tuple[int, float]]:
        """The ``k`` best rows by cosine score, ties broken by row order."""
        if k <= 0:
            raise ValueError("k must be positive")
        scores = self.score_all(query)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return [(i, scores[i]) for i in order[:k]]
