"""Set partitions as restricted-growth strings, and the partition-lattice Möbius function.

A partition of ``k`` slots is stored as a tuple ``r`` with ``r[0] == 0`` and
``r[i] <= max(r[:i]) + 1``; slots ``i`` and ``j`` share a block iff
``r[i] == r[j]``.  ``"0011"`` is the pattern (a=b)(c=d).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

__all__ = [
    "PatternClass",
    "enumerate_partitions",
    "rgs_of",
    "bell",
    "falling_factorial",
    "coarsenings",
    "mobius",
    "matchings",
]

MAX_SLOTS = 8


@dataclass(frozen=True, order=True)
class PatternClass:
    rgs: tuple[int, ...]

    @property
    def slot_count(self) -> int:
        return len(self.rgs)

    @property
    def block_count(self) -> int:
        return max(self.rgs) + 1 if self.rgs else 0

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.block_count)]
        for slot, b in enumerate(self.rgs):
            out[b].append(slot)
        return [tuple(b) for b in out]

    @property
    def key(self) -> str:
        return "".join(str(b) for b in self.rgs)

    @classmethod
    def from_key(cls, key: str) -> "PatternClass":
        return cls(tuple(int(c) for c in key))


def rgs_of(labels) -> tuple[int, ...]:
    """Canonical restricted-growth string of any label sequence."""
    seen: dict = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


@lru_cache(maxsize=None)
def _rgs_list(k: int) -> tuple[tuple[int, ...], ...]:
    out = []

    def rec(prefix, top):
        if len(prefix) == k:
            out.append(tuple(prefix))
            return
        for b in range(top + 2):
            prefix.append(b)
            rec(prefix, max(top, b))
            prefix.pop()

    rec([0], 0)
    return tuple(out)


def enumerate_partitions(k: int) -> list[PatternClass]:
    """All set partitions of ``k`` slots in lexicographic RGS order."""
    if not 1 <= k <= MAX_SLOTS:
        raise ValueError(f"slot count {k} outside 1..{MAX_SLOTS}")
    return [PatternClass(r) for r in _rgs_list(k)]


def bell(k: int) -> int:
    return len(_rgs_list(k)) if k else 1


def falling_factorial(D: int, p: int) -> int:
    """D (D-1) ... (D-p+1): number of ways to give ``p`` blocks distinct values in 1..D."""
    out = 1
    for i in range(p):
        out *= D - i
    return max(out, 0)


@lru_cache(maxsize=None)
def coarsenings(rgs: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Every partition at or above ``rgs`` in the lattice, with its Möbius value.

    Coarsening merges whole blocks.  Merging groups of n_1, n_2, ... blocks
    gives mu = prod (-1)^(n_i - 1) (n_i - 1)!.
    """
    nb = max(rgs) + 1
    out = []
    for merge in _rgs_list(nb):
        sizes: dict[int, int] = {}
        for g in merge:
            sizes[g] = sizes.get(g, 0) + 1
        mu = 1
        for n in sizes.values():
            mu *= (-1) ** (n - 1) * factorial(n - 1)
        out.append((rgs_of(merge[b] for b in rgs), mu))
    return tuple(out)


def mobius(lo: tuple[int, ...], hi: tuple[int, ...]) -> int:
    for p, mu in coarsenings(lo):
        if p == hi:
            return mu
    return 0


@lru_cache(maxsize=None)
def matchings(n: int) -> tuple[tuple[tuple[tuple[int, int], ...], tuple[int, ...]], ...]:
    """All partial matchings of ``n`` items as (pairs, unpaired) tuples."""
    out = []

    def rec(rest, pairs, single):
        if not rest:
            out.append((tuple(pairs), tuple(single)))
            return
        first, tail = rest[0], rest[1:]
        rec(tail, pairs, single + [first])
        for i, other in enumerate(tail):
            rec(tail[:i] + tail[i + 1:], pairs + [(first, other)], single)

    rec(list(range(n)), [], [])
    return tuple(out)
