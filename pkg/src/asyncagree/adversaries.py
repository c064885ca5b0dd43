"""Schedulers that pick the next acceptable window with full read access.

Adversaries are stateful (they own a private RNG), so build a fresh one per
run.  ``next_window`` sees the execution before the sending phase;
``choose_resets`` sees it again after the receiving phase and may replace
the window's reset set.
"""
from __future__ import annotations

import random
from collections import Counter
from typing import Iterable, Optional

from .simnet import AcceptableWindow, Execution

__all__ = [
    "Adversary",
    "FairAdversary",
    "RandomAdversary",
    "SplitVoteAdversary",
    "CrashAdversary",
    "fair_adversary",
    "random_adversary",
    "splitvote_adversary",
    "crash_adversary",
    "ADVERSARY_NAMES",
    "make_adversary",
    "balanced_split",
]

ADVERSARY_NAMES = ("fair", "random", "splitvote", "splitvote-reset", "crash")


class Adversary:
    name = "adversary"

    def next_window(self, ex: Execution) -> AcceptableWindow:
        raise NotImplementedError

    def choose_resets(self, ex: Execution) -> Optional[frozenset[int]]:
        return None


class FairAdversary(Adversary):
    """Full delivery in canonical order, no resets."""

    name = "fair"

    def __init__(self):
        self._cache: dict[int, AcceptableWindow] = {}

    def next_window(self, ex: Execution) -> AcceptableWindow:
        w = self._cache.get(ex.n)
        if w is None:
            everyone = range(1, ex.n + 1)
            w = self._cache[ex.n] = AcceptableWindow.canonical([everyone] * ex.n)
        return w


class RandomAdversary(Adversary):
    name = "random"

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def next_window(self, ex: Execution) -> AcceptableWindow:
        n, t, rng = ex.n, ex.t, self.rng
        ids = range(1, n + 1)
        senders = tuple(frozenset(rng.sample(ids, n - t)) for _ in ids)
        resets = frozenset(rng.sample(ids, rng.randint(0, t)))
        order = [(i, j) for i, s in enumerate(senders, 1) for j in sorted(s)]
        rng.shuffle(order)
        return AcceptableWindow(senders, resets, tuple(order))


def balanced_split(need: int, zeros: int, ones: int, e0: int = 0, e1: int = 0) -> tuple[int, int]:
    """How many 0- and 1-votes to deliver next so the tally is as even as possible.

    ``e0``/``e1`` are votes already counted.  Returns ``(k0, k1)`` with
    ``k0 + k1 = min(need, zeros + ones)`` minimizing ``max(e0 + k0, e1 + k1)``.
    """
    if zeros + ones <= need:
        return zeros, ones
    lo, hi = max(0, need - ones), min(zeros, need)
    best = None
    for k0 in {min(hi, max(lo, (e1 + need - e0) // 2)),
               min(hi, max(lo, (e1 + need - e0 + 1) // 2))}:
        key = (max(e0 + k0, e1 + need - k0), k0)
        if best is None or key < best:
            best = key
    k0 = best[1]
    return k0, need - k0


class SplitVoteAdversary(Adversary):
    """Shows every receiver a near-even split of its first ``T1`` votes.

    With ``use_resets`` it also erases up to ``t`` holders of the more common
    bit (lowest ids first) at the end of each window, after the coins of
    that window are visible.
    """

    def __init__(self, seed: int, use_resets: bool = False):
        self.rng = random.Random(seed)
        self.use_resets = use_resets
        self.name = "splitvote-reset" if use_resets else "splitvote"

    def next_window(self, ex: Execution) -> AcceptableWindow:
        n, t, th, rng = ex.n, ex.t, ex.thresholds, self.rng
        votes = ex.pending_votes()
        counts = Counter(b for _, b in votes.values())
        majority = 1 if counts[1] >= counts[0] else 0
        ids = range(1, n + 1)
        # omission preference: majority voters, then minority voters, then silent ones
        rank = {s: (0 if s in votes and votes[s][1] == majority else 1 if s in votes else 2, s)
                for s in ids}
        by_round: dict[int, tuple[list[int], list[int]]] = {}
        for s, (r, b) in votes.items():
            by_round.setdefault(r, ([], []))[b].append(s)
        for zeros, ones in by_round.values():
            rng.shuffle(zeros)
            rng.shuffle(ones)
        round_sizes = Counter({r: len(z) + len(o) for r, (z, o) in by_round.items()})

        senders, order = [], []
        for i in ids:
            st = ex.state(i)
            if st.catch_up:
                target = max(round_sizes, key=lambda r: (round_sizes[r], r), default=None)
            else:
                target = st.round
            existing = st.inbox.get(target, {})
            e1 = sum(existing.values())
            e0 = len(existing) - e1
            zeros, ones = by_round.get(target, ([], []))
            if existing:
                zeros = [s for s in zeros if s not in existing]
                ones = [s for s in ones if s not in existing]
            k0, k1 = balanced_split(max(0, th.t1 - len(existing)), len(zeros), len(ones), e0, e1)
            first = zeros[:k0] + ones[:k1]
            chosen = set(first)
            rest = sorted((s for s in ids if s not in chosen), key=rank.__getitem__)
            kept = sorted(rest[t:])
            senders.append(frozenset(first) | frozenset(kept))
            order.extend((i, s) for s in first)
            order.extend((i, s) for s in kept)
        return AcceptableWindow(tuple(senders), frozenset(), tuple(order), ex.crashed)

    def choose_resets(self, ex: Execution) -> Optional[frozenset[int]]:
        if not self.use_resets:
            return None
        return majority_holders(ex, ex.t)


def majority_holders(ex: Execution, k: int) -> frozenset[int]:
    """The ``k`` lowest-id processors holding the more common current bit (1 on ties)."""
    live = [s for s in ex.config if s.x is not None and s.pid not in ex.crashed]
    ones = sum(s.x for s in live)
    majority = 1 if 2 * ones >= len(live) else 0
    return frozenset(sorted(s.pid for s in live if s.x == majority)[:k])


class CrashAdversary(Adversary):
    """Processors in ``crashed`` are silent from the first window on."""

    name = "crash"

    def __init__(self, crashed: Iterable[int], t: Optional[int] = None):
        self.crashed = frozenset(crashed)
        if t is not None and len(self.crashed) > t:
            raise ValueError(f"cannot crash {len(self.crashed)} > t={t} processors")

    def next_window(self, ex: Execution) -> AcceptableWindow:
        if len(self.crashed) > ex.t:
            raise ValueError(f"cannot crash {len(self.crashed)} > t={ex.t} processors")
        live = [p for p in range(1, ex.n + 1) if p not in self.crashed]
        return AcceptableWindow.canonical([live] * ex.n, crashed=self.crashed)


def fair_adversary() -> FairAdversary:
    return FairAdversary()


def random_adversary(seed: int) -> RandomAdversary:
    return RandomAdversary(seed)


def splitvote_adversary(seed: int, use_resets: bool) -> SplitVoteAdversary:
    return SplitVoteAdversary(seed, use_resets)


def crash_adversary(crashed: Iterable[int], t: Optional[int] = None) -> CrashAdversary:
    return CrashAdversary(crashed, t)


def make_adversary(name: str, n: int, t: int, seed: int) -> Adversary:
    """Build an adversary by CLI name.  ``crash`` silences the ``t`` highest ids."""
    if name == "fair":
        return FairAdversary()
    if name == "random":
        return RandomAdversary(seed)
    if name == "splitvote":
        return SplitVoteAdversary(seed, use_resets=False)
    if name == "splitvote-reset":
        return SplitVoteAdversary(seed, use_resets=True)
    if name == "crash":
        return CrashAdversary(range(n - t + 1, n + 1), t)
    raise ValueError(f"unknown adversary {name!r}; choose from {', '.join(ADVERSARY_NAMES)}")
