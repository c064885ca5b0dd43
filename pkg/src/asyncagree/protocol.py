"""Threshold randomized binary agreement with reset detection.

Each processor loops: broadcast ``(round, x)``, wait for ``T1`` votes of its
current round, decide on ``T2`` matching votes, adopt on ``T3`` matching
votes (otherwise flip a fair coin), advance the round.  A processor whose
memory was erased sits in catch-up mode until some round collects ``T1``
votes, then rejoins at that round.

Transitions mutate the :class:`ProcessorState` they are given.  Callers that
need the previous value (tests, fuzzers) copy it first.
"""
from __future__ import annotations

import copy
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

__all__ = [
    "Thresholds",
    "ThresholdError",
    "MisroutedMessage",
    "ProcessorState",
    "VoteMessage",
    "Advance",
    "CoinSource",
    "validate_thresholds",
    "default_thresholds",
    "init_state",
    "on_send",
    "on_receive",
    "on_reset",
    "tally",
]


class ThresholdError(ValueError):
    pass


class MisroutedMessage(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    n: int
    t: int
    t1: int
    t2: int
    t3: int

    def as_dict(self) -> dict:
        return {"n": self.n, "t": self.t, "T1": self.t1, "T2": self.t2, "T3": self.t3}


def validate_thresholds(th: Thresholds) -> list[str]:
    """Return the names of every violated constraint; empty means valid."""
    bad = []
    for name in ("n", "t", "t1", "t2", "t3"):
        if getattr(th, name) < 1:
            bad.append(f"{name}>=1")
    if not 6 * th.t < th.n:
        bad.append("6t<n")
    if not th.n - 2 * th.t >= th.t1:
        bad.append("n-2t>=T1")
    if not th.t1 >= th.t2:
        bad.append("T1>=T2")
    if not th.t2 >= th.t3 + th.t:
        bad.append("T2>=T3+t")
    if not 2 * th.t3 > th.n:
        bad.append("2T3>n")
    return bad


def default_thresholds(n: int, t: int) -> Thresholds:
    if t < 1 or not 6 * t < n:
        raise ThresholdError(f"need 1 <= t and 6t < n, got n={n}, t={t}")
    th = Thresholds(n, t, n - 2 * t, n - 2 * t, n - 3 * t)
    assert not validate_thresholds(th)
    return th


class VoteMessage(NamedTuple):
    sender: int
    receiver: int
    round: int
    value: int


@dataclass
class ProcessorState:
    pid: int
    input: int
    output: Optional[int] = None
    round: Optional[int] = 1
    x: Optional[int] = None
    reset_count: int = 0
    catch_up: bool = False
    # round -> {sender: bit}; dict order is arrival order
    inbox: dict[int, dict[int, int]] = field(default_factory=dict)
    pending_send: bool = True

    def clone(self) -> "ProcessorState":
        return copy.deepcopy(self)

    def snapshot(self) -> tuple:
        """Hashable view of the full state, used for digests and equality checks."""
        inbox = tuple((r, tuple(v.items())) for r, v in sorted(self.inbox.items()))
        return (self.pid, self.input, self.output, self.round, self.x,
                self.reset_count, self.catch_up, inbox, self.pending_send)


class Advance(NamedTuple):
    """What happened when a processor completed a round (steps 3 and 4)."""

    pid: int
    round: int
    c0: int
    c1: int
    x: int
    coin: bool
    decided: Optional[int]
    from_catch_up: bool


class CoinSource:
    """Counter-based fair coins keyed on ``(pid, round, k)``.

    ``k`` counts earlier draws by the same processor for the same round, so
    every draw is fresh even if a reset processor rejoins a round it already
    finished.  The counter belongs to the environment, not to the processor,
    and survives resets.  Executions that share a seed see the same coin for
    the same processor and round, which couples paired runs under different
    schedulers.
    """

    def __init__(self, seed: int):
        self.seed = seed
        key = (seed % 2**64).to_bytes(8, "little")
        self._base = hashlib.blake2b(digest_size=8, key=key, person=b"coins")
        self._draws: dict[tuple[int, int], int] = {}

    def bit(self, pid: int, rnd: int, k: int = 0) -> int:
        """The ``k``-th coin of processor ``pid`` in round ``rnd``; no side effects."""
        h = self._base.copy()
        h.update(struct.pack("<QQQ", pid, rnd, k))
        return h.digest()[0] & 1

    def flip(self, pid: int, rnd: int) -> int:
        k = self._draws.get((pid, rnd), 0)
        self._draws[(pid, rnd)] = k + 1
        return self.bit(pid, rnd, k)

    __call__ = flip


Coin = Callable[[int, int], int]


def init_state(pid: int, input_bit: int, n: int) -> ProcessorState:
    if not 1 <= pid <= n:
        raise ValueError(f"processor id {pid} outside 1..{n}")
    if input_bit not in (0, 1):
        raise ValueError(f"input must be a bit, got {input_bit!r}")
    return ProcessorState(pid=pid, input=input_bit, x=input_bit)


def on_send(state: ProcessorState, n: int) -> list[VoteMessage]:
    """Sending step.  A second send with nothing in between is a no-op."""
    if not state.pending_send:
        return []
    state.pending_send = False
    if state.catch_up:
        return []
    pid, r, x = state.pid, state.round, state.x
    return [VoteMessage(pid, q, r, x) for q in range(1, n + 1)]


def tally(votes: Sequence[int], k: int) -> tuple[int, int]:
    """Counts of 0s and 1s among the first ``k`` votes."""
    if k > len(votes):
        raise ValueError(f"cannot tally {k} of {len(votes)} votes")
    ones = sum(votes[:k])
    return k - ones, ones


def _complete_round(state: ProcessorState, rnd: int, th: Thresholds, coin: Coin,
                    from_catch_up: bool) -> Advance:
    votes = list(state.inbox[rnd].values())
    c0, c1 = tally(votes, th.t1)
    decided = None
    if state.output is None:
        if c0 >= th.t2:
            decided = 0
        elif c1 >= th.t2:
            decided = 1
        if decided is not None:
            state.output = decided
    if c0 >= th.t3:
        x, flipped = 0, False
    elif c1 >= th.t3:
        x, flipped = 1, False
    else:
        x, flipped = coin(state.pid, rnd), True
    state.x = x
    state.round = rnd + 1
    state.inbox = {r: v for r, v in state.inbox.items() if r > rnd}
    return Advance(state.pid, rnd, c0, c1, x, flipped, decided, from_catch_up)


def on_receive(state: ProcessorState, msg: VoteMessage, th: Thresholds,
               coin: Coin) -> Optional[Advance]:
    """Receiving step.  Returns an :class:`Advance` when the vote completes a round."""
    if msg.receiver != state.pid:
        raise MisroutedMessage(f"message for {msg.receiver} delivered to {state.pid}")
    state.pending_send = True
    inbox = state.inbox
    if state.catch_up:
        votes = inbox.setdefault(msg.round, {})
        if msg.sender not in votes:
            votes[msg.sender] = msg.value
        ready = [r for r, v in inbox.items() if len(v) >= th.t1]
        if not ready:
            return None
        state.catch_up = False
        return _complete_round(state, max(ready), th, coin, True)

    r = state.round
    if msg.round < r:
        return None
    votes = inbox.get(msg.round)
    if votes is None:
        votes = inbox[msg.round] = {}
    if msg.sender not in votes:
        votes[msg.sender] = msg.value
    current = inbox.get(r)
    if current is not None and len(current) >= th.t1:
        return _complete_round(state, r, th, coin, False)
    return None


def on_reset(state: ProcessorState) -> ProcessorState:
    """Erase everything except identity, input, output and the reset counter."""
    state.round = None
    state.x = None
    state.inbox = {}
    state.catch_up = True
    state.reset_count += 1
    state.pending_send = True
    return state
