"""Window-structured executions: sending phase, receiving phase, resets.

An :class:`Execution` holds the configuration and the message buffer.  It
advances only by whole acceptable windows.  Every window is folded into a
running SHA-256 digest, so two runs with the same inputs, thresholds, seed
and adversary produce the same digest.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import struct
from array import array
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, NamedTuple, Optional, Sequence

from .protocol import (
    Advance,
    CoinSource,
    ProcessorState,
    Thresholds,
    ThresholdError,
    VoteMessage,
    init_state,
    on_receive,
    on_reset,
    on_send,
    validate_thresholds,
)

if TYPE_CHECKING:
    from .adversaries import Adversary

__all__ = [
    "AcceptableWindow",
    "InvalidWindow",
    "WindowRecord",
    "Decision",
    "ExecutionTrace",
    "Execution",
    "new_execution",
    "validate_window",
    "apply_window",
    "run",
    "trace_digest",
    "EMPTY_DIGEST",
    "trace_to_json",
    "trace_from_json",
]

EMPTY_DIGEST = hashlib.sha256().hexdigest()


class InvalidWindow(ValueError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class AcceptableWindow:
    """One schedule unit.

    ``senders[i - 1]`` is the set S_i whose messages processor ``i`` receives,
    ``resets`` is R, and ``delivery_order`` lists ``(receiver, sender)`` pairs.
    ``crashed`` names permanently silent processors: their sending and
    receiving steps are no-ops.
    """

    senders: tuple[frozenset[int], ...]
    resets: frozenset[int] = frozenset()
    delivery_order: tuple[tuple[int, int], ...] = ()
    crashed: frozenset[int] = frozenset()

    @classmethod
    def canonical(cls, senders: Sequence[Iterable[int]], resets: Iterable[int] = (),
                  crashed: Iterable[int] = ()) -> "AcceptableWindow":
        """Window whose delivery order is receiver id, then sender id."""
        s = tuple(frozenset(x) for x in senders)
        order = tuple((i, j) for i, si in enumerate(s, 1) for j in sorted(si))
        return cls(s, frozenset(resets), order, frozenset(crashed))

    def with_resets(self, resets: Iterable[int]) -> "AcceptableWindow":
        return AcceptableWindow(self.senders, frozenset(resets), self.delivery_order,
                                self.crashed)

    def as_dict(self) -> dict:
        return {
            "S": [sorted(s) for s in self.senders],
            "R": sorted(self.resets),
            "delivery_order": [list(p) for p in self.delivery_order],
            "crashed": sorted(self.crashed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcceptableWindow":
        return cls(
            tuple(frozenset(s) for s in d["S"]),
            frozenset(d["R"]),
            tuple((int(i), int(j)) for i, j in d["delivery_order"]),
            frozenset(d.get("crashed", ())),
        )


def validate_window(w: AcceptableWindow, n: int, t: int) -> list[str]:
    """Names of violated acceptable-window constraints; empty means valid."""
    if len(w.senders) != n:
        return [f"expected {n} sender sets, got {len(w.senders)}"]
    bad = []
    for i, s in enumerate(w.senders, 1):
        if len(s) < n - t:
            bad.append(f"|S_{i}|={len(s)}<n-t={n - t}")
        if s and (min(s) < 1 or max(s) > n):
            bad.append(f"S_{i} has ids outside 1..{n}")
    if len(w.resets) > t:
        bad.append(f"|R|={len(w.resets)}>t={t}")
    if w.resets and (min(w.resets) < 1 or max(w.resets) > n):
        bad.append("R has ids outside 1..n")
    if len(w.crashed) > t:
        bad.append(f"|crashed|={len(w.crashed)}>t={t}")
    order = w.delivery_order
    required = sum(len(s) for s in w.senders)
    if len(order) != required or len(set(order)) != required or any(
            j not in w.senders[i - 1] for i, j in order if 1 <= i <= n):
        bad.append("delivery_order is not one pair per (i, s) with s in S_i")
    elif any(not 1 <= i <= n for i, _ in order):
        bad.append("delivery_order names a receiver outside 1..n")
    return bad


class Decision(NamedTuple):
    pid: int
    value: int
    window: int


@dataclass
class WindowRecord:
    window: AcceptableWindow
    sends: tuple[int, ...]
    advances: tuple[Advance, ...]

    def as_dict(self) -> dict:
        d = self.window.as_dict()
        d["sends"] = list(self.sends)
        d["advances"] = [list(a) for a in self.advances]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WindowRecord":
        return cls(
            AcceptableWindow.from_dict(d),
            tuple(d["sends"]),
            tuple(Advance(*a) for a in d["advances"]),
        )


@dataclass
class ExecutionTrace:
    n: int
    t: int
    thresholds: Thresholds
    inputs: tuple[int, ...]
    seed: int
    adversary: str = ""
    windows: list[WindowRecord] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    window_count: int = 0
    digest: str = EMPTY_DIGEST

    @property
    def windows_to_decision(self) -> Optional[int]:
        return self.decisions[0].window if self.decisions else None

    @property
    def decision_value(self) -> Optional[int]:
        return self.decisions[0].value if self.decisions else None


def trace_digest(trace: ExecutionTrace) -> str:
    return trace.digest


class Execution:
    """Global configuration, message buffer and trace of one seeded run."""

    def __init__(self, inputs: Sequence[int], thresholds: Thresholds, seed: int,
                 keep_windows: bool = True):
        n = thresholds.n
        self.thresholds = thresholds
        self.seed = seed
        self.config: list[ProcessorState] = [init_state(p, b, n) for p, b in enumerate(inputs, 1)]
        self.buffer: dict[tuple[int, int], VoteMessage] = {}
        self.crashed: frozenset[int] = frozenset()
        self.window_index = 0
        self.keep_windows = keep_windows
        self.coins = CoinSource(seed)
        self.trace = ExecutionTrace(n, thresholds.t, thresholds, tuple(inputs), seed)
        self._hash = hashlib.sha256()

    @property
    def n(self) -> int:
        return self.thresholds.n

    @property
    def t(self) -> int:
        return self.thresholds.t

    def state(self, pid: int) -> ProcessorState:
        return self.config[pid - 1]

    def pending_votes(self) -> dict[int, tuple[int, int]]:
        """``pid -> (round, bit)`` for every processor whose next send emits a vote."""
        return {
            s.pid: (s.round, s.x) for s in self.config
            if s.pending_send and not s.catch_up and s.pid not in self.crashed
        }

    def apply_window(self, w: AcceptableWindow,
                     choose_resets: Optional[Callable[["Execution"], Optional[Iterable[int]]]] = None,
                     ) -> WindowRecord:
        """Run one acceptable window.

        ``choose_resets`` lets an adaptive adversary name R after the receiving
        phase, with the coins of this window already visible to it.
        """
        n, t, th = self.n, self.t, self.thresholds
        bad = validate_window(w, n, t)
        if not self.crashed <= w.crashed:
            bad.append("crashed processors cannot recover")
        if bad:
            raise InvalidWindow(bad)
        crashed = w.crashed
        self.crashed = crashed
        config = self.config

        buffer = self.buffer
        sends = []
        for st in config:
            if st.pid in crashed:
                sends.append(0)
                continue
            msgs = on_send(st, n)
            sends.append(len(msgs))
            for m in msgs:
                buffer[(m.receiver, m.sender)] = m

        advances = []
        coin = self.coins
        pop = buffer.pop
        for pair in w.delivery_order:
            m = pop(pair, None)
            if m is None:
                continue
            st = config[pair[0] - 1]
            if crashed and st.pid in crashed:
                continue
            adv = on_receive(st, m, th, coin)
            if adv is not None:
                advances.append(adv)
        # omitted messages never arrive
        buffer.clear()

        if choose_resets is not None:
            chosen = choose_resets(self)
            if chosen is not None:
                w = w.with_resets(chosen)
                if len(w.resets) > t or any(not 1 <= p <= n for p in w.resets):
                    raise InvalidWindow([f"adaptive reset set {sorted(w.resets)} is invalid"])
        for p in sorted(w.resets):
            on_reset(config[p - 1])

        self.window_index += 1
        record = WindowRecord(w, tuple(sends), tuple(advances))
        trace = self.trace
        for a in advances:
            if a.decided is not None:
                trace.decisions.append(Decision(a.pid, a.decided, self.window_index))
        if self.keep_windows:
            trace.windows.append(record)
        trace.window_count = self.window_index
        self._fold(record)
        trace.digest = self._hash.hexdigest()
        return record

    def _fold(self, rec: WindowRecord) -> None:
        w = rec.window
        h = self._hash
        h.update(struct.pack("<Q", self.window_index))
        h.update(array("Q", [sum(1 << (j - 1) for j in s) for s in w.senders]).tobytes())
        h.update(struct.pack("<QQ", sum(1 << (j - 1) for j in w.resets),
                             sum(1 << (j - 1) for j in w.crashed)))
        h.update(array("H", itertools.chain.from_iterable(w.delivery_order)).tobytes())
        h.update(array("H", rec.sends).tobytes())
        h.update(repr([tuple(a) for a in rec.advances]).encode())
        h.update(repr([s.snapshot() for s in self.config]).encode())


def new_execution(n: int, t: int, inputs: Sequence[int], th: Thresholds, seed: int,
                  keep_windows: bool = True) -> Execution:
    if len(inputs) != n:
        raise ValueError(f"expected {n} inputs, got {len(inputs)}")
    if any(b not in (0, 1) for b in inputs):
        raise ValueError("inputs must be bits")
    if th.n != n or th.t != t:
        raise ThresholdError(f"thresholds are for (n={th.n}, t={th.t}), not ({n}, {t})")
    bad = validate_thresholds(th)
    if bad:
        raise ThresholdError(", ".join(bad))
    return Execution(inputs, th, seed, keep_windows)


def apply_window(execution: Execution, w: AcceptableWindow) -> Execution:
    execution.apply_window(w)
    return execution


def run(execution: Execution, adversary: "Adversary", max_windows: int) -> ExecutionTrace:
    """Ask the adversary for windows until one contains a decision or the budget ends."""
    if max_windows < 1:
        raise ValueError("max_windows must be at least 1")
    execution.trace.adversary = adversary.name
    for _ in range(max_windows):
        w = adversary.next_window(execution)
        try:
            rec = execution.apply_window(w, adversary.choose_resets)
        except InvalidWindow as exc:
            raise InvalidWindow([f"adversary {adversary.name!r} at window "
                                 f"{execution.window_index + 1}: {v}" for v in exc.violations]) from None
        if any(a.decided is not None for a in rec.advances):
            break
    return execution.trace


def trace_to_json(trace: ExecutionTrace) -> str:
    doc = {
        "n": trace.n,
        "t": trace.t,
        "thresholds": trace.thresholds.as_dict(),
        "inputs": list(trace.inputs),
        "seed": trace.seed,
        "adversary": trace.adversary,
        "window_count": trace.window_count,
        "windows": [w.as_dict() for w in trace.windows],
        "decisions": [{"pid": d.pid, "value": d.value, "window": d.window}
                      for d in trace.decisions],
        "digest": trace.digest,
    }
    return json.dumps(doc, separators=(",", ":"))


def trace_from_json(text: str) -> ExecutionTrace:
    doc = json.loads(text)
    th = doc["thresholds"]
    return ExecutionTrace(
        n=doc["n"],
        t=doc["t"],
        thresholds=Thresholds(th["n"], th["t"], th["T1"], th["T2"], th["T3"]),
        inputs=tuple(doc["inputs"]),
        seed=doc["seed"],
        adversary=doc["adversary"],
        windows=[WindowRecord.from_dict(w) for w in doc["windows"]],
        decisions=[Decision(d["pid"], d["value"], d["window"]) for d in doc["decisions"]],
        window_count=doc["window_count"],
        digest=doc["digest"],
    )
