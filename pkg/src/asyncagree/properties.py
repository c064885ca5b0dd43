"""Correctness/termination checkers and the seeded Monte-Carlo harness."""
from __future__ import annotations

import csv
import io
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .adversaries import ADVERSARY_NAMES, make_adversary
from .protocol import (
    ProcessorState,
    Thresholds,
    ThresholdError,
    VoteMessage,
    default_thresholds,
    on_send,
)
from .seeding import derive_seed
from .simnet import ExecutionTrace, new_execution, run

__all__ = [
    "PropertyReport",
    "TrialRow",
    "SummaryRow",
    "check_agreement",
    "check_validity",
    "check_no_conflicting_adoption",
    "check_forgetful",
    "check_fully_communicative",
    "fully_communicative_suite",
    "make_inputs",
    "run_trial",
    "run_trials",
    "summarize",
    "estimate_termination",
    "agreement_suite",
    "scaling_experiment",
    "fault_budget",
    "write_trials_csv",
    "write_summary_csv",
    "TRIAL_FIELDS",
    "SUMMARY_FIELDS",
]


@dataclass
class PropertyReport:
    name: str
    passed: bool
    counterexample: Optional[dict] = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.passed and self.counterexample is None:
            raise ValueError("a failing report needs a counterexample")

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = ", ".join(f"{k}={v}" for k, v in self.stats.items() if not isinstance(v, (list, dict)))
        return f"{verdict} {self.name}" + (f" ({extra})" if extra else "")


def check_agreement(trace: ExecutionTrace) -> PropertyReport:
    first: dict[int, object] = {}
    for d in trace.decisions:
        other = first.get(1 - d.value)
        if other is not None:
            return PropertyReport("agreement", False, {
                "digest": trace.digest, "event": [tuple(other), tuple(d)]})
        first.setdefault(d.value, d)
    return PropertyReport("agreement", True)


def check_validity(trace: ExecutionTrace) -> PropertyReport:
    inputs = set(trace.inputs)
    for d in trace.decisions:
        if d.value not in inputs:
            return PropertyReport("validity", False, {
                "digest": trace.digest, "event": tuple(d), "inputs": list(trace.inputs)})
    return PropertyReport("validity", True)


def check_no_conflicting_adoption(trace: ExecutionTrace) -> PropertyReport:
    """No round has one processor adopting 0 and another adopting 1 via the T3 rule."""
    for k, rec in enumerate(trace.windows, 1):
        seen: dict[int, tuple] = {}
        for a in rec.advances:
            if a.coin:
                continue
            prior = seen.setdefault(a.round, a)
            if prior.x != a.x:
                return PropertyReport("no-conflicting-adoption", False, {
                    "digest": trace.digest, "window": k, "event": [tuple(prior), tuple(a)]})
    return PropertyReport("no-conflicting-adoption", True)


def check_fully_communicative(trace: ExecutionTrace) -> PropertyReport:
    """Every processor that finished a round normally broadcasts to all n next window."""
    n = trace.n
    checked = 0
    for k in range(len(trace.windows) - 1):
        rec, nxt = trace.windows[k], trace.windows[k + 1]
        for a in rec.advances:
            if a.from_catch_up or a.pid in rec.window.resets or a.pid in nxt.window.crashed:
                continue
            checked += 1
            if nxt.sends[a.pid - 1] != n:
                return PropertyReport("fully-communicative", False, {
                    "digest": trace.digest, "window": k + 2, "pid": a.pid,
                    "sent": nxt.sends[a.pid - 1]}, {"checked": checked})
    return PropertyReport("fully-communicative", True, stats={"checked": checked})


def fully_communicative_suite(traces: int, seed: int, max_windows: int = 12) -> PropertyReport:
    """Run ``check_fully_communicative`` over seeded traces of mixed size and adversary."""
    checked = 0
    for k in range(traces):
        n = 7 + k % 14
        t = (n - 1) // 6
        adv = ("fair", "random", "crash", "splitvote-reset")[k % 4]
        spec = TrialSpec(n, t, "random", adv, trial_seed(seed, n, k), k, max_windows)
        _, trace = run_trial(spec, keep_windows=True)
        rep = check_fully_communicative(trace)
        checked += rep.stats.get("checked", 0)
        if not rep.passed:
            rep.counterexample.update(n=n, adversary=adv, seed=spec.seed)
            return rep
    return PropertyReport("fully-communicative", True, stats={"traces": traces, "checked": checked})


def _fuzz_pair(rng: random.Random) -> tuple[ProcessorState, ProcessorState, int]:
    """Two states that agree on everything recent and differ in older history."""
    n = rng.randint(2, 30)
    pid = rng.randint(1, n)
    inp = rng.randint(0, 1)
    catch_up = rng.random() < 0.2
    rnd = None if catch_up else rng.randint(1, 50)
    x = None if catch_up else rng.randint(0, 1)
    pending = rng.random() < 0.8
    recent: dict[int, dict[int, int]] = {}
    lo = 1 if catch_up else rnd
    for r in rng.sample(range(lo, lo + 5), rng.randint(0, 3)):
        recent[r] = {s: rng.randint(0, 1) for s in rng.sample(range(1, n + 1), rng.randint(0, n))}

    def variant() -> ProcessorState:
        old = {}
        if rnd is not None and rnd > 1:
            for r in rng.sample(range(1, rnd), min(rnd - 1, rng.randint(0, 3))):
                old[r] = {s: rng.randint(0, 1) for s in rng.sample(range(1, n + 1), rng.randint(1, n))}
        inbox = {r: dict(v) for r, v in sorted({**old, **recent}.items())}
        return ProcessorState(pid=pid, input=inp, output=rng.choice([None, 0, 1]), round=rnd, x=x,
                              reset_count=rng.randint(0, 10), catch_up=catch_up, inbox=inbox,
                              pending_send=pending)

    return variant(), variant(), n


def check_forgetful(send: Callable[[ProcessorState, int], list[VoteMessage]] = on_send,
                    budget: int = 10_000, seed: int = 0) -> PropertyReport:
    """Sends must not depend on anything older than the last sending event.

    ``send`` is the sending-step function under test.
    """
    rng = random.Random(derive_seed(seed, "forgetful"))
    for k in range(budget):
        a, b, n = _fuzz_pair(rng)
        a0, b0 = a.clone(), b.clone()
        out_a, out_b = send(a, n), send(b, n)
        if out_a != out_b:
            return PropertyReport("forgetful", False, {
                "pair": [a0.snapshot(), b0.snapshot()], "n": n,
                "sends": [list(map(tuple, out_a)), list(map(tuple, out_b))]}, {"pairs": k + 1})
    return PropertyReport("forgetful", True, stats={"pairs": budget})


def fault_budget(n: int, c: float) -> int:
    # the epsilon keeps products such as 0.29 * 100 from flooring one short
    return math.floor(c * n + 1e-9)


def make_inputs(spec: str, n: int, seed: int = 0) -> tuple[int, ...]:
    """``unanimous0``, ``unanimous1``, ``balanced``, ``random`` or a literal bit string."""
    if spec == "unanimous0":
        return (0,) * n
    if spec == "unanimous1":
        return (1,) * n
    if spec == "balanced":
        ones = (n + 1) // 2
        return (1,) * ones + (0,) * (n - ones)
    if spec == "random":
        rng = random.Random(derive_seed(seed, "inputs"))
        return tuple(rng.randint(0, 1) for _ in range(n))
    if spec and set(spec) <= {"0", "1"}:
        if len(spec) != n:
            raise ValueError(f"input string has {len(spec)} bits, expected {n}")
        return tuple(int(ch) for ch in spec)
    raise ValueError(f"bad inputs spec {spec!r}")


TRIAL_FIELDS = ["n", "t", "c", "seed", "trial", "adversary", "inputs", "decided",
                "decision_value", "windows_to_decision", "digest"]
SUMMARY_FIELDS = ["n", "t", "adversary", "trials", "decided_fraction", "median_windows",
                  "mean_windows", "p90_windows"]


@dataclass(frozen=True)
class TrialRow:
    n: int
    t: int
    c: str
    seed: int
    trial: int
    adversary: str
    inputs: str
    decided: int
    decision_value: str
    windows_to_decision: str
    digest: str
    agreement_ok: bool = True
    validity_ok: bool = True

    def csv_row(self) -> list:
        return [getattr(self, f) for f in TRIAL_FIELDS]

    @property
    def windows(self) -> Optional[int]:
        return int(self.windows_to_decision) if self.windows_to_decision else None


@dataclass(frozen=True)
class SummaryRow:
    n: int
    t: int
    adversary: str
    trials: int
    decided_fraction: float
    median_windows: Optional[float]
    mean_windows: Optional[float]
    p90_windows: Optional[float]

    def csv_row(self) -> list:
        return ["" if v is None else v for v in (getattr(self, f) for f in SUMMARY_FIELDS)]


@dataclass(frozen=True)
class TrialSpec:
    n: int
    t: int
    inputs: str
    adversary: str
    seed: int
    trial: int
    max_windows: int
    c: str = ""
    thresholds: Optional[Thresholds] = None


def trial_seed(seed: int, n: int, trial: int) -> int:
    """Per-trial seed; independent of the adversary so runs pair across adversaries."""
    return derive_seed(seed, "trial", n, trial)


def run_trial(spec: TrialSpec, keep_windows: bool = False) -> tuple[TrialRow, ExecutionTrace]:
    th = spec.thresholds or default_thresholds(spec.n, spec.t)
    inputs = make_inputs(spec.inputs, spec.n, spec.seed)
    ex = new_execution(spec.n, spec.t, inputs, th, spec.seed, keep_windows=keep_windows)
    adv = make_adversary(spec.adversary, spec.n, spec.t, derive_seed(spec.seed, "adversary"))
    trace = run(ex, adv, spec.max_windows)
    w = trace.windows_to_decision
    row = TrialRow(
        n=spec.n, t=spec.t, c=spec.c, seed=spec.seed, trial=spec.trial, adversary=spec.adversary,
        inputs="".join(map(str, inputs)), decided=int(w is not None),
        decision_value="" if w is None else str(trace.decision_value),
        windows_to_decision="" if w is None else str(w), digest=trace.digest,
        agreement_ok=check_agreement(trace).passed, validity_ok=check_validity(trace).passed,
    )
    return row, trace


def _row_only(spec: TrialSpec) -> TrialRow:
    return run_trial(spec)[0]


def run_trials(specs: Sequence[TrialSpec], jobs: int = 1) -> list[TrialRow]:
    """Run trials, in parallel when ``jobs > 1``; rows come back sorted by (n, adversary, trial)."""
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row_only, specs, chunksize=max(1, len(specs) // (4 * jobs))))
    else:
        rows = [_row_only(s) for s in specs]
    return sorted(rows, key=lambda r: (r.n, r.adversary, r.trial))


def summarize(rows: Sequence[TrialRow]) -> SummaryRow:
    r0 = rows[0]
    windows = [r.windows for r in rows if r.decided]
    if windows:
        median = float(statistics.median(windows))
        mean = float(statistics.fmean(windows))
        p90 = float(np.percentile(windows, 90))
    else:
        median = mean = p90 = None
    return SummaryRow(r0.n, r0.t, r0.adversary, len(rows), len(windows) / len(rows),
                      median, mean, p90)


def estimate_termination(n: int, t: int, inputs: str, adversary: str, trials: int,
                         max_windows: int, seed: int, thresholds: Optional[Thresholds] = None,
                         min_decided_fraction: float = 1.0, jobs: int = 1) -> PropertyReport:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    th = thresholds or default_thresholds(n, t)
    specs = [TrialSpec(n, t, inputs, adversary, trial_seed(seed, n, k), k, max_windows,
                       thresholds=th) for k in range(trials)]
    rows = run_trials(specs, jobs)
    s = summarize(rows)
    stats = asdict(s)
    stats["agreement_violations"] = sum(not r.agreement_ok for r in rows)
    stats["validity_violations"] = sum(not r.validity_ok for r in rows)
    ok = s.decided_fraction >= min_decided_fraction and not stats["agreement_violations"] \
        and not stats["validity_violations"]
    cex = None
    if not ok:
        bad = next((r for r in rows if not (r.decided and r.agreement_ok and r.validity_ok)), rows[0])
        cex = {"digest": bad.digest, "seed": bad.seed, "trial": bad.trial}
    return PropertyReport("termination", ok, cex, stats)


def agreement_suite(runs: int, seed: int, n_range: Iterable[int] = range(7, 29),
                    adversaries: Sequence[str] = ADVERSARY_NAMES,
                    inputs: Sequence[str] = ("random", "balanced"),
                    max_windows: int = 40, jobs: int = 1) -> PropertyReport:
    """Agreement and validity over a grid of (n, adversary, inputs), cycling until ``runs``.

    Uses the largest feasible fault budget ``t = floor((n - 1) / 6)`` for each ``n``.
    """
    grid = [(n, a, i) for n in n_range for a in adversaries for i in inputs]
    specs = []
    for k in range(runs):
        n, adv, inp = grid[k % len(grid)]
        t = (n - 1) // 6
        specs.append(TrialSpec(n, t, inp, adv, trial_seed(seed, n, k), k, max_windows))
    rows = run_trials(specs, jobs)
    stats = {
        "runs": len(rows),
        "decided": sum(r.decided for r in rows),
        "agreement_violations": sum(not r.agreement_ok for r in rows),
        "validity_violations": sum(not r.validity_ok for r in rows),
    }
    bad = next((r for r in rows if not (r.agreement_ok and r.validity_ok)), None)
    cex = None if bad is None else {"digest": bad.digest, "seed": bad.seed, "n": bad.n,
                                    "adversary": bad.adversary}
    return PropertyReport("agreement+validity", bad is None, cex, stats)


@dataclass
class ScalingResult:
    rows: list[TrialRow]
    summary: list[SummaryRow]


def scaling_experiment(n_list: Sequence[int], c: float, trials: int, adversary: str, seed: int,
                       max_windows: int, inputs: str = "balanced", jobs: int = 1) -> ScalingResult:
    """Windows-to-decision against ``adversary`` for each ``n`` with ``t = floor(c n)``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    specs = []
    for n in n_list:
        t = fault_budget(n, c)
        if t < 1 or not 6 * t < n:
            raise ThresholdError(f"n={n}, c={c} gives t={t}; need 1 <= t and 6t < n")
        specs += [TrialSpec(n, t, inputs, adversary, trial_seed(seed, n, k), k, max_windows, c=str(c))
                  for k in range(trials)]
    rows = run_trials(specs, jobs)
    summary = [summarize([r for r in rows if r.n == n]) for n in n_list]
    return ScalingResult(rows, summary)


def _write(fields: list[str], rows: Iterable[list], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)


def write_trials_csv(rows: Sequence[TrialRow], fh: Optional[io.TextIOBase] = None) -> str:
    buf = io.StringIO()
    _write(TRIAL_FIELDS, (r.csv_row() for r in rows), buf)
    if fh is not None:
        fh.write(buf.getvalue())
    return buf.getvalue()


def write_summary_csv(rows: Sequence[SummaryRow], fh: Optional[io.TextIOBase] = None) -> str:
    buf = io.StringIO()
    _write(SUMMARY_FIELDS, (r.csv_row() for r in rows), buf)
    if fh is not None:
        fh.write(buf.getvalue())
    return buf.getvalue()
