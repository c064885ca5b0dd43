import csv
import io

import pytest

from asyncagree.adversaries import FairAdversary
from asyncagree.protocol import ThresholdError, Thresholds, VoteMessage, on_send
from asyncagree.properties import (
    SUMMARY_FIELDS,
    TRIAL_FIELDS,
    PropertyReport,
    TrialSpec,
    check_agreement,
    check_forgetful,
    check_fully_communicative,
    check_no_conflicting_adoption,
    check_validity,
    estimate_termination,
    fault_budget,
    make_inputs,
    run_trial,
    run_trials,
    scaling_experiment,
    trial_seed,
    write_summary_csv,
    write_trials_csv,
)
from asyncagree.simnet import AcceptableWindow, Decision, ExecutionTrace, WindowRecord, new_execution, run

TH7 = Thresholds(7, 1, 5, 5, 4)


def fake_trace(inputs, decisions):
    return ExecutionTrace(7, 1, TH7, tuple(inputs), 0,
                          decisions=[Decision(p, v, w) for p, v, w in decisions])


def test_report_requires_counterexample_on_fail():
    with pytest.raises(ValueError):
        PropertyReport("x", False)
    assert PropertyReport("x", True, stats={"a": 1}).line() == "PASS x (a=1)"


def test_check_agreement():
    assert check_agreement(fake_trace([0] * 7, [(1, 0, 1), (3, 0, 1)])).passed
    bad = check_agreement(fake_trace([0, 1] * 3 + [0], [(1, 0, 1), (2, 1, 2)]))
    assert not bad.passed and bad.counterexample["event"]
    assert check_agreement(fake_trace([0] * 7, [])).passed


def test_check_validity():
    assert check_validity(fake_trace([0] * 7, [(1, 0, 1)])).passed
    assert not check_validity(fake_trace([0] * 7, [(1, 1, 1)])).passed
    for v in (0, 1):
        assert check_validity(fake_trace([0, 1, 0, 1, 0, 1, 0], [(2, v, 3)])).passed


def _fair_trace(inputs=(0, 1, 0, 1, 0, 1, 0), seed=1, windows=20):
    ex = new_execution(7, 1, list(inputs), TH7, seed)
    return run(ex, FairAdversary(), windows)


def test_check_fully_communicative_fair():
    rep = check_fully_communicative(_fair_trace())
    assert rep.passed


def test_check_fully_communicative_doctored():
    for seed in range(50):
        trace = _fair_trace(seed=seed)
        if len(trace.windows) >= 2:
            break
    rec = trace.windows[1]
    assert any(a.pid == 1 for a in trace.windows[0].advances)
    sends = list(rec.sends)
    sends[0] = 6  # processor 1 skips one receiver after finishing round 1
    trace.windows[1] = WindowRecord(rec.window, tuple(sends), rec.advances)
    rep = check_fully_communicative(trace)
    assert not rep.passed and rep.counterexample["pid"] == 1


def test_check_fully_communicative_vacuous_on_catch_up_only():
    ex = new_execution(7, 1, [0, 1, 0, 1, 0, 1, 0], TH7, 1)
    for p in range(1, 8):
        ex.config[p - 1].catch_up = True
        ex.config[p - 1].round = None
        ex.config[p - 1].x = None
    for _ in range(3):
        ex.apply_window(AcceptableWindow.canonical([range(1, 8)] * 7))
    rep = check_fully_communicative(ex.trace)
    assert rep.passed and rep.stats["checked"] == 0


def test_check_no_conflicting_adoption():
    assert check_no_conflicting_adoption(_fair_trace()).passed


def test_check_forgetful_passes_on_protocol():
    rep = check_forgetful(budget=2000, seed=3)
    assert rep.passed and rep.stats["pairs"] == 2000


def test_check_forgetful_catches_history_dependence():
    def leaky(state, n):
        msgs = on_send(state, n)
        return [VoteMessage(m.sender, m.receiver, m.round, m.value ^ (state.reset_count & 1))
                for m in msgs]

    rep = check_forgetful(send=leaky, budget=2000, seed=3)
    assert not rep.passed and len(rep.counterexample["pair"]) == 2


def test_fault_budget():
    assert fault_budget(8, 0.125) == 1
    assert fault_budget(16, 0.125) == 2
    assert fault_budget(100, 0.29) == 29
    assert fault_budget(7, 0.14) == 0


def test_make_inputs():
    assert make_inputs("unanimous0", 3) == (0, 0, 0)
    assert make_inputs("unanimous1", 2) == (1, 1)
    assert make_inputs("balanced", 7) == (1, 1, 1, 1, 0, 0, 0)
    assert make_inputs("balanced", 8).count(1) == 4
    assert make_inputs("0101", 4) == (0, 1, 0, 1)
    assert make_inputs("random", 20, 5) == make_inputs("random", 20, 5)
    with pytest.raises(ValueError):
        make_inputs("010", 4)
    with pytest.raises(ValueError):
        make_inputs("mostly", 4)


def test_estimate_termination_unanimous():
    for adv in ("fair", "random", "splitvote", "splitvote-reset", "crash"):
        rep = estimate_termination(7, 1, "unanimous1", adv, 20, 5, seed=2)
        assert rep.passed and rep.stats["decided_fraction"] == 1.0
        assert rep.stats["median_windows"] == 1 and rep.stats["p90_windows"] == 1


def test_estimate_termination_validates_trials():
    with pytest.raises(ValueError):
        estimate_termination(7, 1, "random", "fair", 0, 10, seed=0)


def test_estimate_termination_reports_shortfall():
    rep = estimate_termination(7, 1, "balanced", "splitvote-reset", 10, 1, seed=0)
    assert not rep.passed and rep.counterexample


def test_trial_seeds_pair_across_adversaries():
    a, _ = run_trial(TrialSpec(7, 1, "balanced", "fair", trial_seed(1, 7, 0), 0, 50))
    b, _ = run_trial(TrialSpec(7, 1, "balanced", "splitvote", trial_seed(1, 7, 0), 0, 50))
    assert a.seed == b.seed


def test_run_trials_parallel_matches_serial():
    specs = [TrialSpec(n, 1, "random", adv, trial_seed(4, n, k), k, 30)
             for n in (7, 9) for adv in ("fair", "splitvote") for k in range(4)]
    assert run_trials(specs, jobs=1) == run_trials(specs, jobs=2)


def test_scaling_experiment_fair_unanimous():
    res = scaling_experiment([7], 0.15, 10, "fair", 0, 10, inputs="unanimous1")
    assert [s.median_windows for s in res.summary] == [1.0]
    assert len(res.rows) == 10


def test_scaling_experiment_rejects_infeasible():
    with pytest.raises(ThresholdError):
        scaling_experiment([8], 0.5, 1, "fair", 0, 10)
    with pytest.raises(ThresholdError):
        scaling_experiment([7], 0.14, 1, "fair", 0, 10)


def test_csv_schemas():
    res = scaling_experiment([7, 13], 0.15, 3, "splitvote", 0, 200)
    rows = list(csv.reader(io.StringIO(write_trials_csv(res.rows))))
    assert rows[0] == TRIAL_FIELDS and len(rows) == 7
    summary = list(csv.reader(io.StringIO(write_summary_csv(res.summary))))
    assert summary[0] == SUMMARY_FIELDS and [r[0] for r in summary[1:]] == ["7", "13"]
    buf = io.StringIO()
    assert write_summary_csv(res.summary, buf) == buf.getvalue()


def test_splitvote_not_faster_than_fair_on_pairs():
    slower = 0
    for k in range(30):
        seed = trial_seed(9, 8, k)
        f, _ = run_trial(TrialSpec(8, 1, "balanced", "fair", seed, k, 10_000))
        s, _ = run_trial(TrialSpec(8, 1, "balanced", "splitvote-reset", seed, k, 10_000))
        slower += s.windows >= f.windows
    assert slower >= 25
