"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run ``pytest -m acceptance -s`` to see the lines as they happen; they are
also collected in the terminal summary.  Seeds are fixed here once and never
tuned against the outcome.
"""
import os
import time

import numpy as np
import pytest

from asyncagree import concentration as conc
from asyncagree.adversaries import ADVERSARY_NAMES
from asyncagree.cli import main
from asyncagree.properties import (
    TrialSpec,
    agreement_suite,
    check_forgetful,
    estimate_termination,
    fully_communicative_suite,
    run_trials,
    scaling_experiment,
    trial_seed,
)
from asyncagree.seeding import derive_seed

pytestmark = pytest.mark.acceptance
JOBS = os.cpu_count() or 1


def test_1_first_window_unanimity(acceptance_line):
    start = time.perf_counter()
    specs = []
    for n in (7, 13, 19):
        t = n // 7
        for adv in ADVERSARY_NAMES:
            for k in range(200):
                inputs = ("unanimous0", "unanimous1")[k % 2]
                specs.append(TrialSpec(n, t, inputs, adv, trial_seed(101, n, k), k, 5))
    rows = run_trials(specs, JOBS)
    bad = [r for r in rows
           if r.windows != 1 or r.decision_value != r.inputs[0] or not r.validity_ok]
    elapsed = time.perf_counter() - start
    passed = not bad and len(rows) == 3000
    acceptance_line(1, "first-window unanimity", passed,
                    f"runs={len(rows)} failures={len(bad)} time={elapsed:.1f}s")
    assert passed, bad[:3]


def test_2_agreement_and_validity(acceptance_line):
    start = time.perf_counter()
    rep = agreement_suite(10_000, seed=202, n_range=range(7, 29), adversaries=ADVERSARY_NAMES,
                          inputs=("random", "balanced"), max_windows=40, jobs=JOBS)
    elapsed = time.perf_counter() - start
    s = rep.stats
    passed = rep.passed and s["runs"] >= 10_000
    acceptance_line(2, "agreement and validity", passed,
                    f"runs={s['runs']} decided={s['decided']} agreement_violations="
                    f"{s['agreement_violations']} validity_violations={s['validity_violations']} "
                    f"time={elapsed:.1f}s")
    assert passed, rep.counterexample


def test_3_termination_fair(acceptance_line):
    start = time.perf_counter()
    rep = estimate_termination(7, 1, "random", "fair", trials=1000, max_windows=500, seed=303,
                               min_decided_fraction=0.99, jobs=JOBS)
    elapsed = time.perf_counter() - start
    s = rep.stats
    acceptance_line(3, "termination under fair scheduling", rep.passed,
                    f"decided_fraction={s['decided_fraction']:.3f} median={s['median_windows']} "
                    f"p90={s['p90_windows']} time={elapsed:.1f}s")
    assert rep.passed, rep.counterexample


SCALING_N = (8, 12, 16, 20)


@pytest.fixture(scope="module")
def scaling():
    start = time.perf_counter()
    split = scaling_experiment(SCALING_N, 0.125, 200, "splitvote-reset", seed=1,
                               max_windows=1_000_000, jobs=JOBS)
    fair = scaling_experiment(SCALING_N, 0.125, 200, "fair", seed=1, max_windows=1_000_000,
                              jobs=JOBS)
    return split, fair, time.perf_counter() - start


def test_4_exponential_delay_trend(scaling, acceptance_line):
    split, _, elapsed = scaling
    medians = [s.median_windows for s in split.summary]
    ratios = [b / a for a, b in zip(medians, medians[1:])]
    all_decided = all(s.decided_fraction == 1.0 for s in split.summary)
    passed = all_decided and all(r >= 1.5 for r in ratios)
    acceptance_line(4, "exponential-delay trend", passed,
                    "medians=" + ",".join(f"n{n}:{m:g}" for n, m in zip(SCALING_N, medians))
                    + " ratios=" + ",".join(f"{r:.2f}" for r in ratios)
                    + f" all_decided={all_decided} time={elapsed:.1f}s")
    assert passed


def test_5_paired_dominance(scaling, acceptance_line):
    split, fair, _ = scaling
    fractions = {}
    for n in SCALING_N:
        s_rows = {r.trial: r for r in split.rows if r.n == n}
        f_rows = {r.trial: r for r in fair.rows if r.n == n}
        assert s_rows.keys() == f_rows.keys() and len(s_rows) == 200
        assert all(s_rows[k].seed == f_rows[k].seed for k in s_rows)
        wins = sum(s_rows[k].windows >= f_rows[k].windows for k in s_rows)
        fractions[n] = wins / len(s_rows)
    passed = all(f >= 0.95 for f in fractions.values())
    acceptance_line(5, "paired-seed dominance", passed,
                    " ".join(f"n{n}:{f:.3f}" for n, f in fractions.items()))
    assert passed


def test_6_talagrand_sweep(acceptance_line):
    start = time.perf_counter()
    checked = violations = 0
    worst = 0.0
    for n in range(1, 5):
        rng = np.random.default_rng(derive_seed(606, "dists", n))
        dists = [conc.ProductDistribution.uniform_bits(n)]
        dists += [conc.random_binary_product(n, rng) for _ in range(100)]
        res = conc.talagrand_sweep(n, dists)
        assert res.checked == 2 ** (2 ** n) * (n + 1) * 101
        checked += res.checked
        violations += res.violations
        worst = max(worst, res.max_ratio)
    elapsed = time.perf_counter() - start
    acceptance_line(6, "Talagrand sweep", violations == 0,
                    f"instances={checked} violations={violations} max_lhs/bound={worst:.4f} "
                    f"time={elapsed:.1f}s")
    assert violations == 0


def test_7_interpolation_demo(acceptance_line):
    start = time.perf_counter()
    res = conc.interpolation_demo(100, seed=707)
    elapsed = time.perf_counter() - start
    passed = res.instances == 100 and res.violations == 0 and res.ball_shift_violations == 0
    acceptance_line(7, "interpolation demonstrator", passed,
                    f"instances={res.instances} nontrivial_jstar={res.nontrivial} "
                    f"violations={res.violations} ball_shift_checks={res.ball_shift_checks} "
                    f"ball_shift_violations={res.ball_shift_violations} time={elapsed:.1f}s")
    assert passed


def test_8_algorithm_class(acceptance_line):
    start = time.perf_counter()
    forgetful = check_forgetful(budget=10_000, seed=808)
    communicative = fully_communicative_suite(1000, seed=808)
    elapsed = time.perf_counter() - start
    passed = forgetful.passed and communicative.passed
    acceptance_line(8, "forgetful and fully communicative", passed,
                    f"pairs={forgetful.stats.get('pairs')} forgetful={forgetful.passed} "
                    f"traces={communicative.stats.get('traces')} "
                    f"checked_advances={communicative.stats.get('checked')} "
                    f"fully_communicative={communicative.passed} time={elapsed:.1f}s")
    assert passed, (forgetful.counterexample, communicative.counterexample)


SPOT_CHECKS = [
    ["run", "--n", "7", "--t", "1", "--inputs", "unanimous0", "--adversary", "fair", "--seed", "42"],
    ["run", "--n", "7", "--t", "1", "--inputs", "0101010", "--adversary", "splitvote", "--seed", "7",
     "--max-windows", "100000"],
    ["run", "--n", "7", "--t", "1", "--inputs", "random", "--adversary", "random", "--seed", "3"],
    ["run", "--n", "9", "--t", "1", "--inputs", "balanced", "--adversary", "splitvote-reset",
     "--seed", "4"],
    ["run", "--n", "13", "--t", "2", "--inputs", "random", "--adversary", "crash", "--seed", "5"],
    ["run", "--n", "13", "--c", "0.15", "--inputs", "random", "--adversary", "random", "--seed", "6"],
    ["run", "--n", "19", "--t", "3", "--inputs", "unanimous1", "--adversary", "splitvote",
     "--seed", "8"],
    ["run", "--n", "8", "--t", "1", "--inputs", "balanced", "--adversary", "fair", "--seed", "9"],
    ["run", "--n", "10", "--t", "1", "--thresholds", "8,8,7", "--inputs", "random",
     "--adversary", "splitvote-reset", "--seed", "10"],
    ["run", "--n", "25", "--t", "4", "--inputs", "random", "--adversary", "random", "--seed", "11",
     "--max-windows", "50"],
    ["run", "--n", "12", "--t", "1", "--inputs", "balanced", "--adversary", "splitvote-reset",
     "--seed", "12", "--max-windows", "30"],
    ["run", "--n", "7", "--t", "1", "--inputs", "1100110", "--adversary", "crash", "--seed", "13",
     "--no-check"],
    ["scale", "--n-list", "8,12", "--c", "0.125", "--trials", "5", "--seed", "1",
     "--max-windows", "2000"],
    ["scale", "--n-list", "7,13", "--c", "0.15", "--adversary", "fair", "--inputs", "unanimous1",
     "--trials", "10", "--seed", "2"],
    ["scale", "--n-list", "9,11", "--c", "0.12", "--adversary", "random", "--inputs", "random",
     "--trials", "6", "--seed", "3"],
    ["scale", "--n-list", "14", "--c", "0.1", "--adversary", "splitvote", "--trials", "4",
     "--seed", "4", "--jobs", "2"],
    ["check-math", "--n", "3", "--dists", "20", "--instances", "5", "--seed", "9"],
    ["check-math", "--n", "2", "--dists", "5", "--instances", "3", "--seed", "10"],
    ["check-properties", "--runs", "40", "--pairs", "300", "--traces", "10", "--seed", "1"],
    ["check-properties", "--runs", "25", "--pairs", "100", "--traces", "8", "--seed", "2",
     "--max-windows", "20"],
]


def _invoke(argv, workdir, capsys, monkeypatch):
    monkeypatch.chdir(workdir)
    code = main(argv)
    out = capsys.readouterr().out
    files = {p.name: p.read_bytes() for p in sorted(workdir.iterdir())}
    return code, out, files


def test_9_determinism(tmp_path, capsys, monkeypatch, acceptance_line):
    start = time.perf_counter()
    identical = 0
    mismatched = []
    for k, argv in enumerate(SPOT_CHECKS):
        a, b = tmp_path / f"{k}a", tmp_path / f"{k}b"
        a.mkdir()
        b.mkdir()
        first = _invoke(argv, a, capsys, monkeypatch)
        second = _invoke(argv, b, capsys, monkeypatch)
        if first == second and first[0] == 0:
            identical += 1
        else:
            mismatched.append(" ".join(argv))
    elapsed = time.perf_counter() - start
    passed = identical == len(SPOT_CHECKS) == 20
    acceptance_line(9, "determinism", passed,
                    f"spot_checks={len(SPOT_CHECKS)} identical={identical} time={elapsed:.1f}s")
    assert passed, mismatched
