"""Command-line entry point: ``run``, ``scale``, ``check-math``, ``check-properties``.

Exit codes: 0 clean, 1 a property check failed, 2 usage error.  Every
source of randomness derives from ``--seed``, so identical command lines
write identical bytes.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import concentration as conc
from .adversaries import ADVERSARY_NAMES, make_adversary
from .properties import (
    agreement_suite,
    check_agreement,
    check_forgetful,
    check_fully_communicative,
    check_no_conflicting_adoption,
    check_validity,
    fault_budget,
    fully_communicative_suite,
    make_inputs,
    scaling_experiment,
    write_summary_csv,
    write_trials_csv,
)
from .protocol import Thresholds, ThresholdError, default_thresholds, validate_thresholds
from .seeding import derive_seed
from .simnet import new_execution, run, trace_to_json

USAGE, VIOLATION, OK = 2, 1, 0


class UsageError(Exception):
    pass


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _fault_budget(args) -> int:
    if args.t is not None and args.c is not None:
        raise UsageError("give --t or --c, not both")
    if args.t is not None:
        return args.t
    if args.c is not None:
        return fault_budget(args.n, args.c)
    raise UsageError("one of --t or --c is required")


def _thresholds(spec: str, n: int, t: int) -> Thresholds:
    if spec == "default":
        return default_thresholds(n, t)
    try:
        t1, t2, t3 = (int(v) for v in spec.split(","))
    except ValueError:
        raise UsageError(f"--thresholds expects 'default' or T1,T2,T3, got {spec!r}") from None
    th = Thresholds(n, t, t1, t2, t3)
    bad = validate_thresholds(th)
    if bad:
        raise ThresholdError("thresholds violate " + ", ".join(bad))
    return th


def cmd_run(args) -> int:
    t = _fault_budget(args)
    th = _thresholds(args.thresholds, args.n, t)
    inputs = make_inputs(args.inputs, args.n, args.seed)
    ex = new_execution(args.n, t, inputs, th, args.seed)
    adv = make_adversary(args.adversary, args.n, t, derive_seed(args.seed, "adversary"))
    trace = run(ex, adv, args.max_windows)
    Path(args.out).write_text(trace_to_json(trace) + "\n")
    if trace.decisions:
        print(f"decided value={trace.decision_value} windows_to_decision={trace.windows_to_decision} "
              f"deciders={len(trace.decisions)}")
    else:
        print(f"undecided after {trace.window_count} windows")
    print(f"digest={trace.digest} trace={args.out}")
    if not args.check:
        return OK
    reports = [check_agreement(trace), check_validity(trace), check_no_conflicting_adoption(trace),
               check_fully_communicative(trace)]
    for r in reports:
        print(r.line())
    return OK if all(r.passed for r in reports) else VIOLATION


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def cmd_scale(args) -> int:
    result = scaling_experiment(_int_list(args.n_list), args.c, args.trials, args.adversary,
                                args.seed, args.max_windows, inputs=args.inputs, jobs=args.jobs)
    Path(args.out).write_text(write_trials_csv(result.rows))
    Path(args.summary).write_text(write_summary_csv(result.summary))
    print(write_summary_csv(result.summary), end="")
    bad = sum(not (r.agreement_ok and r.validity_ok) for r in result.rows)
    if bad:
        print(f"FAIL {bad} trials violated agreement or validity")
        return VIOLATION
    return OK


def cmd_checkmath(args) -> int:
    if not 1 <= args.n <= 4:
        raise UsageError(f"exhaustive sweep needs 1 <= n <= 4, got {args.n}")
    rng = np.random.default_rng(derive_seed(args.seed, "dists"))
    dists = [conc.ProductDistribution.uniform_bits(args.n)]
    dists += [conc.random_binary_product(args.n, rng) for _ in range(args.dists)]
    sweep = conc.talagrand_sweep(args.n, dists)
    print(f"talagrand: checked={sweep.checked} violations={sweep.violations} "
          f"max_lhs_over_bound={sweep.max_ratio:.6f}")
    demo = conc.interpolation_demo(args.instances, derive_seed(args.seed, "interpolation"))
    print(f"interpolation: instances={demo.instances} nontrivial={demo.nontrivial} "
          f"violations={demo.violations}")
    print(f"ball-shift: checked={demo.ball_shift_checks} violations={demo.ball_shift_violations}")
    clean = not (sweep.violations or demo.violations or demo.ball_shift_violations)
    return OK if clean else VIOLATION


def cmd_checkprops(args) -> int:
    reports = [
        agreement_suite(args.runs, args.seed, max_windows=args.max_windows, jobs=args.jobs),
        check_forgetful(budget=args.pairs, seed=args.seed),
        fully_communicative_suite(args.traces, args.seed),
    ]
    for r in reports:
        print(r.line())
    return OK if all(r.passed for r in reports) else VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asyncagree", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key=value file supplying defaults for the subcommand")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one seeded execution; writes a JSON trace")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--t", type=int)
    r.add_argument("--c", type=float)
    r.add_argument("--thresholds", default="default", help="'default' or T1,T2,T3")
    r.add_argument("--inputs", default="balanced",
                   help="bit string, unanimous0, unanimous1, balanced or random")
    r.add_argument("--adversary", default="fair", choices=ADVERSARY_NAMES)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-windows", type=int, default=10_000)
    r.add_argument("--out", default="trace.json")
    r.add_argument("--check", action=argparse.BooleanOptionalAction, default=True,
                   help="run the property checkers on the trace (default on)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scale", help="windows-to-decision across n; writes trial and summary CSVs")
    s.add_argument("--n-list", required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--adversary", default="splitvote-reset", choices=ADVERSARY_NAMES)
    s.add_argument("--inputs", default="balanced")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-windows", type=int, default=1_000_000)
    s.add_argument("--out", default="trials.csv")
    s.add_argument("--summary", default="summary.csv")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_scale)

    m = sub.add_parser("check-math", help="exhaustive concentration sweep and interpolation demo")
    m.add_argument("--n", type=int, default=4)
    m.add_argument("--dists", type=int, default=100)
    m.add_argument("--instances", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_checkmath)

    c = sub.add_parser("check-properties", help="agreement/validity suite and algorithm-class checks")
    c.add_argument("--runs", type=int, default=2000)
    c.add_argument("--pairs", type=int, default=10_000)
    c.add_argument("--traces", type=int, default=1000)
    c.add_argument("--max-windows", type=int, default=40)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_checkprops)
    for subparser in (r, s, m, c):
        subparser.add_argument("--config", help=argparse.SUPPRESS)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    for action in parser._subparsers._group_actions:
        for subparser in action.choices.values():
            dests = {a.dest: a for a in subparser._actions}
            defaults = {}
            for key, raw in values.items():
                a = dests.get(key)
                if a is None:
                    continue
                if a.type is not None:
                    defaults[key] = a.type(raw)
                elif isinstance(a.default, bool):
                    defaults[key] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[key] = raw
                a.required = False
            subparser.set_defaults(**defaults)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else USAGE
    except (UsageError, ThresholdError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
