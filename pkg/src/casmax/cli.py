"""Command-line operator surface.

Subcommands:

* ``simulate`` -- run an exhaustive or randomized verification campaign:
  generate programs over a value domain, run schedules on the deterministic
  machine, apply both linearizability engines to every trace, and report.
* ``check`` -- run the black-box checker on a recorded history file.
* ``bench`` -- measure the live (multi-threaded) build against a plain
  lock-based CAS cell.  Reports raw numbers only; no pass/fail judgment.

Exit codes: 0 pass, 1 rejection or invariant violation, 2 checker budget
exceeded, 3 usage error.
"""

from __future__ import annotations

import argparse
import random
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .caslib import MUTATIONS, CasRegister, MultiCasRegister
from .lincheck import (ACCEPTED, BUDGET_EXCEEDED, DEFAULT_BUDGET, REJECTED,
                       TraceCheck, check_history, check_trace)
from .machine import (EnumerationCapExceeded, ExecutionTrace,
                      HistoryParseError, Op, ProcessProgram,
                      STANDARD_INVARIANTS, explore, parse_history,
                      random_traces, write_trace)

EXIT_PASS = 0
EXIT_REJECTED = 1
EXIT_BUDGET = 2
EXIT_USAGE = 3

DEFAULT_SCHEDULE_CEILING = 2_000_000


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class CampaignConfig:
    procs: int = 2
    ops_per_proc: int = 1
    values: tuple[int, ...] = (0, 1, 2)
    objects: int = 1
    mode: str = "exhaustive"          # "exhaustive" | "random"
    count: int = 1000                 # random mode only
    seed: int = 0
    truncate: Optional[int] = None    # step cap, for pending-call histories
    shape: str = "contended"          # "contended" | "mixed"
    budget: int = DEFAULT_BUDGET
    mutation: Optional[str] = None
    invariants: bool = True
    max_schedules: int = DEFAULT_SCHEDULE_CEILING
    fail_fast: bool = False
    out_dir: Optional[Path] = None

    def validate(self) -> None:
        if self.procs < 1 or self.ops_per_proc < 0 or self.count < 0:
            raise ValueError("counts must be non-negative, procs >= 1")
        if self.objects < 1:
            raise ValueError("objects must be >= 1")
        if len(self.values) < 2:
            raise ValueError("value domain needs at least 2 values")
        if self.mode not in ("exhaustive", "random"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.shape not in ("contended", "mixed"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.mutation is not None and self.mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {self.mutation!r}; "
                             f"choose from {', '.join(MUTATIONS)}")


def build_programs(config: CampaignConfig) -> list[ProcessProgram]:
    """Program generator for campaigns.

    ``contended``: every process's first operation is a cas from the shared
    initial value to a per-process distinct value, maximizing competition;
    later operations are mixed random ops.  ``mixed``: every operation is a
    random cas or read over the domain.
    """
    values = config.values
    initial = values[0]
    rng = random.Random(config.seed ^ 0x5EED)
    programs = []
    for pid in range(1, config.procs + 1):
        ops: list[Op] = []
        obj = (pid - 1) % config.objects
        for k in range(config.ops_per_proc):
            if config.shape == "contended" and k == 0:
                b = values[1 + (pid - 1) % (len(values) - 1)]
                ops.append(Op.cas(initial, b, obj))
            elif rng.random() < 0.25:
                ops.append(Op.read(rng.randrange(config.objects)))
            else:
                ops.append(Op.cas(rng.choice(values), rng.choice(values),
                                  rng.randrange(config.objects)))
        programs.append(ProcessProgram(pid, tuple(ops)))
    return programs


def make_target_factory(config: CampaignConfig) -> Callable[[], object]:
    initial = config.values[0]
    if config.objects == 1:
        return lambda: CasRegister(config.procs, initial,
                                   mutation=config.mutation)
    initials = [initial] * config.objects
    return lambda: MultiCasRegister(config.procs, config.objects, initials,
                                    mutation=config.mutation)


@dataclass(slots=True)
class CampaignReport:
    schedules_run: int = 0
    accepted: int = 0
    rejected: int = 0
    budget_exceeded: int = 0
    violations: int = 0
    cases: dict[str, int] = field(default_factory=dict)
    max_cas_ops: int = 0
    max_read_ops: int = 0
    failures: list[str] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)
    cap_exceeded: bool = False

    @property
    def clean(self) -> bool:
        return (self.rejected == 0 and self.violations == 0
                and self.budget_exceeded == 0 and not self.cap_exceeded)

    def exit_code(self) -> int:
        if self.rejected or self.violations:
            return EXIT_REJECTED
        if self.budget_exceeded:
            return EXIT_BUDGET
        if self.cap_exceeded:
            return EXIT_USAGE
        return EXIT_PASS


def run_campaign(config: CampaignConfig,
                 observer: Optional[Callable[[ExecutionTrace, TraceCheck],
                                             None]] = None,
                 log: Callable[[str], None] = lambda s: None
                 ) -> CampaignReport:
    """Run a verification campaign and fold every trace into a report."""
    config.validate()
    programs = build_programs(config)
    factory = make_target_factory(config)
    hooks = STANDARD_INVARIANTS if config.invariants else ()
    report = CampaignReport()

    if config.mode == "exhaustive":
        traces = explore(factory, programs, hooks,
                         max_schedules=config.max_schedules)
    else:
        traces = random_traces(factory, programs, config.count, config.seed,
                               hooks, truncate=config.truncate)

    try:
        for trace in traces:
            report.schedules_run += 1
            bad = []
            if trace.violation is not None:
                report.violations += 1
                bad.append(f"invariant {trace.violation.hook} at step "
                           f"{trace.violation.step_index}: "
                           f"{trace.violation.message}")
                tc = None
            else:
                tc = check_trace(trace, config.budget)
                if tc.blackbox == REJECTED or not tc.whitebox_ok:
                    report.rejected += 1
                    bad.extend(tc.failures)
                elif tc.blackbox == BUDGET_EXCEEDED:
                    report.budget_exceeded += 1
                    bad.append("checker budget exceeded")
                else:
                    report.accepted += 1
                for case, cnt in tc.cases.items():
                    report.cases[case] = report.cases.get(case, 0) + cnt
            report.max_cas_ops = max(report.max_cas_ops,
                                     trace.max_ops_per_call("cas"))
            report.max_read_ops = max(report.max_read_ops,
                                      trace.max_ops_per_call("read"))
            if bad:
                sched = ",".join(map(str, trace.schedule.steps))
                report.failures.append(f"schedule [{sched}]: " + "; ".join(bad))
                if config.out_dir is not None:
                    config.out_dir.mkdir(parents=True, exist_ok=True)
                    path = config.out_dir / (
                        f"fail-{len(report.written):06d}.jsonl")
                    write_trace(path, trace)
                    report.written.append(path)
            if observer is not None and tc is not None:
                observer(trace, tc)
            if bad and config.fail_fast:
                break
            if report.schedules_run % 50000 == 0:
                log(f"... {report.schedules_run} schedules")
    except EnumerationCapExceeded:
        report.cap_exceeded = True
    return report


def print_report(config: CampaignConfig, report: CampaignReport,
                 out=None) -> None:
    w = (out or sys.stdout).write
    w(f"mode                 {config.mode}"
      f"{'' if config.mode == 'exhaustive' else f' (count={config.count}, seed={config.seed})'}\n")
    if config.mutation:
        w(f"mutation             {config.mutation}\n")
    w(f"schedules run        {report.schedules_run}\n")
    w(f"accepted             {report.accepted}\n")
    w(f"rejected             {report.rejected}\n")
    w(f"budget exceeded      {report.budget_exceeded}\n")
    w(f"invariant violations {report.violations}\n")
    hist = ", ".join(f"{k}={v}" for k, v in sorted(report.cases.items()))
    w(f"case histogram       {hist or '(none)'}\n")
    w(f"max ops per cas      {report.max_cas_ops}\n")
    w(f"max ops per read     {report.max_read_ops}\n")
    if report.cap_exceeded:
        w(f"NOTE: enumeration exceeded the configured ceiling of "
          f"{config.max_schedules} schedules; partial results only.\n")
    for line in report.failures[:10]:
        w(f"FAIL {line}\n")
    if len(report.failures) > 10:
        w(f"... and {len(report.failures) - 10} more failures\n")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

class _LockCasCell:
    """Reference cell: Python's closest stand-in for a hardware CAS word."""

    def __init__(self, value: int = 0):
        self._value = value
        self._lock = threading.Lock()

    def read(self) -> int:
        with self._lock:
            return self._value

    def cas(self, a: int, b: int) -> bool:
        with self._lock:
            if self._value == a:
                self._value = b
                return True
            return False


def _bench_workers(nthreads: int, work) -> float:
    threads = [threading.Thread(target=work, args=(pid,))
               for pid in range(1, nthreads + 1)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return time.perf_counter() - t0


def run_bench(threads: int, ops: int, contention: str, out=None) -> None:
    reads_per_cas = 1 if contention == "high" else 16

    native = _LockCasCell(0)

    def native_work(pid: int) -> None:
        for i in range(ops):
            if i % (reads_per_cas + 1) == reads_per_cas:
                cur = native.read()
                native.cas(cur, (cur + pid) % 1000)
            else:
                native.read()

    native_time = _bench_workers(threads, native_work)

    sim = CasRegister(threads, 0, atomic=True)
    op_counts: list[list[int]] = [[] for _ in range(threads)]

    def sim_work(pid: int) -> None:
        counts = op_counts[pid - 1]
        for i in range(ops):
            if i % (reads_per_cas + 1) == reads_per_cas:
                cur = sim.read(pid)
                _, n = sim.cas_counted(pid, cur, (cur + pid) % 1000)
                counts.append(n)
            else:
                sim.read(pid)

    sim_time = _bench_workers(threads, sim_work)

    all_counts = [n for per in op_counts for n in per]
    max_ops = max(all_counts, default=0)
    mean_ops = sum(all_counts) / len(all_counts) if all_counts else 0.0
    total = threads * ops
    w = (out or sys.stdout).write
    w(f"threads              {threads}\n")
    w(f"ops per thread       {ops}\n")
    w(f"contention           {contention}\n")
    w(f"build                ops/sec\n")
    w(f"native lock cell     {total / native_time:12.0f}\n")
    w(f"simulated cas        {total / sim_time:12.0f}\n")
    w(f"register ops per contended cas: max={max_ops} mean={mean_ops:.2f}\n")
    assert max_ops <= 10, "wait-freedom bound exceeded in live build"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _values_arg(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="casmax",
                     description="Verify and benchmark the simulated "
                                 "compare-and-swap register.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a verification campaign")
    sim.add_argument("--procs", type=int, default=2)
    sim.add_argument("--ops-per-proc", type=int, default=1)
    sim.add_argument("--values", type=_values_arg, default=(0, 1, 2),
                     metavar="a,b,c")
    sim.add_argument("--objects", type=int, default=1)
    mode = sim.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true", default=True)
    mode.add_argument("--random", type=int, metavar="N", default=None)
    sim.add_argument("--seed", type=int, default=0, metavar="S")
    sim.add_argument("--truncate", type=int, default=None, metavar="K")
    sim.add_argument("--shape", choices=("contended", "mixed"),
                     default="contended")
    sim.add_argument("--out", type=Path, default=None, metavar="DIR")
    sim.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                     metavar="NODES")
    sim.add_argument("--mutation", choices=MUTATIONS, default=None)
    sim.add_argument("--max-schedules", type=int,
                     default=DEFAULT_SCHEDULE_CEILING)
    sim.add_argument("--skip-invariants", action="store_true")
    sim.add_argument("--fail-fast", action="store_true")

    chk = sub.add_parser("check", help="check a recorded history file")
    chk.add_argument("history_file", type=Path)
    chk.add_argument("--initial", type=int, default=0)
    chk.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                     metavar="NODES")

    ben = sub.add_parser("bench", help="benchmark the live build")
    ben.add_argument("--threads", type=int, default=4)
    ben.add_argument("--ops", type=int, default=10000)
    ben.add_argument("--contention", choices=("low", "high"), default="high")
    return parser


def cmd_simulate(args) -> int:
    config = CampaignConfig(
        procs=args.procs, ops_per_proc=args.ops_per_proc,
        values=args.values, objects=args.objects,
        mode="random" if args.random is not None else "exhaustive",
        count=args.random or 0, seed=args.seed, truncate=args.truncate,
        shape=args.shape, budget=args.budget, mutation=args.mutation,
        invariants=not args.skip_invariants,
        max_schedules=args.max_schedules, fail_fast=args.fail_fast,
        out_dir=args.out)
    try:
        config.validate()
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    report = run_campaign(config, log=lambda s: print(s, file=sys.stderr))
    print_report(config, report)
    return report.exit_code()


def cmd_check(args) -> int:
    try:
        with open(args.history_file) as fh:
            initial, events = parse_history(fh)
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except HistoryParseError as exc:
        sys.stderr.write(f"error: {args.history_file}: {exc}\n")
        return EXIT_USAGE
    if initial is None:
        initial = args.initial
    verdict = check_history(events, initial, args.budget)
    print(f"verdict              {verdict.status}")
    print(f"calls                {len(events)} events")
    print(f"search nodes         {verdict.nodes}")
    if verdict.status == ACCEPTED and verdict.witness:
        order = " -> ".join(
            f"p{c.pid}:{c.op}{c.args}={ret}" for c, ret in verdict.witness)
        print(f"witness              {order}")
    if verdict.counterexample is not None:
        print(f"counterexample       first {len(verdict.counterexample)} "
              "events already non-linearizable")
    if verdict.status == ACCEPTED:
        return EXIT_PASS
    if verdict.status == BUDGET_EXCEEDED:
        return EXIT_BUDGET
    return EXIT_REJECTED


def cmd_bench(args) -> int:
    run_bench(args.threads, args.ops, args.contention)
    return EXIT_PASS


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "check":
        return cmd_check(args)
    if args.command == "bench":
        return cmd_bench(args)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
