"""Deterministic simulated shared-memory machine.

Runs ``n`` process programs at register-operation granularity under an
explicit schedule (a sequence of process identifiers), records complete
executions -- register-level steps plus operation-level invocation/response
events -- and generates schedules exhaustively or randomly.

One schedule entry corresponds to exactly one shared-register operation of
the named process's current call; purely local computation is folded into
the adjacent register step, since a call's start and end are defined by its
first and last register operation.  Schedule entries for processes whose
program is exhausted are skipped.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

from .caslib import CallState

Snapshot = dict[str, tuple[int, int]]
Hook = Callable[[Snapshot, Snapshot], Optional[str]]


@dataclass(frozen=True, slots=True)
class Op:
    """One high-level operation of a process program."""

    kind: str                    # "cas" | "read"
    a: Optional[int] = None
    b: Optional[int] = None
    obj: int = 0

    @staticmethod
    def cas(a: int, b: int, obj: int = 0) -> "Op":
        return Op("cas", a, b, obj)

    @staticmethod
    def read(obj: int = 0) -> "Op":
        return Op("read", obj=obj)


@dataclass(frozen=True, slots=True)
class ProcessProgram:
    pid: int
    ops: tuple[Op, ...]


@dataclass(frozen=True, slots=True)
class Schedule:
    steps: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True, slots=True)
class Step:
    """One register operation in an execution."""

    index: int
    pid: int
    reg: str
    op: str
    args: tuple
    observed: tuple
    call: int                    # index into ExecutionTrace.calls


@dataclass(frozen=True, slots=True)
class Event:
    kind: str                    # "inv" | "res"
    pid: int
    op: str
    args: tuple
    ret: object
    step: int


@dataclass(slots=True)
class Call:
    """One high-level call with its register steps and outcome."""

    cid: int
    pid: int
    kind: str
    a: Optional[int]
    b: Optional[int]
    obj: int
    inv_step: int
    res_step: Optional[int] = None
    ret: object = None
    steps: list[int] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.res_step is not None


@dataclass(frozen=True, slots=True)
class ViolationInfo:
    hook: str
    message: str
    step_index: int


@dataclass(slots=True)
class ExecutionTrace:
    schedule: Schedule
    register_steps: list[Step]
    events: list[Event]
    calls: list[Call]
    final_state: Snapshot
    pending: frozenset[int]
    nprocs: int
    width: int
    initial_values: tuple[int, ...]
    violation: Optional[ViolationInfo] = None

    def max_ops_per_call(self, kind: str) -> int:
        counts = [len(c.steps) for c in self.calls if c.kind == kind]
        return max(counts, default=0)


class InvariantViolation(Exception):
    """A runtime-checkable invariant failed after a simulated step."""

    def __init__(self, hook: str, message: str, step_index: int,
                 snapshot: Snapshot, trace: ExecutionTrace):
        super().__init__(f"{hook} at step {step_index}: {message}")
        self.hook = hook
        self.message = message
        self.step_index = step_index
        self.snapshot = snapshot
        self.trace = trace


class EnumerationCapExceeded(Exception):
    """Exhaustive enumeration hit its explicit schedule ceiling."""

    def __init__(self, cap: int):
        super().__init__(f"schedule enumeration exceeded the cap of {cap}; "
                         "partial enumeration only")
        self.cap = cap


# ---------------------------------------------------------------------------
# Invariant hooks (checked after every simulated step)
# ---------------------------------------------------------------------------

def value_seq_even(prev: Snapshot, new: Snapshot) -> Optional[str]:
    for name, (hi, _) in new.items():
        if name.startswith("value") and hi % 2 != 0:
            return f"{name} seq is odd: {hi}"
    return None


def value_seq_steps_by_two(prev: Snapshot, new: Snapshot) -> Optional[str]:
    for name, (hi, _) in new.items():
        if name.startswith("value"):
            old = prev[name][0]
            if hi != old and hi != old + 2:
                return f"{name} seq changed {old} -> {hi}, not +2"
    return None


def first_halves_monotone(prev: Snapshot, new: Snapshot) -> Optional[str]:
    for name, (hi, _) in new.items():
        if name.startswith(("value", "ticket")):
            old = prev[name][0]
            if hi < old:
                return f"{name} first half decreased {old} -> {hi}"
    return None


STANDARD_INVARIANTS: tuple[Hook, ...] = (
    value_seq_even,
    value_seq_steps_by_two,
    first_halves_monotone,
)


# ---------------------------------------------------------------------------
# The machine
# ---------------------------------------------------------------------------

class Machine:
    """Single-threaded stepwise executor of process programs over a target.

    The target is a :class:`~casmax.caslib.CasRegister` or
    :class:`~casmax.caslib.MultiCasRegister` in simulator (non-atomic) mode;
    the machine owns it exclusively.
    """

    def __init__(self, target, programs: Iterable[ProcessProgram],
                 hooks: Iterable[Hook] = ()):
        programs = list(programs)
        pids = [p.pid for p in programs]
        if len(set(pids)) != len(pids):
            raise ValueError("duplicate pid in programs")
        for pid in pids:
            if not 1 <= pid <= target.nprocs:
                raise ValueError(f"pid {pid} out of range 1..{target.nprocs}")
        self.target = target
        self.programs = {p.pid: p.ops for p in programs}
        self.pids = sorted(pids)
        self.hooks = tuple(hooks)
        self.next_op = {pid: 0 for pid in pids}
        self.active: dict[int, tuple[CallState, Call]] = {}
        self.steps: list[Step] = []
        self.events: list[Event] = []
        self.calls: list[Call] = []
        self.schedule: list[int] = []
        self.prev_snap = target.snapshot()

    def runnable(self) -> list[int]:
        return [pid for pid in self.pids
                if pid in self.active
                or self.next_op[pid] < len(self.programs[pid])]

    def done(self) -> bool:
        return not self.runnable()

    def step(self, pid: int) -> bool:
        """Run one register operation of ``pid``; False if it was skipped."""
        if pid not in self.programs:
            raise ValueError(f"pid {pid} has no program")
        self.schedule.append(pid)
        if pid in self.active:
            state, call = self.active[pid]
        elif self.next_op[pid] < len(self.programs[pid]):
            op = self.programs[pid][self.next_op[pid]]
            self.next_op[pid] += 1
            state = self.target.begin(pid, op.kind, op.a, op.b, op.obj)
            call = Call(cid=len(self.calls), pid=pid, kind=op.kind,
                        a=op.a, b=op.b, obj=op.obj, inv_step=len(self.steps))
            self.calls.append(call)
            self.active[pid] = (state, call)
            args = (op.a, op.b) if op.kind == "cas" else ()
            self.events.append(Event("inv", pid, op.kind, args, None,
                                     len(self.steps)))
        else:
            return False

        eff = self.target.step(state)
        idx = len(self.steps)
        self.steps.append(Step(idx, pid, eff.reg, eff.op, eff.args,
                               eff.observed, call.cid))
        call.steps.append(idx)
        if eff.done:
            call.ret = eff.ret
            call.res_step = idx
            del self.active[pid]
            args = (call.a, call.b) if call.kind == "cas" else ()
            self.events.append(Event("res", pid, call.kind, args,
                                     eff.ret, idx))
        if self.hooks:
            snap = self.target.snapshot()
            for hook in self.hooks:
                msg = hook(self.prev_snap, snap)
                if msg is not None:
                    info = ViolationInfo(hook.__name__, msg, idx)
                    raise InvariantViolation(hook.__name__, msg, idx,
                                             snap, self.trace(info))
            self.prev_snap = snap
        return True

    def fork(self) -> "Machine":
        """Cheap copy for schedule exploration; shares immutable records."""
        m = object.__new__(Machine)
        m.target = self.target.fork()
        m.programs = self.programs
        m.pids = self.pids
        m.hooks = self.hooks
        m.next_op = dict(self.next_op)
        m.steps = list(self.steps)
        m.events = list(self.events)
        m.schedule = list(self.schedule)
        m.calls = list(self.calls)
        m.active = {}
        for pid, (state, call) in self.active.items():
            call2 = dataclasses.replace(call, steps=list(call.steps))
            m.calls[call2.cid] = call2
            m.active[pid] = (state.clone(), call2)
        m.prev_snap = self.prev_snap
        return m

    def trace(self, violation: Optional[ViolationInfo] = None
              ) -> ExecutionTrace:
        return ExecutionTrace(
            schedule=Schedule(tuple(self.schedule)),
            register_steps=self.steps,
            events=self.events,
            calls=self.calls,
            final_state=self.target.snapshot(),
            pending=frozenset(self.active),
            nprocs=self.target.nprocs,
            width=self.target.width,
            initial_values=self.target.initial_values(),
            violation=violation,
        )


def run_schedule(target, programs: Iterable[ProcessProgram],
                 schedule: Schedule,
                 hooks: Iterable[Hook] = ()) -> ExecutionTrace:
    """Replay ``schedule`` on a fresh target; deterministic bit-for-bit."""
    machine = Machine(target, programs, hooks)
    for pid in schedule.steps:
        machine.step(pid)
    return machine.trace()


# ---------------------------------------------------------------------------
# Schedule generation
# ---------------------------------------------------------------------------

def explore(target_factory, programs: Iterable[ProcessProgram],
            hooks: Iterable[Hook] = (),
            max_schedules: Optional[int] = None) -> Iterator[ExecutionTrace]:
    """Yield the trace of every distinct interleaving, depth first.

    Only runnable processes are scheduled, so interleavings differing only
    in entries of finished processes are never produced.  Raises
    :class:`EnumerationCapExceeded` instead of silently truncating when
    ``max_schedules`` is hit.
    """
    programs = list(programs)
    stack = [Machine(target_factory(), programs, hooks)]
    produced = 0

    def leaf(trace: ExecutionTrace) -> ExecutionTrace:
        nonlocal produced
        produced += 1
        if max_schedules is not None and produced > max_schedules:
            raise EnumerationCapExceeded(max_schedules)
        return trace

    while stack:
        m = stack.pop()
        r = m.runnable()
        if not r:
            yield leaf(m.trace())
            continue
        # Reuse m for the first branch; fork for the others.  Push in
        # reverse so the lowest pid is explored first.  A schedule prefix
        # that violates an invariant becomes a leaf and is not extended.
        for pid in reversed(r[1:]):
            child = m.fork()
            try:
                child.step(pid)
            except InvariantViolation as exc:
                yield leaf(exc.trace)
                continue
            stack.append(child)
        try:
            m.step(r[0])
        except InvariantViolation as exc:
            yield leaf(exc.trace)
            continue
        stack.append(m)


def enumerate_schedules(target_factory, programs: Iterable[ProcessProgram],
                        max_schedules: Optional[int] = None
                        ) -> Iterator[Schedule]:
    for trace in explore(target_factory, programs,
                         max_schedules=max_schedules):
        yield trace.schedule


def random_run(target, programs: Iterable[ProcessProgram],
               rng: random.Random, hooks: Iterable[Hook] = (),
               truncate: Optional[int] = None) -> ExecutionTrace:
    """One run scheduling a uniformly random runnable process each step."""
    machine = Machine(target, programs, hooks)
    taken = 0
    while True:
        r = machine.runnable()
        if not r or (truncate is not None and taken >= truncate):
            break
        try:
            machine.step(rng.choice(r))
        except InvariantViolation as exc:
            return exc.trace
        taken += 1
    return machine.trace()


def random_traces(target_factory, programs: Iterable[ProcessProgram],
                  count: int, seed: int, hooks: Iterable[Hook] = (),
                  truncate: Optional[int] = None) -> Iterator[ExecutionTrace]:
    """Deterministic stream of ``count`` random-schedule traces."""
    programs = list(programs)
    rng = random.Random(seed)
    for _ in range(count):
        yield random_run(target_factory(), programs, rng, hooks, truncate)


def random_schedules(target_factory, programs: Iterable[ProcessProgram],
                     count: int, seed: int,
                     truncate: Optional[int] = None) -> Iterator[Schedule]:
    for trace in random_traces(target_factory, programs, count, seed,
                               truncate=truncate):
        yield trace.schedule


# ---------------------------------------------------------------------------
# Line-oriented trace format
# ---------------------------------------------------------------------------

def trace_lines(trace: ExecutionTrace) -> Iterator[str]:
    """Serialize a trace, one JSON record per line.

    Register steps carry {step, pid, reg, op, args, observed}; events carry
    {kind, pid, op, args, ret, step}.  A leading {kind: init} record records
    the initial object value and process count so a history file is
    self-contained.
    """
    yield json.dumps({"kind": "init", "value": trace.initial_values[0],
                      "procs": trace.nprocs})
    ev = 0
    events = trace.events
    for step in trace.register_steps:
        while ev < len(events) and events[ev].step == step.index \
                and events[ev].kind == "inv":
            yield _event_line(events[ev])
            ev += 1
        yield json.dumps({"step": step.index, "pid": step.pid,
                          "reg": step.reg, "op": step.op,
                          "args": list(step.args),
                          "observed": list(step.observed)})
        while ev < len(events) and events[ev].step == step.index \
                and events[ev].kind == "res":
            yield _event_line(events[ev])
            ev += 1
    for event in events[ev:]:
        yield _event_line(event)


def _event_line(event: Event) -> str:
    return json.dumps({"kind": event.kind, "pid": event.pid, "op": event.op,
                       "args": list(event.args), "ret": event.ret,
                       "step": event.step})


def write_trace(path, trace: ExecutionTrace) -> None:
    with open(path, "w") as fh:
        for line in trace_lines(trace):
            fh.write(line + "\n")


class HistoryParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_history(lines: Iterable[str]) -> tuple[Optional[int], list[Event]]:
    """Read events (and the init value, if present) from trace lines.

    Register-step records are ignored: the black-box checker only needs the
    invocation/response history.
    """
    initial = None
    events: list[Event] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise HistoryParseError(lineno, f"bad JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise HistoryParseError(lineno, "record is not an object")
        if "reg" in rec:
            continue
        kind = rec.get("kind")
        if kind == "init":
            initial = rec.get("value")
            continue
        if kind not in ("inv", "res"):
            raise HistoryParseError(lineno, f"unknown record kind {kind!r}")
        try:
            events.append(Event(kind, rec["pid"], rec["op"],
                                tuple(rec["args"]), rec.get("ret"),
                                rec["step"]))
        except KeyError as exc:
            raise HistoryParseError(lineno, f"missing field {exc}") from exc
    return initial, events
