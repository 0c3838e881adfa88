"""Linearizability checking for cas/read histories.

Two independent engines:

* :func:`check_linearizable` -- a black-box checker over
  invocation/response histories.  It searches for a total order of calls
  that extends the real-time partial order and replays correctly through
  the sequential compare-and-swap specification (Wing--Gong style state
  search with memoization).  Pending calls may be assigned an effect or
  dropped.

* :func:`linearize_by_definition` / :func:`validate_assignment` -- a
  white-box oracle that assigns a linearization point to every call from
  the full register-level trace, classifying each cas call into one of the
  cases below, and then validates placement, ordering and return values:

  - case 1: the initial value-read saw val != a (point: that read);
  - case 2: val == a == b (point: that read);
  - case 3: val == a != b and the value register's seq eventually reached
    seq+2; the point is the first publish step that made seq+2 current.
    3a if the publisher's ticket read named this call's process (the call
    won), 3b otherwise (placed just after the same point);
  - case 4: seq+2 was never reached -- the call took no effect and is
    placed at the end; a *finished* case-4 call is itself a bug.

Agreement of the two engines on every trace is the core acceptance
property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .machine import Event, ExecutionTrace
from .registers import pid_bits

DEFAULT_BUDGET = 10 ** 7

RETURN_TABLE = {"1": False, "2": True, "3a": True, "3b": False}


def spec_apply(state: int, op: str, args: tuple) -> tuple[int, object]:
    """Sequential compare-and-swap specification."""
    if op == "cas":
        a, b = args
        if state == a:
            return (b, True)
        return (state, False)
    if op == "read":
        return (state, state)
    raise ValueError(f"unknown operation {op!r}")


@dataclass(frozen=True, slots=True)
class HistoryCall:
    pid: int
    op: str
    args: tuple
    ret: object
    inv_step: int
    res_step: Optional[int]

    @property
    def finished(self) -> bool:
        return self.res_step is not None


def calls_from_events(events: Iterable[Event]) -> list[HistoryCall]:
    """Match invocations to responses; pending calls keep res_step None."""
    open_calls: dict[int, dict] = {}
    calls: list[HistoryCall] = []
    order: list[dict] = []
    for ev in events:
        if ev.kind == "inv":
            if ev.pid in open_calls:
                raise ValueError(f"pid {ev.pid}: overlapping invocations")
            rec = {"pid": ev.pid, "op": ev.op, "args": tuple(ev.args),
                   "inv": ev.step, "ret": None, "res": None}
            open_calls[ev.pid] = rec
            order.append(rec)
        elif ev.kind == "res":
            rec = open_calls.pop(ev.pid, None)
            if rec is None:
                raise ValueError(f"pid {ev.pid}: response without invocation")
            rec["ret"] = ev.ret
            rec["res"] = ev.step
        else:
            raise ValueError(f"unknown event kind {ev.kind!r}")
    for rec in order:
        calls.append(HistoryCall(rec["pid"], rec["op"], rec["args"],
                                 rec["ret"], rec["inv"], rec["res"]))
    return calls


def history_calls(trace: ExecutionTrace, obj: int = 0) -> list[HistoryCall]:
    """Black-box view of a trace restricted to one object."""
    out = []
    for c in trace.calls:
        if c.obj != obj:
            continue
        args = (c.a, c.b) if c.kind == "cas" else ()
        out.append(HistoryCall(c.pid, c.kind, args, c.ret,
                               c.inv_step, c.res_step))
    return out


# ---------------------------------------------------------------------------
# Black-box checker
# ---------------------------------------------------------------------------

ACCEPTED = "accepted"
REJECTED = "rejected"
BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(slots=True)
class Verdict:
    status: str
    witness: Optional[list[tuple[HistoryCall, object]]] = None
    counterexample: Optional[list[Event]] = None
    nodes: int = 0

    @property
    def accepted(self) -> bool:
        return self.status == ACCEPTED


def check_linearizable(calls: list[HistoryCall], initial_value: int,
                       budget: int = DEFAULT_BUDGET) -> Verdict:
    """Search for a correct linearization of ``calls``.

    Accepted iff some total order extending real-time precedence replays
    every finished call's return value; pending calls may take effect with
    any return or be dropped.  ``budget`` caps explored search nodes;
    exceeding it is reported distinctly from rejection.
    """
    n = len(calls)
    finished = frozenset(i for i in range(n) if calls[i].finished)
    preds = []
    for c in calls:
        preds.append(frozenset(
            j for j in range(n)
            if calls[j].res_step is not None
            and calls[j].res_step < c.inv_step))

    memo: set = set()
    nodes = 0
    budget_hit = False
    witness: list[tuple[HistoryCall, object]] = []

    def dfs(done: frozenset, state: int) -> bool:
        nonlocal nodes, budget_hit
        if finished <= done:
            return True
        key = (done, state)
        if key in memo:
            return False
        nodes += 1
        if nodes > budget:
            budget_hit = True
            return False
        for i in range(n):
            if i in done or not preds[i] <= done:
                continue
            c = calls[i]
            state2, ret = spec_apply(state, c.op, c.args)
            if c.finished and ret != c.ret:
                continue
            witness.append((c, ret))
            if dfs(done | {i}, state2):
                return True
            witness.pop()
        memo.add(key)
        return False

    ok = dfs(frozenset(), initial_value)
    if ok:
        return Verdict(ACCEPTED, witness=list(witness), nodes=nodes)
    if budget_hit:
        return Verdict(BUDGET_EXCEEDED, nodes=nodes)
    return Verdict(REJECTED, nodes=nodes)


def check_history(events: list[Event], initial_value: int,
                  budget: int = DEFAULT_BUDGET,
                  want_counterexample: bool = True) -> Verdict:
    """Check an event history; on rejection, find the minimal bad prefix."""
    verdict = check_linearizable(calls_from_events(events), initial_value,
                                 budget)
    if verdict.status == REJECTED and want_counterexample:
        for k in range(1, len(events) + 1):
            prefix = events[:k]
            v = check_linearizable(calls_from_events(prefix),
                                   initial_value, budget)
            if v.status == REJECTED:
                verdict.counterexample = prefix
                break
    return verdict


# ---------------------------------------------------------------------------
# White-box oracle
# ---------------------------------------------------------------------------

class ClassificationError(Exception):
    """No qualifying publish step found for a case-3 call: a caslib bug."""


@dataclass(frozen=True, slots=True)
class PointAssignment:
    case: str                    # "read" | "1" | "2" | "3a" | "3b" | "4"
    point: Optional[int]         # step index; None for case 4 (end placement)
    order_key: tuple


@dataclass(slots=True)
class DefinitionAssignment:
    points: dict[int, PointAssignment]          # call id -> assignment
    order: list[int] = field(default_factory=list)  # call ids by order_key

    def case_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for pa in self.points.values():
            hist[pa.case] = hist.get(pa.case, 0) + 1
        return hist


def _register_names(trace: ExecutionTrace, obj: int) -> tuple[str, str]:
    if "value" in trace.final_state:
        return "value", "ticket"
    return f"value[{obj}]", f"ticket[{obj}]"


def linearize_by_definition(trace: ExecutionTrace,
                            obj: int = 0) -> DefinitionAssignment:
    """Assign a linearization point to every call of ``obj`` in the trace."""
    vname, tname = _register_names(trace, obj)
    count_bits = trace.width - pid_bits(trace.nprocs)

    # First step index at which each seq value became current on `value`.
    first_seq_step: dict[int, int] = {}
    for step in trace.register_steps:
        if step.reg == vname and step.op in ("max_write", "write"):
            seq = step.observed[0]
            if seq not in first_seq_step:
                first_seq_step[seq] = step.index
    final_seq = trace.final_state[vname][0]

    points: dict[int, PointAssignment] = {}
    for call in trace.calls:
        if call.obj != obj:
            continue
        start = call.steps[0]
        if call.kind == "read":
            points[call.cid] = PointAssignment("read", start, (start, 0, 0))
            continue
        seq0, val0 = trace.register_steps[start].observed
        if val0 != call.a:
            points[call.cid] = PointAssignment("1", start, (start, 0, 0))
            continue
        if call.a == call.b:
            points[call.cid] = PointAssignment("2", start, (start, 0, 0))
            continue
        target = seq0 + 2
        if final_seq < target:
            points[call.cid] = PointAssignment(
                "4", None, (math.inf, 0, call.pid))
            continue
        p = first_seq_step.get(target)
        if p is None:
            raise ClassificationError(
                f"call {call.cid} (pid {call.pid}): no publish step wrote "
                f"seq {target} although the final seq is {final_seq}")
        publisher = trace.calls[trace.register_steps[p].call]
        ticket_read = next(
            (trace.register_steps[i] for i in publisher.steps
             if trace.register_steps[i].reg == tname
             and trace.register_steps[i].op == "read"), None)
        if ticket_read is None:
            raise ClassificationError(
                f"publisher call {publisher.cid} has no ticket read")
        winner_pid = ticket_read.observed[1] >> count_bits
        if winner_pid == call.pid:
            points[call.cid] = PointAssignment("3a", p, (p, 0, 0))
        else:
            points[call.cid] = PointAssignment("3b", p, (p, 1, call.pid))

    assignment = DefinitionAssignment(points)
    assignment.order = sorted(points, key=lambda cid: points[cid].order_key)
    return assignment


@dataclass(slots=True)
class OracleVerdict:
    ok: bool
    failures: list[str]
    cases: dict[int, str]


def validate_assignment(trace: ExecutionTrace,
                        assignment: DefinitionAssignment,
                        obj: int = 0) -> OracleVerdict:
    """Validate a linearization-point assignment against the trace.

    Checks: (i) every finished call's point lies within its call span and
    no finished call is classified case 4; (ii) replaying the calls in
    point order through the sequential specification reproduces both the
    per-case return-value table and every actual return value; (iii) the
    induced total order extends the real-time partial order; (iv) each seq
    round has exactly one winning (3a) call.
    """
    failures: list[str] = []
    calls = {c.cid: c for c in trace.calls if c.obj == obj}
    points = assignment.points
    initial = trace.initial_values[obj]

    # (i) placement
    for cid, pa in points.items():
        call = calls[cid]
        if pa.case == "4":
            if call.finished:
                failures.append(
                    f"call {cid} (pid {call.pid}) finished but was "
                    "classified as never taking effect (case 4)")
            continue
        if call.finished:
            if not call.steps[0] <= pa.point <= call.steps[-1]:
                failures.append(
                    f"call {cid} point {pa.point} outside span "
                    f"[{call.steps[0]}, {call.steps[-1]}]")
        elif pa.point < call.steps[0]:
            failures.append(
                f"pending call {cid} point {pa.point} before call start "
                f"{call.steps[0]}")

    # (ii) replay in point order
    state = initial
    for cid in assignment.order:
        call = calls[cid]
        pa = points[cid]
        if pa.case == "4":
            continue
        args = (call.a, call.b) if call.kind == "cas" else ()
        state, ret = spec_apply(state, call.kind, args)
        if pa.case in RETURN_TABLE and ret != RETURN_TABLE[pa.case]:
            failures.append(
                f"call {cid} case {pa.case}: replay returned {ret}, the "
                f"case demands {RETURN_TABLE[pa.case]}")
        if call.finished and call.ret != ret:
            failures.append(
                f"call {cid} (pid {call.pid}, {call.kind}{args}) returned "
                f"{call.ret} but the replay yields {ret}")

    # (iii) real-time order
    position = {cid: i for i, cid in enumerate(assignment.order)}
    cids = list(points)
    for x in cids:
        cx = calls[x]
        if not cx.finished:
            continue
        for y in cids:
            if x != y and cx.res_step < calls[y].inv_step \
                    and position[x] > position[y]:
                failures.append(
                    f"order violates real-time precedence: call {x} ends "
                    f"before call {y} starts but is placed after it")

    # (iv) one winner per round
    winners: dict[int, list[int]] = {}
    for cid, pa in points.items():
        if pa.case == "3a":
            winners.setdefault(pa.point, []).append(cid)
    for point, who in winners.items():
        if len(who) != 1:
            failures.append(
                f"publish step {point} is the 3a point of {len(who)} calls")

    return OracleVerdict(not failures, failures,
                         {cid: pa.case for cid, pa in points.items()})


# ---------------------------------------------------------------------------
# Combined per-trace check
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class TraceCheck:
    blackbox: str                # accepted | rejected | budget_exceeded
    whitebox_ok: bool
    failures: list[str]
    cases: dict[str, int]

    @property
    def accepted(self) -> bool:
        return self.blackbox == ACCEPTED and self.whitebox_ok


def check_trace(trace: ExecutionTrace,
                budget: int = DEFAULT_BUDGET) -> TraceCheck:
    """Run both engines on every object of a trace and merge the verdicts."""
    status = ACCEPTED
    whitebox_ok = True
    failures: list[str] = []
    cases: dict[str, int] = {}
    for obj in range(len(trace.initial_values)):
        verdict = check_linearizable(history_calls(trace, obj),
                                     trace.initial_values[obj], budget)
        if verdict.status != ACCEPTED:
            status = verdict.status
            failures.append(f"object {obj}: black-box {verdict.status}")
        try:
            assignment = linearize_by_definition(trace, obj)
        except ClassificationError as exc:
            whitebox_ok = False
            failures.append(f"object {obj}: {exc}")
            continue
        oracle = validate_assignment(trace, assignment, obj)
        if not oracle.ok:
            whitebox_ok = False
            failures.extend(f"object {obj}: {msg}" for msg in oracle.failures)
        for case, count in assignment.case_histogram().items():
            cases[case] = cases.get(case, 0) + count
    return TraceCheck(status, whitebox_ok, failures, cases)
