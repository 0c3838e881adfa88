"""Wait-free, linearizable compare-and-swap built from half-max/max-write.

The construction uses, for ``n`` processes:

* ``announce[i]`` -- (count, new value) announced by process i's current
  contended cas call;
* ``result[i]`` -- (count, 0/1) return value slot for that call;
* ``value`` -- (seq, val): the current object value with a version number;
* ``ticket`` -- (seq | pid, count): the competition register where
  contenders announce themselves with max_write and close the round with
  half_max.

A cas call is driven one register operation at a time through
:meth:`CasRegister.step`, so the deterministic machine can interleave calls
at register granularity.  The live build just drains the same state machine
to completion under atomic register words.

Every cas call issues at most 10 register operations (1 on the guard-fail
and no-op paths); every read issues exactly 1.

``mutation`` selects one of five deliberately seeded bugs used by the
checker test suite; ``None`` is the correct algorithm.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

from .registers import AtomicRegisterWord, PackedPWord, RegisterWord

# Seeded bugs, each removing one load-bearing element of the algorithm.
MUTATIONS = (
    "swap-inform-publish",   # publish the value before informing the winner
    "publish-plain-write",   # plain write instead of max_write on `value`
    "stale-round-close",     # close the round with seq+1 instead of seq+2
    "skip-parity-check",     # drop the even-seq check before helping
    "skip-count-check",      # drop the count-match check before helping
)

# Register-operation budget per call (wait-freedom witness).
MAX_CAS_STEPS = 10
MAX_READ_STEPS = 1


@dataclass(slots=True)
class StepEffect:
    """One register operation performed on behalf of a call."""

    reg: str
    op: str                      # read | write | half_max | max_write
    args: tuple
    observed: tuple              # register value after the operation
    done: bool = False
    ret: object = None


@dataclass(slots=True)
class CallState:
    """Program counter and locals of one in-flight high-level call."""

    pid: int
    kind: str                    # "cas" | "read"
    a: Optional[int]
    b: Optional[int]
    obj: int
    pc: str
    seq: int = 0
    val: int = 0
    count: int = 0
    tseq: int = 0
    wpid: int = 0
    wcount: int = 0
    a_count: int = 0
    a_val: int = 0

    def clone(self) -> "CallState":
        return copy.copy(self)


class _CasCore:
    """Shared stepper over (announce, result, value, ticket) registers."""

    nprocs: int
    width: int
    mutation: Optional[str]

    # Subclasses provide per-object value/ticket registers.
    def _value(self, obj: int) -> RegisterWord:
        raise NotImplementedError

    def _ticket(self, obj: int) -> PackedPWord:
        raise NotImplementedError

    def _value_name(self, obj: int) -> str:
        raise NotImplementedError

    def _ticket_name(self, obj: int) -> str:
        raise NotImplementedError

    def _objects(self) -> int:
        raise NotImplementedError

    def _init_shared(self, nprocs: int, width: int, atomic: bool,
                     mutation: Optional[str]) -> None:
        if nprocs < 1:
            raise ValueError("nprocs must be >= 1")
        if mutation is not None and mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {mutation!r}")
        cls = AtomicRegisterWord if atomic else RegisterWord
        self.nprocs = nprocs
        self.width = width
        self.atomic = atomic
        self.mutation = mutation
        self.announce = [cls(0, 0, width) for _ in range(nprocs)]
        self.result = [cls(0, 0, width) for _ in range(nprocs)]
        self.counts = [0] * nprocs          # process-local cas counters
        self._busy = [False] * nprocs

    # -- call lifecycle -------------------------------------------------

    def begin(self, pid: int, kind: str, a: Optional[int] = None,
              b: Optional[int] = None, obj: int = 0) -> CallState:
        if not 1 <= pid <= self.nprocs:
            raise ValueError(f"pid {pid} out of range 1..{self.nprocs}")
        if not 0 <= obj < self._objects():
            raise ValueError(f"object index {obj} out of range")
        if self._busy[pid - 1]:
            raise AssertionError(f"process {pid} already has a call in flight")
        self._busy[pid - 1] = True
        if kind == "read":
            return CallState(pid, "read", None, None, obj, pc="read_value")
        if kind == "cas":
            return CallState(pid, "cas", a, b, obj, pc="guard")
        raise ValueError(f"unknown operation kind {kind!r}")

    def step(self, call: CallState) -> StepEffect:
        """Execute exactly one register operation of ``call``."""
        eff = self._advance(call)
        if eff.done:
            self._busy[call.pid - 1] = False
        return eff

    def _advance(self, call: CallState) -> StepEffect:
        pid, obj, mut = call.pid, call.obj, self.mutation
        value = self._value(obj)
        ticket = self._ticket(obj)
        vname = self._value_name(obj)
        tname = self._ticket_name(obj)

        pc = call.pc
        if pc == "read_value":
            hi, lo = value.read()
            return StepEffect(vname, "read", (), (hi, lo), done=True, ret=lo)

        if pc == "guard":
            seq, val = value.read()
            eff = StepEffect(vname, "read", (), (seq, val))
            if call.a != val:
                eff.done, eff.ret = True, False
            elif call.a == call.b:
                eff.done, eff.ret = True, True
            else:
                # Local bookkeeping folded into this step: remember the
                # snapshot and bump the process-local counter.
                call.seq, call.val = seq, val
                self.counts[pid - 1] += 1
                call.count = self.counts[pid - 1]
                call.pc = "announce"
            return eff

        if pc == "announce":
            reg = self.announce[pid - 1]
            reg.write(call.count, call.b)
            call.pc = "init_result"
            return StepEffect(f"announce[{pid}]", "write",
                              (call.count, call.b), reg.read())

        if pc == "init_result":
            reg = self.result[pid - 1]
            reg.write(call.count, 0)
            call.pc = "compete"
            return StepEffect(f"result[{pid}]", "write",
                              (call.count, 0), reg.read())

        if pc == "compete":
            packed = ticket.pack(pid, call.count)
            ticket.word.max_write(call.seq + 1, packed)
            call.pc = "close_round"
            return StepEffect(tname, "max_write",
                              (call.seq + 1, packed), ticket.word.read())

        if pc == "close_round":
            x = call.seq + (1 if mut == "stale-round-close" else 2)
            ticket.word.half_max(x)
            call.pc = "read_ticket"
            return StepEffect(tname, "half_max", (x,), ticket.word.read())

        if pc == "read_ticket":
            hi, lo = ticket.word.read()
            call.tseq = hi
            call.wpid, call.wcount = ticket.unpack(lo)
            call.pc = "read_announcement"
            return StepEffect(tname, "read", (), (hi, lo))

        if pc == "read_announcement":
            reg = self.announce[call.wpid - 1]
            ca, aval = reg.read()
            call.a_count, call.a_val = ca, aval
            # The help decision is local; it folds into this read step.
            parity_ok = call.tseq % 2 == 0 or mut == "skip-parity-check"
            count_ok = call.wcount == ca or mut == "skip-count-check"
            if parity_ok and count_ok:
                call.pc = ("publish" if mut == "swap-inform-publish"
                           else "inform")
            else:
                call.pc = "read_result"
            return StepEffect(f"announce[{call.wpid}]", "read", (), (ca, aval))

        if pc == "inform":
            reg = self.result[call.wpid - 1]
            reg.max_write(call.a_count, 1)
            call.pc = ("read_result" if mut == "swap-inform-publish"
                       else "publish")
            return StepEffect(f"result[{call.wpid}]", "max_write",
                              (call.a_count, 1), reg.read())

        if pc == "publish":
            if mut == "publish-plain-write":
                value.write(call.tseq, call.a_val)
                op = "write"
            else:
                value.max_write(call.tseq, call.a_val)
                op = "max_write"
            call.pc = ("inform" if mut == "swap-inform-publish"
                       else "read_result")
            return StepEffect(vname, op, (call.tseq, call.a_val), value.read())

        if pc == "read_result":
            observed = self.result[pid - 1].read()
            return StepEffect(f"result[{pid}]", "read", (), observed,
                              done=True, ret=bool(observed[1]))

        raise AssertionError(f"corrupt call state: pc={pc!r}")

    # -- live (run-to-completion) interface ------------------------------

    def _run(self, call: CallState) -> tuple[object, int]:
        steps = 0
        while True:
            eff = self.step(call)
            steps += 1
            if eff.done:
                return eff.ret, steps

    def cas(self, pid: int, a: int, b: int, obj: int = 0) -> bool:
        ret, _ = self._run(self.begin(pid, "cas", a, b, obj))
        return ret

    def cas_counted(self, pid: int, a: int, b: int,
                    obj: int = 0) -> tuple[bool, int]:
        """Like :meth:`cas` but also reports the register-operation count."""
        return self._run(self.begin(pid, "cas", a, b, obj))

    def read(self, pid: int, obj: int = 0) -> int:
        ret, _ = self._run(self.begin(pid, "read", obj=obj))
        return ret

    # -- introspection ----------------------------------------------------

    def _shared_snapshot(self) -> dict[str, tuple[int, int]]:
        snap = {}
        for i in range(self.nprocs):
            snap[f"announce[{i + 1}]"] = self.announce[i].read()
            snap[f"result[{i + 1}]"] = self.result[i].read()
        return snap


class CasRegister(_CasCore):
    """A single simulated compare-and-swap register for ``nprocs`` processes."""

    def __init__(self, nprocs: int, initial: int = 0, width: int = 64,
                 atomic: bool = False, mutation: Optional[str] = None):
        self._init_shared(nprocs, width, atomic, mutation)
        cls = AtomicRegisterWord if atomic else RegisterWord
        self.value = cls(0, initial, width)
        self.ticket = PackedPWord(nprocs, width, atomic)
        self.initial = initial

    def _value(self, obj: int) -> RegisterWord:
        return self.value

    def _ticket(self, obj: int) -> PackedPWord:
        return self.ticket

    def _value_name(self, obj: int) -> str:
        return "value"

    def _ticket_name(self, obj: int) -> str:
        return "ticket"

    def _objects(self) -> int:
        return 1

    def register_count(self) -> int:
        """Number of shared registers: 2n entries plus value and ticket."""
        return 2 * self.nprocs + 2

    def initial_values(self) -> tuple[int, ...]:
        return (self.initial,)

    def snapshot(self) -> dict[str, tuple[int, int]]:
        snap = self._shared_snapshot()
        snap["value"] = self.value.read()
        snap["ticket"] = self.ticket.word.read()
        return snap

    def fork(self) -> "CasRegister":
        if self.atomic:
            raise ValueError("cannot fork a live (atomic) register")
        clone = CasRegister(self.nprocs, self.initial, self.width,
                            mutation=self.mutation)
        clone.announce = [r.copy() for r in self.announce]
        clone.result = [r.copy() for r in self.result]
        clone.value = self.value.copy()
        clone.ticket = self.ticket.copy()
        clone.counts = list(self.counts)
        clone._busy = list(self._busy)
        return clone


class MultiCasRegister(_CasCore):
    """``nobjects`` CAS registers sharing one announce/result pair per process.

    The per-process counter is shared across objects, so announce/result
    entries written for different objects never alias: the counter totally
    orders them.  Total shared register count is exactly
    ``2 * nprocs + 2 * nobjects``.
    """

    def __init__(self, nprocs: int, nobjects: int,
                 initial_values=None, width: int = 64,
                 atomic: bool = False, mutation: Optional[str] = None):
        if nobjects < 1:
            raise ValueError("nobjects must be >= 1")
        self._init_shared(nprocs, width, atomic, mutation)
        if initial_values is None:
            initial_values = [0] * nobjects
        if len(initial_values) != nobjects:
            raise ValueError("need one initial value per object")
        cls = AtomicRegisterWord if atomic else RegisterWord
        self.nobjects = nobjects
        self.values = [cls(0, v, width) for v in initial_values]
        self.tickets = [PackedPWord(nprocs, width, atomic)
                        for _ in range(nobjects)]
        self.initials = tuple(initial_values)

    def _value(self, obj: int) -> RegisterWord:
        return self.values[obj]

    def _ticket(self, obj: int) -> PackedPWord:
        return self.tickets[obj]

    def _value_name(self, obj: int) -> str:
        return f"value[{obj}]"

    def _ticket_name(self, obj: int) -> str:
        return f"ticket[{obj}]"

    def _objects(self) -> int:
        return self.nobjects

    def register_count(self) -> int:
        return 2 * self.nprocs + 2 * self.nobjects

    def initial_values(self) -> tuple[int, ...]:
        return self.initials

    def snapshot(self) -> dict[str, tuple[int, int]]:
        snap = self._shared_snapshot()
        for k in range(self.nobjects):
            snap[f"value[{k}]"] = self.values[k].read()
            snap[f"ticket[{k}]"] = self.tickets[k].word.read()
        return snap

    def fork(self) -> "MultiCasRegister":
        if self.atomic:
            raise ValueError("cannot fork a live (atomic) register")
        clone = MultiCasRegister(self.nprocs, self.nobjects, self.initials,
                                 self.width, mutation=self.mutation)
        clone.announce = [r.copy() for r in self.announce]
        clone.result = [r.copy() for r in self.result]
        clone.values = [r.copy() for r in self.values]
        clone.tickets = [t.copy() for t in self.tickets]
        clone.counts = list(self.counts)
        clone._busy = list(self._busy)
        return clone
