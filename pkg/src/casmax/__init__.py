"""Wait-free CAS from half-max/max-write registers, with mechanical checking."""

from .caslib import MUTATIONS, CasRegister, MultiCasRegister
from .lincheck import (check_history, check_linearizable, check_trace,
                       linearize_by_definition, spec_apply,
                       validate_assignment)
from .machine import (Machine, Op, ProcessProgram, Schedule,
                      STANDARD_INVARIANTS, enumerate_schedules, explore,
                      random_schedules, random_traces, run_schedule)
from .registers import AtomicRegisterWord, PackedPWord, RegisterWord

__all__ = [
    "AtomicRegisterWord", "CasRegister", "Machine", "MultiCasRegister",
    "MUTATIONS", "Op", "PackedPWord", "ProcessProgram", "RegisterWord",
    "STANDARD_INVARIANTS", "Schedule", "check_history", "check_linearizable",
    "check_trace", "enumerate_schedules", "explore", "linearize_by_definition",
    "random_schedules", "random_traces", "run_schedule", "spec_apply",
    "validate_assignment",
]
