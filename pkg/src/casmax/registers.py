"""Two-half register words and the four primitive operations.

A :class:`RegisterWord` holds two unsigned fields ``(hi, lo)`` of ``width``
bits each and supports ``read``, ``write``, ``half_max`` and ``max_write``.
``half_max`` and ``max_write`` only ever move ``hi`` upward, which is what
makes the CAS construction on top of them work.

Two variants exist:

* :class:`RegisterWord` -- no internal locking; for the single-threaded
  deterministic simulator, where the scheduler serializes every access.
* :class:`AtomicRegisterWord` -- every operation runs under a per-word lock,
  emulating a single 2*width-bit atomic unit for the live multi-threaded
  build.
"""

from __future__ import annotations

import math
import threading


class FieldOverflowError(ValueError):
    """A field value does not fit in the configured bit width."""


class CounterOverflowError(FieldOverflowError):
    """A per-process operation counter exceeded its packed bit budget."""


class RegisterWord:
    """A register with two unsigned halves of ``width`` bits each."""

    __slots__ = ("hi", "lo", "width", "_mask")

    def __init__(self, hi: int = 0, lo: int = 0, width: int = 64):
        if width < 1:
            raise ValueError("width must be positive")
        self.width = width
        self._mask = (1 << width) - 1
        self._check(hi, lo)
        self.hi = hi
        self.lo = lo

    def _check(self, *values: int) -> None:
        for v in values:
            if v < 0 or v > self._mask:
                raise FieldOverflowError(
                    f"value {v} does not fit in {self.width} bits"
                )

    def read(self) -> tuple[int, int]:
        return (self.hi, self.lo)

    def write(self, hi: int, lo: int) -> None:
        self._check(hi, lo)
        self.hi = hi
        self.lo = lo

    def half_max(self, x: int) -> None:
        """Replace ``hi`` with ``max(hi, x)``; ``lo`` is untouched."""
        self._check(x)
        if x > self.hi:
            self.hi = x

    def max_write(self, x: int, y: int) -> None:
        """Write ``(x, y)`` iff ``x >= hi``; otherwise leave unchanged.

        Equality performs the write: ``x == hi`` replaces both halves.
        """
        self._check(x, y)
        if x >= self.hi:
            self.hi = x
            self.lo = y

    def copy(self) -> "RegisterWord":
        return RegisterWord(self.hi, self.lo, self.width)

    def __repr__(self) -> str:
        return f"({self.hi}|{self.lo})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegisterWord):
            return NotImplemented
        return (self.hi, self.lo, self.width) == (other.hi, other.lo, other.width)


class AtomicRegisterWord(RegisterWord):
    """Thread-safe register word: each operation is one critical section.

    Emulates a 2*width-bit atomic unit so that concurrent half_max /
    max_write / read never observe or produce a torn pair.
    """

    __slots__ = ("_lock",)

    def __init__(self, hi: int = 0, lo: int = 0, width: int = 64):
        super().__init__(hi, lo, width)
        self._lock = threading.Lock()

    def read(self) -> tuple[int, int]:
        with self._lock:
            return (self.hi, self.lo)

    def write(self, hi: int, lo: int) -> None:
        with self._lock:
            super().write(hi, lo)

    def half_max(self, x: int) -> None:
        with self._lock:
            super().half_max(x)

    def max_write(self, x: int, y: int) -> None:
        with self._lock:
            super().max_write(x, y)


def pid_bits(nprocs: int) -> int:
    """Bit budget for a process identifier among ``nprocs`` processes."""
    if nprocs < 1:
        raise ValueError("nprocs must be >= 1")
    return math.ceil(math.log2(nprocs)) + 1 if nprocs > 1 else 1


class PackedPWord:
    """A register whose lo-half packs a (pid, count) pair; hi-half is a seq.

    The pid occupies the top ``pid_bits(nprocs)`` bits of the lo-half and the
    count the remaining bits.  Count overflow raises instead of wrapping:
    wraparound would silently corrupt the max-order the construction relies
    on.
    """

    __slots__ = ("word", "nprocs", "_pid_bits", "_count_bits", "_count_mask")

    def __init__(self, nprocs: int, width: int = 64, atomic: bool = False):
        self.nprocs = nprocs
        self._pid_bits = pid_bits(nprocs)
        self._count_bits = width - self._pid_bits
        if self._count_bits < 1:
            raise FieldOverflowError(
                f"width {width} leaves no room for a count after "
                f"{self._pid_bits} pid bits"
            )
        self._count_mask = (1 << self._count_bits) - 1
        cls = AtomicRegisterWord if atomic else RegisterWord
        self.word = cls(0, 0, width)

    def pack(self, pid: int, count: int) -> int:
        if not 1 <= pid <= self.nprocs:
            raise ValueError(f"pid {pid} out of range 1..{self.nprocs}")
        if count < 0 or count > self._count_mask:
            raise CounterOverflowError(
                f"count {count} does not fit in {self._count_bits} bits"
            )
        return (pid << self._count_bits) | count

    def unpack(self, lo: int) -> tuple[int, int]:
        return (lo >> self._count_bits, lo & self._count_mask)

    def read_fields(self) -> tuple[int, int, int]:
        """Return (seq, pid, count) from one atomic read."""
        hi, lo = self.word.read()
        pid, count = self.unpack(lo)
        return (hi, pid, count)

    def copy(self) -> "PackedPWord":
        clone = PackedPWord(self.nprocs, self.word.width, atomic=False)
        clone.word.hi = self.word.hi
        clone.word.lo = self.word.lo
        return clone
