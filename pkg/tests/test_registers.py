import threading

import pytest
from hypothesis import given, strategies as st

from casmax.registers import (AtomicRegisterWord, CounterOverflowError,
                              FieldOverflowError, PackedPWord, RegisterWord,
                              pid_bits)


def test_read_returns_current_pair():
    assert RegisterWord(2, 9).read() == (2, 9)
    assert RegisterWord().read() == (0, 0)


def test_write_is_unconditional():
    r = RegisterWord(9, 9)
    r.write(0, 0)
    assert r.read() == (0, 0)
    r.write(3, 4)
    assert r.read() == (3, 4)
    r.write(3, 4)
    assert r.read() == (3, 4)


def test_half_max_branches():
    r = RegisterWord(2, 9)
    r.half_max(5)
    assert r.read() == (5, 9)
    r2 = RegisterWord(7, 9)
    r2.half_max(5)
    assert r2.read() == (7, 9)
    r3 = RegisterWord(5, 9)
    r3.half_max(5)
    assert r3.read() == (5, 9)


def test_max_write_branches():
    r = RegisterWord(2, 9)
    r.max_write(3, 4)
    assert r.read() == (3, 4)
    # equality still writes: the condition is x >= hi, not x > hi
    r2 = RegisterWord(2, 9)
    r2.max_write(2, 4)
    assert r2.read() == (2, 4)
    r3 = RegisterWord(2, 9)
    r3.max_write(1, 4)
    assert r3.read() == (2, 9)


def test_field_overflow_detected():
    r = RegisterWord(0, 0, width=8)
    with pytest.raises(FieldOverflowError):
        r.write(256, 0)
    with pytest.raises(FieldOverflowError):
        r.half_max(300)
    with pytest.raises(FieldOverflowError):
        r.max_write(1, 1000)
    with pytest.raises(FieldOverflowError):
        RegisterWord(256, 0, width=8)


@given(st.lists(st.tuples(st.sampled_from(["half_max", "max_write"]),
                          st.integers(0, 1000), st.integers(0, 1000)),
                max_size=50))
def test_first_half_monotone_under_max_ops(ops):
    r = RegisterWord(0, 0, width=16)
    last_hi = 0
    for name, x, y in ops:
        if name == "half_max":
            r.half_max(x)
        else:
            r.max_write(x, y)
        hi, _ = r.read()
        assert hi >= last_hi
        last_hi = hi


@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_half_max_commutes_on_first_half(hi0, x, y):
    a = RegisterWord(hi0, 0, width=16)
    b = RegisterWord(hi0, 0, width=16)
    a.half_max(x)
    a.half_max(y)
    b.half_max(y)
    b.half_max(x)
    assert a.read()[0] == b.read()[0] == max(hi0, x, y)


def test_pid_bits():
    assert pid_bits(1) == 1
    assert pid_bits(2) == 2
    assert pid_bits(3) == 3
    assert pid_bits(4) == 3
    assert pid_bits(8) == 4


@given(st.integers(1, 64), st.data())
def test_pack_unpack_round_trip(nprocs, data):
    p = PackedPWord(nprocs, width=64)
    pid = data.draw(st.integers(1, nprocs))
    count = data.draw(st.integers(0, p._count_mask))
    assert p.unpack(p.pack(pid, count)) == (pid, count)


def test_pack_range_checks():
    p = PackedPWord(3, width=8)  # 3 pid bits, 5 count bits
    with pytest.raises(ValueError):
        p.pack(0, 1)
    with pytest.raises(ValueError):
        p.pack(4, 1)
    with pytest.raises(CounterOverflowError):
        p.pack(1, 32)
    assert p.unpack(p.pack(3, 31)) == (3, 31)


def test_packed_word_too_narrow():
    with pytest.raises(FieldOverflowError):
        PackedPWord(2, width=2)


def test_atomic_word_no_torn_pairs():
    # Writers keep the invariant lo == 3*hi + 1; any torn read breaks it.
    reg = AtomicRegisterWord(0, 1, width=32)
    stop = threading.Event()
    torn = []

    def writer(base):
        for i in range(2000):
            x = base + i
            reg.max_write(x, 3 * x + 1)

    def reader():
        while not stop.is_set():
            hi, lo = reg.read()
            if lo != 3 * hi + 1:
                torn.append((hi, lo))
                return

    readers = [threading.Thread(target=reader) for _ in range(2)]
    writers = [threading.Thread(target=writer, args=(b,))
               for b in (0, 1000, 2000)]
    for t in readers + writers:
        t.start()
    for t in writers:
        t.join()
    stop.set()
    for t in readers:
        t.join()
    assert not torn
    assert reg.read()[0] == 3999


def test_atomic_half_max_monotone_under_threads():
    reg = AtomicRegisterWord(0, 0, width=32)
    seen = []

    def writer(vals):
        for v in vals:
            reg.half_max(v)

    def reader():
        last = 0
        for _ in range(5000):
            hi, _ = reg.read()
            assert hi >= last
            last = hi
        seen.append(last)

    threads = [threading.Thread(target=writer, args=(range(0, 3000, 3),)),
               threading.Thread(target=writer, args=(range(1, 3000, 3),)),
               threading.Thread(target=reader)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert reg.read()[0] == 2998
