"""Runtime reference semantics against independent oracles.

The increment oracle restates the wrapping formula from first
principles: applying k increments with bound E to a zeroed cell leaves
k mod (E+1), because the cell cycles through 0..E. The partition oracle
recomputes disjoint coverage by brute force, and the arena oracle
replays alloc/free traces against a plain stack model.
"""

from __future__ import annotations

import pytest

from forge.devicert import (
    ARENA_ALIGN,
    ARENA_CAPACITY,
    Arena,
    ArenaError,
    mask,
    static_bounds,
    step_add,
    step_cas,
    step_exchange,
    step_inc,
    step_max,
    step_min,
    to_signed,
)


def test_mask_and_signed_helpers():
    assert mask(32) == 0xFFFFFFFF
    assert mask(8) == 0xFF
    assert to_signed(0xFFFFFFFF, 32) == -1
    assert to_signed(0x7FFFFFFF, 32) == 0x7FFFFFFF
    assert to_signed(0x80000000, 32) == -(1 << 31)


# ---- atomic step semantics


def test_step_worked_values():
    assert step_inc(5, 5) == (0, 5)
    assert step_inc(3, 5) == (4, 3)
    assert step_add(7, 3) == (10, 7)
    assert step_add(0xFFFFFFFF, 1) == (0, 0xFFFFFFFF)
    assert step_max(4, 9) == (9, 4)
    assert step_max(9, 4) == (9, 9)
    assert step_min(9, 4) == (4, 9)
    assert step_exchange(2, 8) == (8, 2)
    assert step_cas(5, 5, 1) == (1, 5)
    assert step_cas(5, 6, 1) == (5, 5)


def test_inc_sequence_matches_modular_oracle():
    checked = 0
    for e in range(1, 8):
        x = 0
        for k in range(0, 51):
            assert x == k % (e + 1), (e, k)
            x, old = step_inc(x, e)
            assert old == k % (e + 1)
            checked += 1
    assert checked == 7 * 51


def test_inc_never_exceeds_bound():
    for e in range(1, 8):
        x = 0
        for _ in range(200):
            x, _ = step_inc(x, e)
            assert 0 <= x <= e


# ---- worksharing partition


def cover_oracle(lb: int, ub: int, nthreads: int) -> None:
    """Each index in [lb, ub] must land in exactly one thread's range."""
    owners = {}
    for tid in range(nthreads):
        my_lb, my_ub = static_bounds(lb, ub, tid, nthreads)
        for i in range(my_lb, my_ub + 1):
            assert i not in owners, (lb, ub, nthreads, i)
            owners[i] = tid
    assert sorted(owners) == list(range(lb, ub + 1)), (lb, ub, nthreads)


def test_partition_worked_example():
    assert static_bounds(0, 99, 1, 4) == (25, 49)


def test_partition_disjoint_cover_all_thread_counts():
    for nthreads in range(1, 33):
        for span in (1, 2, 3, 5, 31, 32, 33, 100, 999, 1000):
            cover_oracle(0, span - 1, nthreads)


def test_partition_with_shifted_lower_bound():
    for lb in (-7, 1, 13):
        for nthreads in (1, 3, 8, 32):
            cover_oracle(lb, lb + 99, nthreads)


def test_partition_empty_tail_threads():
    # 2 indexes over 4 threads: threads 2 and 3 get empty ranges.
    assert static_bounds(0, 1, 0, 4) == (0, 0)
    assert static_bounds(0, 1, 1, 4) == (1, 1)
    for tid in (2, 3):
        my_lb, my_ub = static_bounds(0, 1, tid, 4)
        assert my_lb > 1 or my_ub < my_lb


# ---- shared arena


def arena_oracle(trace):
    """Replay (op, size) against a stack of (offset, aligned size)."""
    stack = []
    cursor = 0
    results = []
    for op, size in trace:
        aligned = (size + ARENA_ALIGN - 1) // ARENA_ALIGN * ARENA_ALIGN
        if op == "alloc":
            if cursor + aligned > ARENA_CAPACITY:
                results.append(("trap", 1))
                break
            stack.append((cursor, aligned))
            results.append(("off", cursor))
            cursor += aligned
        else:
            off, sz = stack.pop()
            cursor = off
            results.append(("freed", off))
    return results


def test_arena_lifo_replay_matches_oracle():
    import random

    rng = random.Random(20240817)
    for _ in range(50):
        arena = Arena()
        live = []
        trace = []
        for _ in range(rng.randint(1, 40)):
            if live and rng.random() < 0.4:
                off, size = live.pop()
                trace.append(("free", size))
                arena.free(off, size)
            else:
                size = rng.randint(1, 512)
                trace.append(("alloc", size))
                off = arena.alloc(size)
                live.append((off, size))
        expect = arena_oracle(trace)
        got = []
        replay = Arena()
        stack = []
        for op, size in trace:
            if op == "alloc":
                off = replay.alloc(size)
                stack.append((off, size))
                got.append(("off", off))
            else:
                off, sz = stack.pop()
                replay.free(off, sz)
                got.append(("freed", off))
        assert got == expect


def test_arena_alignment():
    arena = Arena()
    a = arena.alloc(1)
    b = arena.alloc(1)
    assert a == 0
    assert b == ARENA_ALIGN


def test_arena_overflow_code():
    arena = Arena(capacity=64)
    arena.alloc(32)
    with pytest.raises(ArenaError) as exc:
        arena.alloc(64)
    assert exc.value.code == 1


def test_arena_oversized_request_traps():
    arena = Arena(capacity=64)
    with pytest.raises(ArenaError) as exc:
        arena.alloc(65)
    assert exc.value.code == 1


def test_arena_non_lifo_free_code():
    arena = Arena()
    first = arena.alloc(16)
    arena.alloc(16)
    with pytest.raises(ArenaError) as exc:
        arena.free(first, 16)
    assert exc.value.code == 2


def test_arena_lifo_free_reuses_space():
    arena = Arena(capacity=32)
    off = arena.alloc(32)
    arena.free(off, 32)
    assert arena.alloc(32) == off
