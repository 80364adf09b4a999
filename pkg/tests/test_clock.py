from teleshift.clock import LamportClock, VersionStamp, observe, stamp_next


def test_stamp_next_increments():
    clock = LamportClock(0, "a")
    clock, stamp = stamp_next(clock)
    assert stamp == VersionStamp(1, "a")
    assert clock.counter == 1


def test_stamp_next_strictly_increasing():
    clock = LamportClock(0, "a")
    clock, first = stamp_next(clock)
    clock, second = stamp_next(clock)
    assert first == VersionStamp(1, "a")
    assert second == VersionStamp(2, "a")
    assert first < second


def test_equal_counters_tie_break_on_actor():
    ca, sa = stamp_next(LamportClock(3, "a"))
    cb, sb = stamp_next(LamportClock(3, "b"))
    assert sa == VersionStamp(4, "a")
    assert sb == VersionStamp(4, "b")
    assert sa != sb
    assert sa < sb


def test_observe_takes_max():
    assert observe(LamportClock(2, "a"), VersionStamp(7, "b")) == LamportClock(7, "a")


def test_observe_never_regresses():
    assert observe(LamportClock(9, "a"), VersionStamp(3, "b")) == LamportClock(9, "a")


def test_observe_idempotent():
    clock = LamportClock(2, "a")
    once = observe(clock, VersionStamp(7, "b"))
    twice = observe(once, VersionStamp(7, "b"))
    assert once == twice


def test_stamp_orders_after_observed_remote():
    clock = observe(LamportClock(2, "a"), VersionStamp(7, "b"))
    _, stamp = stamp_next(clock)
    assert stamp > VersionStamp(7, "b")
