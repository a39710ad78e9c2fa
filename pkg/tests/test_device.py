import numpy as np
import pytest

from chypnosim.device import CRASH_READ_COUNTER, SimDevice, WriteAttempt, WriteKind
from chypnosim.power import (
    VoltageWaveform,
    hibernation_threshold,
    hold_waveform,
)
from chypnosim.profiles import builtin_profile


def kintex():
    return builtin_profile("kintex7")


def sync(t, addr, value):
    return WriteAttempt(t=t, address=addr, value=value, kind=WriteKind.SYNC)


def clear(t, addr, value):
    return WriteAttempt(t=t, address=addr, value=value, kind=WriteKind.ASYNC_CLEAR)


# --- advance -----------------------------------------------------------------

def test_advance_full_run_counts_all_cycles():
    d = SimDevice(kintex(), 10e6)
    d.advance(hold_waveform(1.0, 0.0, 1.0), 1.0)
    assert d.clock_count == 10_000_000
    assert not d.crashed


def test_advance_freezes_counter_at_hibernation_crossing():
    p = kintex()
    f = 10e6
    thr = hibernation_threshold(p, f)  # 0.70
    fall = 80e-6
    w = VoltageWaveform.from_points([(0.0, 1.0), (fall, 0.555), (1.0, 0.555)])
    d = SimDevice(p, f)
    d.advance(w, 1.0)
    t_cross = fall * (1.0 - thr) / (1.0 - 0.555)
    assert d.clock_count == int(f * t_cross)
    assert not d.crashed
    # count does not grow while hibernated
    count = d.clock_count
    w2 = hold_waveform(0.555, 1.0, 2.0)
    d.advance(w2, 2.0)
    assert d.clock_count == count


def test_advance_below_drv_crashes_and_reads_ff():
    p = kintex()  # v_drv = 0.50
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.45), (1.0, 0.45)])
    d = SimDevice(p, 10e6)
    d.advance(w, 1.0)
    assert d.crashed
    assert d.read_back() == b"\xff" * d.n_registers
    assert d.read_clock_count() == CRASH_READ_COUNTER


def test_advance_requires_coverage():
    d = SimDevice(kintex(), 10e6)
    with pytest.raises(ValueError):
        d.advance(hold_waveform(1.0, 0.5, 1.0), 1.0)  # gap before 0.5
    with pytest.raises(ValueError):
        d.advance(hold_waveform(1.0, 0.0, 0.4), 1.0)  # too short


def test_clock_count_matches_hand_integrated_ramps():
    # two dips: one into hibernation, one shallow; integrate RUN time by hand
    p = kintex()
    f = 50e6
    thr = hibernation_threshold(p, f)
    pts = [(0.0, 1.0), (0.1, 0.60), (0.2, 1.0), (0.3, 0.80), (0.4, 1.0), (0.5, 1.0)]
    w = VoltageWaveform.from_points(pts)
    d = SimDevice(p, f)
    d.advance(w, 0.5)

    run_time = 0.0
    crossings = 0
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        lo, hi = min(v0, v1), max(v0, v1)
        if lo >= thr:
            run_time += t1 - t0
        elif hi < thr:
            continue
        else:
            crossings += 1
            frac = (hi - thr) / (hi - lo)
            run_time += frac * (t1 - t0)
    assert abs(d.clock_count - f * run_time) <= crossings + 1


# --- sync_write ----------------------------------------------------------------

def test_sync_write_at_nominal():
    d = SimDevice(kintex(), 10e6)
    assert d.sync_write(sync(0.0, 0, 0x88)) is True
    assert d.read_back()[0] == 0x88


def test_sync_write_fails_in_hibernation():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 0, 0x42))
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.555), (1.0, 0.555)])
    d.advance(w, 1.0)
    assert d.sync_write(sync(1.0, 0, 0x88)) is False
    assert d.read_back()[0] == 0x42


def test_sync_write_fails_after_crash():
    d = SimDevice(kintex(), 10e6)
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.45), (1.0, 1.0)])
    d.advance(w, 1.0)
    assert d.crashed
    assert d.sync_write(sync(1.0, 0, 0x88)) is False


def test_write_address_out_of_range():
    d = SimDevice(kintex(), 10e6)
    with pytest.raises(IndexError):
        d.sync_write(sync(0.0, 99, 0x88))


# --- async_clear -----------------------------------------------------------------

def test_async_clear_succeeds_in_hibernation():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 1, 0xAA))
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.555), (1.0, 0.555)])
    d.advance(w, 1.0)
    assert d.async_clear(clear(1.0, 1, 0x00)) is True
    assert d.read_back()[1] == 0x00


def test_async_clear_succeeds_in_run():
    d = SimDevice(kintex(), 10e6)
    assert d.async_clear(clear(0.0, 1, 0xFF)) is True


def test_async_clear_fails_after_crash():
    d = SimDevice(kintex(), 10e6)
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.45), (1.0, 0.45)])
    d.advance(w, 1.0)
    assert d.async_clear(clear(1.0, 1, 0x00)) is False


# --- read_back / reprogram ---------------------------------------------------------

def test_read_back_fresh_preload():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 0, 0x42))
    assert d.read_back()[0] == 0x42


def test_read_back_unchanged_after_hibernate_recover():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 0, 0x42))
    # dip into hibernation and come back up with no writes
    w = VoltageWaveform.from_points([(0.0, 1.0), (0.1, 0.555), (0.2, 0.555),
                                     (0.3, 1.0), (0.4, 1.0)])
    d.advance(w, 0.4)
    assert not d.crashed
    assert d.read_back()[0] == 0x42


def test_reprogram_clears_everything():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 0, 0x42))
    w = VoltageWaveform.from_points([(0.0, 1.0), (80e-6, 0.45), (1.0, 0.45)])
    d.advance(w, 1.0)
    assert d.crashed
    d.reprogram()
    assert not d.crashed
    assert d.clock_count == 0
    assert d.read_back() == d.default_values
    assert 0xFF not in set(d.read_back())


def test_reprogram_non_crashed_equals_reset():
    d = SimDevice(kintex(), 10e6)
    d.sync_write(sync(0.0, 0, 0x42))
    d.reprogram()
    assert d.read_back() == d.default_values


# --- properties -----------------------------------------------------------------

def test_retention_above_drv_without_writes():
    p = kintex()
    rng = np.random.default_rng(5)
    for _ in range(25):
        volts = rng.uniform(p.v_drv + 0.01, 1.0, size=4)
        pts = [(0.1 * i, float(v)) for i, v in enumerate(volts)]
        w = VoltageWaveform.from_points(pts)
        d = SimDevice(p, 10e6)
        d.sync_write(sync(0.0, 0, 0x5A))
        before = d.read_back()
        d.advance(w, pts[-1][0])
        assert d.read_back() == before


def test_crash_latch_holds_until_reprogram():
    p = kintex()
    w = VoltageWaveform.from_points([(0.0, 1.0), (0.1, 0.45), (0.2, 1.0), (5.0, 1.0)])
    d = SimDevice(p, 10e6)
    d.advance(w, 0.3)
    assert d.crashed
    d.advance(w, 5.0)  # voltage recovered long ago; latch persists
    assert d.crashed
    assert d.read_back() == b"\xff" * d.n_registers
    d.reprogram()
    assert not d.crashed


def test_deterministic_history():
    p = kintex()
    w = VoltageWaveform.from_points([(0.0, 1.0), (0.1, 0.58), (0.2, 1.0), (0.3, 1.0)])

    def run():
        d = SimDevice(p, 25e6)
        d.sync_write(sync(0.0, 0, 0x11))
        d.advance(w, 0.15)
        ok = d.sync_write(sync(0.15, 1, 0x22))
        d.advance(w, 0.3)
        return (d.clock_count, d.crashed, ok, d.read_back())

    assert run() == run()
