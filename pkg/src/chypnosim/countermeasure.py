"""Clock-stop countermeasures and their behaviour under undervolting.

Two families are modeled.  The original design pairs a clock-stop detector
(PLL lock-loss or a tapped delay chain) with a masked clear: a synchronous
latch of pre-drawn random bits into the sensitive registers.  Detection
keeps working when the clock is frozen by a voltage drop, but the clocked
latch needs a running fabric, so the clear silently fails and the secret
survives.  The improved design stores each sensitive bit in a complementary
register pair (one async-reset-to-0 cell, one async-preset-to-1 cell, a
random selector choosing which holds the data) and clears through the
asynchronous paths, which stay dependable deep into brownout.  Every clear
then produces either zero or exactly two transitions, with probability 1/2
each regardless of the stored bit, so the erasure leaks nothing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .device import SimDevice, WriteAttempt, WriteKind
from .power import (
    DeviceProfile,
    DeviceState,
    ElectricalHistory,
    VoltageWaveform,
    drop_waveform,
    hibernation_threshold,
    hold_waveform,
)


class DetectorKind(enum.Enum):
    PLL = "pll"
    DELAY_CHAIN = "delay_chain"


class CountermeasureKind(enum.Enum):
    BT_PLL = "BT_PLL"        # PLL lock-loss detector + synchronous masked clear
    BT_ASYNC = "BT_ASYNC"    # delay-chain detector + synchronous masked clear
    COMP_REG = "COMP_REG"    # delay-chain detector + asynchronous complementary clear


# detect windows are chosen shorter than every hibernation dwell in scope,
# so detection always precedes the response race
DETECT_WINDOW = {DetectorKind.PLL: 1e-6, DetectorKind.DELAY_CHAIN: 100e-9}


@dataclass
class ClockStopDetector:
    """Latching clock-inactivity monitor (SR-latch semantics: set only)."""

    kind: DetectorKind
    detect_window: float
    alarm_latched: bool = False


@dataclass
class MaskedClearUnit:
    """Synchronous masked-clear response: latch pre-drawn random bytes."""

    rng_stream: list[int]
    pending: bool = False
    edge_delay: float = 10e-9   # delay-chain pulse to the latch enable
    targets: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if not self.rng_stream or all(v == 0 for v in self.rng_stream):
            raise ValueError("rng_stream: pre-drawn randomness must not be constant zero")


@dataclass(frozen=True)
class ComplementaryRegister:
    """One sensitive bit stored in an async-reset / async-preset cell pair.

    The selector bit decides which cell holds the data and which its
    complement; reading muxes on the selector.  preloaded_r_next is the
    randomness banked during normal operation for the next write.
    """

    cell_reset: int    # asynchronously clears to 0
    cell_preset: int   # asynchronously presets to 1
    selector: int
    preloaded_r_next: int = 0

    def __post_init__(self):
        for name in ("cell_reset", "cell_preset", "selector", "preloaded_r_next"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name}: must be a bit, got {getattr(self, name)}")

    def read(self) -> int:
        return self.cell_reset if self.selector == 0 else self.cell_preset


def detect_clock_stop(det: ClockStopDetector, clock_active_until: float,
                      history: ElectricalHistory) -> Optional[float]:
    """Alarm time for a clock stopping at clock_active_until, if any.

    The detector's combinational side is alive in RUN and HIBERNATE; only a
    crash (retention loss) kills it before the window elapses.
    """
    alarm_t = clock_active_until + det.detect_window
    if alarm_t > history.waveform.t_end:
        return None
    if history.state_at(alarm_t) is DeviceState.CRASH:
        return None
    det.alarm_latched = True
    return alarm_t


def masked_clear(u: MaskedClearUnit, device: SimDevice,
                 alarm_time: float) -> tuple[SimDevice, bool]:
    """Latch random bytes into the target registers at alarm + edge delay.

    The caller must have advanced the device to alarm_time + edge_delay; the
    latch lands only if the fabric is in RUN at that instant.
    """
    t_latch = alarm_time + u.edge_delay
    if abs(device.now - t_latch) > 1e-12:
        raise ValueError(f"device at {device.now}, expected advance to {t_latch}")
    if len(u.rng_stream) < len(u.targets):
        raise ValueError("rng_stream: exhausted before all targets cleared")
    ok = True
    for addr in u.targets:
        value = u.rng_stream.pop(0)
        ok &= device.sync_write(WriteAttempt(t=t_latch, address=addr,
                                             value=value, kind=WriteKind.SYNC))
    u.pending = False
    return device, ok


def comp_reg_write(reg: ComplementaryRegister, d: int, r: int,
                   device_state: DeviceState) -> tuple[ComplementaryRegister, bool]:
    """Synchronous write of bit d with selector r; fails outside RUN."""
    if d not in (0, 1) or r not in (0, 1):
        raise ValueError(f"d, r: must be bits, got {d}, {r}")
    if device_state is not DeviceState.RUN:
        return reg, False
    if r == 0:
        new = ComplementaryRegister(cell_reset=d, cell_preset=1 - d, selector=0,
                                    preloaded_r_next=reg.preloaded_r_next)
    else:
        new = ComplementaryRegister(cell_reset=1 - d, cell_preset=d, selector=1,
                                    preloaded_r_next=reg.preloaded_r_next)
    return new, True


def comp_reg_clear(reg: ComplementaryRegister,
                   device_state: DeviceState) -> tuple[ComplementaryRegister,
                                                       tuple[int, int]]:
    """Asynchronous clear: reset cell to 0, preset cell to 1.

    Works in RUN and HIBERNATE.  Returns the cleared register and the
    (rising, falling) transition counts of the two cells.
    """
    if device_state is DeviceState.CRASH:
        raise ValueError("cannot clear a crashed device: no live logic")
    rising = 1 if reg.cell_preset == 0 else 0
    falling = 1 if reg.cell_reset == 1 else 0
    new = ComplementaryRegister(cell_reset=0, cell_preset=1,
                                selector=reg.selector,
                                preloaded_r_next=reg.preloaded_r_next)
    return new, (rising, falling)


# --- scenario harness -------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """A supply trajectory plus optional external clock manipulation."""

    name: str
    profile: DeviceProfile
    f_clk: float
    waveform: VoltageWaveform
    clock_stop_time: Optional[float] = None  # None: the drop itself stops the clock


def hibernation_drop_scenario(profile: DeviceProfile, f_clk: float = 10e6,
                              fall_time: float = 80e-6) -> Scenario:
    """Rapid drop into the middle of the hibernation band (HCF)."""
    thr = hibernation_threshold(profile, f_clk)
    v_to = 0.5 * (profile.v_drv + thr)
    w = drop_waveform(profile.v_nominal, v_to, fall_time, lead=1e-3, tail=5e-3)
    return Scenario("hibernation-drop", profile, f_clk, w)


def nominal_clock_stop_scenario(profile: DeviceProfile, f_clk: float = 10e6,
                                stop_at: float = 1e-3) -> Scenario:
    """External clock stop with the supply held at nominal (NCF)."""
    w = hold_waveform(profile.v_nominal, 0.0, 10e-3)
    return Scenario("nominal-clock-stop", profile, f_clk, w, clock_stop_time=stop_at)


def crash_drop_scenario(profile: DeviceProfile, f_clk: float = 10e6,
                        fall_time: float = 100e-9) -> Scenario:
    """Drop straight through the retention limit: data lost, logic dead."""
    w = drop_waveform(profile.v_nominal, 0.9 * profile.v_drv, fall_time,
                      lead=1e-3, tail=5e-3)
    return Scenario("crash-drop", profile, f_clk, w)


def standard_scenarios(profile: DeviceProfile, f_clk: float = 10e6) -> dict[str, Scenario]:
    out = [hibernation_drop_scenario(profile, f_clk),
           nominal_clock_stop_scenario(profile, f_clk),
           crash_drop_scenario(profile, f_clk)]
    return {s.name: s for s in out}


@dataclass(frozen=True)
class CountermeasureReport:
    countermeasure: str
    scenario: str
    detected: bool
    cleared: bool
    secret_recoverable: bool
    transition_histogram: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "countermeasure": self.countermeasure,
            "scenario": self.scenario,
            "detected": self.detected,
            "cleared": self.cleared,
            "secret_recoverable": self.secret_recoverable,
            "transition_histogram": dict(sorted(self.transition_histogram.items())),
        }


def _bits_of_bytes(values) -> list[int]:
    return [(int(v) >> k) & 1 for v in values for k in range(8)]


def evaluate_countermeasure(kind: CountermeasureKind, scenario: Scenario,
                            seed: int) -> CountermeasureReport:
    """Play one countermeasure against one scenario.

    The secret (three bytes) is loaded at nominal voltage before the attack;
    randomness for the masked clear and the selector bits is pre-drawn at
    scenario start, mirroring pre-loading during normal operation.
    """
    rng = np.random.default_rng(seed)
    secret = [int(b) for b in rng.integers(0, 256, size=3)]
    secret_bits = _bits_of_bytes(secret)
    selectors = [int(b) for b in rng.integers(0, 2, size=len(secret_bits))]
    stream = [int(b) for b in rng.integers(1, 256, size=8)]

    profile, f_clk, w = scenario.profile, scenario.f_clk, scenario.waveform
    hist = ElectricalHistory(profile, w, f_clk)
    device = SimDevice(profile, f_clk)
    for addr, value in enumerate(secret):
        assert device.sync_write(WriteAttempt(0.0, addr, value, WriteKind.SYNC))

    detector_kind = DetectorKind.PLL if kind is CountermeasureKind.BT_PLL \
        else DetectorKind.DELAY_CHAIN
    detector = ClockStopDetector(detector_kind, DETECT_WINDOW[detector_kind])

    clock_stop = scenario.clock_stop_time
    if clock_stop is None:
        clock_stop = hist.first_exit_from_run(0.0)
    alarm = None
    if clock_stop is not None:
        alarm = detect_clock_stop(detector, clock_stop, hist)

    histogram: dict[str, int] = {}
    if kind is CountermeasureKind.COMP_REG:
        bank = []
        for d, r in zip(secret_bits, selectors):
            reg, ok = comp_reg_write(
                ComplementaryRegister(0, 1, 0, preloaded_r_next=r), d, r,
                DeviceState.RUN)
            assert ok
            bank.append(reg)
        cleared = False
        if alarm is not None and hist.state_at(alarm) is not DeviceState.CRASH:
            flips = []
            bank2 = []
            for reg in bank:
                reg2, (rising, falling) = comp_reg_clear(reg, hist.state_at(alarm))
                flips.append(rising + falling)
                bank2.append(reg2)
            bank = bank2
            cleared = True
            for n in flips:
                histogram[str(n)] = histogram.get(str(n), 0) + 1
        device.advance(w, w.t_end)
        retained = not device.crashed
        recoverable = retained and not cleared
    else:
        unit = MaskedClearUnit(rng_stream=stream)
        cleared = False
        if alarm is not None:
            unit.pending = True
            before = _bits_of_bytes(device.registers[:3])
            device.advance(w, alarm + unit.edge_delay)
            device, cleared = masked_clear(unit, device, alarm)
            if cleared:
                after = _bits_of_bytes(device.registers[:3])
                for b0, b1 in zip(before, after):
                    n = int(b0 != b1)
                    histogram[str(n)] = histogram.get(str(n), 0) + 1
        device.advance(w, w.t_end)
        retained = (not device.crashed) and list(device.read_back()[:3]) == secret
        recoverable = retained and not cleared

    return CountermeasureReport(
        countermeasure=kind.value, scenario=scenario.name,
        detected=alarm is not None, cleared=cleared,
        secret_recoverable=recoverable, transition_histogram=histogram)
