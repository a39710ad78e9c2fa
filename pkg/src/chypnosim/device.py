"""Event-driven model of the target device.

A SimDevice is a byte-addressed register bank, a free-running clock counter
and a latching crash flag, evolving under a supply waveform.  Threshold
crossings on each ramp are located in closed form (see power.py), so the
clock counter is exact to within one period per crossing and no
sub-microsecond hibernation window can be stepped over.

Semantics under undervolting:
  * the clock counter advances only while the device is in RUN and freezes
    (does not reset) in HIBERNATE;
  * synchronous register writes succeed only in RUN;
  * asynchronous clears succeed in RUN and HIBERNATE;
  * any instant below the data-retention voltage latches the crash flag, and
    a crashed device reads back 0xff on every byte until reprogrammed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .power import (
    DeviceProfile,
    DeviceState,
    ElectricalHistory,
    VoltageWaveform,
    classify_state,
    voltage_at,
)

CRASH_READ_BYTE = 0xFF
CRASH_READ_COUNTER = 2**64 - 1  # an all-ones high-impedance read of the counter


class WriteKind(enum.Enum):
    SYNC = "sync"                # clocked latch path
    ASYNC_CLEAR = "async_clear"  # asynchronous reset/preset path


@dataclass(frozen=True)
class WriteAttempt:
    t: float
    address: int
    value: int
    kind: WriteKind

    def __post_init__(self):
        if not 0 <= self.value <= 0xFF:
            raise ValueError(f"value: byte expected, got {self.value}")


@dataclass
class SimDevice:
    """Register bank + clock network + crash latch under a supply waveform."""

    profile: DeviceProfile
    f_clk: float
    n_registers: int = 16
    default_values: bytes = b""
    registers: bytearray = field(init=False)
    crashed: bool = field(default=False, init=False)
    now: float = field(default=0.0, init=False)
    v_now: float = field(init=False)
    _run_cycles: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not (self.profile.f_min <= self.f_clk <= self.profile.f_max):
            raise ValueError(f"f_clk: {self.f_clk} Hz outside profile range")
        if not self.default_values:
            self.default_values = bytes(self.n_registers)
        if len(self.default_values) != self.n_registers:
            raise ValueError("default_values: length must match n_registers")
        self.registers = bytearray(self.default_values)
        self.v_now = self.profile.v_nominal

    @property
    def clock_count(self) -> int:
        return int(self._run_cycles)

    def state(self) -> DeviceState:
        if self.crashed:
            return DeviceState.CRASH
        return classify_state(self.profile, self.v_now, self.f_clk)

    def advance(self, w: VoltageWaveform, t_end: float) -> "SimDevice":
        """Evolve the device along the waveform up to t_end."""
        if t_end < self.now:
            raise ValueError(f"t_end: {t_end} is before device time {self.now}")
        if not w.covers(self.now, t_end):
            raise ValueError(
                f"waveform gap: [{self.now}, {t_end}] not covered by span {w.span}")
        hist = ElectricalHistory(self.profile, w, self.f_clk)
        crash_t = hist.crash_time
        if not self.crashed and crash_t is not None and self.now <= crash_t <= t_end:
            self._run_cycles += self.f_clk * hist.run_measure(self.now, crash_t)
            self.crashed = True
        elif not self.crashed:
            self._run_cycles += self.f_clk * hist.run_measure(self.now, t_end)
        self.now = t_end
        self.v_now = voltage_at(w, t_end)
        return self

    def _check_attempt(self, a: WriteAttempt, kind: WriteKind) -> None:
        if a.kind is not kind:
            raise ValueError(f"kind: expected {kind}, got {a.kind}")
        if not 0 <= a.address < self.n_registers:
            raise IndexError(f"address: {a.address} out of range [0, {self.n_registers})")
        if abs(a.t - self.now) > 1e-15 * max(1.0, abs(self.now)):
            raise ValueError(f"t: attempt at {a.t} but device is at {self.now}; advance first")

    def sync_write(self, a: WriteAttempt) -> bool:
        """Clocked latch: takes effect only when the device is in RUN."""
        self._check_attempt(a, WriteKind.SYNC)
        if self.state() is not DeviceState.RUN:
            return False
        self.registers[a.address] = a.value
        return True

    def async_clear(self, a: WriteAttempt) -> bool:
        """Asynchronous reset/preset path: dependable down to the retention limit."""
        self._check_attempt(a, WriteKind.ASYNC_CLEAR)
        if self.state() is DeviceState.CRASH:
            return False
        self.registers[a.address] = a.value
        return True

    def read_back(self) -> bytes:
        """Register contents; an all-0xff high-impedance pattern after a crash."""
        if self.crashed:
            return bytes([CRASH_READ_BYTE]) * self.n_registers
        return bytes(self.registers)

    def read_clock_count(self) -> int:
        """Counter as read through the register file (all-ones after a crash)."""
        return CRASH_READ_COUNTER if self.crashed else self.clock_count

    def reprogram(self) -> "SimDevice":
        """Reload the device: clears the crash latch, registers and counter."""
        self.crashed = False
        self.registers = bytearray(self.default_values)
        self._run_cycles = 0.0
        self.v_now = self.profile.v_nominal
        return self
