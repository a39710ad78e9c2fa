"""Voltage-frequency hibernation scan against the simulated device.

For every (frequency, voltage) grid cell the harness resets the debug
registers, schedules a register assignment and a clock-count window inside
the undervolted phase, drops the supply for t_wait seconds, restores it,
reads everything back and reprograms on a crash.  Two CSV documents (one per
heatmap) carry the records in sweep order.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass

import numpy as np

from .device import CRASH_READ_COUNTER, SimDevice, WriteAttempt, WriteKind
from .power import DeviceProfile, VoltageWaveform

SUPPLY_SLEW_TIME = 10e-6   # programmable-supply transition, well under t_d
BASELINE_VALUE = 0x00      # debug-register baseline written by the reset routine
ASSIGN_ADDRESS = 0
HIBERNATED_COUNT_LIMIT = 10  # counts below this classify a cell as hibernated

CSV_HEADER = ["f_hz", "v_volts", "clock_count", "reg_assign_hex", "crash"]


@dataclass(frozen=True)
class ScanConfig:
    f_low: float
    f_high: float
    f_steps: int
    v_high: float
    v_low: float
    v_step: float
    t_d: float = 0.1          # init delay before the eval window opens
    t_t: float = 0.5          # eval duration
    t_wait: float = 0.8       # undervolted dwell
    expected_assign: int = 0x88

    def __post_init__(self):
        if self.f_steps < 1:
            raise ValueError(f"f_steps: must be >= 1, got {self.f_steps}")
        if self.f_low > self.f_high:
            raise ValueError("f: low must not exceed high")
        if self.v_step <= 0:
            raise ValueError(f"v_step: must be > 0, got {self.v_step}")
        if self.v_high < self.v_low:
            raise ValueError("v: high must be >= low")
        if self.t_t < 0.5:
            raise ValueError(f"t_t: evaluation needs at least 0.5 s, got {self.t_t}")
        if not self.t_wait > self.t_d + self.t_t:
            raise ValueError(
                f"t_wait: must exceed t_d + t_t = {self.t_d + self.t_t}, got {self.t_wait}")

    def frequencies(self) -> list[float]:
        if self.f_steps == 1:
            return [self.f_low]
        return [float(f) for f in np.linspace(self.f_low, self.f_high, self.f_steps)]

    def voltages(self) -> list[float]:
        n = int(round((self.v_high - self.v_low) / self.v_step)) + 1
        return [self.v_high - k * self.v_step for k in range(n)]


@dataclass(frozen=True)
class ScanRecord:
    f: float
    v: float
    reg_assign: int
    clock_count: int
    crash: bool


def debug_reg_reset(device: SimDevice) -> int:
    """Write the baseline and verify the readback; -1 flags a crash."""
    device.sync_write(WriteAttempt(device.now, ASSIGN_ADDRESS, BASELINE_VALUE,
                                   WriteKind.SYNC))
    if device.read_back()[ASSIGN_ADDRESS] != BASELINE_VALUE:
        return -1
    return 0


def _cell_waveform(cfg: ScanConfig, v: float) -> VoltageWaveform:
    t_end = cfg.t_wait + SUPPLY_SLEW_TIME + cfg.t_d
    return VoltageWaveform.from_points([
        (0.0, cfg.v_high),
        (SUPPLY_SLEW_TIME, v),
        (cfg.t_wait, v),
        (cfg.t_wait + SUPPLY_SLEW_TIME, cfg.v_high),
        (t_end, cfg.v_high),
    ])


def run_cell(p: DeviceProfile, cfg: ScanConfig, f: float, v: float) -> ScanRecord:
    """One grid cell: undervolt, run the test window, restore, read back."""
    device = SimDevice(p, f)
    debug_reg_reset(device)
    w = _cell_waveform(cfg, v)
    device.advance(w, cfg.t_d)
    count_before = device.clock_count
    device.sync_write(WriteAttempt(device.now, ASSIGN_ADDRESS,
                                   cfg.expected_assign, WriteKind.SYNC))
    device.advance(w, cfg.t_d + cfg.t_t)
    count_in_window = device.clock_count - count_before
    device.advance(w, w.t_end)

    reg_assign = device.read_back()[ASSIGN_ADDRESS]
    clock_count = CRASH_READ_COUNTER if device.crashed else count_in_window
    crashed = debug_reg_reset(device) != 0
    if crashed:
        device.reprogram()
    return ScanRecord(f=f, v=v, reg_assign=reg_assign,
                      clock_count=clock_count, crash=crashed)


def run_scan(p: DeviceProfile, cfg: ScanConfig) -> list[ScanRecord]:
    """Sweep the full grid; records appear in sweep order (f outer, v inner)."""
    for f in (cfg.f_low, cfg.f_high):
        if not (p.f_min <= f <= p.f_max):
            raise ValueError(f"f: {f} Hz outside profile range [{p.f_min}, {p.f_max}]")
    records = []
    for f in cfg.frequencies():
        for v in cfg.voltages():
            records.append(run_cell(p, cfg, f, v))
    return records


def _render_csv(records: list[ScanRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([repr(r.f), repr(r.v), r.clock_count,
                         f"0x{r.reg_assign:02x}", "true" if r.crash else "false"])
    return buf.getvalue()


def emit_heatmaps(records: list[ScanRecord]) -> tuple[str, str]:
    """CSV documents for the clock-count map and the register-assign map."""
    if not records:
        raise ValueError("records: cannot render an empty scan")
    doc = _render_csv(records)
    return doc, doc
