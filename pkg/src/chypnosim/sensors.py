"""Detection/response stacks racing against a rapid voltage drop.

Three sensor stacks are modeled:

  * an ADC-style supply monitor whose digital side needs a conversion latency
    and freezes once the fabric hibernates;
  * an anti-tamper controller that slows its clock in brownout, accumulates
    detect ticks toward flags, and zeroizes immediately or after a watchdog;
  * an alert handler whose response must propagate a fixed number of
    peripheral-clock cycles (or a software latency) entirely in RUN.

All outcomes are computed in closed form from the waveform's threshold
crossings; nothing is stepped, so a 430 ns window is resolved as exactly as a
60 ms one.  The only stochastic element of the race is the sampling phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .power import (
    DeviceProfile,
    DeviceState,
    ElectricalHistory,
    VoltageWaveform,
    drop_waveform,
    first_time_below,
    hibernation_threshold,
    regions_at_or_above,
    voltage_at,
)

FLAG_SLOW_CLOCK = "SLOW_CLOCK"
FLAG_VOLT_DETECT_LOW = "VOLT_DETECT_LOW"

_SAMPLE_LOG_CAP = 4096  # sample log is truncated on very long runs


@dataclass(frozen=True)
class AdcSensorConfig:
    """ADC-style voltage monitor with conversion/pipeline latency."""

    sample_period: float = 1e-6       # 1 MSPS converter
    detect_latency: float = 100e-6    # sample instant -> alarm-capable output
    v_alarm_low: float = 0.95
    v_alarm_high: float = 1.05
    response_cycles: int = 100        # clock cycles to finish the clear once alarmed

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError(f"sample_period: must be > 0, got {self.sample_period}")
        if self.detect_latency < 0:
            raise ValueError(f"detect_latency: must be >= 0, got {self.detect_latency}")
        if self.v_alarm_low >= self.v_alarm_high:
            raise ValueError("v_alarm_low must be below v_alarm_high")
        if self.response_cycles < 0:
            raise ValueError(f"response_cycles: must be >= 0, got {self.response_cycles}")


@dataclass(frozen=True)
class AntiTamperConfig:
    """Anti-tamper module: slow-clock + low-voltage flags feeding zeroization.

    Voltage thresholds and detect_cycles are calibration constants, not
    vendor truth: they are chosen so a 430 ns fall bypasses both flags while
    a 61.6 ms fall always raises them.
    """

    f_ctrl_nominal: float = 80e6
    f_ctrl_brownout: float = 20e6
    v_slow_clock: float = 0.95
    v_detect_low: float = 0.92
    detect_cycles: int = 8
    watchdog_cycles: int = 1000
    immediate_path: bool = True

    def __post_init__(self):
        if self.f_ctrl_brownout >= self.f_ctrl_nominal:
            raise ValueError("f_ctrl_brownout must be below f_ctrl_nominal")
        if self.f_ctrl_brownout <= 0:
            raise ValueError("f_ctrl_brownout must be > 0")
        if self.v_detect_low >= self.v_slow_clock:
            raise ValueError("v_detect_low must be below v_slow_clock")
        if self.detect_cycles < 1:
            raise ValueError(f"detect_cycles: must be >= 1, got {self.detect_cycles}")
        if self.watchdog_cycles <= 0:
            raise ValueError(f"watchdog_cycles: must be > 0, got {self.watchdog_cycles}")


@dataclass(frozen=True)
class AlertHandlerConfig:
    """Escalation unit: alarm must propagate a few cycles entirely in RUN."""

    f_periph: float = 24e6
    hw_path_cycles: int = 4
    sw_path_latency: float = 300e-6

    def __post_init__(self):
        if self.hw_path_cycles < 1:
            raise ValueError(f"hw_path_cycles: must be >= 1, got {self.hw_path_cycles}")
        if self.f_periph <= 0:
            raise ValueError(f"f_periph: must be > 0, got {self.f_periph}")
        if self.sw_path_latency < 0:
            raise ValueError(f"sw_path_latency: must be >= 0, got {self.sw_path_latency}")


SensorConfig = Union[AdcSensorConfig, AntiTamperConfig, AlertHandlerConfig]


@dataclass
class SensorOutcome:
    """What a sensor saw and whether its response finished in time."""

    samples: list[tuple[float, float, bool]] = field(default_factory=list)
    alarm_time: Optional[float] = None
    flags: frozenset[str] = frozenset()
    response_completed: bool = False
    response_time: Optional[float] = None


def _complement(regions: list[tuple[float, float]],
                span: tuple[float, float]) -> list[tuple[float, float]]:
    out = []
    t = span[0]
    for a, b in regions:
        if a > t:
            out.append((t, a))
        t = b
    if t < span[1]:
        out.append((t, span[1]))
    return out


def run_adc_sensor(p: DeviceProfile, c: AdcSensorConfig, w: VoltageWaveform,
                   f_clk: float, phase: float,
                   log_samples: bool = True) -> SensorOutcome:
    """Race the ADC monitor against the waveform.

    Samples are taken at phase + n*sample_period.  A sample below v_alarm_low
    raises the alarm detect_latency later, but only if the fabric is still in
    RUN at that instant; once hibernated, the monitor's control registers are
    frozen and the conversion result never lands.  The clear completes only
    if the device stays in RUN for response_cycles/f_clk after the alarm.
    """
    if not 0 <= phase < c.sample_period:
        raise ValueError(f"phase: must lie in [0, sample_period), got {phase}")
    hist = ElectricalHistory(p, w, f_clk)
    lat = c.detect_latency
    below = _complement(regions_at_or_above(w, c.v_alarm_low), w.span)
    runs = hist.run_intervals()

    alarm = None
    for a, b in below:
        for ra, rb in runs:
            lo = max(a, ra - lat)
            hi = min(b, rb - lat)
            if hi <= lo:
                continue
            n = math.ceil((lo - phase) / c.sample_period)
            t_s = phase + n * c.sample_period
            # region edges have v == v_alarm_low exactly; step past them
            while t_s < hi and not (voltage_at(w, t_s) < c.v_alarm_low
                                    and hist.state_at(t_s + lat) is DeviceState.RUN):
                n += 1
                t_s = phase + n * c.sample_period
            if t_s < hi:
                cand = t_s + lat
                alarm = cand if alarm is None else min(alarm, cand)

    samples: list[tuple[float, float, bool]] = []
    if log_samples:
        n = math.ceil((w.t_start - phase) / c.sample_period)
        t_s = phase + n * c.sample_period
        while t_s <= w.t_end and len(samples) < _SAMPLE_LOG_CAP:
            done = t_s + lat
            valid = done <= w.t_end and hist.state_at(done) is DeviceState.RUN
            samples.append((t_s, voltage_at(w, t_s), valid))
            n += 1
            t_s = phase + n * c.sample_period

    completed = False
    response_time = None
    if alarm is not None:
        window = c.response_cycles / f_clk
        if hist.in_run_throughout(alarm, alarm + window):
            completed = True
            response_time = alarm + window
    return SensorOutcome(samples=samples, alarm_time=alarm,
                         flags=frozenset(),
                         response_completed=completed, response_time=response_time)


def _nth_completion_in_run(runs: list[tuple[float, float]], b0: float,
                           period: float, n: int,
                           t_min: float = -math.inf) -> Optional[float]:
    """Time of the n-th tick completion (b0 + j*period, j >= 1) that lands
    inside a RUN interval and strictly after t_min; None if it never does."""
    remaining = n
    for a, b in runs:
        lo = max(a, b0 + period)
        j_lo = max(1, math.ceil((lo - b0) / period))
        while b0 + j_lo * period < lo or b0 + j_lo * period <= t_min:
            j_lo += 1
        j_hi = math.floor((b - b0) / period)
        if j_hi < j_lo:
            continue
        count = j_hi - j_lo + 1
        if count >= remaining:
            return b0 + (j_lo + remaining - 1) * period
        remaining -= count
    return None


def run_anti_tamper(p: DeviceProfile, c: AntiTamperConfig, w: VoltageWaveform,
                    phase: float) -> SensorOutcome:
    """Race the anti-tamper module against the waveform.

    The controller ticks at f_ctrl_nominal until the supply first dips below
    v_slow_clock, then at f_ctrl_brownout.  SLOW_CLOCK asserts on the first
    slowed tick completing in RUN; VOLT_DETECT_LOW after detect_cycles
    RUN-completed ticks past the v_detect_low crossing.  Zeroization fires on
    the first flag (immediately, or watchdog_cycles RUN ticks later) and
    succeeds only in RUN.  The fabric is classified at the controller's
    nominal clock, the system clock the sampling rate derives from.
    """
    t_nom = 1.0 / c.f_ctrl_nominal
    t_slow_period = 1.0 / c.f_ctrl_brownout
    if not 0 <= phase < t_nom:
        raise ValueError(f"phase: must lie in [0, 1/f_ctrl_nominal), got {phase}")
    hist = ElectricalHistory(p, w, c.f_ctrl_nominal)
    runs = hist.run_intervals()

    flags: dict[str, float] = {}
    t_slowdown = first_time_below(w, c.v_slow_clock)
    b0 = None
    if t_slowdown is not None:
        b0 = phase + math.ceil((t_slowdown - phase) / t_nom) * t_nom
        sc = _nth_completion_in_run(runs, b0, t_slow_period, 1)
        if sc is not None:
            flags[FLAG_SLOW_CLOCK] = sc
        t_det = first_time_below(w, c.v_detect_low)
        if t_det is not None:
            vd = _nth_completion_in_run(runs, b0, t_slow_period,
                                        c.detect_cycles, t_min=t_det)
            if vd is not None:
                flags[FLAG_VOLT_DETECT_LOW] = vd

    alarm = min(flags.values()) if flags else None
    completed = False
    response_time = None
    if alarm is not None:
        if c.immediate_path:
            # the flag itself completed in RUN, so the immediate path lands
            completed = True
            response_time = alarm
        else:
            z = _nth_completion_in_run(runs, b0, t_slow_period,
                                       c.watchdog_cycles, t_min=alarm)
            if z is not None:
                completed = True
                response_time = z
    return SensorOutcome(samples=[], alarm_time=alarm, flags=frozenset(flags),
                         response_completed=completed, response_time=response_time)


def run_alert_handler(p: DeviceProfile, c: AlertHandlerConfig, w: VoltageWaveform,
                      use_hw_path: bool,
                      v_alarm_low: Optional[float] = None) -> SensorOutcome:
    """Race the alert-handler escalation path against the waveform.

    The upstream sensor is ideal (zero latency): the alarm asserts the moment
    the supply first dips below v_alarm_low, which defaults to the waveform's
    starting voltage (any departure from nominal trips it).  The response
    completes only if hw_path_cycles/f_periph (or sw_path_latency) elapse
    entirely within RUN.
    """
    level = voltage_at(w, w.t_start) if v_alarm_low is None else v_alarm_low
    hist = ElectricalHistory(p, w, c.f_periph)
    alarm = first_time_below(w, level)
    window = c.hw_path_cycles / c.f_periph if use_hw_path else c.sw_path_latency
    completed = False
    response_time = None
    if alarm is not None and hist.in_run_throughout(alarm, alarm + window):
        completed = True
        response_time = alarm + window
    return SensorOutcome(samples=[], alarm_time=alarm, flags=frozenset(),
                         response_completed=completed, response_time=response_time)


@dataclass(frozen=True)
class RaceResult:
    fall_time_s: float
    f_clk_hz: float
    trials: int
    success_rate: float
    flags_histogram: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "fall_time_s": self.fall_time_s,
            "f_clk_hz": self.f_clk_hz,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "flags_histogram": dict(sorted(self.flags_histogram.items())),
        }


def _race_waveform(sensor: SensorConfig, fall_time: float, f_clk: float,
                   v_from: float, v_to: float) -> VoltageWaveform:
    if isinstance(sensor, AdcSensorConfig):
        lead = sensor.detect_latency + 10 * sensor.sample_period
        tail = sensor.detect_latency + sensor.response_cycles / f_clk \
            + 10 * sensor.sample_period
    elif isinstance(sensor, AntiTamperConfig):
        t_slow = 1.0 / sensor.f_ctrl_brownout
        lead = 10 / sensor.f_ctrl_nominal
        tail = (sensor.detect_cycles + sensor.watchdog_cycles + 10) * t_slow
    else:
        lead = 10 / sensor.f_periph
        tail = sensor.hw_path_cycles / sensor.f_periph + sensor.sw_path_latency
    return drop_waveform(v_from, v_to, fall_time, lead=lead, tail=tail + 1e-3)


def race(p: DeviceProfile, sensor: SensorConfig, fall_time: float, f_clk: float,
         v_from: float, v_to: float, trials: int, seed: int) -> RaceResult:
    """Estimate the sensor-bypass success rate over random sampling phases.

    Success means the data survived and the sensor's response never
    completed.  Each trial draws its phase from a stream derived from
    (seed, trial_index), so results are reproducible and order-independent.
    """
    if trials < 1:
        raise ValueError(f"trials: must be >= 1, got {trials}")
    if fall_time <= 0:
        raise ValueError(f"fall_time: must be > 0, got {fall_time}")
    thr = hibernation_threshold(p, f_clk)
    if v_to < p.v_drv:
        raise ValueError(
            f"v_to: {v_to} V is below the retention limit {p.v_drv} V; "
            "that is a crash, not a bypass")
    if v_to >= thr:
        raise ValueError(f"v_to: {v_to} V does not reach the hibernation band "
                         f"(threshold {thr} V at {f_clk} Hz)")

    w = _race_waveform(sensor, fall_time, f_clk, v_from, v_to)
    if isinstance(sensor, AntiTamperConfig):
        # the controller clock derives from the system clock under test
        scale = sensor.f_ctrl_brownout / sensor.f_ctrl_nominal
        eff = replace(sensor, f_ctrl_nominal=f_clk, f_ctrl_brownout=f_clk * scale)
        phase_span = 1.0 / eff.f_ctrl_nominal
        crashed = ElectricalHistory(p, w, f_clk).crash_time is not None

        def run_one(phase):
            return run_anti_tamper(p, eff, w, phase)
    elif isinstance(sensor, AdcSensorConfig):
        phase_span = sensor.sample_period
        crashed = ElectricalHistory(p, w, f_clk).crash_time is not None

        def run_one(phase):
            return run_adc_sensor(p, sensor, w, f_clk, phase, log_samples=False)
    elif isinstance(sensor, AlertHandlerConfig):
        phase_span = None
        crashed = ElectricalHistory(p, w, sensor.f_periph).crash_time is not None

        def run_one(phase):
            return run_alert_handler(p, sensor, w, use_hw_path=True)
    else:
        raise TypeError(f"sensor: unsupported config {type(sensor).__name__}")

    successes = 0
    histogram = {FLAG_SLOW_CLOCK: 0, FLAG_VOLT_DETECT_LOW: 0}
    for i in range(trials):
        if phase_span is None:
            phase = 0.0
        else:
            phase = float(np.random.default_rng([seed, i]).uniform(0.0, phase_span))
        outcome = run_one(phase)
        for name in outcome.flags:
            histogram[name] = histogram.get(name, 0) + 1
        if not crashed and not outcome.response_completed:
            successes += 1
    return RaceResult(fall_time_s=fall_time, f_clk_hz=f_clk, trials=trials,
                      success_rate=successes / trials, flags_histogram=histogram)
