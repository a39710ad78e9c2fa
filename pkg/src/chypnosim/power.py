"""Supply-voltage waveforms and the electrical regime of an undervolted device.

A device profile carries the two voltage boundaries that matter during an
undervolting attack: the data-retention voltage below which memory is lost
(crash), and the frequency-dependent hibernation boundary below which the
clock network stops switching while flip-flops still hold state.  Waveforms
are piecewise-linear supply trajectories with an optional sinusoidal
modulation window (the stimulus used by backscatter measurements).

Everything here is a pure function over immutable values; instances are safe
to share between threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq


class DeviceState(enum.IntEnum):
    """Electrical regime at a given supply voltage and clock frequency.

    Ordered CRASH < HIBERNATE < RUN: at fixed frequency, raising the voltage
    never moves the device to a lower state.
    """

    CRASH = 0
    HIBERNATE = 1
    RUN = 2


@dataclass(frozen=True)
class DeviceProfile:
    """Per-device electrical thresholds.

    hib_curve anchors (frequency Hz, volts) define the minimum voltage for
    synchronous operation at each frequency; between anchors the threshold is
    interpolated piecewise-linearly in log-frequency and clamped to the end
    anchors outside them (no extrapolation).
    """

    name: str
    v_nominal: float
    v_drv: float            # data retention voltage; below it the device crashes
    hib_curve: tuple[tuple[float, float], ...]
    f_min: float
    f_max: float

    def __post_init__(self):
        if not self.hib_curve:
            raise ValueError("hib_curve: at least one anchor required")
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"f_min/f_max: need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        freqs = [f for f, _ in self.hib_curve]
        volts = [v for _, v in self.hib_curve]
        if any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
            raise ValueError("hib_curve: anchor frequencies must be strictly increasing")
        if freqs[0] < self.f_min or freqs[-1] > self.f_max:
            raise ValueError("hib_curve: anchor frequencies must lie within [f_min, f_max]")
        if any(v2 < v1 for v1, v2 in zip(volts, volts[1:])):
            raise ValueError("hib_curve: voltages must be non-decreasing in frequency")
        if any(not (self.v_drv < v < self.v_nominal) for v in volts):
            raise ValueError("hib_curve: every voltage must satisfy v_drv < v < v_nominal")


@dataclass(frozen=True)
class Modulation:
    """Additive sinusoid on the DC trajectory, active on [t_on, t_off]."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    t_on: float = 0.0
    t_off: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"modulation.amplitude: must be >= 0, got {self.amplitude}")
        if self.frequency <= 0:
            raise ValueError(f"modulation.frequency: must be > 0, got {self.frequency}")
        if self.t_off < self.t_on:
            raise ValueError("modulation window: t_off must be >= t_on")

    def value(self, t: float) -> float:
        if self.t_on <= t <= self.t_off:
            return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        return 0.0


@dataclass(frozen=True)
class VoltageWaveform:
    """Piecewise-linear supply trajectory, optionally modulated.

    Segments are (t_start, v_start, t_end, v_end) linear ramps covering a
    contiguous, non-overlapping time span with matching voltages at joints.
    """

    segments: tuple[tuple[float, float, float, float], ...]
    modulation: Optional[Modulation] = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("segments: waveform must contain at least one segment")
        for t0, _, t1, _ in self.segments:
            if t1 <= t0:
                raise ValueError(f"segments: each segment needs t_end > t_start, got ({t0}, {t1})")
        for (_, _, t1, v1), (t2, v2, _, _) in zip(self.segments, self.segments[1:]):
            if t1 != t2:
                raise ValueError(f"segments: must be contiguous in time ({t1} != {t2})")
            if v1 != v2:
                raise ValueError(f"segments: voltage must be continuous at joints ({v1} != {v2})")
        if self.modulation is not None:
            t0, t1 = self.segments[0][0], self.segments[-1][2]
            if self.modulation.t_on < t0 or self.modulation.t_off > t1:
                raise ValueError("modulation window: must lie within the segment span")

    @property
    def t_start(self) -> float:
        return self.segments[0][0]

    @property
    def t_end(self) -> float:
        return self.segments[-1][2]

    @property
    def span(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_start <= t0 and t1 <= self.t_end

    @staticmethod
    def from_points(points: Sequence[tuple[float, float]],
                    modulation: Optional[Modulation] = None) -> "VoltageWaveform":
        """Build a waveform through (time, volts) points connected by ramps."""
        if len(points) < 2:
            raise ValueError("from_points: need at least two points")
        segs = tuple((points[i][0], points[i][1], points[i + 1][0], points[i + 1][1])
                     for i in range(len(points) - 1))
        return VoltageWaveform(segs, modulation)

    def with_modulation(self, modulation: Modulation) -> "VoltageWaveform":
        return replace(self, modulation=modulation)


def hold_waveform(v: float, t0: float, t1: float) -> VoltageWaveform:
    """Constant supply at v over [t0, t1]."""
    return VoltageWaveform(((t0, v, t1, v),))


def drop_waveform(v_from: float, v_to: float, fall_time: float,
                  lead: float = 0.0, tail: float = 1e-3,
                  t0: float = 0.0) -> VoltageWaveform:
    """Attack trajectory: optional nominal lead-in, linear fall, then hold.

    The fall starts at t0 + lead and reaches v_to after fall_time.
    """
    if fall_time <= 0:
        raise ValueError(f"fall_time: must be > 0, got {fall_time}")
    if tail <= 0:
        raise ValueError(f"tail: must be > 0, got {tail}")
    points = []
    t = t0
    if lead > 0:
        points.append((t, v_from))
        t += lead
    points.append((t, v_from))
    t += fall_time
    points.append((t, v_to))
    points.append((t + tail, v_to))
    return VoltageWaveform.from_points(points)


def voltage_at(w: VoltageWaveform, t: float) -> float:
    """Supply voltage at time t: linear interpolation plus any active modulation."""
    if not (w.t_start <= t <= w.t_end):
        raise ValueError(f"t: {t} outside waveform span [{w.t_start}, {w.t_end}]")
    v = None
    for t0, v0, t1, v1 in w.segments:
        if t0 <= t <= t1:
            v = v0 if t1 == t0 else v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            # keep scanning: the last matching segment owns a shared joint,
            # but continuity makes the value identical either way
            break
    assert v is not None
    if w.modulation is not None:
        v += w.modulation.value(t)
    return v


def hibernation_threshold(p: DeviceProfile, f: float) -> float:
    """Minimum voltage for synchronous operation at clock frequency f.

    Piecewise-linear in log-frequency between anchors, exact at anchors,
    clamped to the first/last anchor voltage outside them.
    """
    if not (p.f_min <= f <= p.f_max):
        raise ValueError(f"f: {f} Hz outside profile range [{p.f_min}, {p.f_max}]")
    freqs = np.log([a[0] for a in p.hib_curve])
    volts = np.array([a[1] for a in p.hib_curve])
    return float(np.interp(math.log(f), freqs, volts))


def classify_state(p: DeviceProfile, v: float, f: float) -> DeviceState:
    """Electrical regime at supply voltage v and clock frequency f."""
    if v < p.v_drv:
        return DeviceState.CRASH
    if v < hibernation_threshold(p, f):
        return DeviceState.HIBERNATE
    return DeviceState.RUN


def modulation_safe(p: DeviceProfile, f: float, dc: float, amplitude: float) -> bool:
    """Whether a sinusoid of the given amplitude keeps the device hibernated.

    True iff the swing [dc - amplitude, dc + amplitude] stays inside
    [v_drv, hibernation_threshold): neither crashing nor waking the device.
    """
    if amplitude < 0:
        raise ValueError(f"amplitude: must be >= 0, got {amplitude}")
    thr = hibernation_threshold(p, f)
    if not (p.v_drv <= dc < thr):
        raise ValueError(f"dc: {dc} V not in the hibernation band [{p.v_drv}, {thr})")
    return dc - amplitude >= p.v_drv and dc + amplitude < thr


# --- threshold-crossing machinery ------------------------------------------
#
# All timing questions downstream (clock counting, sensor races, crash
# latching) reduce to "where is v(t) relative to a level".  Linear segments
# are solved in closed form; modulated stretches are bracketed on a fine
# sub-period grid and refined with brentq, so sub-microsecond hibernation
# windows are never stepped over.

_MOD_SUBDIV = 64  # sample points per modulation period when bracketing roots


def _segment_breakpoints(w: VoltageWaveform, seg, level: float) -> list[float]:
    """Candidate times inside one segment where v - level may change sign."""
    t0, v0, t1, v1 = seg
    out = []
    mod = w.modulation
    # split the segment at the modulation window edges
    cuts = [t0, t1]
    if mod is not None and mod.amplitude > 0:
        for edge in (mod.t_on, mod.t_off):
            if t0 < edge < t1:
                cuts.append(edge)
    cuts = sorted(set(cuts))
    slope = (v1 - v0) / (t1 - t0)
    for a, b in zip(cuts, cuts[1:]):
        modulated = (mod is not None and mod.amplitude > 0
                     and a < mod.t_off and b > mod.t_on and not (b <= mod.t_on or a >= mod.t_off))
        if not modulated:
            if slope != 0.0:
                t_star = t0 + (level - v0) / slope
                if a < t_star < b:
                    out.append(t_star)
            continue
        # modulated piece: skip if the envelope cannot touch the level
        va = v0 + slope * (a - t0)
        vb = v0 + slope * (b - t0)
        lo = min(va, vb) - mod.amplitude
        hi = max(va, vb) + mod.amplitude
        if lo >= level or hi < level:
            continue

        def g(t, _v0=v0, _t0=t0, _slope=slope):
            return _v0 + _slope * (t - _t0) + mod.value(t) - level

        step = min(b - a, 1.0 / (mod.frequency * _MOD_SUBDIV))
        n = max(2, int(math.ceil((b - a) / step)) + 1)
        ts = np.linspace(a, b, n)
        gs = np.array([g(t) for t in ts])
        for i in range(n - 1):
            if gs[i] == 0.0:
                out.append(float(ts[i]))
            elif gs[i] * gs[i + 1] < 0:
                out.append(float(brentq(g, ts[i], ts[i + 1], xtol=1e-18, rtol=1e-15)))
    return out


def regions_at_or_above(w: VoltageWaveform, level: float,
                        t0: Optional[float] = None,
                        t1: Optional[float] = None) -> list[tuple[float, float]]:
    """Maximal intervals of [t0, t1] where v(t) >= level."""
    lo = w.t_start if t0 is None else t0
    hi = w.t_end if t1 is None else t1
    if hi < lo:
        raise ValueError(f"window: t1 {hi} before t0 {lo}")
    if not w.covers(lo, hi):
        raise ValueError(f"window: [{lo}, {hi}] not covered by waveform span {w.span}")
    bps = {lo, hi}
    for seg in w.segments:
        if seg[2] <= lo or seg[0] >= hi:
            continue
        for t in _segment_breakpoints(w, seg, level):
            if lo < t < hi:
                bps.add(t)
        for joint in (seg[0], seg[2]):
            if lo < joint < hi:
                bps.add(joint)
    bps = sorted(bps)
    regions: list[tuple[float, float]] = []
    for a, b in zip(bps, bps[1:]):
        if voltage_at(w, 0.5 * (a + b)) >= level:
            if regions and regions[-1][1] == a:
                regions[-1] = (regions[-1][0], b)
            else:
                regions.append((a, b))
    return regions


def first_time_below(w: VoltageWaveform, level: float,
                     t_from: Optional[float] = None) -> Optional[float]:
    """Earliest t >= t_from with v(t) < level, or None if it never happens."""
    lo = w.t_start if t_from is None else t_from
    above = regions_at_or_above(w, level, lo, w.t_end)
    t = lo
    for a, b in above:
        if a > t:
            return t
        t = b
    return None if t >= w.t_end else t


class ElectricalHistory:
    """Crash-latched electrical regime of a device under a waveform.

    Wraps (profile, waveform, clock frequency) and answers state queries with
    the crash permanently latched from the first instant v < v_drv onward.
    """

    def __init__(self, profile: DeviceProfile, waveform: VoltageWaveform, f_clk: float):
        self.profile = profile
        self.waveform = waveform
        self.f_clk = f_clk
        self.threshold = hibernation_threshold(profile, f_clk)
        self.crash_time = first_time_below(waveform, profile.v_drv)

    def state_at(self, t: float) -> DeviceState:
        if self.crash_time is not None and t >= self.crash_time:
            return DeviceState.CRASH
        return classify_state(self.profile, voltage_at(self.waveform, t), self.f_clk)

    def run_intervals(self, t0: Optional[float] = None,
                      t1: Optional[float] = None) -> list[tuple[float, float]]:
        """Maximal intervals where the device is in RUN (crash truncates)."""
        lo = self.waveform.t_start if t0 is None else t0
        hi = self.waveform.t_end if t1 is None else t1
        if self.crash_time is not None:
            hi = min(hi, self.crash_time)
            if hi <= lo:
                return []
        return regions_at_or_above(self.waveform, self.threshold, lo, hi)

    def run_measure(self, t0: float, t1: float) -> float:
        """Total time spent in RUN within [t0, t1]."""
        return sum(b - a for a, b in self.run_intervals(t0, t1))

    def in_run_throughout(self, t0: float, t1: float) -> bool:
        """Whether the device stays in RUN over all of [t0, t1]."""
        if t1 < t0:
            raise ValueError(f"window: t1 {t1} before t0 {t0}")
        for a, b in self.run_intervals():
            if a <= t0 and t1 <= b:
                return True
        return False

    def first_exit_from_run(self, t_from: Optional[float] = None) -> Optional[float]:
        """Earliest time >= t_from at which the device is not in RUN."""
        lo = self.waveform.t_start if t_from is None else t_from
        below = first_time_below(self.waveform, self.threshold, lo)
        candidates = [t for t in (below, self.crash_time) if t is not None and t >= lo]
        if self.state_at(lo) != DeviceState.RUN:
            return lo
        return min(candidates) if candidates else None
