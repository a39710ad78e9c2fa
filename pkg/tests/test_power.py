import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chypnosim.power import (
    DeviceProfile,
    DeviceState,
    Modulation,
    VoltageWaveform,
    classify_state,
    first_time_below,
    hibernation_threshold,
    hold_waveform,
    modulation_safe,
    regions_at_or_above,
    voltage_at,
)
from chypnosim.profiles import builtin_profile, load_profile, profile_from_dict, profile_to_dict


# --- voltage_at -------------------------------------------------------------

def test_voltage_at_constant_segment():
    w = VoltageWaveform(((0.0, 1.0, 1.0, 1.0),))
    assert voltage_at(w, 0.5) == 1.0


def test_voltage_at_ramp_midpoint():
    w = VoltageWaveform(((0.0, 1.0, 80e-6, 0.555),))
    assert voltage_at(w, 40e-6) == pytest.approx(0.7775, abs=1e-12)


def test_voltage_at_modulated_peak():
    f_mod = 100e3
    t_peak = 1.0 / (4.0 * f_mod)  # first sine maximum at phase 0
    mod = Modulation(amplitude=0.0125, frequency=f_mod, t_on=0.0, t_off=1e-3)
    w = hold_waveform(0.64, 0.0, 1e-3).with_modulation(mod)
    assert voltage_at(w, t_peak) == pytest.approx(0.6525, abs=1e-12)


def test_voltage_at_outside_span_raises():
    w = hold_waveform(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        voltage_at(w, 1.5)
    with pytest.raises(ValueError):
        voltage_at(w, -0.1)


@given(st.lists(st.floats(0.2, 1.2), min_size=2, max_size=6),
       st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_voltage_continuous_at_joints(volts, pick):
    times = [0.1 * i for i in range(len(volts))]
    w = VoltageWaveform.from_points(list(zip(times, volts)))
    joints = [seg[0] for seg in w.segments[1:]]
    if not joints:
        return
    t = joints[pick % len(joints)]
    eps = 1e-9
    left = voltage_at(w, t - eps)
    right = voltage_at(w, t + eps)
    assert abs(left - voltage_at(w, t)) < 2e-8
    assert abs(right - voltage_at(w, t)) < 2e-8


def test_waveform_validation():
    with pytest.raises(ValueError):
        VoltageWaveform(())
    with pytest.raises(ValueError):
        VoltageWaveform(((0.0, 1.0, 0.0, 1.0),))  # empty time span
    with pytest.raises(ValueError):
        VoltageWaveform(((0.0, 1.0, 1.0, 1.0), (2.0, 1.0, 3.0, 1.0)))  # gap
    with pytest.raises(ValueError):
        VoltageWaveform(((0.0, 1.0, 1.0, 0.9), (1.0, 0.8, 2.0, 0.8)))  # voltage jump
    with pytest.raises(ValueError):
        Modulation(amplitude=-0.01, frequency=1e5)


# --- hibernation threshold ----------------------------------------------------

def test_threshold_exact_at_anchor():
    p = builtin_profile("kintex7")
    assert hibernation_threshold(p, 10e6) == 0.70
    assert hibernation_threshold(p, 1e6) == 0.60
    assert hibernation_threshold(p, 150e6) == 0.85


def test_threshold_monotone_artix7():
    p = builtin_profile("artix7")
    rng = np.random.default_rng(7)
    fs = rng.uniform(p.f_min, p.f_max, size=(1000, 2))
    for f1, f2 in fs:
        lo, hi = min(f1, f2), max(f1, f2)
        assert hibernation_threshold(p, lo) <= hibernation_threshold(p, hi)


def test_threshold_polarfire_band():
    p = builtin_profile("polarfire")
    rng = np.random.default_rng(11)
    for f in rng.uniform(p.f_min, p.f_max, size=200):
        thr = hibernation_threshold(p, f)
        assert 0.20 < thr <= 0.90


def test_threshold_out_of_range():
    p = builtin_profile("artix7")
    with pytest.raises(ValueError):
        hibernation_threshold(p, 0.5e6)
    with pytest.raises(ValueError):
        hibernation_threshold(p, 200e6)


# --- classify_state -----------------------------------------------------------

@pytest.mark.parametrize("profile,v,f,expected", [
    ("artix7", 1.0, 100e6, DeviceState.RUN),
    ("kintex7", 0.555, 10e6, DeviceState.HIBERNATE),
    ("artix7", 0.64, 10e6, DeviceState.HIBERNATE),
    ("polarfire", 0.15, 10e6, DeviceState.CRASH),
])
def test_classify_state_regions(profile, v, f, expected):
    assert classify_state(builtin_profile(profile), v, f) is expected


def test_classify_is_step_function_with_two_breakpoints():
    p = builtin_profile("kintex7")
    f = 10e6
    thr = hibernation_threshold(p, f)
    vs = np.linspace(0.1, 1.1, 2001)
    states = [classify_state(p, v, f) for v in vs]
    # monotone in v
    assert all(s2 >= s1 for s1, s2 in zip(states, states[1:]))
    changes = [(vs[i], vs[i + 1]) for i in range(len(vs) - 1)
               if states[i] != states[i + 1]]
    assert len(changes) == 2
    assert changes[0][0] < p.v_drv <= changes[0][1]
    assert changes[1][0] < thr <= changes[1][1]


# --- modulation_safe ----------------------------------------------------------

def test_modulation_safe_zero_amplitude():
    p = builtin_profile("kintex7")
    assert modulation_safe(p, 10e6, 0.60, 0.0) is True


def test_modulation_safe_lower_bound():
    p = builtin_profile("kintex7")
    eps = 1e-4
    assert modulation_safe(p, 10e6, p.v_drv + eps, 2 * eps) is False


def test_modulation_safe_kintex_default_amplitude():
    p = builtin_profile("kintex7")
    assert modulation_safe(p, 10e6, 0.555, 0.0125) is True


def test_modulation_safe_outside_band_raises():
    p = builtin_profile("kintex7")
    with pytest.raises(ValueError):
        modulation_safe(p, 10e6, 0.95, 0.01)  # RUN voltage, not hibernated


@given(st.floats(0.0, 0.2), st.floats(0.0, 1.0))
@settings(max_examples=80, deadline=None)
def test_modulation_safe_monotone_in_amplitude(a, shrink):
    p = builtin_profile("polarfire")
    dc = 0.55
    smaller = a * shrink
    if modulation_safe(p, 10e6, dc, a):
        assert modulation_safe(p, 10e6, dc, smaller)


# --- profile validation and JSON format ---------------------------------------

def test_profile_invariant_validation():
    with pytest.raises(ValueError):
        DeviceProfile("bad", 1.0, 0.7, ((1e6, 0.65),), 1e6, 150e6)  # v_drv above curve
    with pytest.raises(ValueError):
        DeviceProfile("bad", 1.0, 0.5, ((10e6, 0.7), (1e6, 0.6)), 1e6, 150e6)
    with pytest.raises(ValueError):
        DeviceProfile("bad", 1.0, 0.5, ((1e6, 0.8), (10e6, 0.7)), 1e6, 150e6)
    with pytest.raises(ValueError):
        DeviceProfile("bad", 1.0, 0.5, ((1e5, 0.7),), 1e6, 150e6)  # anchor below f_min


def test_profile_json_round_trip(tmp_path):
    from chypnosim.profiles import builtin_sensors, write_profile
    path = tmp_path / "kintex7.json"
    write_profile(path, "kintex7")
    profile, sensors = load_profile(path)
    assert profile == builtin_profile("kintex7")
    assert sensors == builtin_sensors("kintex7")
    doc = json.loads(path.read_text())
    assert set(doc) == {"name", "v_nominal", "v_drv", "hib_curve",
                        "f_min", "f_max", "sensors"}


def test_profile_dict_round_trip():
    p = builtin_profile("artix7")
    p2, _ = profile_from_dict(profile_to_dict(p))
    assert p2 == p


# --- crossing machinery --------------------------------------------------------

def test_regions_single_ramp():
    w = VoltageWaveform(((0.0, 1.0, 1.0, 0.0),))
    regions = regions_at_or_above(w, 0.25)
    assert len(regions) == 1
    a, b = regions[0]
    assert a == 0.0
    assert b == pytest.approx(0.75, abs=1e-12)
    assert first_time_below(w, 0.25) == pytest.approx(0.75, abs=1e-12)


def test_regions_with_recovery():
    w = VoltageWaveform.from_points([(0, 1.0), (1, 0.0), (2, 1.0)])
    regions = regions_at_or_above(w, 0.5)
    assert len(regions) == 2
    assert regions[0][1] == pytest.approx(0.5)
    assert regions[1][0] == pytest.approx(1.5)


def test_modulated_crossings_found():
    # DC just above the level; the sine trough dips below once per period
    mod = Modulation(amplitude=0.05, frequency=1e5, t_on=0.0, t_off=1e-4)
    w = hold_waveform(0.52, 0.0, 1e-4).with_modulation(mod)
    below = first_time_below(w, 0.50)
    assert below is not None
    # trough of the first period: sin = -1 at 3/4 of the period
    assert 0.5e-5 < below < 1.0e-5
    measure = sum(b - a for a, b in regions_at_or_above(w, 0.50))
    # above-level fraction per period: |sin| <= 0.4 on the falling part only
    assert 0.0 < measure < 1e-4
