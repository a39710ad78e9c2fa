"""Desk-scale workbench for undervolting hibernation attacks.

Models the race between rapid supply drops and on-chip sensors, the failure
of synchronous masked-clear countermeasures in brownout, the complementary
register fix, the voltage-frequency hibernation scan, and the impedance
template attack against a frozen device.
"""

from .power import (
    DeviceProfile,
    DeviceState,
    ElectricalHistory,
    Modulation,
    VoltageWaveform,
    classify_state,
    drop_waveform,
    hibernation_threshold,
    hold_waveform,
    modulation_safe,
    voltage_at,
)
from .device import SimDevice, WriteAttempt, WriteKind
from .profiles import builtin_profile, builtin_sensors, load_profile, write_profile
from .sensors import (
    AdcSensorConfig,
    AlertHandlerConfig,
    AntiTamperConfig,
    RaceResult,
    SensorOutcome,
    race,
    run_adc_sensor,
    run_alert_handler,
    run_anti_tamper,
)
from .countermeasure import (
    ClockStopDetector,
    ComplementaryRegister,
    CountermeasureKind,
    CountermeasureReport,
    MaskedClearUnit,
    Scenario,
    comp_reg_clear,
    comp_reg_write,
    detect_clock_stop,
    evaluate_countermeasure,
    masked_clear,
    standard_scenarios,
)
from .scan import ScanConfig, ScanRecord, debug_reg_reset, emit_heatmaps, run_scan
from .sidechannel import (
    AttackReport,
    LeakageModel,
    SnrCurve,
    Template,
    TemplateKind,
    TraceSet,
    build_template,
    classify_bit,
    compute_snr,
    default_leakage_model,
    difference_of_means,
    recover_key_byte,
    run_attack,
    select_pois,
    synthesize_trace,
)

__version__ = "0.1.0"
