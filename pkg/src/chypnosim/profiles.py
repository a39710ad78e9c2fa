"""Built-in device profiles and the JSON profile document format.

A profile document is a JSON object:

    {"name": ..., "v_nominal": ..., "v_drv": ...,
     "hib_curve": [[f_hz, volts], ...], "f_min": ..., "f_max": ...,
     "sensors": {"adc": {...}, "anti_tamper": {...}, "alert_handler": {...}}}

All voltages in volts, frequencies in Hz.  The "sensors" block is optional
and each entry maps field names of the matching sensor config dataclass.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Union

from .power import DeviceProfile
from .sensors import AdcSensorConfig, AlertHandlerConfig, AntiTamperConfig, SensorConfig

_SENSOR_TYPES = {
    "adc": AdcSensorConfig,
    "anti_tamper": AntiTamperConfig,
    "alert_handler": AlertHandlerConfig,
}


def builtin_profile(name: str) -> DeviceProfile:
    """One of the calibrated default profiles: artix7, kintex7, polarfire."""
    if name == "artix7":
        return DeviceProfile(
            name="artix7", v_nominal=1.0, v_drv=0.60,
            hib_curve=((1e6, 0.65), (150e6, 0.85)),
            f_min=1e6, f_max=150e6)
    if name == "kintex7":
        return DeviceProfile(
            name="kintex7", v_nominal=1.0, v_drv=0.50,
            hib_curve=((1e6, 0.60), (10e6, 0.70), (150e6, 0.85)),
            f_min=1e6, f_max=150e6)
    if name == "polarfire":
        # the hibernation boundary is frequency-flat at ~0.9 V on this part
        return DeviceProfile(
            name="polarfire", v_nominal=1.0, v_drv=0.20,
            hib_curve=((1e6, 0.90), (150e6, 0.90)),
            f_min=1e6, f_max=150e6)
    raise ValueError(f"profile: unknown builtin '{name}' "
                     f"(expected artix7, kintex7 or polarfire)")


def builtin_sensors(name: str) -> dict[str, SensorConfig]:
    """Default sensor suite shipped with each builtin profile."""
    if name in ("artix7", "kintex7"):
        return {"adc": AdcSensorConfig(), "alert_handler": AlertHandlerConfig()}
    if name == "polarfire":
        return {"anti_tamper": AntiTamperConfig()}
    raise ValueError(f"profile: unknown builtin '{name}'")


def profile_to_dict(profile: DeviceProfile,
                    sensors: dict[str, SensorConfig] | None = None) -> dict:
    doc = {
        "name": profile.name,
        "v_nominal": profile.v_nominal,
        "v_drv": profile.v_drv,
        "hib_curve": [[f, v] for f, v in profile.hib_curve],
        "f_min": profile.f_min,
        "f_max": profile.f_max,
    }
    if sensors:
        doc["sensors"] = {key: dataclasses.asdict(cfg) for key, cfg in sorted(sensors.items())}
    return doc


def profile_from_dict(doc: dict) -> tuple[DeviceProfile, dict[str, SensorConfig]]:
    try:
        profile = DeviceProfile(
            name=doc["name"],
            v_nominal=float(doc["v_nominal"]),
            v_drv=float(doc["v_drv"]),
            hib_curve=tuple((float(f), float(v)) for f, v in doc["hib_curve"]),
            f_min=float(doc["f_min"]),
            f_max=float(doc["f_max"]),
        )
    except KeyError as exc:
        raise ValueError(f"profile document: missing field {exc}") from exc
    sensors: dict[str, SensorConfig] = {}
    for key, fields in doc.get("sensors", {}).items():
        if key not in _SENSOR_TYPES:
            raise ValueError(f"sensors.{key}: unknown sensor kind")
        try:
            sensors[key] = _SENSOR_TYPES[key](**fields)
        except TypeError as exc:
            raise ValueError(f"sensors.{key}: {exc}") from exc
    return profile, sensors


def load_profile(path_or_name: Union[str, Path]) -> tuple[DeviceProfile, dict[str, SensorConfig]]:
    """Load a profile document from disk, or fall back to a builtin name."""
    path = Path(path_or_name)
    if path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            return profile_from_dict(json.load(fh))
    name = str(path_or_name)
    if name in ("artix7", "kintex7", "polarfire"):
        return builtin_profile(name), builtin_sensors(name)
    raise ValueError(f"profile: '{path_or_name}' is neither a file nor a builtin name")


def write_profile(path: Union[str, Path], name: str) -> None:
    """Write a builtin profile (with its sensor suite) as a JSON document."""
    doc = profile_to_dict(builtin_profile(name), builtin_sensors(name))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
