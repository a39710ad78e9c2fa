"""Command-line entry point: scan, race, defend, attack, report.

Every run is deterministic for a given argv: seeds default to 0, reports are
JSON with a "provenance" key embedding the resolved configuration, and grid
data goes to CSV.  CHYPNOSIM_THREADS caps the numeric thread pools.

Exit codes: 0 success, 1 configuration error (diagnostics on stderr),
2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class UsageError(Exception):
    """Configuration problem; reported on stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep config errors on our exit-code contract
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    profile_path: Optional[str] = None
    seed: int = 0
    output_path: Optional[str] = None
    params: dict = field(default_factory=dict)


def _parse_range_steps(text: str, flag: str) -> tuple[float, float, int]:
    """low:high:steps with inclusive endpoints."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"{flag}: expected low:high:steps, got '{text}'")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from exc
    return lo, hi, steps


def _parse_range_step(text: str, flag: str) -> tuple[float, float, float]:
    """high:low:step, descending sweep."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"{flag}: expected high:low:step, got '{text}'")
    try:
        hi, lo, step = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from exc
    return hi, lo, step


def build_parser() -> _Parser:
    parser = _Parser(prog="chypnosim",
                     description="Undervolting hibernation attack workbench")
    sub = parser.add_subparsers(dest="command")

    p_scan = sub.add_parser("scan", help="voltage-frequency hibernation scan",
                            description="Sweep a (frequency, voltage) grid and "
                                        "emit clock-count and register-assign CSV maps.")
    p_scan.add_argument("--profile", required=True,
                        help="profile JSON path or builtin name")
    p_scan.add_argument("--f", required=True, dest="f_range", metavar="LOW:HIGH:STEPS",
                        help="frequency sweep, inclusive endpoints")
    p_scan.add_argument("--v", required=True, dest="v_range", metavar="HIGH:LOW:STEP",
                        help="descending voltage sweep")
    p_scan.add_argument("--td", type=float, default=0.1, help="init delay [s]")
    p_scan.add_argument("--tt", type=float, default=0.5, help="eval duration [s]")
    p_scan.add_argument("--twait", type=float, default=0.8, help="undervolted dwell [s]")
    p_scan.add_argument("--out", required=True, help="output prefix for the two CSVs")

    p_race = sub.add_parser("race", help="sensor bypass race",
                            description="Estimate bypass success over random "
                                        "sampling phases for one sensor stack.")
    p_race.add_argument("--profile", required=True)
    p_race.add_argument("--sensor", choices=["auto", "adc", "anti-tamper", "alert-handler"],
                        default="auto",
                        help="sensor stack; auto picks the profile's native one")
    p_race.add_argument("--fall-time", type=float, required=True, help="[s]")
    p_race.add_argument("--clock", type=float, required=True, help="device clock [Hz]")
    p_race.add_argument("--trials", type=int, default=500)
    p_race.add_argument("--v-from", type=float, default=None,
                        help="start voltage (default: profile nominal)")
    p_race.add_argument("--v-to", type=float, default=None,
                        help="target voltage (default: middle of the hibernation band)")
    p_race.add_argument("--seed", type=int, default=0)
    p_race.add_argument("--out", default=None, help="also write the JSON here")

    p_def = sub.add_parser("defend", help="countermeasure evaluation",
                           description="Play a countermeasure against an "
                                       "undervolting or clock-stop scenario.")
    p_def.add_argument("--profile", default="kintex7")
    p_def.add_argument("--countermeasure", required=True,
                       choices=["BT_PLL", "BT_ASYNC", "COMP_REG"])
    p_def.add_argument("--scenario", required=True,
                       choices=["hibernation-drop", "nominal-clock-stop", "crash-drop"])
    p_def.add_argument("--clock", type=float, default=10e6)
    p_def.add_argument("--seed", type=int, default=0)
    p_def.add_argument("--out", default=None)

    p_atk = sub.add_parser("attack", help="impedance template attack",
                           description="Profile a synthetic leakage model and "
                                       "recover a masked key byte from one averaged trace.")
    p_atk.add_argument("--np", type=int, default=20000, dest="n_p",
                       help="profiling traces")
    p_atk.add_argument("--navg", type=int, default=400, dest="n_avg",
                       help="acquisitions averaged per trace")
    p_atk.add_argument("--classifier", choices=["lda", "stump"], default="lda")
    p_atk.add_argument("--key-shares", default="12,34,44",
                       help="three hex share bytes, comma separated")
    p_atk.add_argument("--noise-sigma", type=float, default=50e-3,
                       help="single-acquisition phase noise [rad]")
    p_atk.add_argument("--seed", type=int, default=0)
    p_atk.add_argument("--out", default=None)

    p_rep = sub.add_parser("report", help="re-render a stored JSON report to CSV",
                           description="Flatten a race/defend/attack JSON "
                                       "report into a CSV summary.")
    p_rep.add_argument("--input", required=True)
    p_rep.add_argument("--out", required=True)
    return parser


def validate_config(c: RunConfig) -> list[str]:
    """Diagnostics for a resolved run configuration; empty means executable."""
    diags: list[str] = []
    p = c.params
    if c.command not in ("scan", "race", "defend", "attack", "report"):
        diags.append(f"command: unknown command '{c.command}'")
        return diags
    if c.command == "scan":
        if p["f_low"] > p["f_high"]:
            diags.append(f"f: low {p['f_low']} exceeds high {p['f_high']}")
        if p["f_steps"] < 1:
            diags.append(f"f: steps must be >= 1, got {p['f_steps']}")
        if p["v_high"] < p["v_low"]:
            diags.append(f"v: high {p['v_high']} is below low {p['v_low']}")
        if p["v_step"] <= 0:
            diags.append(f"v: step must be > 0, got {p['v_step']}")
    elif c.command == "race":
        if p["fall_time"] <= 0:
            diags.append(f"fall_time: must be > 0, got {p['fall_time']}")
        if p["trials"] < 1:
            diags.append(f"trials: must be >= 1, got {p['trials']}")
        if p["f_clk"] <= 0:
            diags.append(f"clock: must be > 0, got {p['f_clk']}")
    elif c.command == "attack":
        if p["n_p"] < 100:
            diags.append(f"np: need at least 100 profiling traces, got {p['n_p']}")
        if p["n_avg"] < 1:
            diags.append(f"navg: must be >= 1, got {p['n_avg']}")
        if len(p["shares"]) != 3:
            diags.append(f"key-shares: exactly 3 shares expected, got {len(p['shares'])}")
        elif any(not 0 <= s <= 0xFF for s in p["shares"]):
            diags.append("key-shares: each share must be a byte")
        if p["noise_sigma"] < 0:
            diags.append(f"noise-sigma: must be >= 0, got {p['noise_sigma']}")
    elif c.command == "report":
        if not Path(p["input"]).exists():
            diags.append(f"input: no such file '{p['input']}'")
    if c.seed < 0 or c.seed > 2**64 - 1:
        diags.append(f"seed: must fit in 64 bits, got {c.seed}")
    return diags


def _provenance(c: RunConfig) -> dict:
    return {
        "command": c.command,
        "seed": c.seed,
        "profile": c.profile_path,
        "parameters": dict(sorted(c.params.items(),
                                  key=lambda kv: kv[0])),
    }


def _dump_json(doc: dict, out_path: Optional[str]) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    return text


def _resolve_sensor(kind: str, sensors: dict):
    order = ["anti_tamper", "adc", "alert_handler"]
    if kind == "auto":
        for key in order:
            if key in sensors:
                return key, sensors[key]
        raise UsageError("sensor: profile document defines no sensors; pass --sensor")
    key = kind.replace("-", "_")
    if key in sensors:
        return key, sensors[key]
    # fall back to the stock configuration for that sensor kind
    from .sensors import AdcSensorConfig, AlertHandlerConfig, AntiTamperConfig
    stock = {"adc": AdcSensorConfig(), "anti_tamper": AntiTamperConfig(),
             "alert_handler": AlertHandlerConfig()}
    return key, stock[key]


def _cmd_scan(c: RunConfig) -> int:
    from .profiles import load_profile
    from .scan import ScanConfig, emit_heatmaps, run_scan
    profile, _ = load_profile(c.profile_path)
    p = c.params
    cfg = ScanConfig(f_low=p["f_low"], f_high=p["f_high"], f_steps=p["f_steps"],
                     v_high=p["v_high"], v_low=p["v_low"], v_step=p["v_step"],
                     t_d=p["t_d"], t_t=p["t_t"], t_wait=p["t_wait"])
    records = run_scan(profile, cfg)
    clock_csv, assign_csv = emit_heatmaps(records)
    prefix = c.output_path
    Path(f"{prefix}_clock.csv").write_text(clock_csv, encoding="utf-8")
    Path(f"{prefix}_assign.csv").write_text(assign_csv, encoding="utf-8")
    print(f"wrote {prefix}_clock.csv and {prefix}_assign.csv "
          f"({len(records)} records)")
    return 0


def _cmd_race(c: RunConfig) -> int:
    from .power import hibernation_threshold
    from .profiles import load_profile
    from .sensors import race
    profile, sensors = load_profile(c.profile_path)
    p = c.params
    key, sensor = _resolve_sensor(p["sensor"], sensors)
    v_from = p["v_from"] if p["v_from"] is not None else profile.v_nominal
    if p["v_to"] is not None:
        v_to = p["v_to"]
    else:
        v_to = 0.5 * (profile.v_drv + hibernation_threshold(profile, p["f_clk"]))
    result = race(profile, sensor, p["fall_time"], p["f_clk"],
                  v_from, v_to, p["trials"], c.seed)
    doc = result.to_json_dict()
    doc["sensor"] = key
    doc["provenance"] = _provenance(c)
    sys.stdout.write(_dump_json(doc, c.output_path))
    return 0


def _cmd_defend(c: RunConfig) -> int:
    from .countermeasure import CountermeasureKind, evaluate_countermeasure, standard_scenarios
    from .profiles import load_profile
    profile, _ = load_profile(c.profile_path)
    p = c.params
    scenarios = standard_scenarios(profile, p["f_clk"])
    report = evaluate_countermeasure(CountermeasureKind[p["countermeasure"]],
                                     scenarios[p["scenario"]], c.seed)
    doc = report.to_json_dict()
    doc["provenance"] = _provenance(c)
    sys.stdout.write(_dump_json(doc, c.output_path))
    return 0


def _cmd_attack(c: RunConfig) -> int:
    from .sidechannel import TemplateKind, default_leakage_model, run_attack
    p = c.params
    kind = TemplateKind.GAUSSIAN_LDA if p["classifier"] == "lda" \
        else TemplateKind.STUMP_ENSEMBLE
    model = default_leakage_model(seed=c.seed, noise_sigma=p["noise_sigma"])
    report = run_attack(model, p["shares"], p["n_p"], p["n_avg"], kind, c.seed)
    doc = report.to_json_dict()
    doc["provenance"] = _provenance(c)
    sys.stdout.write(_dump_json(doc, c.output_path))
    return 0


def _cmd_report(c: RunConfig) -> int:
    p = c.params
    with open(p["input"], "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if "bits" in doc:  # attack report: one row per bit
        writer.writerow(["index", "prediction", "truth", "score"])
        for b in doc["bits"]:
            writer.writerow([b["index"], b["prediction"], b["truth"], b["score"]])
    else:  # flat summary of scalar fields
        keys = [k for k in sorted(doc) if not isinstance(doc[k], (dict, list))]
        writer.writerow(keys)
        writer.writerow([doc[k] for k in keys])
    Path(c.output_path).write_text(buf.getvalue(), encoding="utf-8")
    print(f"wrote {c.output_path}")
    return 0


def _build_run_config(args) -> RunConfig:
    if args.command == "scan":
        f_low, f_high, f_steps = _parse_range_steps(args.f_range, "--f")
        v_high, v_low, v_step = _parse_range_step(args.v_range, "--v")
        return RunConfig(command="scan", profile_path=args.profile,
                         output_path=args.out,
                         params={"f_low": f_low, "f_high": f_high, "f_steps": f_steps,
                                 "v_high": v_high, "v_low": v_low, "v_step": v_step,
                                 "t_d": args.td, "t_t": args.tt, "t_wait": args.twait})
    if args.command == "race":
        return RunConfig(command="race", profile_path=args.profile, seed=args.seed,
                         output_path=args.out,
                         params={"sensor": args.sensor, "fall_time": args.fall_time,
                                 "f_clk": args.clock, "trials": args.trials,
                                 "v_from": args.v_from, "v_to": args.v_to})
    if args.command == "defend":
        return RunConfig(command="defend", profile_path=args.profile, seed=args.seed,
                         output_path=args.out,
                         params={"countermeasure": args.countermeasure,
                                 "scenario": args.scenario, "f_clk": args.clock})
    if args.command == "attack":
        try:
            shares = [int(tok, 16) for tok in args.key_shares.split(",") if tok]
        except ValueError as exc:
            raise UsageError(f"key-shares: {exc}") from exc
        return RunConfig(command="attack", seed=args.seed, output_path=args.out,
                         params={"n_p": args.n_p, "n_avg": args.n_avg,
                                 "classifier": args.classifier, "shares": shares,
                                 "noise_sigma": args.noise_sigma})
    if args.command == "report":
        return RunConfig(command="report", output_path=args.out,
                         params={"input": args.input})
    raise UsageError("command: one of scan, race, defend, attack, report required")


_DISPATCH = {"scan": _cmd_scan, "race": _cmd_race, "defend": _cmd_defend,
             "attack": _cmd_attack, "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("command: one of scan, race, defend, attack, report required")
        cfg = _build_run_config(args)
        diagnostics = validate_config(cfg)
        if diagnostics:
            for d in diagnostics:
                print(f"error: {d}", file=sys.stderr)
            return 1
        return _DISPATCH[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - invariant violations exit 2
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    # cap numeric thread pools before numpy spins them up
    threads = os.environ.get("CHYPNOSIM_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
