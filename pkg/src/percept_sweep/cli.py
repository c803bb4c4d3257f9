"""Command-line interface: scenario catalogue, runs, sweeps and reports.

Commands

    percept-sweep scenario list
    percept-sweep scenario show Sc-03
    percept-sweep scenario export Sc-03 out.json
    percept-sweep run --scenario Sc-01 --sensor radar --hfov-deg 30 --predictor cv
    percept-sweep sweep --scenario Sc-01 --sensor radar --parallel 4
    percept-sweep report --sweep out/sweep/<name> --format csv

A run or sweep can also be described by a JSON config file (--config);
explicit flags override file values with a printed warning. The output root
comes from --out-dir, else the PERCEPT_SWEEP_OUT environment variable, else
./out. Commands exit 0 on success; any failure prints a machine-readable
JSON error line on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .evaluation import (
    RunSpec,
    SweepSpec,
    execute_run,
    load_sweep_results,
    run_sweep,
    write_curve_csvs,
)
from .predictors import PredictorId
from .scenario import (
    PRESET_IDS,
    RELATIVE_VELOCITY_KMH,
    preset_scenario,
    save_scenario,
)
from .sensors import SensorConfig

CONFIG_VERSION = 1

_RUN_KEYS = {
    "version", "scenario", "sensor", "hfov_deg", "vfov_deg", "range_m",
    "predictor", "impute", "seed", "noise", "test_id", "prediction_times_s",
}
_SWEEP_KEYS = _RUN_KEYS | {"name", "parameter", "values", "replications"}

_RUN_DEFAULTS = {
    "scenario": "Sc-01", "sensor": "radar", "hfov_deg": 120.0, "vfov_deg": 15.0,
    "range_m": 100.0, "predictor": "cv", "impute": "none", "seed": 0,
    "noise": True, "test_id": None, "prediction_times_s": None,
}
_SWEEP_DEFAULTS = {
    **_RUN_DEFAULTS,
    "name": None, "parameter": "hfov_deg",
    "values": [30.0, 60.0, 90.0, 120.0, 150.0, 180.0], "replications": 0,
}


class CliError(Exception):
    """User-facing command failure with a machine-readable payload."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _load_config(path: str | None, allowed: set, defaults: dict) -> tuple[dict, set]:
    """Returns the merged config plus the set of keys the file itself set."""
    merged = dict(defaults)
    if path is None:
        return merged, set()
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError("ConfigNotFound", f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError("ConfigParse", f"{path}: {exc}")
    if not isinstance(obj, dict):
        raise CliError("ConfigParse", f"{path}: top level must be an object")
    version = obj.get("version")
    if version != CONFIG_VERSION:
        raise CliError(
            "ConfigVersion",
            f"{path}: expected \"version\": {CONFIG_VERSION}, got {version!r}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise CliError("ConfigKey", f"{path}: unknown keys: {', '.join(unknown)}")
    merged.update({k: v for k, v in obj.items() if k != "version"})
    return merged, set(obj) - {"version"}


def _apply_flag_overrides(config: dict, file_keys: set, args, keys: tuple) -> dict:
    """Explicit flags win over config-file values; overriding prints a warning."""
    flag_names = {
        "scenario": "--scenario", "sensor": "--sensor", "hfov_deg": "--hfov-deg",
        "vfov_deg": "--vfov-deg", "range_m": "--range-m", "predictor": "--predictor",
        "impute": "--impute", "seed": "--seed", "noise": "--noise",
        "test_id": "--test-id", "name": "--name", "parameter": "--parameter",
        "values": "--values", "replications": "--replications",
    }
    for key in keys:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key in file_keys and config.get(key) != value:
            print(f"warning: {flag_names.get(key, key)} overrides config value "
                  f"{config.get(key)!r}", file=sys.stderr)
        config[key] = value
    return config


def _out_root(args) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    return Path(os.environ.get("PERCEPT_SWEEP_OUT", "out"))


def _default_test_id(scenario_id: str) -> str:
    # Sc-01 -> LC01_RelV5 (swept value appended per run)
    number = scenario_id.split("-")[-1]
    return f"LC{number}_RelV{RELATIVE_VELOCITY_KMH:g}"


def _build_sensor(config: dict) -> SensorConfig:
    return SensorConfig(
        modality=config["sensor"], hfov_deg=float(config["hfov_deg"]),
        vfov_deg=float(config["vfov_deg"]), range_max_m=float(config["range_m"]),
        seed=int(config["seed"]), noise_enabled=bool(config["noise"]))


def _build_run_spec(config: dict, test_id: str | None = None) -> RunSpec:
    if config["scenario"] not in PRESET_IDS:
        raise CliError("UnknownScenario",
                       f"unknown scenario {config['scenario']!r}; "
                       f"presets: {', '.join(PRESET_IDS)}")
    times = config["prediction_times_s"]
    return RunSpec(
        test_id=test_id or config["test_id"] or
        f"{_default_test_id(config['scenario'])}_{float(config['hfov_deg']):g}",
        scenario_id=config["scenario"],
        sensor=_build_sensor(config),
        predictor=PredictorId.parse(config["predictor"]),
        prediction_times_s=tuple(float(t) for t in times) if times else (),
        imputation=config["impute"],
    )


def cmd_scenario(args) -> int:
    if args.action == "list":
        for scenario_id in PRESET_IDS:
            print(f"{scenario_id}  {preset_scenario(scenario_id).description}")
        return 0
    spec = preset_scenario(args.id)  # KeyError -> handled in main
    if args.action == "show":
        print(f"{spec.scenario_id}: {spec.description}")
        road = spec.road
        shape = (f"arc, radius {road.arc_radius_m:g} m" if road.kind == "arc"
                 else "straight")
        print(f"  road: {road.lane_count} lanes x {road.lane_width_m:g} m, "
              f"{road.length_m:g} m, {shape}")
        print(f"  duration: {spec.duration_s:g} s")
        for v in spec.vehicles:
            print(f"  {v.spec.vehicle_id} ({v.spec.role}): lane {v.lane}, "
                  f"station {v.station_m:g} m, speed {v.speed_mps:g} m/s")
        for m in spec.maneuvers:
            print(f"  maneuver: {m.vehicle_id} {m.kind} lane {m.initial_lane}->"
                  f"{m.final_lane}, t={m.start_time_s:g}s +{m.duration_s:g}s")
        return 0
    save_scenario(spec, args.path)  # export
    print(f"wrote {args.path}")
    return 0


def cmd_run(args) -> int:
    config, file_keys = _load_config(args.config, _RUN_KEYS, _RUN_DEFAULTS)
    config = _apply_flag_overrides(config, file_keys, args, tuple(_RUN_DEFAULTS))
    spec = _build_run_spec(config)
    result = execute_run(spec, _out_root(args))
    print(f"run {result.test_id}: {_out_root(args) / 'runs' / result.test_id}")
    if result.no_detection:
        print("divergence: n/a (target never detected at any prediction time)")
    else:
        print(f"divergence_rmse: {result.divergence_rmse:.6f} m")
        print(f"gap: {result.gap:.6f} m")
    return 0


def cmd_sweep(args) -> int:
    config, file_keys = _load_config(args.config, _SWEEP_KEYS, _SWEEP_DEFAULTS)
    config = _apply_flag_overrides(config, file_keys, args, tuple(_SWEEP_DEFAULTS))
    base = _build_run_spec(config, test_id=_default_test_id(config["scenario"]))
    sweep = SweepSpec(
        name=config["name"] or f"{config['scenario']}_{config['sensor']}_"
                               f"{config['parameter']}",
        base=base, parameter=config["parameter"],
        values=tuple(float(v) for v in config["values"]),
        replications=int(config["replications"]))
    parallel = args.parallel if args.parallel is not None else os.cpu_count() or 1
    result = run_sweep(sweep, _out_root(args), parallel=parallel)
    print(f"sweep {result.name}: {_out_root(args) / 'sweep' / result.name}")
    print(f"{'value':>10}  {'mean divergence (m)':>20}")
    for value in result.values:
        aggregate = result.aggregates[value]
        shown = "n/a" if aggregate is None else f"{aggregate:.6f}"
        marker = "  <- selected" if value == result.selection_value else ""
        print(f"{value:>10g}  {shown:>20}{marker}")
    print(f"selected {result.parameter} = {result.selection_value:g} "
          f"(mean divergence {result.selection_aggregate:.6f} m)")
    if result.failed_runs:
        print(f"failed runs: {len(result.failed_runs)}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    sweep_dir = Path(args.sweep)
    summary_path = sweep_dir / "summary.json"
    if not sweep_dir.is_dir() or not summary_path.is_file():
        raise CliError("MissingSweep", f"not a sweep directory: {sweep_dir}")
    if args.format == "json":
        print(summary_path.read_text(), end="")
        return 0
    results = load_sweep_results(sweep_dir)
    if not results:
        raise CliError("MissingSweep", f"no persisted runs under {sweep_dir}")
    write_curve_csvs(results, sweep_dir / "curves")
    print(f"re-emitted curves for {len(results)} runs under {sweep_dir / 'curves'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percept-sweep",
        description="Sensor-parameter sweeps scored by prediction divergence.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_scenario = sub.add_parser("scenario", help="scenario catalogue")
    scen_sub = p_scenario.add_subparsers(dest="action", required=True)
    scen_sub.add_parser("list", help="list preset scenarios")
    p_show = scen_sub.add_parser("show", help="describe one scenario")
    p_show.add_argument("id")
    p_export = scen_sub.add_parser("export", help="write scenario JSON")
    p_export.add_argument("id")
    p_export.add_argument("path")
    p_scenario.set_defaults(func=cmd_scenario)

    def add_run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--scenario", choices=PRESET_IDS)
        p.add_argument("--sensor", choices=("radar", "camera"))
        p.add_argument("--hfov-deg", dest="hfov_deg", type=float)
        p.add_argument("--vfov-deg", dest="vfov_deg", type=float)
        p.add_argument("--range-m", dest="range_m", type=float)
        p.add_argument("--predictor",
                       help="cv | ca | social | external:<cmd or tcp:host:port>")
        p.add_argument("--impute", choices=("none", "linear"))
        p.add_argument("--seed", type=int)
        p.add_argument("--no-noise", dest="noise", action="store_const",
                       const=False, help="disable measurement noise")
        p.add_argument("--test-id", dest="test_id")
        p.add_argument("--out-dir", dest="out_dir")

    p_run = sub.add_parser("run", help="execute one run")
    add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a parameter sweep")
    add_run_flags(p_sweep)
    p_sweep.add_argument("--name", help="sweep directory name")
    p_sweep.add_argument("--parameter",
                         choices=("hfov_deg", "vfov_deg", "range_max_m"))
    p_sweep.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                         help="comma-separated parameter values")
    p_sweep.add_argument("--replications", type=int)
    p_sweep.add_argument("--parallel", type=int,
                         help="worker processes (default: available cores)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="re-emit sweep reports")
    p_report.add_argument("--sweep", required=True, help="sweep directory")
    p_report.add_argument("--format", choices=("csv", "json"), default="csv")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _print_error(exc.kind, str(exc))
    except (ValueError, KeyError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        _print_error(type(exc).__name__, str(message))
    except OSError as exc:
        _print_error("OSError", str(exc))
    except RuntimeError as exc:
        _print_error("RuntimeError", str(exc))
    return 1


def _print_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"type": kind, "message": message}}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
