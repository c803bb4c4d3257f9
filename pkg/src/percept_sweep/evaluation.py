"""Run execution, divergence metrics, parameter sweeps and report emission.

A run pairs one scenario with one sensor configuration and one predictor.
At every prediction time the target's future is predicted twice, once from
ground-truth-sourced inputs and once from detection-sourced inputs, and the
divergence between the two mean trajectories scores how much the sensor
configuration degrades the prediction. A sweep repeats runs over a parameter
grid (HFOV by default) and selects the value with the lowest mean divergence.

Everything a run produces is persisted under runs/<test_id>/ so sweeps can be
re-scanned and reports re-emitted from disk.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .predictors import PredictionError, PredictorId, predict
from .scenario import (
    GroundTruthLog,
    ScenarioSpec,
    preset_scenario,
    run_scenario,
    save_scenario,
)
from .sensors import DetectionParams, DetectionSet, SensorConfig, sense
from .tracks import (
    HISTORY_FRAMES,
    HORIZON_STEPS,
    MODEL_RATE_HZ,
    ModelInput,
    TargetNeverDetectedError,
    TrackSource,
    assemble_history,
)
from .wire import ExternalPredictor

HISTORY_SPAN_S = (HISTORY_FRAMES - 1) / MODEL_RATE_HZ   # 3 s
HORIZON_SPAN_S = HORIZON_STEPS / MODEL_RATE_HZ          # 5 s
SWEEP_PARAMETERS = ("hfov_deg", "vfov_deg", "range_max_m")


def rmse_divergence(means_a: np.ndarray, means_b: np.ndarray) -> float:
    """Root-mean-square 2D distance between two mean trajectories.

    sqrt((1/f) * sum_k ||mu_a_k - mu_b_k||^2). A proper metric on mean
    sequences: non-negative, symmetric, zero only for identical means, and
    triangle-inequality compliant.
    """
    a = np.asarray(means_a, dtype=float)
    b = np.asarray(means_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 2:
        raise ValueError("mean trajectories must share an (f, 2) shape")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def displacement_errors(means: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Per-step (euclidean, |dx|, |dy|) errors against the actual future."""
    diff = np.asarray(means, dtype=float) - np.asarray(actual, dtype=float)
    return np.column_stack([np.hypot(diff[:, 0], diff[:, 1]),
                            np.abs(diff[:, 0]), np.abs(diff[:, 1])])


def default_prediction_times(duration_s: float) -> tuple:
    """Every second from (history span + 1 s) to (duration - horizon span)."""
    start = int(np.ceil(HISTORY_SPAN_S + 1.0))
    end = int(np.floor(duration_s - HORIZON_SPAN_S))
    return tuple(float(t) for t in range(start, end + 1))


@dataclass(frozen=True)
class RunSpec:
    test_id: str
    scenario_id: str
    sensor: SensorConfig
    predictor: PredictorId
    prediction_times_s: tuple = ()   # empty = default grid for the scenario
    imputation: str = "none"
    detection: DetectionParams = field(default_factory=DetectionParams)
    scenario: ScenarioSpec | None = None  # overrides the preset lookup

    def __post_init__(self):
        if not self.test_id:
            raise ValueError("test_id must be non-empty")
        if self.imputation not in ("none", "linear"):
            raise ValueError(f"unknown imputation policy {self.imputation!r}")

    def resolve_scenario(self) -> ScenarioSpec:
        return self.scenario if self.scenario is not None else preset_scenario(
            self.scenario_id)


@dataclass(frozen=True)
class PredictionRecord:
    t: float
    divergence: float | None
    error: str | None = None


@dataclass
class RunResult:
    test_id: str
    scenario_id: str
    modality: str
    parameter_values: dict
    predictor: str
    imputation: str
    prediction_times_s: list
    divergence_rmse: float | None
    gap: float | None
    rmse_curve_gt: list
    rmse_curve_sensor: list
    rmse_curve_gt_xy: list      # per step [rmse_x, rmse_y]
    rmse_curve_sensor_xy: list
    per_time: list              # [{"t": .., "divergence": .. | None, "error": ..}]
    detection_stats: dict       # vehicle_id -> {"frames_detected", "frames_total"}
    no_detection: bool
    warnings: list

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunResult":
        return cls(**obj)


def _aggregate_curves(errors: list) -> tuple:
    """Per-step RMS over prediction times for (2d, x, y) error stacks."""
    if not errors:
        return [], []
    stack = np.stack(errors)  # (times, steps, 3)
    rms = np.sqrt(np.mean(stack * stack, axis=0))
    return [float(v) for v in rms[:, 0]], [[float(x), float(y)]
                                           for x, y in rms[:, 1:]]


def _trajectory_global_means(trajectory, model_input: ModelInput) -> np.ndarray:
    means = trajectory.means()
    gx, gy = model_input.reference.to_world(means[:, 0], means[:, 1])
    return np.column_stack([gx, gy])


def _actual_future(log: GroundTruthLog, t: float, horizon: int,
                   rate_hz: float) -> np.ndarray:
    step = int(round(1.0 / (rate_hz * log.sim_step_s)))
    base = log.frame_index(t)
    idx = base + step * np.arange(1, horizon + 1)
    if idx[-1] >= log.n_frames:
        raise ValueError(f"horizon at t={t} s runs past the scenario end")
    states = log.vehicles[log.target_id]
    return np.column_stack([states.x_m[idx], states.y_m[idx]])


def execute_run(spec: RunSpec, out_root) -> RunResult:
    """Execute one run and persist its artifacts under <out_root>/runs/<test_id>/.

    Persists scenario.json, ground_truth.csv, detections.csv, the per-time
    model inputs for both sources, both prediction sets and result.json.
    """
    scenario = spec.resolve_scenario()
    times = spec.prediction_times_s or default_prediction_times(scenario.duration_s)
    for t in times:
        if t - HISTORY_SPAN_S < -1e-9 or t + HORIZON_SPAN_S > scenario.duration_s + 1e-9:
            raise ValueError(
                f"prediction time {t} s leaves no room for history or horizon")

    run_dir = Path(out_root) / "runs" / spec.test_id
    (run_dir / "model_inputs").mkdir(parents=True, exist_ok=True)

    log = run_scenario(scenario)
    detections = sense(log, spec.sensor, spec.detection)

    save_scenario(scenario, run_dir / "scenario.json")
    log.to_csv(run_dir / "ground_truth.csv")
    detections.to_csv(run_dir / "detections.csv")

    gt_source = TrackSource(log, stride=detections.stride)
    sd_source = TrackSource(log, detections=detections)

    client = None
    if spec.predictor.kind == "external":
        client = ExternalPredictor(spec.predictor.endpoint)
        client.connect()
    try:
        records, gt_errors, sd_errors, divergences = [], [], [], []
        predictions_gt, predictions_sd = [], []
        for seq, t in enumerate(times):
            try:
                input_gt = assemble_history(gt_source, log.target_id, t,
                                            imputation=spec.imputation)
                input_sd = assemble_history(sd_source, log.target_id, t,
                                            imputation=spec.imputation)
                _dump_json(input_gt.to_request(2 * seq + 1),
                           run_dir / "model_inputs" / f"t{t:07.2f}_gt.json")
                _dump_json(input_sd.to_request(2 * seq + 2),
                           run_dir / "model_inputs" / f"t{t:07.2f}_sensor.json")
                pred_gt = predict(spec.predictor, input_gt, client)
                pred_sd = predict(spec.predictor, input_sd, client)
            except (TargetNeverDetectedError, PredictionError) as exc:
                records.append(PredictionRecord(t, None, str(exc)))
                continue

            means_gt = _trajectory_global_means(pred_gt, input_gt)
            means_sd = _trajectory_global_means(pred_sd, input_sd)
            divergence = rmse_divergence(means_gt, means_sd)
            divergences.append(divergence)
            records.append(PredictionRecord(t, divergence))

            actual = _actual_future(log, t, input_gt.horizon, input_gt.rate_hz)
            gt_errors.append(displacement_errors(means_gt, actual))
            sd_errors.append(displacement_errors(means_sd, actual))
            predictions_gt.append(_prediction_json(t, pred_gt))
            predictions_sd.append(_prediction_json(t, pred_sd))
    finally:
        if client is not None:
            client.close()

    curve_gt, curve_gt_xy = _aggregate_curves(gt_errors)
    curve_sd, curve_sd_xy = _aggregate_curves(sd_errors)
    gap = None
    if curve_gt and curve_sd:
        gap = float(np.mean(np.abs(np.asarray(curve_sd) - np.asarray(curve_gt))))

    total_frames = len(detections.frames)
    stats = {
        vid: {"frames_detected": 0, "frames_total": total_frames}
        for vid in log.vehicles if vid != log.ego_id}
    for frame in detections.frames:
        for entry in frame.entries:
            stats[entry.vehicle_id]["frames_detected"] += 1

    result = RunResult(
        test_id=spec.test_id,
        scenario_id=scenario.scenario_id,
        modality=spec.sensor.modality,
        parameter_values={
            "hfov_deg": spec.sensor.hfov_deg,
            "vfov_deg": spec.sensor.vfov_deg,
            "range_max_m": spec.sensor.range_max_m,
            "seed": spec.sensor.seed,
            "noise_enabled": spec.sensor.noise_enabled,
        },
        predictor=spec.predictor.label,
        imputation=spec.imputation,
        prediction_times_s=[float(t) for t in times],
        divergence_rmse=float(np.mean(divergences)) if divergences else None,
        gap=gap,
        rmse_curve_gt=curve_gt,
        rmse_curve_sensor=curve_sd,
        rmse_curve_gt_xy=curve_gt_xy,
        rmse_curve_sensor_xy=curve_sd_xy,
        per_time=[{"t": r.t, "divergence": r.divergence, "error": r.error}
                  for r in records],
        detection_stats=stats,
        no_detection=not divergences,
        warnings=list(log.warnings),
    )

    _dump_json({"test_id": spec.test_id, "source": "ground_truth",
                "predictions": predictions_gt}, run_dir / "predictions_gt.json")
    _dump_json({"test_id": spec.test_id, "source": "detections",
                "predictions": predictions_sd}, run_dir / "predictions_sensor.json")
    _dump_json(result.to_json(), run_dir / "result.json")
    return result


def _prediction_json(t: float, trajectory) -> dict:
    return {
        "t_pred": float(t),
        "steps": [
            {"mux": s.mu_x, "muy": s.mu_y, "sigx": s.sigma_x, "sigy": s.sigma_y,
             "rho": s.rho}
            for s in trajectory.steps],
        "maneuver_probs": (
            None if trajectory.maneuver_probs is None
            else [[label, p] for label, p in trajectory.maneuver_probs]),
    }


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


# --------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepSpec:
    name: str
    base: RunSpec
    parameter: str = "hfov_deg"
    values: tuple = (30.0, 60.0, 90.0, 120.0, 150.0, 180.0)
    replications: int = 0   # 0 = default: 5 noisy seeds, or 1 when noise is off

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(
                f"unknown sweep parameter {self.parameter!r}; "
                f"one of {', '.join(SWEEP_PARAMETERS)}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ValueError("sweep values must be unique")
        if self.replications < 0:
            raise ValueError("replications must be non-negative")

    def effective_replications(self) -> int:
        if self.replications:
            return self.replications
        return 5 if self.base.sensor.noise_enabled else 1


@dataclass
class SweepResult:
    name: str
    parameter: str
    values: list
    aggregates: dict          # value -> mean divergence over successful runs
    selection_value: float
    selection_aggregate: float
    runs: list                # RunResult
    no_detection_runs: list   # test ids
    failed_runs: list         # [{"test_id", "error"}]

    def summary_json(self) -> dict:
        return {
            "sweep": self.name,
            "parameter": self.parameter,
            "values": self.values,
            "aggregates": {f"{v:g}": self.aggregates[v] for v in self.values},
            "selection": {"value": self.selection_value,
                          "aggregate": self.selection_aggregate},
            "runs": [r.test_id for r in self.runs],
            "no_detection_runs": self.no_detection_runs,
            "failed_runs": self.failed_runs,
        }


def replication_seed(base_seed: int, replication: int) -> int:
    """Stable 63-bit per-replication seed."""
    digest = hashlib.sha256(f"{base_seed}:{replication}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def sweep_run_specs(sweep: SweepSpec) -> list:
    reps = sweep.effective_replications()
    specs = []
    for value in sweep.values:
        for rep in range(reps):
            sensor = replace(
                sweep.base.sensor, **{sweep.parameter: value},
                seed=replication_seed(sweep.base.sensor.seed, rep))
            suffix = f"_r{rep}" if reps > 1 else ""
            test_id = f"{sweep.base.test_id}_{value:g}{suffix}"
            specs.append(replace(sweep.base, test_id=test_id, sensor=sensor))
    return specs


def _run_for_pool(args):
    spec, out_root = args
    return execute_run(spec, out_root)


def run_sweep(sweep: SweepSpec, out_root, parallel: int = 1) -> SweepResult:
    """Execute a sweep grid and persist summary/metrics/curves.

    Individual run failures are recorded and skipped; the selection considers
    only successful runs with detections. Results are aggregated in sorted
    test-id order, so the outcome is independent of the execution order and
    of the parallelism degree.
    """
    sweep_dir = Path(out_root) / "sweep" / sweep.name
    sweep_dir.mkdir(parents=True, exist_ok=True)
    specs = sweep_run_specs(sweep)

    results: dict = {}
    failures: dict = {}
    if parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = {
                pool.submit(_run_for_pool, (spec, sweep_dir)): spec for spec in specs}
            for future in concurrent.futures.as_completed(futures):
                spec = futures[future]
                try:
                    results[spec.test_id] = future.result()
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    failures[spec.test_id] = str(exc)
    else:
        for spec in specs:
            try:
                results[spec.test_id] = execute_run(spec, sweep_dir)
            except Exception as exc:  # noqa: BLE001
                failures[spec.test_id] = str(exc)

    ordered = [results[tid] for tid in sorted(results)]
    aggregates = {}
    for value in sweep.values:
        scores = [
            r.divergence_rmse for r in ordered
            if _value_of(r, sweep.parameter) == value and r.divergence_rmse is not None]
        aggregates[value] = float(np.mean(scores)) if scores else None

    scored = [(v, a) for v, a in aggregates.items() if a is not None]
    if not scored:
        raise RuntimeError(f"sweep {sweep.name}: no run produced a divergence")
    selection_value, selection_aggregate = min(scored, key=lambda va: (va[1], va[0]))

    result = SweepResult(
        name=sweep.name,
        parameter=sweep.parameter,
        values=[float(v) for v in sweep.values],
        aggregates=aggregates,
        selection_value=float(selection_value),
        selection_aggregate=float(selection_aggregate),
        runs=ordered,
        no_detection_runs=[r.test_id for r in ordered if r.no_detection],
        failed_runs=[{"test_id": tid, "error": failures[tid]}
                     for tid in sorted(failures)],
    )
    emit_report(result, sweep_dir)
    return result


def _value_of(result: RunResult, parameter: str) -> float:
    return result.parameter_values[parameter]


def emit_report(sweep_result: SweepResult, out_dir) -> None:
    """Write summary.json, metrics.csv and per-run curve CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(sweep_result.summary_json(), out_dir / "summary.json")

    lines = ["test_id,scenario,modality,predictor,imputation,"
             f"{sweep_result.parameter},divergence_rmse,gap,no_detection,selected"]
    for r in sweep_result.runs:
        value = _value_of(r, sweep_result.parameter)
        lines.append(
            f"{r.test_id},{r.scenario_id},{r.modality},{r.predictor},{r.imputation},"
            f"{value:g},"
            f"{'' if r.divergence_rmse is None else repr(r.divergence_rmse)},"
            f"{'' if r.gap is None else repr(r.gap)},"
            f"{int(r.no_detection)},"
            f"{int(value == sweep_result.selection_value)}")
    (out_dir / "metrics.csv").write_text("\n".join(lines) + "\n")

    write_curve_csvs(sweep_result.runs, out_dir / "curves")


def write_curve_csvs(results, curves_dir) -> None:
    """One CSV per run: per-step RMS error curves for both input sources."""
    curves_dir = Path(curves_dir)
    curves_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        rows = ["step,horizon_s,rmse_2d_gt,rmse_x_gt,rmse_y_gt,"
                "rmse_2d_sensor,rmse_x_sensor,rmse_y_sensor"]
        for k in range(len(r.rmse_curve_gt)):
            rows.append(
                f"{k + 1},{(k + 1) / MODEL_RATE_HZ!r},"
                f"{r.rmse_curve_gt[k]!r},{r.rmse_curve_gt_xy[k][0]!r},"
                f"{r.rmse_curve_gt_xy[k][1]!r},"
                f"{r.rmse_curve_sensor[k]!r},{r.rmse_curve_sensor_xy[k][0]!r},"
                f"{r.rmse_curve_sensor_xy[k][1]!r}")
        (curves_dir / f"{r.test_id}.csv").write_text("\n".join(rows) + "\n")


def load_sweep_results(sweep_dir) -> list:
    """Load every persisted result.json under a sweep directory."""
    run_dir = Path(sweep_dir) / "runs"
    results = []
    for path in sorted(run_dir.glob("*/result.json")):
        results.append(RunResult.from_json(json.loads(path.read_text())))
    return results
