import os
import math
import logging
import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
import yaml
from scipy import stats

from phase_space_core import (
    ConfigurationError,
    ContractError,
    DomainTooSmallError,
    NumericalAbort,
    PhaseSpaceError,
    ResolutionError,
    UnphysicalStateError,
    make_state,
)
from potentials import nonlinearity_scale
from propagators import SplitOperatorPropagator, evolve
from propagators.main import is_record_step, record_row
from diagnostics import TrajectoryRecord, breakdown_time, divergence, entropy_rate_fit, field_distance, fringe_amplitude
from estimators import GaussianState, classical_lyapunov, correspondence_regime, gaussian_oracle, hyperion_report, sigma_c
from exporter_agent import ExporterAgent, load_snapshot
from experiment_cli.config import build_run_config, load_run_config, load_scenario, load_sweep_config

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4

# trailing share of the record averaged for plateau values
PLATEAU_FRACTION = 0.2


def exit_code_for(error):
    if isinstance(error, (ConfigurationError, UnphysicalStateError, DomainTooSmallError)):
        return EXIT_CONFIG
    if isinstance(error, (NumericalAbort, ResolutionError)):
        return EXIT_NUMERIC
    return EXIT_FAILURE


def _final_moments(row):
    return {
        "mean_x": row["mean_x"], "mean_p": row["mean_p"],
        "var_x": row["mean_x2"] - row["mean_x"] ** 2,
        "var_p": row["mean_p2"] - row["mean_p"] ** 2,
        "cov_xp": row["mean_xp"] - row["mean_x"] * row["mean_p"],
    }


def _plateau(frame, column):
    values = frame[column].to_numpy()
    tail = max(1, int(math.ceil(PLATEAU_FRACTION * len(values))))
    return float(np.nanmean(values[-tail:]))


def relaxed_width(frame, model=None):
    """
    Plateau of contracting_width2.

    On a quadratic potential with a contracting direction the stable variance
    relaxes as w(t) = w_inf + A exp(-2 lambda t); w_inf is the intercept of a
    fit over the second half of the record. Otherwise the tail average.
    """
    rate = model.reference_rates()[0] if model is not None and model.is_quadratic else None
    if not rate:
        return _plateau(frame, "contracting_width2")
    times = frame["time"].to_numpy()
    late = times >= times[-1] / 2.0
    decay = np.exp(-2.0 * rate * times[late])
    values = frame["contracting_width2"].to_numpy()[late]
    if late.sum() < 3 or np.ptp(decay) == 0.0 or not np.all(np.isfinite(values)):
        return _plateau(frame, "contracting_width2")
    return float(stats.linregress(decay, values).intercept)


def _late_entropy_rate(frame):
    times = frame["time"].to_numpy()
    half = times[-1] / 2.0
    try:
        return entropy_rate_fit(frame, (half, times[-1])).rate
    except ContractError:
        return float("nan")


def run_summary(record, model=None):
    frame = record.frame
    last = frame.iloc[-1]
    summary = {
        "final_time": float(last["time"]),
        "final_purity": float(last["purity"]),
        "final_linear_entropy": float(last["linear_entropy"]),
        "late_entropy_rate": _late_entropy_rate(frame),
        "plateau_contracting_width2": relaxed_width(frame, model),
        "tail_contracting_width2": _plateau(frame, "contracting_width2"),
        "plateau_cov_min_eig": _plateau(frame, "cov_min_eig"),
        "max_norm_drift": float(np.max(np.abs(frame["norm"].to_numpy() - frame["norm"].iloc[0]))),
    }
    summary.update({f"final_{k}": float(v) for k, v in _final_moments(last).items()})
    return summary


def run_member(job):
    """
    One sweep member, run in a worker process.

    :param job: (operation, document, source_path, out_dir, value)
    :return: summary dict with status, value and the member's measurements
    """
    operation, document, source_path, out_dir, value = job
    agent = ExperimentAgent(out_dir=out_dir, parallel=1)
    try:
        config = build_run_config(document, source_path)
    except PhaseSpaceError as e:
        return {"value": value, "status": "error", "error": type(e).__name__, "message": str(e)}
    agent.exporter.export(yaml.safe_dump(document, sort_keys=False), os.path.join(out_dir, "effective_config.yaml"), "txt")
    response = agent.execute_task({"operation": operation, "args": {"config": config, "out_dir": out_dir}})
    if response["status"] != "success":
        return {"value": value, "status": "error", "error": response.get("error", ""), "message": response["message"]}
    return {"value": value, "status": "success", **response["data"]["summary"]}


class ExperimentAgent:
    """
    Orchestrates runs, paired quantum/classical comparisons, sweeps and estimates.

    Tasks are dictionaries {"operation": ..., "args": {...}}; every operation
    returns a status dictionary and never raises.
    """

    def __init__(self, out_dir=None, parallel=None):
        """
        :param out_dir: output directory (default PHASELAB_OUT_DIR or "results")
        :param parallel: worker processes for sweeps (default PHASELAB_PARALLEL or 1)
        """
        self.out_dir = out_dir or os.environ.get("PHASELAB_OUT_DIR", "results")
        self.parallel = int(parallel or os.environ.get("PHASELAB_PARALLEL", "1"))
        self.exporter = ExporterAgent(name="ExperimentExporter")
        self.operations = {
            "run": self.run,
            "compare": self.compare,
            "sweep": self.sweep,
            "estimate": self.estimate,
            "snapshot_to_pgm": self.snapshot_to_pgm,
        }

    def execute_task(self, task):
        """
        Execute a task.

        :param task: Dictionary containing the operation and its arguments.
        :return: {"status", "message", "data", "exit_code"}
        """
        operation = task.get("operation")
        args = task.get("args", {})
        handler = self.operations.get(operation)
        if handler is None:
            return {"status": "error", "message": f"Unknown operation '{operation}'", "data": None, "exit_code": EXIT_CONFIG}
        try:
            return handler(**args)
        except PhaseSpaceError as e:
            logger.debug("%s failed", operation, exc_info=True)
            return {"status": "error", "error": type(e).__name__, "message": str(e), "data": None, "exit_code": exit_code_for(e)}
        except Exception as e:
            logger.exception("%s failed", operation)
            return {"status": "error", "error": type(e).__name__, "message": str(e), "data": None, "exit_code": EXIT_FAILURE}

    def _out(self, out_dir, name):
        return os.path.join(out_dir or self.out_dir, name)

    def _write_config(self, config, out_dir):
        target = self._out(out_dir, "config.yaml")
        if config.source_path:
            os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
            self.exporter.set_file_path(target)
            return self.exporter.export_config(config.source_path)
        return self.exporter.export(yaml.safe_dump(config.document, sort_keys=False), target, "txt")

    def _export(self, data, out_dir, name, format):
        response = self.exporter.export(data, self._out(out_dir, name), format)
        if response["status"] != "success":
            raise OSError(response["message"])
        return self.exporter.get_file_path()

    def run(self, config_path=None, config=None, out_dir=None):
        """
        Evolve one configured field and write its trajectory.

        :param config_path: YAML run file (ignored when config is given)
        :param config: prebuilt RunConfig
        :param out_dir: output directory
        """
        config = config or load_run_config(config_path)
        out_dir = out_dir or self.out_dir
        field = make_state(config.grid, config.initial_state)
        result = evolve(field, config.potential, config.evolution)

        files = [self._export(result.record.frame, out_dir, config.outputs.csv, "csv")]
        for index, snapshot in enumerate(result.snapshots):
            step = index * config.evolution.snapshot_every
            files.append(self._export(snapshot, out_dir, f"snapshot_{step:06d}.bin", "snapshot"))
        if config.outputs.heatmap:
            files.append(self._export(result.field, out_dir, "final.pgm", "pgm"))
        self._write_config(config, out_dir)

        summary = run_summary(result.record, config.potential)
        return {
            "status": "success",
            "message": f"Run finished at t={summary['final_time']:g}; trajectory exported to {files[0]}",
            "data": {"record": result.record, "field": result.field, "summary": summary, "files": files},
            "exit_code": EXIT_SUCCESS,
        }

    def compare(self, config_path=None, config=None, out_dir=None):
        """
        Paired Moyal and Liouville runs from the same initial field, stepped in lockstep.

        Writes divergence.csv, both trajectories and compare_summary.json.
        """
        config = config or load_run_config(config_path)
        out_dir = out_dir or self.out_dir
        model = config.potential
        quantum_bracket = config.evolution.bracket if config.evolution.bracket != "poisson" else "moyal"
        quantum_spec = dataclasses.replace(config.evolution, bracket=quantum_bracket, correction_ratio=True, snapshot_every=0)
        classical_spec = dataclasses.replace(config.evolution, bracket="poisson", snapshot_every=0)

        field = make_state(config.grid, config.initial_state)
        reference = fringe_amplitude(field, quantum_spec.fringe_separation) if quantum_spec.fringe_separation else None
        quantum = SplitOperatorPropagator(config.grid, model, quantum_spec)
        classical = SplitOperatorPropagator(config.grid, model, classical_spec)

        quantum_rows, classical_rows, distances = [], [], []
        for (step, fq), (_, fc) in zip(quantum.iterate(field), classical.iterate(field)):
            if is_record_step(quantum_spec, step):
                quantum_rows.append(record_row(fq, model, quantum_spec, reference))
                classical_rows.append(record_row(fc, model, classical_spec, reference))
                distances.append(field_distance(fq, fc))
        quantum_record = TrajectoryRecord.from_rows(quantum_rows)
        classical_record = TrajectoryRecord.from_rows(classical_rows)
        metrics = divergence(quantum_record, classical_record, distances)

        moment_breakdown = breakdown_time(metrics, config.moment_threshold, column="rel_x2")
        ratio_breakdown = breakdown_time(quantum_record.frame, config.ratio_threshold, column="correction_ratio")
        x_range = (float(classical_record["x_p05"].min()), float(classical_record["x_p95"].max()))
        chi = nonlinearity_scale(model, x_range)

        summary = {
            "moment_threshold": config.moment_threshold,
            "breakdown_time_moment": moment_breakdown.time,
            "breakdown_reached_moment": moment_breakdown.reached,
            "ratio_threshold": config.ratio_threshold,
            "breakdown_time_ratio": ratio_breakdown.time,
            "breakdown_reached_ratio": ratio_breakdown.reached,
            "max_rel_x2": float(metrics["rel_x2"].max()),
            "max_correction_ratio": float(np.nanmax(quantum_record["correction_ratio"])),
            "explored_x_min": x_range[0],
            "explored_x_max": x_range[1],
            "chi": chi,
            "final_field_l2": float(distances[-1]),
        }
        rate, _ = model.reference_rates()
        if config.environment.D > 0 and rate:
            width = sigma_c(config.environment.D, rate)
            regime = correspondence_regime(chi, width, config.grid.hbar)
            summary.update({"sigma_c": width, "regime": regime.label, "regime_ratio": regime.ratio})
        summary.update(run_summary(quantum_record, model))

        files = [
            self._export(metrics, out_dir, "divergence.csv", "csv"),
            self._export(quantum_record.frame, out_dir, "trajectory_quantum.csv", "csv"),
            self._export(classical_record.frame, out_dir, "trajectory_classical.csv", "csv"),
            self._export(summary, out_dir, "compare_summary.json", "json"),
        ]
        self._write_config(config, out_dir)
        state = "not reached" if not moment_breakdown.reached else f"t={moment_breakdown.time:g}"
        return {
            "status": "success",
            "message": f"Comparison finished; moment breakdown {state}; divergence exported to {files[0]}",
            "data": {
                "divergence": metrics, "quantum": quantum_record, "classical": classical_record,
                "summary": summary, "files": files,
            },
            "exit_code": EXIT_SUCCESS,
        }

    def sweep(self, config_path=None, sweep=None, out_dir=None, parallel=None):
        """
        Run every member of a sweep and fit the scaling law of the swept parameter.

        Members run in value order; with parallel > 1 they run in worker processes.
        """
        sweep = sweep or load_sweep_config(config_path)
        out_dir = out_dir or self.out_dir
        parallel = int(parallel or self.parallel)
        operation = "compare" if sweep.paired else "run"
        jobs = [
            (operation, document, source_path, os.path.join(out_dir, f"{sweep.parameter}_{index:02d}"), value)
            for index, ((document, source_path), value) in enumerate(zip(sweep.members(), sweep.values))
        ]
        logger.info("sweep over %s: %d members, %d workers", sweep.parameter, len(jobs), parallel)
        if parallel > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                outcomes = list(pool.map(run_member, jobs))
        else:
            outcomes = [run_member(job) for job in jobs]

        succeeded = [o for o in outcomes if o["status"] == "success"]
        failures = [o for o in outcomes if o["status"] != "success"]
        table = pd.DataFrame(outcomes)
        fit = fit_sweep(sweep, pd.DataFrame(succeeded))

        files = [
            self._export(table, out_dir, "sweep_summary.csv", "csv"),
            self._export(fit, out_dir, "sweep_fit.json", "json"),
        ]
        self._write_config(sweep.base, out_dir)
        data = {"summary": table, "fit": fit, "failures": failures, "files": files}
        if failures:
            files.append(self._export(failures, out_dir, "failures.json", "json"))
            return {
                "status": "partial",
                "message": f"{len(failures)} of {len(jobs)} sweep members failed; see {files[-1]}",
                "data": data,
                "exit_code": EXIT_PARTIAL,
            }
        return {
            "status": "success",
            "message": f"Sweep over {sweep.parameter} finished; summary exported to {files[0]}",
            "data": data,
            "exit_code": EXIT_SUCCESS,
        }

    def estimate(self, config_path, out_dir=None):
        """Closed-form timescales for a macroscopic scenario file."""
        scenario, options = load_scenario(config_path)
        report = hyperion_report(scenario, **options)
        table = report.to_frame()
        out_dir = out_dir or self.out_dir
        files = [
            self._export(table, out_dir, "estimate.csv", "csv"),
            self._export(table, out_dir, "estimate.txt", "txt"),
        ]
        os.makedirs(out_dir, exist_ok=True)
        self.exporter.set_file_path(self._out(out_dir, "config.yaml"))
        self.exporter.export_config(config_path)
        message = (
            f"{report.name}: ln(A0/hbar) = {report.log_action_ratio:.1f} (quoted ~{report.quoted_log_action:g}), "
            f"t_r = {report.t_r_years:.1f} yr (quoted ~{report.quoted_t_r_years:g} yr)"
        )
        return {
            "status": "success", "message": message,
            "data": {"report": report, "table": table, "files": files},
            "exit_code": EXIT_SUCCESS,
        }

    def snapshot_to_pgm(self, snapshot, out=None):
        """Convert a binary field snapshot to a 16-bit PGM heatmap."""
        field = load_snapshot(snapshot)
        target = out or os.path.splitext(snapshot)[0] + ".pgm"
        response = self.exporter.export(field, target, "pgm")
        if response["status"] != "success":
            raise OSError(response["message"])
        return {"status": "success", "message": f"Heatmap exported to {target}", "data": {"files": [target]}, "exit_code": EXIT_SUCCESS}


def _linear_fit(x, y):
    fit = stats.linregress(x, y)
    return {
        "slope": float(fit.slope), "slope_stderr": float(fit.stderr),
        "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2),
        "points": int(len(x)),
    }


def fit_sweep(sweep, table):
    """
    Scaling fit for the swept parameter.

    hbar: breakdown time against ln(1/hbar), compared with 1/lambda from the tangent map.
    D: plateau contracting width^2 against 2D/lambda_ref.
    dt: log-log error against dt (order of the splitting).
    """
    fit = {"parameter": sweep.parameter, "members": int(len(table))}
    if table.empty:
        fit["note"] = "no successful members"
        return fit
    base = sweep.base
    if sweep.parameter == "hbar":
        fit.update(_fit_hbar(sweep, table))
    elif sweep.parameter == "D":
        rate, _ = base.potential.reference_rates()
        if not rate:
            fit["note"] = f"{base.potential.kind} potential has no contracting direction"
        elif len(table) >= 2:
            fit.update(_linear_fit(2.0 * table["value"].to_numpy() / rate, table["plateau_contracting_width2"].to_numpy()))
            fit["reference_rate"] = rate
    elif sweep.parameter == "dt":
        fit.update(_fit_dt(sweep, table))
    else:
        fit["note"] = "drive amplitude sweeps report member summaries only"
    return fit


def _fit_hbar(sweep, table):
    base = sweep.base
    result = {}
    initial = sweep.lyapunov_initial or (base.initial_state.x0, base.initial_state.p0)
    lyapunov = classical_lyapunov(base.potential, initial, sweep.lyapunov_duration)
    result.update({
        "lyapunov": lyapunov.rate, "lyapunov_stderr": lyapunov.stderr,
        "lyapunov_low_confidence": lyapunov.low_confidence,
        "inverse_lyapunov": 1.0 / lyapunov.rate if lyapunov.rate > 0 else math.inf,
    })
    for detector in ("moment", "ratio"):
        reached = table[table[f"breakdown_reached_{detector}"].astype(bool)]
        if len(reached) < 2:
            result[detector] = {"note": f"{len(reached)} members reached the {detector} threshold"}
            continue
        line = _linear_fit(np.log(1.0 / reached["value"].to_numpy()), reached[f"breakdown_time_{detector}"].to_numpy())
        if lyapunov.rate > 0:
            line["relative_error"] = abs(line["slope"] * lyapunov.rate - 1.0)
        result[detector] = line
    return result


def _oracle_reference(base):
    state = base.initial_state
    initial = GaussianState.from_widths(state.x0, state.p0, state.sigma_x, state.sigma_p, state.correlation, base.grid.hbar)
    oracle = gaussian_oracle(base.potential, base.environment, initial, [0.0, base.evolution.duration])
    row = oracle.frame.iloc[-1]
    return {k: float(row[k]) for k in ("mean_x", "mean_p", "var_x", "var_p", "cov_xp")}


def _fit_dt(sweep, table):
    base = sweep.base
    keys = ("mean_x", "mean_p", "var_x", "var_p", "cov_xp")
    table = table.sort_values("value")
    if base.potential.is_quadratic and base.initial_state.kind == "gaussian":
        reference = _oracle_reference(base)
        members = table
        source = "covariance oracle"
    else:
        finest = table.iloc[0]
        reference = {k: float(finest[f"final_{k}"]) for k in keys}
        members = table.iloc[1:]
        source = f"finest dt {finest['value']:g}"
    errors = np.array([max(abs(row[f"final_{k}"] - reference[k]) for k in keys) for _, row in members.iterrows()])
    result = {"reference": source, "errors": errors.tolist(), "dt": members["value"].tolist()}
    usable = errors > 0
    if usable.sum() >= 2:
        result.update(_linear_fit(np.log(members["value"].to_numpy()[usable]), np.log(errors[usable])))
    return result
