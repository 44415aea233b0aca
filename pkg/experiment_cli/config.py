import copy
import logging
from dataclasses import dataclass, field
from typing import Optional

import yaml

from phase_space_core import ConfigurationError, InitialStateSpec, make_grid
from potentials import PotentialModel
from propagators import EnvironmentModel, EvolutionSpec
from estimators import DAY, MacroScenario
from experiment_cli.config_schema import (
    RUN_BLOCKS,
    SCENARIO_BLOCKS,
    SWEEP_BLOCKS,
    SWEEP_PARAMETERS,
    config_schema,
)

logger = logging.getLogger(__name__)

# swept parameter -> (block, key)
SWEEP_KEYS = {
    "hbar": ("grid", "hbar_action"),
    "D": ("environment", "D_p2_per_time"),
    "dt": ("evolution", "dt_time"),
    "drive_amplitude": ("potential", "drive_amplitude_force"),
}


def read_config(path):
    """
    Load a YAML config file.

    :param path: config file path
    :return: (parsed document, verbatim text)
    """
    try:
        with open(path) as file:
            text = file.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}")
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path} is not valid YAML: {e}")
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path} must contain a mapping of config blocks")
    return document, text


def _coerce(value, kind, block, key):
    if value is None:
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            # PyYAML reads exponents without a dot (1e-3) as strings
            try:
                return float(value)
            except ValueError:
                pass
    elif kind is str:
        if isinstance(value, str):
            return value
    elif kind is list:
        if isinstance(value, list) and value:
            return [_coerce(item, float, block, key) for item in value]
    raise ConfigurationError(f"expected {kind.__name__}, got {value!r}", block=block, field=key)


def parse_block(raw, block):
    """
    Validate one block against the schema.

    :param raw: mapping read from the config file (None for an absent block)
    :param block: block name
    :return: dict keyed by library field names, defaults filled in
    """
    schema = config_schema[block]
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigurationError("block must be a mapping", block=block)
    for key in raw:
        if key not in schema:
            raise ConfigurationError("unknown key", block=block, field=key)
    values = {}
    for key, (name, kind, required, default) in schema.items():
        if key not in raw or raw[key] is None:
            if required:
                raise ConfigurationError("missing required key", block=block, field=key)
            values[name] = default
            continue
        values[name] = _coerce(raw[key], kind, block, key)
    return values


def parse_document(document, blocks):
    """Validate every block of a document; blocks maps name -> required."""
    for name in document:
        if name not in blocks:
            raise ConfigurationError("unknown block", block=name)
    parsed = {}
    for name, required in blocks.items():
        if name not in document and required:
            raise ConfigurationError("missing required block", block=name)
        parsed[name] = parse_block(document.get(name), name)
    return parsed


@dataclass(frozen=True)
class OutputSpec:
    csv: str = "trajectory.csv"
    snapshot_every: int = 0
    heatmap: bool = False
    fringe_separation: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run: every block already built into its library object."""
    grid: object
    potential: PotentialModel
    initial_state: InitialStateSpec
    evolution: EvolutionSpec
    environment: EnvironmentModel
    outputs: OutputSpec
    moment_threshold: float = 0.10
    ratio_threshold: float = 1.0
    document: dict = field(default_factory=dict, repr=False, compare=False)
    source_path: Optional[str] = None

    def with_parameter(self, parameter, value):
        """Rebuild the config with one swept parameter replaced."""
        return build_run_config(override(self.document, parameter, value), self.source_path)


def override(document, parameter, value):
    """
    Copy of a config document with a swept parameter set.

    dt keeps the run duration and record interval; D drops kT_energy.
    """
    if parameter not in SWEEP_KEYS:
        raise ConfigurationError(f"cannot sweep '{parameter}'; choose one of {SWEEP_PARAMETERS}", block="sweep", field="parameter")
    document = copy.deepcopy(document)
    document.pop("sweep", None)
    block, key = SWEEP_KEYS[parameter]
    section = document.setdefault(block, {}) or {}
    document[block] = section
    if parameter == "dt":
        evolution = parse_block(document.get("evolution"), "evolution")
        duration = evolution["dt"] * evolution["n_steps"]
        interval = evolution["dt"] * evolution["record_every"]
        section["n_steps"] = max(1, int(round(duration / value)))
        section["record_every"] = max(1, int(round(interval / value)))
    if parameter == "D":
        section.pop("kT_energy", None)
    section[key] = value
    return document


def build_run_config(document, source_path=None):
    """
    Validate a run document and build the library objects.

    :param document: parsed YAML mapping
    :param source_path: file the document came from (copied into every output directory)
    :return: RunConfig
    """
    blocks = {name: required for name, required in RUN_BLOCKS.items()}
    parsed = parse_document({k: v for k, v in document.items() if k != "sweep"}, blocks)

    grid = make_grid(parsed["grid"])
    potential = PotentialModel(mass=grid.mass, **parsed["potential"])
    initial_state = InitialStateSpec(**parsed["initial_state"])
    environment = EnvironmentModel(mass=grid.mass, **parsed["environment"])
    outputs = OutputSpec(**parsed["outputs"])

    evolution_fields = dict(parsed["evolution"])
    moment_threshold = evolution_fields.pop("moment_threshold")
    ratio_threshold = evolution_fields.pop("ratio_threshold")
    if outputs.fringe_separation is None and initial_state.kind == "cat":
        outputs = OutputSpec(outputs.csv, outputs.snapshot_every, outputs.heatmap, initial_state.separation)
    evolution = EvolutionSpec(
        environment=environment,
        snapshot_every=outputs.snapshot_every,
        fringe_separation=outputs.fringe_separation,
        **evolution_fields,
    ).validate_stability(potential)

    return RunConfig(
        grid=grid, potential=potential, initial_state=initial_state,
        evolution=evolution, environment=environment, outputs=outputs,
        moment_threshold=moment_threshold, ratio_threshold=ratio_threshold,
        document=copy.deepcopy(document), source_path=source_path,
    )


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    parameter: str
    values: tuple
    paired: bool = False
    lyapunov_duration: float = 200.0
    lyapunov_initial: Optional[tuple] = None
    window: Optional[tuple] = None

    def members(self):
        """Picklable (document, source_path) pair per swept value, in value order."""
        return [(override(self.base.document, self.parameter, value), self.base.source_path) for value in self.values]


def build_sweep_config(document, source_path=None):
    parse_document(document, SWEEP_BLOCKS)
    sweep = parse_block(document.get("sweep"), "sweep")
    if sweep["parameter"] not in SWEEP_PARAMETERS:
        raise ConfigurationError(f"must be one of {SWEEP_PARAMETERS}", block="sweep", field="parameter")
    values = tuple(sweep["values"])
    if len(values) < 2:
        raise ConfigurationError("a sweep needs at least two values", block="sweep", field="values")
    if sweep["parameter"] in ("hbar", "dt") and any(v <= 0 for v in values):
        raise ConfigurationError("values must be positive", block="sweep", field="values")
    if sweep["parameter"] in ("D", "drive_amplitude") and any(v < 0 for v in values):
        raise ConfigurationError("values must be non-negative", block="sweep", field="values")
    if sweep["parameter"] == "hbar" and not sweep["paired"]:
        raise ConfigurationError("hbar sweeps measure breakdown times and need paired runs", block="sweep", field="paired")

    base = build_run_config(document, source_path)
    # every member must validate before anything runs
    for value in values:
        base.with_parameter(sweep["parameter"], value)

    initial = None
    if sweep["lyapunov_x0"] is not None or sweep["lyapunov_p0"] is not None:
        initial = (sweep["lyapunov_x0"] or 0.0, sweep["lyapunov_p0"] or 0.0)
    window = None
    if sweep["window_start"] is not None and sweep["window_end"] is not None:
        window = (sweep["window_start"], sweep["window_end"])
    return SweepConfig(
        base=base, parameter=sweep["parameter"], values=values, paired=sweep["paired"],
        lyapunov_duration=sweep["lyapunov_duration"], lyapunov_initial=initial, window=window,
    )


def build_scenario(document):
    """
    Scenario file -> (MacroScenario in SI units, keyword arguments for hyperion_report).
    """
    parsed = parse_document(document, SCENARIO_BLOCKS)
    fields = dict(parsed["scenario"])
    period_days = fields.pop("period")
    lyapunov_days = fields.pop("lyapunov_time")
    if lyapunov_days is not None and not lyapunov_days > 0:
        raise ConfigurationError("must be positive", block="scenario", field="lyapunov_time_days")
    if period_days is not None and not period_days > 0:
        raise ConfigurationError("must be positive", block="scenario", field="period_days")
    scenario = MacroScenario(
        period=period_days * DAY if period_days is not None else None,
        lyapunov_rate=1.0 / (lyapunov_days * DAY) if lyapunov_days is not None else None,
        **fields,
    )
    return scenario, parsed["timescales"]


def load_run_config(path):
    document, _ = read_config(path)
    return build_run_config(document, path)


def load_sweep_config(path):
    document, _ = read_config(path)
    return build_sweep_config(document, path)


def load_scenario(path):
    document, _ = read_config(path)
    return build_scenario(document)
