from .config import (
    OutputSpec,
    RunConfig,
    SweepConfig,
    build_run_config,
    build_scenario,
    build_sweep_config,
    load_run_config,
    load_scenario,
    load_sweep_config,
    read_config,
)
from .executor_agent import ExperimentAgent, exit_code_for
