from pathlib import Path

import numpy as np
import pytest
import yaml

from phase_space_core import InitialStateSpec, make_grid, make_state
from potentials import PotentialModel

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def small_grid():
    return make_grid(nx=128, np=128, x_min=-8.0, x_max=8.0, p_min=-8.0, p_max=8.0)


@pytest.fixture
def coherent_state(small_grid):
    return make_state(small_grid, InitialStateSpec(sigma_x=1.0 / np.sqrt(2.0)))


@pytest.fixture
def harmonic():
    return PotentialModel("harmonic", omega=1.0)


@pytest.fixture
def inverted():
    return PotentialModel("inverted", lambda0=1.0)


@pytest.fixture
def double_well():
    return PotentialModel("quartic_double_well", a=1.0, b=1.0)


def harmonic_document(nx=64, n_steps=40, dt=0.05, record_every=10, **extra):
    """Small harmonic run config used by the CLI tests."""
    document = {
        "grid": {
            "nx": nx, "np": nx,
            "x_min_length": -8.0, "x_max_length": 8.0,
            "p_min_momentum": -8.0, "p_max_momentum": 8.0,
            "hbar_action": 1.0, "mass": 1.0,
        },
        "potential": {"kind": "harmonic", "omega_per_time": 1.0},
        "initial_state": {"kind": "gaussian", "x0_length": 2.0, "sigma_x_length": 0.7071067811865476},
        "evolution": {"bracket": "moyal", "dt_time": dt, "n_steps": n_steps, "record_every": record_every},
        "outputs": {"csv": "trajectory.csv"},
    }
    for block, values in extra.items():
        document.setdefault(block, {}).update(values)
    return document


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="config.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(document, sort_keys=False))
        return str(path)
    return write
