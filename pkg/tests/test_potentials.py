import math

import numpy as np
import pytest

from phase_space_core import ConfigurationError
from potentials import PotentialModel, evaluate, explored_range, nonlinearity_scale


@pytest.mark.parametrize("kind, params, x, expected", [
    ("harmonic", {"omega": 1.0}, 2.0, (2.0, 2.0, 0.0)),
    ("inverted", {"lambda0": 1.0}, 1.0, (-0.5, -1.0, 0.0)),
    ("quartic_double_well", {"a": 1.0, "b": 1.0}, 1.0, (-0.25, 0.0, 6.0)),
])
def test_evaluate_known_values(kind, params, x, expected):
    V, dV, d3V = evaluate(PotentialModel(kind, **params), x)
    assert (V, dV, d3V) == pytest.approx(expected, abs=1e-15)


def test_derivatives_match_finite_differences(double_well):
    x, h = 1.3, 1e-4
    dV = (double_well.potential(x + h) - double_well.potential(x - h)) / (2 * h)
    d3V = (double_well.curvature(x + h) - double_well.curvature(x - h)) / (2 * h)
    assert double_well.derivative(x, order=1) == pytest.approx(dV, rel=1e-6)
    assert double_well.derivative(x, order=3) == pytest.approx(d3V, rel=1e-6)


def test_driven_well_without_drive_is_the_plain_well(double_well):
    driven = PotentialModel("driven_double_well", a=1.0, b=1.0, drive_amplitude=0.0, drive_frequency=1.0)
    xs = np.linspace(-3, 3, 41)
    for t in (0.0, 0.7, 5.0):
        assert np.array_equal(driven.potential(xs, t), double_well.potential(xs, t))
    assert not driven.is_time_dependent


def test_drive_adds_a_dipole_term():
    driven = PotentialModel("driven", a=1.0, b=1.0, drive_amplitude=0.3, drive_frequency=2.0)
    assert driven.kind == "driven_double_well"
    assert driven.derivative(0.0, t=0.5) == pytest.approx(0.3 * math.cos(1.0))
    assert driven.derivative(0.4, t=0.5, order=3) == pytest.approx(6 * 0.4)


def test_odd_difference_is_exact(double_well):
    x, shift = 0.8, 0.35
    expected = double_well.potential(x + shift) - double_well.potential(x - shift)
    assert double_well.odd_difference(x, shift) == pytest.approx(expected, abs=1e-15)


def test_double_well_alias():
    assert PotentialModel("double_well", a=2.0, b=0.5).kind == "quartic_double_well"


@pytest.mark.parametrize("kind, params, field", [
    ("harmonic", {"omega": 0.0}, "omega"),
    ("inverted", {}, "lambda0"),
    ("quartic_double_well", {"a": 1.0, "b": 0.0}, "b"),
    ("driven_double_well", {"a": 1.0, "b": 1.0, "drive_amplitude": 0.1}, "drive_frequency"),
    ("morse", {}, "kind"),
])
def test_invalid_parameters(kind, params, field):
    with pytest.raises(ConfigurationError) as info:
        PotentialModel(kind, **params)
    assert info.value.field == field


def test_nonlinearity_scale(harmonic, double_well):
    assert nonlinearity_scale(harmonic, (-2, 2)) == math.inf
    # one sample point: sqrt|(x^3 - x) / 6x| at x = 2
    assert nonlinearity_scale(double_well, (2.0, 2.0)) == pytest.approx(math.sqrt(0.5))
    xs = np.linspace(0.5, 2.0, 2001)
    expected = np.median(np.sqrt(np.abs((xs ** 3 - xs) / (6 * xs))))
    assert nonlinearity_scale(double_well, (2.0, 0.5)) == pytest.approx(expected)


def test_explored_range_of_gaussian():
    x = np.linspace(-10, 10, 20001)
    density = np.exp(-x ** 2 / 2)
    lo, hi = explored_range(density, x)
    assert lo == pytest.approx(-1.6449, abs=2e-3)
    assert hi == pytest.approx(1.6449, abs=2e-3)


def test_reference_rates(harmonic, inverted, double_well):
    assert harmonic.reference_rates() == (None, 1.0)
    assert inverted.reference_rates() == (1.0, None)
    rate, frequency = double_well.reference_rates()
    assert rate == pytest.approx(1.0)
    assert frequency == pytest.approx(math.sqrt(2.0))
