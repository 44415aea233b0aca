import math

import numpy as np
import pytest
from scipy import stats

from diagnostics import field_distance, fringe_amplitude, purity
from estimators import GaussianState, gaussian_oracle
from phase_space_core import (
    ConfigurationError,
    InitialStateSpec,
    NumericalAbort,
    ResolutionError,
    UndefinedRatioError,
    WignerField,
    make_grid,
    make_state,
    moments,
)
from potentials import PotentialModel
from propagators import (
    EnvironmentModel,
    EvolutionSpec,
    SplitOperatorPropagator,
    edge_fraction,
    evolve,
    first_correction_ratio,
    step_decoherence,
    step_friction,
    step_kinetic,
    step_potential,
)


def displaced_state(grid, x0=0.0, p0=0.0, sigma_x=1.0 / math.sqrt(2.0), sigma_p=None):
    return make_state(grid, InitialStateSpec(x0=x0, p0=p0, sigma_x=sigma_x, sigma_p=sigma_p))


def test_kinetic_step_translates_mean(small_grid):
    field = displaced_state(small_grid, p0=2.0)
    moved = step_kinetic(field, 0.5)
    assert moments(moved)["mean_x"] == pytest.approx(1.0, abs=1e-9)
    assert moved.norm() == pytest.approx(1.0, abs=1e-12)


def test_zero_step_is_identity(coherent_state, double_well):
    assert np.array_equal(step_kinetic(coherent_state, 0.0).values, coherent_state.values)
    assert np.array_equal(step_potential(coherent_state, double_well, "moyal", 0.0, 0.0).values, coherent_state.values)
    assert np.array_equal(step_decoherence(coherent_state, 0.0, 0.3).values, coherent_state.values)
    assert np.array_equal(step_friction(coherent_state, 0.0, 0.3).values, coherent_state.values)


def test_two_half_kinetic_steps_make_one(small_grid):
    field = displaced_state(small_grid, p0=1.0)
    halves = step_kinetic(step_kinetic(field, 0.2), 0.2)
    whole = step_kinetic(field, 0.4)
    np.testing.assert_allclose(halves.values, whole.values, atol=1e-12)


@pytest.mark.parametrize("model", [
    PotentialModel("harmonic", omega=1.0),
    PotentialModel("inverted", lambda0=1.0),
])
def test_moyal_equals_poisson_for_quadratic_potentials(small_grid, model):
    field = displaced_state(small_grid, x0=0.5)
    moyal = step_potential(field, model, "moyal", 0.0, 0.1)
    poisson = step_potential(field, model, "poisson", 0.0, 0.1)
    np.testing.assert_allclose(moyal.values, poisson.values, atol=1e-12)


def well_grid():
    return make_grid(nx=128, np=128, x_min=-10, x_max=10, p_min=-5, p_max=5)


def test_moyal_departs_from_poisson_in_proportion_to_the_cubic_term():
    field = make_state(well_grid(), InitialStateSpec(x0=1.0, sigma_x=1.0, sigma_p=0.5))
    differences = []
    for b in (1.0, 2.0):
        model = PotentialModel("quartic_double_well", a=1.0, b=b)
        moyal = step_potential(field, model, "moyal", 0.0, 0.01)
        poisson = step_potential(field, model, "poisson", 0.0, 0.01)
        differences.append(field_distance(moyal, poisson))
    assert differences[0] > 1e-6
    assert differences[1] > differences[0]


def test_truncated_series_through_third_order_is_exact_for_quartic(double_well):
    field = make_state(well_grid(), InitialStateSpec(x0=1.0, sigma_x=1.0, sigma_p=0.5))
    moyal = step_potential(field, double_well, "moyal", 0.0, 0.1)
    truncated = step_potential(field, double_well, "moyal_truncated", 0.0, 0.1, n_max=1)
    np.testing.assert_allclose(truncated.values, moyal.values, atol=1e-10)


def test_potential_step_preserves_norm(double_well):
    field = make_state(well_grid(), InitialStateSpec(x0=1.0, sigma_x=1.0, sigma_p=0.5))
    stepped = step_potential(field, double_well, "moyal", 0.0, 0.1)
    assert stepped.norm() == pytest.approx(1.0, abs=1e-12)


def test_diffusion_adds_momentum_variance(coherent_state):
    before = moments(coherent_state)["covariance"][1, 1]
    after = moments(step_decoherence(coherent_state, 0.1, 0.5))["covariance"][1, 1]
    assert after - before == pytest.approx(0.1, abs=1e-10)
    assert purity(step_decoherence(coherent_state, 0.1, 0.5)) < purity(coherent_state)


def test_diffusion_damps_cat_fringes():
    grid = make_grid(nx=256, np=128, x_min=-16, x_max=16, p_min=-8, p_max=8)
    cat = make_state(grid, InitialStateSpec(kind="cat", sigma_x=0.5, separation=4.0))
    D, dt = 0.05, 0.2
    ratio = fringe_amplitude(step_decoherence(cat, D, dt), 4.0) / fringe_amplitude(cat, 4.0)
    assert ratio == pytest.approx(math.exp(-D * 16.0 * dt), rel=1e-6)


def test_friction_contracts_mean_momentum(small_grid):
    field = displaced_state(small_grid, p0=1.0)
    gamma, dt = 0.1, 0.05
    for _ in range(10):
        field = step_friction(field, gamma, dt)
    assert field.norm() == pytest.approx(1.0, abs=1e-8)
    assert moments(field)["mean_p"] == pytest.approx(math.exp(-2 * gamma * 0.5), abs=1e-6)


def test_damped_diffusive_evolution_is_second_order(small_grid, harmonic):
    field = displaced_state(small_grid, x0=2.0)
    environment = EnvironmentModel(D=0.05, gamma=0.1)
    initial = GaussianState.from_widths(x0=2.0, sigma_x=1.0 / math.sqrt(2.0))
    exact = gaussian_oracle(harmonic, environment, initial, 5.0).frame.iloc[-1]
    steps = np.array([100, 200, 400])
    errors = []
    for n in steps:
        spec = EvolutionSpec(dt=5.0 / n, n_steps=int(n), record_every=int(n), environment=environment)
        final = evolve(field, harmonic, spec).record.frame.iloc[-1]
        measured = {
            "mean_x": final["mean_x"],
            "mean_p": final["mean_p"],
            "var_x": final["mean_x2"] - final["mean_x"] ** 2,
            "var_p": final["mean_p2"] - final["mean_p"] ** 2,
            "cov_xp": final["mean_xp"] - final["mean_x"] * final["mean_p"],
        }
        errors.append(max(abs(measured[k] - exact[k]) for k in measured))
    slope = stats.linregress(np.log(5.0 / steps), np.log(errors)).slope
    assert 1.8 <= slope <= 2.2
    assert errors[-1] < 1e-3


def test_weight_at_the_boundary_aborts(small_grid):
    field = displaced_state(small_grid, x0=2.0, p0=3.0)
    spec = EvolutionSpec(dt=0.1, n_steps=30, record_every=30)
    with pytest.raises(ResolutionError, match="periodic boundary"):
        evolve(field, PotentialModel("free"), spec)
    assert edge_fraction(field.values) < 1e-6


def test_environment_consistency():
    assert EnvironmentModel.thermal(gamma=0.5, T=3.0, mass=2.0).D == pytest.approx(6.0)
    with pytest.raises(ConfigurationError, match="inconsistent"):
        EnvironmentModel(D=1.0, gamma=1.0, T=1.0)
    with pytest.raises(ConfigurationError):
        EnvironmentModel(D=-1.0)
    assert EnvironmentModel().is_isolated


def test_time_step_above_stability_bound_is_rejected(harmonic):
    with pytest.raises(ConfigurationError) as info:
        EvolutionSpec(dt=1.0).validate_stability(harmonic)
    assert info.value.field == "dt_time"
    assert EvolutionSpec(dt=0.05).validate_stability(harmonic).dt == 0.05
    assert EvolutionSpec().max_stable_dt(PotentialModel("free")) == math.inf


def test_unknown_bracket_is_rejected():
    with pytest.raises(ConfigurationError, match="bracket"):
        EvolutionSpec(bracket="commutator")


def test_harmonic_revival_and_bracket_agreement(small_grid, harmonic):
    field = displaced_state(small_grid)
    period = 2 * math.pi
    finals = {}
    for bracket in ("moyal", "poisson"):
        spec = EvolutionSpec(bracket=bracket, dt=period / 200, n_steps=2000, record_every=200)
        result = evolve(field, harmonic, spec)
        finals[bracket] = result.field
        assert np.all(np.abs(result.record["norm"] - 1.0) < 1e-8)
        np.testing.assert_allclose(result.record["purity"], 1.0, atol=1e-8)
    assert field_distance(finals["moyal"], field) < 1e-5
    assert field_distance(finals["moyal"], finals["poisson"]) < 1e-6


def test_strang_error_is_second_order(small_grid, harmonic):
    field = displaced_state(small_grid, x0=2.0)
    steps = np.array([50, 100, 200])
    errors = []
    for n in steps:
        spec = EvolutionSpec(dt=2 * math.pi / n, n_steps=int(n), record_every=int(n))
        final = moments(evolve(field, harmonic, spec).field)
        errors.append(math.hypot(final["mean_x"] - 2.0, final["mean_p"]))
    slope = stats.linregress(np.log(2 * math.pi / steps), np.log(errors)).slope
    assert 1.8 <= slope <= 2.2


def test_purity_never_increases_under_diffusion(small_grid, inverted):
    spec = EvolutionSpec(dt=0.01, n_steps=100, record_every=10, environment=EnvironmentModel(D=0.05))
    record = evolve(displaced_state(small_grid), inverted, spec).record
    assert np.all(np.diff(record["purity"]) <= 1e-10)
    assert len(record) == 11
    assert record.times[-1] == pytest.approx(1.0)


def test_snapshots_and_observers(small_grid, harmonic):
    seen = []
    spec = EvolutionSpec(dt=0.05, n_steps=20, record_every=5, snapshot_every=10)
    result = evolve(displaced_state(small_grid), harmonic, spec, observers=[lambda f, step: seen.append(step)])
    assert seen == [0, 5, 10, 15, 20]
    assert [round(s.time, 9) for s in result.snapshots] == [0.0, 0.5, 1.0]


def test_nan_aborts_with_step_index(small_grid, harmonic):
    spec = EvolutionSpec(dt=0.05, n_steps=5)
    propagator = SplitOperatorPropagator(small_grid, harmonic, spec)
    propagator.advance = lambda values, t: values * np.nan
    with pytest.raises(NumericalAbort) as info:
        evolve(displaced_state(small_grid), harmonic, spec, propagator=propagator)
    assert info.value.step == 1


def test_norm_drift_aborts(small_grid, harmonic):
    spec = EvolutionSpec(dt=0.05, n_steps=5)
    propagator = SplitOperatorPropagator(small_grid, harmonic, spec)
    propagator.advance = lambda values, t: values * 1.01
    with pytest.raises(NumericalAbort, match="norm drifted"):
        list(propagator.iterate(displaced_state(small_grid)))


def ratio_grid(hbar=1.0):
    return make_grid(nx=128, np=256, x_min=-2.5, x_max=5.5, p_min=-16, p_max=16, hbar=hbar)


def test_correction_ratio_scales_with_hbar_squared(double_well):
    field = make_state(ratio_grid(), InitialStateSpec(x0=1.5, sigma_x=0.5, sigma_p=1.0))
    rescaled = WignerField(ratio_grid(hbar=0.5), field.values)
    assert first_correction_ratio(field, double_well) / first_correction_ratio(rescaled, double_well) == pytest.approx(4.0, rel=1e-12)


def test_correction_ratio_falls_with_momentum_width(double_well):
    narrow = make_state(ratio_grid(), InitialStateSpec(x0=1.5, sigma_x=0.5, sigma_p=1.0))
    broad = make_state(ratio_grid(), InitialStateSpec(x0=1.5, sigma_x=0.5, sigma_p=2.0))
    ratio = first_correction_ratio(narrow, double_well) / first_correction_ratio(broad, double_well)
    assert ratio == pytest.approx(4.0, rel=1e-6)
    assert first_correction_ratio(broad, double_well) < 0.2


def test_correction_ratio_edge_cases(coherent_state, harmonic):
    assert first_correction_ratio(coherent_state, harmonic) == 0.0
    with pytest.raises(UndefinedRatioError):
        first_correction_ratio(coherent_state, PotentialModel("free"))
