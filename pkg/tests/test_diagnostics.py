import math

import numpy as np
import pandas as pd
import pytest

from diagnostics import (
    COLUMNS,
    TrajectoryRecord,
    breakdown_time,
    contracting_width,
    divergence,
    entropy_log_fit,
    entropy_rate_fit,
    fringe_contrast,
    linear_entropy,
    negativity_volume,
    observe,
    purity,
)
from phase_space_core import ContractError, InitialStateSpec, WignerField, make_grid, make_state


def wide_grid():
    return make_grid(nx=256, np=128, x_min=-16, x_max=16, p_min=-8, p_max=8)


def test_pure_gaussian_has_unit_purity(coherent_state):
    assert purity(coherent_state) == pytest.approx(1.0, abs=1e-6)
    assert linear_entropy(coherent_state) == pytest.approx(0.0, abs=1e-6)
    assert negativity_volume(coherent_state) == pytest.approx(0.0, abs=1e-9)


def test_purity_of_thermal_like_gaussian(small_grid):
    field = make_state(small_grid, InitialStateSpec(sigma_x=1.0, sigma_p=1.0))
    assert purity(field) == pytest.approx(0.5, abs=1e-6)


def test_linear_entropy_matches_covariance_determinant(small_grid):
    field = make_state(small_grid, InitialStateSpec(sigma_x=1.0, sigma_p=0.5 * math.exp(0.3)))
    assert linear_entropy(field) == pytest.approx(0.3, abs=1e-6)


def test_equal_mixture_of_distant_packets():
    grid = wide_grid()
    left = make_state(grid, InitialStateSpec(x0=-5.0, sigma_x=0.5))
    right = make_state(grid, InitialStateSpec(x0=5.0, sigma_x=0.5))
    mixture = WignerField(grid, 0.5 * (left.values + right.values))
    assert purity(mixture) == pytest.approx(0.5, abs=1e-4)
    assert linear_entropy(mixture) == pytest.approx(math.log(2.0), abs=1e-4)


def test_purity_requires_normalized_field(coherent_state):
    with pytest.raises(ContractError, match="normalized"):
        purity(coherent_state.with_values(2.0 * coherent_state.values))


def test_cat_fringes_are_negative_and_contrast_starts_at_one():
    cat = make_state(wide_grid(), InitialStateSpec(kind="cat", sigma_x=0.5, separation=4.0))
    assert negativity_volume(cat) > 0.01
    assert fringe_contrast(cat, 4.0, cat) == pytest.approx(1.0)
    with pytest.raises(ContractError):
        fringe_contrast(cat, 4.0, 0.0)


def test_contracting_width_follows_stable_direction(coherent_state, inverted, harmonic):
    stable = contracting_width(coherent_state, inverted)
    assert stable.direction == (-1.0, 1.0)
    assert stable.width2 == pytest.approx(2.0, rel=1e-8)
    assert stable.cov_min_eig == pytest.approx(0.5, rel=1e-8)
    # no contracting direction: fall back to the smallest covariance eigenvalue
    fallback = contracting_width(coherent_state, harmonic)
    assert fallback.width2 == pytest.approx(1.0, rel=1e-8)


def test_contracting_width_from_record_row(coherent_state, inverted):
    row = observe(coherent_state, inverted)
    assert contracting_width(row, inverted).width2 == pytest.approx(row["contracting_width2"], rel=1e-9)


def test_observe_row_columns(coherent_state, inverted):
    row = observe(coherent_state, inverted, fringe_separation=2.0)
    assert list(row)[:len(COLUMNS)] == COLUMNS
    assert row["fringe_contrast"] == pytest.approx(1.0)
    assert row["x_p05"] == pytest.approx(-1.1631, abs=0.13)


def test_record_orders_columns_and_survives_csv(tmp_path, coherent_state, inverted):
    rows = [dict(observe(coherent_state, inverted), time=t) for t in (0.0, 0.1, 0.2)]
    rows[0]["correction_ratio"] = 0.0
    record = TrajectoryRecord.from_rows(reversed(rows))
    assert record.columns[:len(COLUMNS)] == COLUMNS
    assert record.columns[-1] == "correction_ratio"

    ordered = TrajectoryRecord.from_rows(rows)
    path = tmp_path / "trajectory.csv"
    ordered.frame.to_csv(path, index=False)
    pd.testing.assert_frame_equal(TrajectoryRecord.read_csv(path).frame, ordered.frame, check_exact=True)


def test_record_validation(coherent_state):
    row = observe(coherent_state)
    TrajectoryRecord.from_rows([row, dict(row, time=1.0)]).validate()
    with pytest.raises(ContractError, match="increasing"):
        TrajectoryRecord.from_rows([row, row]).validate()
    with pytest.raises(ContractError, match="purity"):
        TrajectoryRecord.from_rows([dict(row, purity=1.01)]).validate()


def test_divergence_of_identical_records(coherent_state):
    record = TrajectoryRecord.from_rows([observe(coherent_state), dict(observe(coherent_state), time=0.5)])
    frame = divergence(record, record, field_distance=[0.0, 0.0])
    assert np.all(frame[["rel_mean_x", "rel_x2", "rel_p2", "field_l2"]].to_numpy() == 0.0)
    shorter = TrajectoryRecord.from_rows([observe(coherent_state)])
    with pytest.raises(ContractError):
        divergence(record, shorter)


def test_breakdown_time_interpolates():
    times = [0.0, 1.0, 2.0, 3.0, 4.0]
    values = [0.0, 0.04, 0.08, 0.12, 0.2]
    result = breakdown_time((times, values), 0.1)
    assert result.reached
    assert result.time == pytest.approx(2.5)
    assert breakdown_time((times, values), 0.0).time == 0.0
    never = breakdown_time((times, values), 0.5)
    assert not never.reached
    assert never.time == 4.0


def test_breakdown_time_is_monotone_in_threshold():
    times = np.linspace(0, 10, 101)
    values = 1e-3 * np.exp(times)
    found = [breakdown_time((times, values), threshold).time for threshold in (0.01, 0.1, 1.0)]
    assert found == sorted(found)


def test_entropy_rate_fit_recovers_linear_growth():
    times = np.linspace(0, 10, 101)
    fit = entropy_rate_fit((times, 0.7 + 0.3 * times))
    assert fit.rate == pytest.approx(0.3, abs=1e-12)
    assert fit.intercept == pytest.approx(0.7, abs=1e-12)
    assert fit.residual < 1e-12
    np.testing.assert_allclose(fit.hdot, 0.3, atol=1e-10)


def test_entropy_rate_fit_window_checks():
    times = np.linspace(0, 10, 101)
    values = 0.3 * times
    assert entropy_rate_fit((times, values), window=(5.0, 10.0)).rate == pytest.approx(0.3)
    with pytest.raises(ContractError, match="outside"):
        entropy_rate_fit((times, values), window=(5.0, 20.0))
    with pytest.raises(ContractError, match="samples"):
        entropy_rate_fit((times, values), window=(5.0, 5.3))


def test_entropy_log_fit():
    times = np.linspace(1, 100, 200)
    fit = entropy_log_fit((times, 1.0 + 0.5 * np.log(times)))
    assert fit.slope == pytest.approx(0.5)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(ContractError):
        entropy_log_fit((np.linspace(0, 1, 20), np.ones(20)))
