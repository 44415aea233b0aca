import numpy as np
import pytest

from phase_space_core import (
    ConfigurationError,
    ContractError,
    DomainTooSmallError,
    InitialStateSpec,
    ResolutionError,
    SpectralField,
    UnphysicalStateError,
    WignerField,
    from_xs,
    make_grid,
    make_state,
    marginals,
    moments,
    to_xs,
)


def test_grid_axes_and_spacing(small_grid):
    assert small_grid.shape == (128, 128)
    assert small_grid.dx == pytest.approx(0.125)
    assert small_grid.x[0] == -8.0
    assert small_grid.x[-1] == pytest.approx(8.0 - 0.125)
    assert small_grid.s_half.shape == (65,)


@pytest.mark.parametrize("nx, message", [(100, "power of two"), (8, "at least 16")])
def test_grid_rejects_bad_point_counts(nx, message):
    with pytest.raises(ConfigurationError, match=message) as info:
        make_grid(nx=nx, np=64, x_min=-1, x_max=1, p_min=-1, p_max=1)
    assert info.value.block == "grid"
    assert info.value.field == "nx"


def test_grid_rejects_empty_extent_and_bad_hbar():
    with pytest.raises(ConfigurationError, match="x_max must exceed x_min"):
        make_grid(nx=32, np=32, x_min=1, x_max=1, p_min=-1, p_max=1)
    with pytest.raises(ConfigurationError, match="hbar must be positive"):
        make_grid(nx=32, np=32, x_min=-1, x_max=1, p_min=-1, p_max=1, hbar=0.0)


def test_grid_requires_every_extent():
    with pytest.raises(ConfigurationError, match=r"\[grid.p_max\]"):
        make_grid({"nx": 32, "np": 32, "x_min": -1, "x_max": 1, "p_min": -1})


def test_gaussian_is_normalized_with_requested_moments(small_grid):
    spec = InitialStateSpec(x0=1.0, p0=-0.5, sigma_x=1.0, sigma_p=0.8, correlation=0.2)
    field = make_state(small_grid, spec)
    m = moments(field)
    assert field.norm() == pytest.approx(1.0, abs=1e-12)
    assert m["mean_x"] == pytest.approx(1.0, abs=1e-10)
    assert m["mean_p"] == pytest.approx(-0.5, abs=1e-10)
    np.testing.assert_allclose(m["covariance"], [[1.0, 0.2], [0.2, 0.64]], atol=1e-8)


def test_minimum_uncertainty_default_width(small_grid):
    field = make_state(small_grid, InitialStateSpec(sigma_x=0.5))
    assert moments(field)["covariance"][1, 1] == pytest.approx(1.0, rel=1e-8)


def test_state_below_uncertainty_floor_is_rejected(small_grid):
    with pytest.raises(UnphysicalStateError):
        make_state(small_grid, InitialStateSpec(sigma_x=0.5, sigma_p=0.5))


def test_state_leaking_past_boundary_is_rejected(small_grid):
    with pytest.raises(DomainTooSmallError):
        make_state(small_grid, InitialStateSpec(sigma_x=3.0))


def test_cat_needs_separation_and_known_kind(small_grid):
    with pytest.raises(UnphysicalStateError):
        make_state(small_grid, InitialStateSpec(kind="cat", sigma_x=0.5))
    with pytest.raises(ConfigurationError):
        make_state(small_grid, InitialStateSpec(kind="squeezed", sigma_x=0.5))


def test_cat_state_has_negative_fringes_and_unit_norm():
    grid = make_grid(nx=256, np=128, x_min=-16, x_max=16, p_min=-8, p_max=8)
    field = make_state(grid, InitialStateSpec(kind="cat", sigma_x=0.5, separation=4.0))
    assert field.norm() == pytest.approx(1.0, abs=1e-12)
    assert field.values.min() < 0
    x_density, _ = marginals(field)
    peaks = grid.x[np.argsort(x_density)[-2:]]
    assert sorted(np.round(peaks)) == [-2.0, 2.0]


def test_marginals_integrate_to_norm(coherent_state):
    grid = coherent_state.grid
    x_density, p_density = marginals(coherent_state)
    assert x_density.sum() * grid.dx == pytest.approx(1.0, abs=1e-12)
    assert p_density.sum() * grid.dp == pytest.approx(1.0, abs=1e-12)


def test_spectral_transform_inverts(coherent_state):
    back = from_xs(to_xs(coherent_state))
    np.testing.assert_allclose(back.values, coherent_state.values, atol=1e-14)


def test_inverse_transform_rejects_imaginary_residue(coherent_state):
    spectral = to_xs(coherent_state)
    spectral = SpectralField(spectral.grid, spectral.values * 1j, spectral.time)
    with pytest.raises(ResolutionError):
        from_xs(spectral)


def test_field_rejects_wrong_shape_and_nan(small_grid):
    with pytest.raises(ContractError):
        WignerField(small_grid, np.zeros((4, 4)))
    values = np.zeros(small_grid.shape)
    values[0, 0] = np.nan
    with pytest.raises(ContractError):
        WignerField(small_grid, values)
