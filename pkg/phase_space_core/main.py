import os
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from phase_space_core.errors import (
    ConfigurationError,
    ContractError,
    DomainTooSmallError,
    ResolutionError,
    UnphysicalStateError,
)

logger = logging.getLogger(__name__)

BOUNDARY_TAIL_TOLERANCE = 1e-12
IMAG_RESIDUE_TOLERANCE = 1e-10
MIN_POINTS = 16


def fft_workers():
    """Threads handed to every scipy.fft call (PHASELAB_FFT_WORKERS, default 1)."""
    return max(1, int(os.environ.get("PHASELAB_FFT_WORKERS", "1")))


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and not isinstance(n, bool) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """
    Periodic (x, p) rectangle with the physical constants of the run.

    Points are x_min + i*dx (i < nx) and p_min + j*dp (j < n_p); x_max and
    p_max are the periodic images of x_min and p_min.
    """
    nx: int
    n_p: int
    x_min: float
    x_max: float
    p_min: float
    p_max: float
    hbar: float = 1.0
    mass: float = 1.0

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def dp(self):
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self):
        return self.dx * self.dp

    @property
    def shape(self):
        return (self.nx, self.n_p)

    @cached_property
    def x(self):
        return self.x_min + self.dx * np.arange(self.nx)

    @cached_property
    def p(self):
        return self.p_min + self.dp * np.arange(self.n_p)

    @cached_property
    def k(self):
        """Wavenumbers conjugate to x, FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, self.dx)

    @cached_property
    def s(self):
        """Frequencies conjugate to p (units 1/momentum), FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_p, self.dp)

    @cached_property
    def k_half(self):
        return 2.0 * np.pi * np.fft.rfftfreq(self.nx, self.dx)

    @cached_property
    def s_half(self):
        return 2.0 * np.pi * np.fft.rfftfreq(self.n_p, self.dp)

    def mesh(self):
        return np.meshgrid(self.x, self.p, indexing="ij")


def make_grid(config=None, **fields):
    """
    Build a validated PhaseSpaceGrid.

    :param config: Dictionary with nx, np (or n_p), x_min, x_max, p_min, p_max, hbar, mass.
    :param fields: Same keys as keyword arguments; they override config.
    :return: PhaseSpaceGrid
    """
    values = dict(config or {})
    values.update(fields)
    if "np" in values:
        values["n_p"] = values.pop("np")

    for name in ("nx", "n_p", "x_min", "x_max", "p_min", "p_max"):
        if name not in values:
            raise ConfigurationError(f"{_public(name)} is required", block="grid", field=_public(name))

    for name in ("nx", "n_p"):
        n = values[name]
        if not _is_power_of_two(n):
            raise ConfigurationError(f"{_public(name)} must be a power of two", block="grid", field=_public(name))
        if n < MIN_POINTS:
            raise ConfigurationError(f"{_public(name)} must be at least {MIN_POINTS}", block="grid", field=_public(name))

    if not float(values["x_max"]) > float(values["x_min"]):
        raise ConfigurationError("x_max must exceed x_min", block="grid", field="x_max")
    if not float(values["p_max"]) > float(values["p_min"]):
        raise ConfigurationError("p_max must exceed p_min", block="grid", field="p_max")

    hbar = float(values.get("hbar", 1.0))
    mass = float(values.get("mass", 1.0))
    if not hbar > 0:
        raise ConfigurationError("hbar must be positive", block="grid", field="hbar")
    if not mass > 0:
        raise ConfigurationError("mass must be positive", block="grid", field="mass")

    grid = PhaseSpaceGrid(
        nx=int(values["nx"]), n_p=int(values["n_p"]),
        x_min=float(values["x_min"]), x_max=float(values["x_max"]),
        p_min=float(values["p_min"]), p_max=float(values["p_max"]),
        hbar=hbar, mass=mass,
    )
    logger.debug("grid %dx%d dx=%g dp=%g hbar=%g", grid.nx, grid.n_p, grid.dx, grid.dp, grid.hbar)
    return grid


def _public(name):
    return "np" if name == "n_p" else name


@dataclass
class WignerField:
    """Real Wigner distribution sampled on a grid, indexed (x-index, p-index)."""
    grid: PhaseSpaceGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ContractError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("field contains NaN or Inf")

    def norm(self):
        return float(self.values.sum() * self.grid.cell_area)

    def copy(self):
        return WignerField(self.grid, self.values.copy(), self.time)

    def with_values(self, values, time=None):
        return WignerField(self.grid, values, self.time if time is None else time)


@dataclass(frozen=True)
class InitialStateSpec:
    """
    Initial state description.

    sigma_p defaults to the minimum-uncertainty value hbar/(2*sigma_x).
    correlation is the x-p covariance (gaussian only); separation and phase
    describe the cat superposition.
    """
    kind: str = "gaussian"
    x0: float = 0.0
    p0: float = 0.0
    sigma_x: float = 1.0
    sigma_p: Optional[float] = None
    correlation: float = 0.0
    separation: float = 0.0
    phase: float = 0.0


def _gaussian(dx, dp, var_x, var_p, cov):
    det = var_x * var_p - cov ** 2
    quad = (var_p * dx ** 2 - 2.0 * cov * dx * dp + var_x * dp ** 2) / det
    return np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))


def _normal(u, var):
    return np.exp(-0.5 * u ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _cat(X, P, spec, sigma_p, hbar):
    # mixed components are the pure cat smeared in p by a Gaussian of variance `smear`
    var_x = spec.sigma_x ** 2
    pure_var_p = (hbar / (2.0 * spec.sigma_x)) ** 2
    var_p = sigma_p ** 2
    smear = max(var_p - pure_var_p, 0.0)
    k = spec.separation / hbar

    gp = _normal(P - spec.p0, var_p)
    left = _normal(X - (spec.x0 - 0.5 * spec.separation), var_x) * gp
    right = _normal(X - (spec.x0 + 0.5 * spec.separation), var_x) * gp

    damping = np.exp(-0.5 * k ** 2 * pure_var_p * smear / var_p)
    wavenumber = k * pure_var_p / var_p
    interference = 2.0 * _normal(X - spec.x0, var_x) * gp * damping * np.cos(wavenumber * (P - spec.p0) - spec.phase)
    return left + right + interference


def _check_boundary_tails(grid, values):
    peak = np.max(np.abs(values))
    edge = max(
        np.max(np.abs(values[0, :])), np.max(np.abs(values[-1, :])),
        np.max(np.abs(values[:, 0])), np.max(np.abs(values[:, -1])),
    )
    if edge > BOUNDARY_TAIL_TOLERANCE * peak:
        raise DomainTooSmallError(
            f"packet reaches the grid boundary at {edge / peak:.3e} of its peak "
            f"(tolerance {BOUNDARY_TAIL_TOLERANCE:g}); enlarge the x/p extents"
        )


def make_state(grid, spec):
    """
    Sample a normalized initial Wigner function.

    :param grid: PhaseSpaceGrid the state lives on.
    :param spec: InitialStateSpec (gaussian or cat).
    :return: WignerField normalized to 1 on the grid.
    """
    hbar = grid.hbar
    if spec.sigma_x <= 0:
        raise UnphysicalStateError("sigma_x must be positive")
    sigma_p = spec.sigma_p if spec.sigma_p is not None else hbar / (2.0 * spec.sigma_x)
    if sigma_p <= 0:
        raise UnphysicalStateError("sigma_p must be positive")

    X, P = grid.mesh()
    floor = (0.5 * hbar) ** 2 * (1.0 - 1e-12)

    if spec.kind == "gaussian":
        var_x, var_p, cov = spec.sigma_x ** 2, sigma_p ** 2, spec.correlation
        det = var_x * var_p - cov ** 2
        if det <= 0:
            raise UnphysicalStateError("covariance matrix must be positive definite")
        if det < floor:
            raise UnphysicalStateError(
                f"sqrt(det covariance) = {np.sqrt(det):.6g} is below hbar/2 = {0.5 * hbar:.6g}"
            )
        values = _gaussian(X - spec.x0, P - spec.p0, var_x, var_p, cov)
    elif spec.kind == "cat":
        if not spec.separation > 0:
            raise UnphysicalStateError("cat separation must be positive")
        if (spec.sigma_x * sigma_p) ** 2 < floor:
            raise UnphysicalStateError(
                f"sigma_x*sigma_p = {spec.sigma_x * sigma_p:.6g} is below hbar/2 = {0.5 * hbar:.6g}"
            )
        values = _cat(X, P, spec, sigma_p, hbar)
    else:
        raise ConfigurationError(f"unknown state kind '{spec.kind}'", block="initial_state", field="kind")

    _check_boundary_tails(grid, values)
    values = values / (values.sum() * grid.cell_area)
    return WignerField(grid, values, 0.0)


@dataclass
class SpectralField:
    """Field Fourier transformed along p: values[i, m] at (x_i, s_m), s in grid.s order."""
    grid: PhaseSpaceGrid
    values: np.ndarray
    time: float = 0.0

    @property
    def s(self):
        return self.grid.s


def to_xs(field):
    """
    Transform W(x, p) to the (x, s) representation where potential and diffusion kernels are diagonal.

    :param field: WignerField
    :return: SpectralField
    """
    values = sp_fft.fft(field.values, axis=1, workers=fft_workers())
    return SpectralField(field.grid, values, field.time)


def from_xs(spectral):
    """
    Inverse of to_xs. The imaginary residue must stay below 1e-10 of the peak and is discarded.

    :param spectral: SpectralField
    :return: WignerField
    """
    values = sp_fft.ifft(spectral.values, axis=1, workers=fft_workers())
    scale = max(float(np.max(np.abs(values.real))), np.finfo(float).tiny)
    residue = float(np.max(np.abs(values.imag)))
    if residue > IMAG_RESIDUE_TOLERANCE * scale:
        raise ResolutionError(f"imaginary residue {residue / scale:.3e} after inverse transform")
    return WignerField(spectral.grid, values.real.copy(), spectral.time)


def marginals(field):
    """
    Position and momentum densities.

    :param field: WignerField
    :return: (x_density, p_density), each integrating to the field norm.
    """
    grid = field.grid
    return field.values.sum(axis=1) * grid.dp, field.values.sum(axis=0) * grid.dx


def moments(field):
    """
    First and second moments of the field.

    :return: dict with mean_x, mean_p, mean_x2, mean_p2, mean_xp and the 2x2 covariance.
    """
    grid = field.grid
    norm = field.norm()
    x_density, p_density = marginals(field)
    x, p = grid.x, grid.p
    mean_x = float(np.dot(x, x_density) * grid.dx / norm)
    mean_p = float(np.dot(p, p_density) * grid.dp / norm)
    mean_x2 = float(np.dot(x ** 2, x_density) * grid.dx / norm)
    mean_p2 = float(np.dot(p ** 2, p_density) * grid.dp / norm)
    # Weyl ordering makes the symmetrized <xp> the plain phase-space average
    mean_xp = float(x @ field.values @ p * grid.cell_area / norm)
    covariance = np.array([
        [mean_x2 - mean_x ** 2, mean_xp - mean_x * mean_p],
        [mean_xp - mean_x * mean_p, mean_p2 - mean_p ** 2],
    ])
    return {
        "mean_x": mean_x, "mean_p": mean_p,
        "mean_x2": mean_x2, "mean_p2": mean_p2, "mean_xp": mean_xp,
        "covariance": covariance,
    }
