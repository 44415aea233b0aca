import math
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from phase_space_core import (
    ConfigurationError,
    NumericalAbort,
    ResolutionError,
    UndefinedRatioError,
    WignerField,
    fft_workers,
)
from diagnostics import TrajectoryRecord, fringe_amplitude, observe

logger = logging.getLogger(__name__)

BRACKETS = ("poisson", "moyal", "moyal_truncated")
NORM_DRIFT_TOLERANCE = 1e-6
STABILITY_FACTOR = 0.1
CONSISTENCY_TOLERANCE = 1e-9
# fraction of spectral energy allowed in the top eighth of the resolvable band
BAND_EDGE_TOLERANCE = 1e-8
# share of |W| allowed in the outer 1/32 of either axis before the run aborts
EDGE_BAND = 32
EDGE_MASS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EnvironmentModel:
    """
    Markovian environment: momentum diffusion D and relaxation rate gamma.

    When a temperature is supplied the fluctuation-dissipation relation
    D = 2 m gamma k_B T is enforced (k_B defaults to 1, natural units).
    """
    D: float = 0.0
    gamma: float = 0.0
    T: Optional[float] = None
    mass: float = 1.0
    boltzmann: float = 1.0

    def __post_init__(self):
        if self.D < 0:
            raise ConfigurationError("D must be non-negative", block="environment", field="D_p2_per_time")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative", block="environment", field="gamma_per_time")
        if self.T is not None:
            if self.T <= 0:
                raise ConfigurationError("temperature must be positive", block="environment", field="kT_energy")
            expected = 2.0 * self.mass * self.gamma * self.boltzmann * self.T
            if not math.isclose(self.D, expected, rel_tol=CONSISTENCY_TOLERANCE, abs_tol=1e-300):
                raise ConfigurationError(
                    f"D = {self.D:g} is inconsistent with 2 m gamma k_B T = {expected:g}",
                    block="environment", field="D_p2_per_time",
                )

    @classmethod
    def thermal(cls, gamma, T, mass=1.0, boltzmann=1.0):
        return cls(D=2.0 * mass * gamma * boltzmann * T, gamma=gamma, T=T, mass=mass, boltzmann=boltzmann)

    @property
    def is_isolated(self):
        return self.D == 0.0 and self.gamma == 0.0


@dataclass(frozen=True)
class EvolutionSpec:
    """
    How to evolve: bracket, step size, step count and recording cadence.

    :param bracket: poisson, moyal or moyal_truncated
    :param n_max: highest correction order kept by moyal_truncated
    :param snapshot_every: keep a copy of the field every this many steps (0 disables)
    :param correction_ratio: record first_correction_ratio at every record point
    :param fringe_separation: record fringe_contrast for a cat of this separation
    """
    bracket: str = "moyal"
    dt: float = 0.01
    n_steps: int = 1
    record_every: int = 1
    n_max: int = 1
    environment: Optional[EnvironmentModel] = None
    snapshot_every: int = 0
    correction_ratio: bool = False
    fringe_separation: Optional[float] = None

    def __post_init__(self):
        if self.bracket not in BRACKETS:
            raise ConfigurationError(f"unknown bracket '{self.bracket}'", block="evolution", field="bracket")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive", block="evolution", field="dt_time")
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be at least 1", block="evolution", field="n_steps")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be at least 1", block="evolution", field="record_every")
        if self.bracket == "moyal_truncated" and self.n_max < 1:
            raise ConfigurationError("n_max must be at least 1", block="evolution", field="n_max")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be non-negative", block="outputs", field="snapshot_every")

    @property
    def duration(self):
        return self.dt * self.n_steps

    def max_stable_dt(self, model):
        """0.1 * min(1/lambda_ref, 2 pi/omega_ref); inf when the model has no reference rate."""
        rate, frequency = model.reference_rates()
        bounds = []
        if rate:
            bounds.append(1.0 / rate)
        if frequency:
            bounds.append(2.0 * np.pi / frequency)
        return STABILITY_FACTOR * min(bounds) if bounds else math.inf

    def validate_stability(self, model):
        bound = self.max_stable_dt(model)
        if self.dt > bound:
            raise ConfigurationError(
                f"dt = {self.dt:g} exceeds the stability bound {bound:g} for the {model.kind} potential",
                block="evolution", field="dt_time",
            )
        return self


def kinetic_factor(grid, dt):
    """Phase exp(-i k p dt / m) on the (k, p) half spectrum."""
    return np.exp(-1j * np.outer(grid.k_half, grid.p) * dt / grid.mass)


def potential_phase(grid, model, bracket, t, dt, n_max=1):
    """
    Phase of the potential propagator on (x, s), s >= 0.

    moyal uses the full difference V(x + hbar s/2) - V(x - hbar s/2),
    poisson its linearization hbar s V'(x) and moyal_truncated the odd
    Taylor series through order 2 n_max + 1 in s.
    """
    x = grid.x[:, None]
    s = grid.s_half[None, :]
    hbar = grid.hbar
    if bracket == "moyal":
        return (dt / hbar) * model.odd_difference(x, 0.5 * hbar * s, t)
    if bracket == "poisson":
        return dt * s * model.derivative(x, t, 1)
    if bracket == "moyal_truncated":
        half = 0.5 * hbar * s
        series = np.zeros((grid.nx, len(grid.s_half)))
        for n in range(n_max + 1):
            order = 2 * n + 1
            series = series + model.derivative(x, t, order) * half ** (2 * n) / math.factorial(order)
        return dt * s * series
    raise ConfigurationError(f"unknown bracket '{bracket}'", block="evolution", field="bracket")


def potential_factor(grid, model, bracket, t, dt, n_max=1):
    return np.exp(1j * potential_phase(grid, model, bracket, t, dt, n_max))


def diffusion_factor(grid, D, dt):
    return np.exp(-D * grid.s_half ** 2 * dt)


def friction_matrix(grid, gamma, dt):
    """
    Band-limited interpolation matrix for W(x, p) -> e^c W(x, p e^c), c = 2 gamma dt.

    Applied as e^c * Re(fft_p(W) @ E) / n_p.
    """
    stretched = grid.p * math.exp(2.0 * gamma * dt)
    return np.exp(1j * np.outer(grid.s, stretched - grid.p_min))


def _along_x(values, factor, nx, workers):
    spectrum = sp_fft.rfft(values, axis=0, workers=workers)
    return sp_fft.irfft(spectrum * factor, n=nx, axis=0, workers=workers)


def _along_p(values, factor, n_p, workers):
    spectrum = sp_fft.rfft(values, axis=1, workers=workers)
    return sp_fft.irfft(spectrum * factor, n=n_p, axis=1, workers=workers)


def _band_edge_fraction(values, workers):
    power = np.abs(sp_fft.rfft(values, axis=1, workers=workers)) ** 2
    edge = power.shape[1] - max(1, power.shape[1] // 8)
    total = float(power.sum())
    return float(power[:, edge:].sum()) / total if total > 0 else 0.0


def _apply_friction(values, matrix, gamma, dt, grid, workers):
    spectrum = sp_fft.fft(values, axis=1, workers=workers)
    out = math.exp(2.0 * gamma * dt) * (spectrum @ matrix).real / grid.n_p
    fraction = _band_edge_fraction(out, workers)
    if fraction > BAND_EDGE_TOLERANCE:
        raise ResolutionError(
            f"friction pushed {fraction:.2e} of the spectral energy to the edge of the momentum band; refine dp"
        )
    return out


def step_kinetic(field, dt):
    """
    Exact free flow x -> x + p dt / m.

    :param field: WignerField
    :param dt: time step (0 is the identity)
    :return: new WignerField at the same time stamp
    """
    if dt == 0:
        return field.copy()
    grid = field.grid
    values = _along_x(field.values, kinetic_factor(grid, dt), grid.nx, fft_workers())
    return field.with_values(values)


def step_potential(field, model, bracket, t, dt, n_max=1):
    """
    Potential flow over [t, t + dt] with the drive frozen at the midpoint.

    :param bracket: poisson, moyal or moyal_truncated
    :param n_max: order of the truncated series
    """
    if dt == 0:
        return field.copy()
    grid = field.grid
    factor = potential_factor(grid, model, bracket, t + 0.5 * dt, dt, n_max)
    return field.with_values(_along_p(field.values, factor, grid.n_p, fft_workers()))


def step_decoherence(field, D, dt):
    """Exact momentum diffusion: multiplies the (x, s) representation by exp(-D s^2 dt)."""
    if D == 0 or dt == 0:
        return field.copy()
    grid = field.grid
    return field.with_values(_along_p(field.values, diffusion_factor(grid, D, dt), grid.n_p, fft_workers()))


def step_friction(field, gamma, dt):
    """Exact relaxation flow W(x, p) -> e^c W(x, p e^c) with c = 2 gamma dt."""
    if gamma == 0 or dt == 0:
        return field.copy()
    grid = field.grid
    matrix = friction_matrix(grid, gamma, dt)
    return field.with_values(_apply_friction(field.values, matrix, gamma, dt, grid, fft_workers()))


def edge_fraction(values):
    """Share of the absolute weight of a field sitting in the outer band of either axis."""
    weight = np.abs(values)
    total = float(weight.sum())
    if total == 0.0:
        return 0.0
    bx = max(1, weight.shape[0] // EDGE_BAND)
    bp = max(1, weight.shape[1] // EDGE_BAND)
    inner = float(weight[bx:-bx, bp:-bp].sum())
    return (total - inner) / total


def _spectral_derivative(values, grid, order, workers):
    multiplier = (1j * grid.s_half) ** order
    if grid.n_p % 2 == 0 and order % 2 == 1:
        multiplier[-1] = 0.0
    return _along_p(values, multiplier, grid.n_p, workers)


def first_correction_ratio(field, model, t=None):
    """
    Size of the leading Moyal correction relative to the Liouville term.

    Returns ||(hbar^2/24) V''' d^3W/dp^3|| / ||V' dW/dp|| with spectral
    momentum derivatives and L2 norms over the grid.

    :param field: WignerField
    :param model: PotentialModel
    :param t: time for the drive term (defaults to field.time)
    :return: dimensionless ratio
    """
    grid = field.grid
    t = field.time if t is None else t
    workers = fft_workers()
    x = grid.x[:, None]
    liouville = model.derivative(x, t, 1) * _spectral_derivative(field.values, grid, 1, workers)
    denominator = float(np.sqrt(np.sum(liouville ** 2)))
    if denominator < 1e-300:
        raise UndefinedRatioError("the Liouville term vanishes on the grid")
    third = model.derivative(x, t, 3)
    if not np.any(third):
        return 0.0
    correction = (grid.hbar ** 2 / 24.0) * third * _spectral_derivative(field.values, grid, 3, workers)
    return float(np.sqrt(np.sum(correction ** 2))) / denominator


class SplitOperatorPropagator:
    """
    Strang splitting: half kinetic, potential with diffusion, half kinetic.

    With friction the middle stage is itself split symmetrically: half
    potential with diffusion, friction, half potential with diffusion.
    Kernels that do not depend on time are built once.
    """

    def __init__(self, grid, model, spec):
        self.grid = grid
        self.model = model
        self.spec = spec
        self.environment = spec.environment or EnvironmentModel(mass=grid.mass)
        self._workers = fft_workers()
        self._half_kinetic = kinetic_factor(grid, 0.5 * spec.dt)
        self._friction = None
        if self.environment.gamma > 0:
            self._friction = friction_matrix(grid, self.environment.gamma, spec.dt)
        # the potential stage spans dt, or dt/2 on each side of the friction stage
        self._stage = spec.dt if self._friction is None else 0.5 * spec.dt
        self._diffusion = diffusion_factor(grid, self.environment.D, self._stage)[None, :]
        self._potential = None
        if not model.is_time_dependent:
            self._potential = self._potential_factor(0.0)
        logger.debug(
            "propagator %s bracket=%s dt=%g D=%g gamma=%g",
            model.kind, spec.bracket, spec.dt, self.environment.D, self.environment.gamma,
        )

    def _potential_factor(self, start):
        """Potential and diffusion over one stage beginning at `start`, drive at the stage midpoint."""
        spec = self.spec
        factor = potential_factor(self.grid, self.model, spec.bracket, start + 0.5 * self._stage, self._stage, spec.n_max)
        return factor * self._diffusion

    def _potential_stage(self, values, start):
        factor = self._potential if self._potential is not None else self._potential_factor(start)
        return _along_p(values, factor, self.grid.n_p, self._workers)

    def advance(self, values, t):
        """One full step of raw field values starting at time t."""
        grid, spec = self.grid, self.spec
        values = _along_x(values, self._half_kinetic, grid.nx, self._workers)
        values = self._potential_stage(values, t)
        if self._friction is not None:
            values = _apply_friction(values, self._friction, self.environment.gamma, spec.dt, grid, self._workers)
            values = self._potential_stage(values, t + self._stage)
        return _along_x(values, self._half_kinetic, grid.nx, self._workers)

    def iterate(self, field, n_steps=None):
        """
        Yield (step, field) for step = 0 .. n_steps, starting with the input field.

        :raises NumericalAbort: on NaN/Inf or norm drift beyond 1e-6
        :raises ResolutionError: once weight reaches the periodic boundary
        """
        n_steps = self.spec.n_steps if n_steps is None else n_steps
        dt = self.spec.dt
        start = field.time
        initial_norm = field.norm()
        values = field.values
        yield 0, field
        for step in range(1, n_steps + 1):
            values = self.advance(values, start + (step - 1) * dt)
            if not np.all(np.isfinite(values)):
                raise NumericalAbort("field contains NaN or Inf", step=step)
            norm = float(values.sum() * self.grid.cell_area)
            if abs(norm - initial_norm) > NORM_DRIFT_TOLERANCE * abs(initial_norm):
                raise NumericalAbort(f"norm drifted from {initial_norm:.12f} to {norm:.12f}", step=step)
            edge = edge_fraction(values)
            if edge > EDGE_MASS_TOLERANCE:
                raise ResolutionError(
                    f"step {step} (t={start + step * dt:g}): {edge:.2e} of |W| reached the periodic boundary; "
                    "widen the domain or shorten the run"
                )
            yield step, WignerField(self.grid, values, start + step * dt)


@dataclass
class EvolutionResult:
    record: TrajectoryRecord
    field: WignerField
    snapshots: list = dataclass_field(default_factory=list)

    @property
    def times(self):
        return self.record.times


def correction_ratio_or_zero(field, model):
    """first_correction_ratio with quadratic potentials mapped to 0 and undefined ratios to NaN."""
    if model.is_quadratic:
        return 0.0
    try:
        return first_correction_ratio(field, model)
    except UndefinedRatioError:
        return float("nan")


def is_record_step(spec, step):
    return step % spec.record_every == 0 or step == spec.n_steps


def record_row(field, model, spec, fringe_reference=None):
    row = observe(field, model, spec.fringe_separation, fringe_reference)
    if spec.correction_ratio:
        row["correction_ratio"] = correction_ratio_or_zero(field, model)
    return row


def evolve(field, model, spec, observers=(), propagator=None):
    """
    Evolve a field and record diagnostics.

    :param field: initial WignerField
    :param model: PotentialModel
    :param spec: EvolutionSpec
    :param observers: callables observer(field, step) invoked at every record point
    :param propagator: optional prebuilt SplitOperatorPropagator
    :return: EvolutionResult(record, final field, snapshots)
    """
    propagator = propagator or SplitOperatorPropagator(field.grid, model, spec)
    reference = fringe_amplitude(field, spec.fringe_separation) if spec.fringe_separation else None
    rows, snapshots = [], []
    current = field
    for step, current in propagator.iterate(field):
        if is_record_step(spec, step):
            rows.append(record_row(current, model, spec, reference))
            for observer in observers:
                observer(current, step)
        if spec.snapshot_every and step % spec.snapshot_every == 0:
            snapshots.append(current)
    record = TrajectoryRecord.from_rows(rows)
    logger.info(
        "evolved %s/%s for %d steps to t=%g (purity %.6f)",
        model.kind, spec.bracket, spec.n_steps, current.time, rows[-1]["purity"],
    )
    return EvolutionResult(record=record, field=current, snapshots=snapshots)
