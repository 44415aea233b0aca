import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import constants
from scipy.integrate import solve_ivp

from phase_space_core import (
    AlreadyQuantumError,
    ConfigurationError,
    ContractError,
    UnphysicalStateError,
    UnsupportedModelError,
    moments,
)

logger = logging.getLogger(__name__)

ORACLE_RTOL = 1e-10
ORACLE_ATOL = 1e-14
PHYSICALITY_TOLERANCE = 1e-9
SCATTER_LIMIT = 0.5

HBAR_SI = constants.hbar
BOLTZMANN_SI = constants.k
DAY = constants.day
YEAR = constants.year

QUOTED_LOG_ACTION = 100.0
QUOTED_T_R_YEARS = 20.0


def _require_positive(**values):
    for name, value in values.items():
        if value is None or not value > 0:
            raise ContractError(f"{name} must be positive (got {value})")


def t_hbar_chaotic(lam, chi, sigma_p, hbar):
    """
    Correspondence breakdown time (1/lambda) ln(chi sigma_p / hbar).

    :raises AlreadyQuantumError: when chi * sigma_p <= hbar
    """
    _require_positive(lam=lam, chi=chi, sigma_p=sigma_p, hbar=hbar)
    ratio = chi * sigma_p / hbar
    if ratio <= 1.0:
        raise AlreadyQuantumError(f"chi*sigma_p/hbar = {ratio:g} leaves no classical epoch")
    return math.log(ratio) / lam


def t_r(lam, action, hbar):
    """
    Time (1/lambda) ln(A0 / hbar) for a macroscopic action A0.

    lambda = 0 returns inf.
    """
    _require_positive(action=action, hbar=hbar)
    if lam < 0:
        raise ContractError(f"lambda must be non-negative (got {lam})")
    ratio = action / hbar
    if ratio < 1.0:
        raise AlreadyQuantumError(f"A0/hbar = {ratio:g} is below one")
    if lam == 0:
        return math.inf
    return math.log(ratio) / lam


def t_hbar_integrable(omega, action, hbar, alpha):
    """Power-law breakdown time (1/Omega)(A0/hbar)^alpha of regular systems."""
    _require_positive(omega=omega, action=action, hbar=hbar, alpha=alpha)
    return (action / hbar) ** alpha / omega


@dataclass
class DecoherenceTime:
    """
    Fringe decay time hbar^2 / (D dx^2) and the thermal forms.

    thermal is tau_R (lambda_dB / dx)^2 with tau_R = 1/gamma; printed is the
    gamma^-1 hbar^2 / (D dx^2) form. consistent compares thermal with time.
    """
    time: float
    thermal: Optional[float] = None
    printed: Optional[float] = None
    relaxation_time: Optional[float] = None
    de_broglie: Optional[float] = None
    ratio: Optional[float] = None
    consistent: Optional[bool] = None
    printed_consistent: Optional[bool] = None


def de_broglie_wavelength(hbar, mass, temperature, boltzmann=1.0):
    """Thermal de Broglie wavelength sqrt(hbar^2 / (2 m k_B T))."""
    _require_positive(hbar=hbar, mass=mass, temperature=temperature, boltzmann=boltzmann)
    return hbar / math.sqrt(2.0 * mass * boltzmann * temperature)


def decoherence_time(D, separation, hbar, gamma=None, mass=None, T=None, boltzmann=1.0):
    """
    Decoherence time of a superposition of two packets a distance `separation` apart.

    :param D: momentum diffusion coefficient
    :param gamma: relaxation rate; with mass and T enables the thermal forms
    :param boltzmann: k_B in the unit system of the inputs (1 for natural units)
    :return: DecoherenceTime
    """
    _require_positive(D=D, separation=separation, hbar=hbar)
    result = DecoherenceTime(time=hbar ** 2 / (D * separation ** 2))
    if gamma is None or mass is None or T is None:
        return result
    _require_positive(gamma=gamma, mass=mass, T=T)
    wavelength = de_broglie_wavelength(hbar, mass, T, boltzmann)
    result.relaxation_time = 1.0 / gamma
    result.de_broglie = wavelength
    result.ratio = (wavelength / separation) ** 2
    result.thermal = result.relaxation_time * result.ratio
    result.printed = result.time / gamma
    result.consistent = math.isclose(result.thermal, result.time, rel_tol=1e-9)
    result.printed_consistent = math.isclose(result.printed, result.thermal, rel_tol=1e-9)
    if not result.consistent:
        logger.warning(
            "D = %g differs from 2 m gamma k_B T; thermal form %g vs fringe decay %g",
            D, result.thermal, result.time,
        )
    return result


def sigma_c(D, lam):
    """Critical dispersion sqrt(2 D / lambda) along a contracting direction."""
    _require_positive(lam=lam)
    if D < 0:
        raise ContractError(f"D must be non-negative (got {D})")
    return math.sqrt(2.0 * D / lam)


def coherence_length(D, lam, hbar):
    width = sigma_c(D, lam)
    return math.inf if width == 0 else hbar / width


@dataclass
class EquilibrationTime:
    rate_form: float
    lyapunov_form: float


def t_eq(H_eq, H0, Hdot, lam=None):
    """
    Both equilibration-time forms: (H_eq/H0)/Hdot and (H_eq/H0)/lambda.

    lam defaults to Hdot, where the two coincide.
    """
    _require_positive(H_eq=H_eq, H0=H0, Hdot=Hdot)
    lam = Hdot if lam is None else lam
    _require_positive(lam=lam)
    ratio = H_eq / H0
    return EquilibrationTime(rate_form=ratio / Hdot, lyapunov_form=ratio / lam)


def entropy_rate_profile(lam, sigma_p0, sigma_c_value, t):
    """
    Closed-form entropy production rate lambda / (1 + (sigma_p(0)^2/sigma_c^2 - 1) exp(-2 lambda t)).

    Widths follow the half-width convention of sigma_c.
    """
    _require_positive(lam=lam, sigma_p0=sigma_p0, sigma_c=sigma_c_value)
    t = np.asarray(t, dtype=float)
    excess = sigma_p0 ** 2 / sigma_c_value ** 2 - 1.0
    return lam / (1.0 + excess * np.exp(-2.0 * lam * t))


def entropy_profile(lam, sigma_p0, sigma_c_value, t, H0=0.0):
    """Time integral of entropy_rate_profile starting from H0 at t = 0."""
    _require_positive(lam=lam, sigma_p0=sigma_p0, sigma_c=sigma_c_value)
    t = np.asarray(t, dtype=float)
    ratio = sigma_p0 ** 2 / sigma_c_value ** 2
    return H0 + lam * t + 0.5 * np.log1p((ratio - 1.0) * np.exp(-2.0 * lam * t)) - 0.5 * math.log(ratio)


@dataclass
class CorrespondenceRegime:
    label: str
    ratio: float
    coherence_length: float


def correspondence_regime(chi, sigma_c_value, hbar, margin=10.0):
    """
    Classify a run by chi * sigma_c / hbar (equivalently chi / coherence length).

    classical when the ratio is >= margin, quantum when <= 1/margin, crossover between.
    """
    _require_positive(hbar=hbar, margin=margin)
    length = math.inf if sigma_c_value == 0 else hbar / sigma_c_value
    ratio = chi * sigma_c_value / hbar if math.isfinite(chi) else math.inf
    if ratio >= margin:
        label = "classical"
    elif ratio <= 1.0 / margin:
        label = "quantum"
    else:
        label = "crossover"
    return CorrespondenceRegime(label=label, ratio=ratio, coherence_length=length)


@dataclass
class GaussianState:
    """Mean (x, p) and 2x2 covariance of a Gaussian Wigner function."""
    mean: tuple
    covariance: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        self.mean = (float(self.mean[0]), float(self.mean[1]))
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(2, 2)
        if not np.allclose(self.covariance, self.covariance.T):
            raise UnphysicalStateError("covariance must be symmetric")
        if np.linalg.eigvalsh(self.covariance)[0] <= 0:
            raise UnphysicalStateError("covariance must be positive definite")
        floor = (0.5 * self.hbar) ** 2
        if self.determinant < floor * (1.0 - PHYSICALITY_TOLERANCE):
            raise UnphysicalStateError(f"det covariance {self.determinant:g} is below (hbar/2)^2 = {floor:g}")

    @classmethod
    def from_widths(cls, x0=0.0, p0=0.0, sigma_x=1.0, sigma_p=None, correlation=0.0, hbar=1.0):
        sigma_p = hbar / (2.0 * sigma_x) if sigma_p is None else sigma_p
        return cls((x0, p0), [[sigma_x ** 2, correlation], [correlation, sigma_p ** 2]], hbar)

    @classmethod
    def from_field(cls, field):
        m = moments(field)
        return cls((m["mean_x"], m["mean_p"]), m["covariance"], field.grid.hbar)

    @property
    def determinant(self):
        return float(np.linalg.det(self.covariance))

    @property
    def linear_entropy(self):
        return math.log(2.0 * math.sqrt(self.determinant) / self.hbar)


def _stiffness(model):
    if model.kind == "harmonic":
        return model.mass * model.omega ** 2
    if model.kind == "inverted":
        return -model.mass * model.lambda0 ** 2
    if model.kind == "free":
        return 0.0
    raise UnsupportedModelError(f"the covariance oracle needs a quadratic potential, got {model.kind}")


@dataclass
class OracleTrajectory:
    """Exact Gaussian moments over time; frame columns mirror TrajectoryRecord where they overlap."""
    frame: pd.DataFrame
    hbar: float

    @property
    def times(self):
        return self.frame["time"].to_numpy()

    def state(self, index):
        row = self.frame.iloc[index]
        covariance = [[row["var_x"], row["cov_xp"]], [row["cov_xp"], row["var_p"]]]
        return GaussianState((row["mean_x"], row["mean_p"]), covariance, self.hbar)


def gaussian_oracle(model, environment, initial, t, samples=401):
    """
    Integrate the exact mean and covariance equations of a quadratic potential.

    dS/dt = A S + S A^T + diag(0, 2D) with A = [[0, 1/m], [-k, -2 gamma]],
    k = m w^2 (harmonic), -m l0^2 (inverted) or 0 (free).

    :param model: quadratic PotentialModel
    :param environment: EnvironmentModel (or None for isolated)
    :param initial: GaussianState at t = 0
    :param t: end time, or an increasing array of output times starting at 0
    :param samples: number of output times when t is a scalar
    :return: OracleTrajectory
    """
    stiffness = _stiffness(model)
    mass = model.mass
    D = environment.D if environment is not None else 0.0
    gamma = environment.gamma if environment is not None else 0.0
    times = np.linspace(0.0, float(t), samples) if np.ndim(t) == 0 else np.asarray(t, dtype=float)
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ContractError("oracle times must be non-negative and increasing")

    flow = np.array([[0.0, 1.0 / mass], [-stiffness, -2.0 * gamma]])
    injection = np.array([[0.0, 0.0], [0.0, 2.0 * D]])

    def rhs(_, y):
        mean = y[:2]
        sigma = y[2:].reshape(2, 2)
        return np.concatenate([flow @ mean, (flow @ sigma + sigma @ flow.T + injection).ravel()])

    y0 = np.concatenate([np.asarray(initial.mean), initial.covariance.ravel()])
    solution = solve_ivp(
        rhs, (0.0, float(times[-1])), y0, method="DOP853", t_eval=times,
        rtol=ORACLE_RTOL, atol=ORACLE_ATOL,
    )
    if not solution.success:
        raise ContractError(f"oracle integration failed: {solution.message}")

    mean_x, mean_p = solution.y[0], solution.y[1]
    var_x, cov_xp, var_p = solution.y[2], solution.y[3], solution.y[5]
    det = var_x * var_p - cov_xp ** 2
    # dH/dt = tr(S^-1 dS/dt) / 2
    dvar_x = 2.0 * cov_xp / mass
    dcov = var_p / mass - stiffness * var_x - 2.0 * gamma * cov_xp
    dvar_p = -2.0 * stiffness * cov_xp - 4.0 * gamma * var_p + 2.0 * D
    hdot = 0.5 * (var_p * dvar_x - 2.0 * cov_xp * dcov + var_x * dvar_p) / det

    trace = var_x + var_p
    min_eig = 0.5 * (trace - np.sqrt((var_x - var_p) ** 2 + 4.0 * cov_xp ** 2))
    if model.kind == "inverted":
        # stable coordinate zeta = p - m l0 x
        a = mass * model.lambda0
        width2 = 2.0 * (var_p - 2.0 * a * cov_xp + a ** 2 * var_x)
    else:
        width2 = 2.0 * min_eig

    frame = pd.DataFrame({
        "time": times,
        "mean_x": mean_x, "mean_p": mean_p,
        "var_x": var_x, "cov_xp": cov_xp, "var_p": var_p,
        "mean_x2": var_x + mean_x ** 2, "mean_p2": var_p + mean_p ** 2, "mean_xp": cov_xp + mean_x * mean_p,
        "linear_entropy": np.log(2.0 * np.sqrt(det) / initial.hbar),
        "hdot": hdot,
        "cov_min_eig": min_eig,
        "contracting_width2": width2,
    })
    return OracleTrajectory(frame=frame, hbar=initial.hbar)


@dataclass
class LyapunovEstimate:
    rate: float
    stderr: float
    low_confidence: bool
    segment_rates: np.ndarray
    scatter: float


def classical_lyapunov(model, initial, duration, segment=1.0, warmup=2, blocks=5, max_step=np.inf, t0=0.0):
    """
    Largest Lyapunov exponent from the tangent map with periodic renormalization.

    :param model: PotentialModel
    :param initial: (x0, p0)
    :param duration: averaging time after the warm-up segments
    :param segment: renormalization interval
    :param warmup: leading segments discarded while the tangent vector aligns
    :param blocks: number of blocks for the scatter test
    :param max_step: integrator step ceiling
    :return: LyapunovEstimate; low_confidence is set when block averages scatter by more than 50%
    """
    _require_positive(duration=duration, segment=segment)
    mass = model.mass
    n_segments = max(int(round(duration / segment)), blocks)

    def rhs(t, y):
        x, p, dx, dp = y
        return [
            p / mass,
            -float(model.derivative(x, t, 1)),
            dp / mass,
            -float(model.curvature(x, t)) * dx,
        ]

    state = np.array([initial[0], initial[1], 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)])
    t = t0
    stretches = []
    for index in range(warmup + n_segments):
        solution = solve_ivp(
            rhs, (t, t + segment), state, method="DOP853",
            rtol=ORACLE_RTOL, atol=1e-12, max_step=max_step,
        )
        if not solution.success:
            raise ContractError(f"tangent-map integration failed: {solution.message}")
        state = solution.y[:, -1].copy()
        length = math.hypot(state[2], state[3])
        state[2:] /= length
        t += segment
        if index >= warmup:
            stretches.append(math.log(length))

    rates = np.asarray(stretches) / segment
    rate = float(rates.mean())
    stderr = float(rates.std(ddof=1) / math.sqrt(len(rates)))
    block_means = np.array([chunk.mean() for chunk in np.array_split(rates, blocks)])
    scatter = float(block_means.std(ddof=1) / abs(rate)) if rate != 0 else math.inf
    low_confidence = scatter > SCATTER_LIMIT
    logger.info("lyapunov %s: %.6g +- %.2g (block scatter %.2f)", model.kind, rate, stderr, scatter)
    return LyapunovEstimate(rate=rate, stderr=stderr, low_confidence=low_confidence, segment_rates=rates, scatter=scatter)


@dataclass
class MacroScenario:
    """
    Macroscopic body for the closed-form estimates, SI units.

    action defaults to the orbital kinetic energy times the period.
    """
    name: str
    mass: Optional[float] = None
    velocity: Optional[float] = None
    period: Optional[float] = None
    lyapunov_rate: Optional[float] = None
    temperature: Optional[float] = None
    separation: Optional[float] = None
    gamma: Optional[float] = None
    action: Optional[float] = None
    hbar: float = HBAR_SI

    def __post_init__(self):
        for name in ("mass", "velocity", "period", "temperature", "separation", "gamma", "action"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigurationError(f"{name} must be positive", block="scenario", field=name)
        if self.lyapunov_rate is not None and self.lyapunov_rate < 0:
            raise ConfigurationError("lyapunov rate must be non-negative", block="scenario", field="lyapunov_rate")
        if self.action is None and None not in (self.mass, self.velocity, self.period):
            self.action = 0.5 * self.mass * self.velocity ** 2 * self.period
        if self.action is not None and self.action / self.hbar < 1e3:
            logger.warning("%s: A0/hbar = %g is not macroscopic", self.name, self.action / self.hbar)


@dataclass
class HyperionReport:
    name: str
    action: float
    log_action_ratio: float
    lyapunov_time_days: float
    t_r_seconds: float
    t_r_years: float
    quoted_log_action: float
    quoted_t_r_years: float
    ratio_to_quoted: float
    within_factor_3: bool
    integrable_years: Optional[float] = None
    alpha: Optional[float] = None
    de_broglie: Optional[float] = None
    decoherence_ratio: Optional[float] = None

    def to_frame(self):
        rows = [
            ("A0 [J s]", self.action),
            ("ln(A0/hbar)", self.log_action_ratio),
            ("ln(A0/hbar) quoted", self.quoted_log_action),
            ("1/lambda [days]", self.lyapunov_time_days),
            ("t_r [s]", self.t_r_seconds),
            ("t_r [yr]", self.t_r_years),
            ("t_r quoted [yr]", self.quoted_t_r_years),
            ("t_r / quoted", self.ratio_to_quoted),
            ("within factor 3", self.within_factor_3),
        ]
        if self.integrable_years is not None:
            rows.append((f"t_hbar integrable alpha={self.alpha:g} [yr]", self.integrable_years))
        if self.de_broglie is not None:
            rows.append(("lambda_dB [m]", self.de_broglie))
            rows.append(("tau_D / tau_R", self.decoherence_ratio))
        return pd.DataFrame(rows, columns=["quantity", "value"])


def hyperion_report(scenario, alpha=0.5, quoted_log_action=QUOTED_LOG_ACTION, quoted_t_r_years=QUOTED_T_R_YEARS):
    """
    Quantum-classical correspondence estimate for a chaotically tumbling moon.

    :param scenario: MacroScenario with mass, velocity, period and lyapunov_rate
    :param alpha: exponent of the integrable estimate used for comparison
    :return: HyperionReport
    """
    for name in ("mass", "velocity", "period", "lyapunov_rate"):
        if getattr(scenario, name) is None:
            raise ConfigurationError(f"{name} is required", block="scenario", field=name)

    action = scenario.action
    log_ratio = math.log(action / scenario.hbar)
    seconds = t_r(scenario.lyapunov_rate, action, scenario.hbar)
    years = seconds / YEAR
    report = HyperionReport(
        name=scenario.name,
        action=action,
        log_action_ratio=log_ratio,
        lyapunov_time_days=(1.0 / scenario.lyapunov_rate / DAY) if scenario.lyapunov_rate > 0 else math.inf,
        t_r_seconds=seconds,
        t_r_years=years,
        quoted_log_action=quoted_log_action,
        quoted_t_r_years=quoted_t_r_years,
        ratio_to_quoted=years / quoted_t_r_years,
        within_factor_3=(quoted_t_r_years / 3.0 <= years <= 3.0 * quoted_t_r_years),
    )
    if alpha is not None:
        omega = 2.0 * math.pi / scenario.period
        report.alpha = alpha
        report.integrable_years = t_hbar_integrable(omega, action, scenario.hbar, alpha) / YEAR
    if scenario.temperature is not None and scenario.separation is not None:
        report.de_broglie = de_broglie_wavelength(scenario.hbar, scenario.mass, scenario.temperature, BOLTZMANN_SI)
        report.decoherence_ratio = (report.de_broglie / scenario.separation) ** 2
    logger.info("%s: ln(A0/hbar) = %.1f, t_r = %.1f yr", scenario.name, log_ratio, years)
    return report
