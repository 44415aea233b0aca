import math
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from phase_space_core.errors import ConfigurationError

logger = logging.getLogger(__name__)

KINDS = ("free", "harmonic", "inverted", "quartic_double_well", "driven_double_well")
ALIASES = {"double_well": "quartic_double_well", "driven": "driven_double_well"}
QUADRATIC_KINDS = ("free", "harmonic", "inverted")


@dataclass(frozen=True)
class PotentialModel:
    """
    Analytic (polynomial) potential family.

    harmonic:            V = m w^2 x^2 / 2
    inverted:            V = -m l0^2 x^2 / 2
    quartic_double_well: V = -a x^2 / 2 + b x^4 / 4
    driven_double_well:  the double well plus x * F cos(w_d t)
    free:                V = 0
    """
    kind: str
    omega: float = 0.0
    lambda0: float = 0.0
    a: float = 0.0
    b: float = 0.0
    drive_amplitude: float = 0.0
    drive_frequency: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ConfigurationError(f"unknown potential kind '{kind}'", block="potential", field="kind")
        if not self.mass > 0:
            raise ConfigurationError("mass must be positive", block="grid", field="mass")
        if kind == "harmonic" and not self.omega > 0:
            raise ConfigurationError("omega must be positive", block="potential", field="omega")
        if kind == "inverted" and not self.lambda0 > 0:
            raise ConfigurationError("lambda0 must be positive", block="potential", field="lambda0")
        if kind in ("quartic_double_well", "driven_double_well"):
            if not self.a > 0:
                raise ConfigurationError("a must be positive", block="potential", field="a")
            if not self.b > 0:
                raise ConfigurationError("b must be positive", block="potential", field="b")
        if kind == "driven_double_well":
            if self.drive_amplitude < 0:
                raise ConfigurationError("drive amplitude must be non-negative", block="potential", field="drive_amplitude")
            if not self.drive_frequency > 0:
                raise ConfigurationError("drive frequency must be positive", block="potential", field="drive_frequency")

    @property
    def is_quadratic(self):
        return self.kind in QUADRATIC_KINDS

    @property
    def is_time_dependent(self):
        return self.kind == "driven_double_well" and self.drive_amplitude != 0.0

    @cached_property
    def static_polynomial(self):
        if self.kind == "harmonic":
            return Polynomial([0.0, 0.0, 0.5 * self.mass * self.omega ** 2])
        if self.kind == "inverted":
            return Polynomial([0.0, 0.0, -0.5 * self.mass * self.lambda0 ** 2])
        if self.kind in ("quartic_double_well", "driven_double_well"):
            return Polynomial([0.0, 0.0, -0.5 * self.a, 0.0, 0.25 * self.b])
        return Polynomial([0.0])

    def polynomial(self, t=0.0):
        """V as a polynomial in x at time t (the drive enters as a dipole term)."""
        if self.kind != "driven_double_well":
            return self.static_polynomial
        return self.static_polynomial + Polynomial([0.0, self.drive_amplitude * math.cos(self.drive_frequency * t)])

    def potential(self, x, t=0.0):
        return self.polynomial(t)(x)

    def derivative(self, x, t=0.0, order=1):
        """order-th x-derivative of V at (x, t); exact for every order."""
        poly = self.polynomial(t)
        if order == 0:
            return poly(x)
        return poly.deriv(order)(x)

    def curvature(self, x, t=0.0):
        return self.derivative(x, t, 2)

    def force(self, x, t=0.0):
        return -self.derivative(x, t, 1)

    def odd_difference(self, x, shift, t=0.0):
        """V(x + shift) - V(x - shift), the nonperturbative Moyal kernel."""
        poly = self.polynomial(t)
        return poly(x + shift) - poly(x - shift)

    def reference_rates(self):
        """
        Reference instability rate and oscillation frequency for the dt bound.

        :return: (lambda_ref or None, omega_ref or None)
        """
        if self.kind == "harmonic":
            return None, self.omega
        if self.kind == "inverted":
            return self.lambda0, None
        if self.kind in ("quartic_double_well", "driven_double_well"):
            barrier_rate = math.sqrt(self.a / self.mass)
            well_frequency = math.sqrt(2.0 * self.a / self.mass)
            if self.kind == "driven_double_well":
                well_frequency = max(well_frequency, self.drive_frequency)
            return barrier_rate, well_frequency
        return None, None


def evaluate(model, x, t=0.0):
    """
    Potential and the derivatives entering the Moyal series.

    :param model: PotentialModel
    :param x: position (scalar or array)
    :param t: time
    :return: (V, V', V''')
    """
    return model.potential(x, t), model.derivative(x, t, 1), model.derivative(x, t, 3)


def nonlinearity_scale(model, x_range, t=0.0, samples=2001):
    """
    Median of sqrt|V'/V'''| over the explored range; inf when V''' vanishes there.

    :param model: PotentialModel
    :param x_range: (x_lo, x_hi)
    :param t: time at which the drive term is evaluated
    :param samples: number of sample points across the range
    :return: chi (length)
    """
    if model.is_quadratic:
        return math.inf
    lo, hi = float(x_range[0]), float(x_range[1])
    xs = np.linspace(min(lo, hi), max(lo, hi), samples)
    v1 = model.derivative(xs, t, 1)
    v3 = model.derivative(xs, t, 3)
    mask = np.abs(v3) > 0
    if not np.any(mask):
        return math.inf
    return float(np.median(np.sqrt(np.abs(v1[mask] / v3[mask]))))


def explored_range(x_density, x, lower=5.0, upper=95.0):
    """
    Percentile range of a position density.

    :param x_density: density sampled on x
    :param x: position axis
    :return: (x at the lower percentile, x at the upper percentile)
    """
    weights = np.clip(np.asarray(x_density, dtype=float), 0.0, None)
    cdf = np.cumsum(weights)
    cdf = cdf / cdf[-1]
    return float(np.interp(lower / 100.0, cdf, x)), float(np.interp(upper / 100.0, cdf, x))
