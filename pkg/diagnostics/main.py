import math
import logging
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import pandas as pd
from scipy import stats

from phase_space_core import ContractError, marginals, moments
from potentials import explored_range

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-6
PURITY_CEILING = 1.0 + 1e-6
MIN_FIT_SAMPLES = 8

COLUMNS = [
    "time", "mean_x", "mean_p", "mean_x2", "mean_p2", "mean_xp",
    "norm", "purity", "linear_entropy", "negativity_volume",
    "x_p05", "x_p95", "cov_min_eig", "contracting_width2",
]
OPTIONAL_COLUMNS = ["fringe_contrast", "correction_ratio"]
DIVERGENCE_COLUMNS = ["time", "rel_mean_x", "rel_x2", "rel_p2", "field_l2"]


def purity(field):
    """
    Phase-space purity (2 pi hbar) * integral of W^2.

    :param field: normalized WignerField
    :return: purity in (0, 1]
    """
    norm = field.norm()
    if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
        raise ContractError(f"purity needs a normalized field (norm = {norm:.9f})")
    grid = field.grid
    return float(2.0 * np.pi * grid.hbar * np.sum(field.values ** 2) * grid.cell_area)


def linear_entropy(field):
    value = purity(field)
    if value <= 0:
        raise ContractError(f"non-positive purity {value:g}")
    return -math.log(value)


def negativity_volume(field):
    """Integral of |W| minus 1; zero for non-negative fields."""
    cell = field.grid.cell_area
    return float((np.sum(np.abs(field.values)) - np.sum(field.values)) * cell)


def fringe_amplitude(field, separation):
    """
    Spectral amplitude of the momentum marginal at s = separation / hbar.

    :param field: WignerField
    :param separation: cat separation (length)
    :return: |integral P(p) exp(-i s p) dp|
    """
    grid = field.grid
    _, p_density = marginals(field)
    s = separation / grid.hbar
    return float(abs(np.sum(p_density * np.exp(-1j * s * grid.p)) * grid.dp))


def fringe_contrast(field, separation, reference):
    """
    Fringe amplitude normalized by its value at t = 0.

    :param reference: initial amplitude, or the initial WignerField
    """
    if not isinstance(reference, (int, float, np.floating)):
        reference = fringe_amplitude(reference, separation)
    if not reference > 0:
        raise ContractError("initial fringe amplitude is zero")
    return fringe_amplitude(field, separation) / float(reference)


@dataclass
class ContractingWidth:
    """Width along the contracting direction in the half-width convention W ~ exp(-zeta^2 / width^2)."""
    width: float
    width2: float
    variance: float
    direction: tuple
    cov_min_eig: float
    eigenvalues: tuple


def _stable_direction(model, mean_x, t, mass):
    """Coefficients (a_x, a_p) of the stable coordinate zeta = a_x x + a_p p, or None if the flow has no contracting direction."""
    if model is None:
        return None
    curvature = float(model.curvature(mean_x, t))
    if curvature >= 0:
        return None
    rate = math.sqrt(-curvature / mass)
    return (-mass * rate, 1.0)


def contracting_width(source, model=None, direction=None, t=None):
    """
    Width of the distribution along the stable direction of the local linearized flow.

    The stable coordinate for curvature V'' < 0 at the centroid is
    zeta = p - m*lam*x with lam = sqrt(-V''/m). Without a contracting
    direction the smallest covariance eigenvalue is used.

    :param source: WignerField, or a mapping/row with the moment columns
    :param model: PotentialModel used for the linearization
    :param direction: explicit (a_x, a_p) coefficients, overrides the model
    :param t: time for the linearization (defaults to the source time)
    :return: ContractingWidth
    """
    if hasattr(source, "values") and hasattr(source, "grid"):
        m = moments(source)
        covariance, mean_x, mass = m["covariance"], m["mean_x"], source.grid.mass
        time = source.time if t is None else t
    else:
        row = dict(source)
        mean_x = float(row["mean_x"])
        mean_p = float(row["mean_p"])
        covariance = np.array([
            [row["mean_x2"] - mean_x ** 2, row["mean_xp"] - mean_x * mean_p],
            [row["mean_xp"] - mean_x * mean_p, row["mean_p2"] - mean_p ** 2],
        ], dtype=float)
        mass = getattr(model, "mass", 1.0)
        time = float(row.get("time", 0.0)) if t is None else t

    eigenvalues = np.linalg.eigvalsh(covariance)
    if eigenvalues[0] <= 0:
        raise ContractError(f"covariance is not positive definite (eigenvalues {eigenvalues})")

    coeffs = direction if direction is not None else _stable_direction(model, mean_x, time, mass)
    if coeffs is None:
        variance = float(eigenvalues[0])
        coeffs = tuple(np.linalg.eigh(covariance)[1][:, 0])
    else:
        a = np.asarray(coeffs, dtype=float)
        variance = float(a @ covariance @ a)
    return ContractingWidth(
        width=math.sqrt(2.0 * variance), width2=2.0 * variance, variance=variance,
        direction=tuple(float(c) for c in coeffs), cov_min_eig=float(eigenvalues[0]),
        eigenvalues=tuple(float(e) for e in eigenvalues),
    )


def observe(field, model=None, fringe_separation=None, fringe_reference=None):
    """
    One TrajectoryRecord row for the field.

    :param field: WignerField
    :param model: PotentialModel for the contracting-direction width
    :param fringe_separation: cat separation; adds the fringe_contrast column
    :param fringe_reference: amplitude at t = 0 for the contrast
    :return: dict keyed by column name
    """
    m = moments(field)
    x_density, _ = marginals(field)
    x_lo, x_hi = explored_range(x_density, field.grid.x)
    value = purity(field)
    try:
        width = contracting_width(field, model)
        cov_min_eig, width2 = width.cov_min_eig, width.width2
    except ContractError:
        cov_min_eig, width2 = float("nan"), float("nan")
    row = {
        "time": float(field.time),
        "mean_x": m["mean_x"], "mean_p": m["mean_p"],
        "mean_x2": m["mean_x2"], "mean_p2": m["mean_p2"], "mean_xp": m["mean_xp"],
        "norm": field.norm(), "purity": value, "linear_entropy": -math.log(value),
        "negativity_volume": negativity_volume(field),
        "x_p05": x_lo, "x_p95": x_hi,
        "cov_min_eig": cov_min_eig, "contracting_width2": width2,
    }
    if fringe_separation is not None:
        reference = fringe_reference if fringe_reference is not None else fringe_amplitude(field, fringe_separation)
        row["fringe_contrast"] = fringe_contrast(field, fringe_separation, reference)
    return row


class TrajectoryRecord:
    """
    Time series of field diagnostics backed by a pandas DataFrame.

    Columns follow COLUMNS, then whichever OPTIONAL_COLUMNS were recorded.
    """

    def __init__(self, frame=None):
        if frame is None:
            frame = pd.DataFrame(columns=COLUMNS, dtype=float)
        self.frame = frame[self._ordered(frame.columns)].reset_index(drop=True)

    @staticmethod
    def _ordered(columns):
        present = set(columns)
        extra = [c for c in columns if c not in COLUMNS and c not in OPTIONAL_COLUMNS]
        return [c for c in COLUMNS + OPTIONAL_COLUMNS if c in present] + extra

    @classmethod
    def from_rows(cls, rows):
        return cls(pd.DataFrame(list(rows)))

    @classmethod
    def read_csv(cls, path):
        return cls(pd.read_csv(path, float_precision="round_trip"))

    def __len__(self):
        return len(self.frame)

    def __getitem__(self, column):
        return self.frame[column].to_numpy()

    @property
    def columns(self):
        return list(self.frame.columns)

    @property
    def times(self):
        return self.frame["time"].to_numpy()

    def row(self, index):
        return self.frame.iloc[index].to_dict()

    def validate(self):
        """Check the record invariants; raises ContractError on violation."""
        times = self.times
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ContractError("record times are not strictly increasing")
        if "purity" in self.frame and np.any(self.frame["purity"] > PURITY_CEILING):
            raise ContractError("purity exceeds 1 beyond tolerance")
        if "norm" in self.frame and np.any(np.abs(self.frame["norm"] - 1.0) > NORMALIZATION_TOLERANCE):
            raise ContractError("norm left 1 beyond tolerance")
        return self


def _frame(record):
    if isinstance(record, TrajectoryRecord):
        return record.frame
    return record


def divergence(quantum, classical, field_distance=None):
    """
    Per-time quantum/classical divergence metrics.

    rel_mean_x is |<x>_q - <x>_c| over the classical position spread;
    rel_x2 and rel_p2 are relative differences of the second moments;
    field_l2 is the L2 field distance when supplied.

    :param quantum: TrajectoryRecord of the Moyal run
    :param classical: TrajectoryRecord of the Liouville run
    :param field_distance: optional sequence of L2 distances, one per time
    :return: DataFrame with DIVERGENCE_COLUMNS
    """
    q, c = _frame(quantum), _frame(classical)
    tq, tc = q["time"].to_numpy(), c["time"].to_numpy()
    if len(tq) != len(tc) or not np.array_equal(tq, tc):
        raise ContractError("divergence needs identical time axes")
    tiny = np.finfo(float).tiny

    spread = np.sqrt(np.maximum(c["mean_x2"].to_numpy() - c["mean_x"].to_numpy() ** 2, tiny))
    result = pd.DataFrame({
        "time": tq,
        "rel_mean_x": np.abs(q["mean_x"].to_numpy() - c["mean_x"].to_numpy()) / spread,
        "rel_x2": np.abs(q["mean_x2"].to_numpy() - c["mean_x2"].to_numpy()) / np.maximum(np.abs(c["mean_x2"].to_numpy()), tiny),
        "rel_p2": np.abs(q["mean_p2"].to_numpy() - c["mean_p2"].to_numpy()) / np.maximum(np.abs(c["mean_p2"].to_numpy()), tiny),
    })
    if field_distance is not None:
        distance = np.asarray(field_distance, dtype=float)
        if distance.shape != tq.shape:
            raise ContractError("field distance series does not match the time axis")
        result["field_l2"] = distance
    else:
        result["field_l2"] = np.nan
    return result


def field_distance(first, second):
    """L2 distance between two fields on the same grid."""
    if first.grid != second.grid:
        raise ContractError("fields live on different grids")
    return float(np.sqrt(np.sum((first.values - second.values) ** 2) * first.grid.cell_area))


@dataclass
class Breakdown:
    time: float
    reached: bool
    threshold: float


def _series(record, column):
    if isinstance(record, tuple):
        times, values = record
        return np.asarray(times, dtype=float), np.asarray(values, dtype=float)
    frame = _frame(record)
    return frame["time"].to_numpy(dtype=float), frame[column].to_numpy(dtype=float)


def breakdown_time(record, threshold, column="rel_x2"):
    """
    First time the series reaches the threshold, linearly interpolated.

    :param record: divergence frame, TrajectoryRecord, or (times, values)
    :param threshold: crossing level
    :param column: series to test when record is tabular
    :return: Breakdown; reached=False carries the last recorded time
    """
    times, values = _series(record, column)
    if len(times) == 0:
        raise ContractError("empty record")
    above = np.nonzero(values >= threshold)[0]
    if len(above) == 0:
        return Breakdown(time=float(times[-1]), reached=False, threshold=threshold)
    i = int(above[0])
    if i == 0:
        return Breakdown(time=float(times[0]), reached=True, threshold=threshold)
    t0, t1, v0, v1 = times[i - 1], times[i], values[i - 1], values[i]
    fraction = (threshold - v0) / (v1 - v0) if v1 != v0 else 1.0
    return Breakdown(time=float(t0 + fraction * (t1 - t0)), reached=True, threshold=threshold)


def _window(times, values, window):
    if window is None:
        mask = np.ones_like(times, dtype=bool)
    else:
        lo, hi = window
        if lo < times[0] - 1e-12 or hi > times[-1] + 1e-12:
            raise ContractError(f"window {window} is outside the record [{times[0]}, {times[-1]}]")
        mask = (times >= lo) & (times <= hi)
    if mask.sum() < MIN_FIT_SAMPLES:
        raise ContractError(f"window holds {int(mask.sum())} samples, need at least {MIN_FIT_SAMPLES}")
    if np.ptp(times[mask]) == 0:
        raise ContractError("degenerate window")
    return times[mask], values[mask]


@dataclass
class EntropyRateFit:
    rate: float
    intercept: float
    residual: float
    stderr: float
    times: np.ndarray = dataclass_field(repr=False)
    hdot: np.ndarray = dataclass_field(repr=False)


def entropy_rate_fit(record, window=None, column="linear_entropy"):
    """
    Least-squares slope of H(t) over the window.

    :param record: TrajectoryRecord, DataFrame or (times, H)
    :param window: (t_start, t_end) or None for the whole record
    :return: EntropyRateFit with the rate, rms residual and the pointwise dH/dt series
    """
    times, values = _series(record, column)
    wt, wh = _window(times, values, window)
    fit = stats.linregress(wt, wh)
    residual = float(np.sqrt(np.mean((wh - (fit.intercept + fit.slope * wt)) ** 2)))
    hdot = np.gradient(values, times) if len(times) > 1 else np.zeros_like(values)
    return EntropyRateFit(
        rate=float(fit.slope), intercept=float(fit.intercept), residual=residual,
        stderr=float(fit.stderr), times=times, hdot=hdot,
    )


@dataclass
class EntropyLogFit:
    slope: float
    intercept: float
    r_squared: float


def entropy_log_fit(record, window=None, column="linear_entropy"):
    """Fit H against ln t; logarithmic growth gives R^2 near 1."""
    times, values = _series(record, column)
    wt, wh = _window(times, values, window)
    if np.any(wt <= 0):
        raise ContractError("log fit window must exclude t <= 0")
    fit = stats.linregress(np.log(wt), wh)
    return EntropyLogFit(slope=float(fit.slope), intercept=float(fit.intercept), r_squared=float(fit.rvalue ** 2))
