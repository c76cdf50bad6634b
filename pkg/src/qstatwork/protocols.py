"""Drive protocol, coupling schedules, and the driven external system.

The Otto-cycle gap sweep Omega(t) is piecewise linear over the two work
strokes [0, T/2] and [T/2, T]; the engine-system coupling g_C(t) is
either an impulse (delta kick of area g), a smooth tanh plateau, or a
sampled profile.  Everything here is a pure, reentrant description of
the protocol; no dynamics.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateHamiltonianError, DomainError, InvalidVariantError
from .hilbert import HOTruncated, DenseOperator


class Statistics(str, enum.Enum):
    BOSE = "bose"
    DISTINGUISHABLE = "distinguishable"


class GapDirection(str, enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"


# ---------------------------------------------------------------------------
# engine drive
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngineParams:
    """Linear-sweep Otto drive for N two-level engines.

    Omega0 is the gap parameter at the cycle start, v the sweep speed
    (only |v| matters; the stroke direction is set by gap_direction),
    T the cycle period, beta_c/beta_h the cold/hot inverse temperatures.
    E_t = sqrt(Omega(t)^2 + Delta^2) must stay positive except possibly
    at isolated stroke endpoints of a Delta = 0 sweep.
    """

    N: int
    Omega0: float
    Delta: float
    v: float
    T: float
    beta_c: float
    beta_h: float
    statistics: Statistics = Statistics.BOSE
    gap_direction: GapDirection = GapDirection.INCREASING

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.T <= 0:
            raise ValueError(f"cycle period T must be positive, got {self.T}")
        if self.Delta < 0:
            raise ValueError(f"Delta must be >= 0, got {self.Delta}")
        if not (self.beta_c > self.beta_h >= 0):
            raise ValueError(
                f"engine regime requires beta_c > beta_h >= 0, got "
                f"beta_c={self.beta_c}, beta_h={self.beta_h}"
            )
        object.__setattr__(self, "statistics", Statistics(self.statistics))
        object.__setattr__(self, "gap_direction", GapDirection(self.gap_direction))
        self._check_gap_open()

    def _check_gap_open(self):
        if self.Delta > 0:
            return
        lo, hi = self._omega_range()
        if lo < 0 or (lo == 0 and hi == 0):
            raise DegenerateHamiltonianError(
                "Delta = 0 sweep closes the gap inside a stroke; keep |Omega| > 0 "
                "except at isolated endpoints"
            )

    def _omega_range(self):
        half = abs(self.v) * self.T / 2
        if self.gap_direction is GapDirection.INCREASING:
            return self.Omega0, self.Omega0 + half
        return self.Omega0 - half, self.Omega0

    @property
    def omega_half(self) -> float:
        """Omega(T/2), the gap parameter at the hot isochore."""
        sgn = 1.0 if self.gap_direction is GapDirection.INCREASING else -1.0
        return self.Omega0 + sgn * abs(self.v) * self.T / 2

    def omega(self, t):
        return omega_of_t(self, t)

    def energy(self, t):
        """E_t = sqrt(Omega(t)^2 + Delta^2)."""
        return np.hypot(self.omega(t), self.Delta)

    def theta(self, t):
        """Mixing angle, tan(theta_t) = -Omega(t)/Delta."""
        return np.arctan2(-self.omega(t), self.Delta)

    def cos_theta(self, t):
        """cos(theta_t) = Delta / E_t, exactly zero for Delta = 0."""
        return self.Delta / self.energy(t)

    def sin_theta(self, t):
        """sin(theta_t) = -Omega(t) / E_t."""
        return -self.omega(t) / self.energy(t)

    def stroke_start(self, t) -> float:
        """Start time of the stroke containing t (0 or T/2)."""
        return 0.0 if t < self.T / 2 else self.T / 2


def omega_of_t(params: EngineParams, t):
    """Piecewise-linear gap sweep; exactly linear within each stroke.

    With the default increasing direction the first stroke widens the
    gap, Omega(t) = Omega(0) + |v| t, and the second returns it, so that
    Omega(T) = Omega(0) closes the drive cycle.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > params.T * (1 + 1e-12)):
        raise DomainError(f"t must lie in [0, T] = [0, {params.T}]")
    sgn = 1.0 if params.gap_direction is GapDirection.INCREASING else -1.0
    speed = sgn * abs(params.v)
    half = params.T / 2
    first = params.Omega0 + speed * t_arr
    second = (params.Omega0 + speed * half) - speed * (t_arr - half)
    out = np.where(t_arr <= half, first, second)
    return out if out.ndim else float(out)


def phase_integral(params: EngineParams, t, t0: float):
    """Adiabatic phase phi(t, t0) = int_{t0}^{t} 2 E_s ds, in closed form.

    For a linear sweep the antiderivative of sqrt(Omega^2 + Delta^2) is
    [Omega E + Delta^2 asinh(Omega/Delta)] / (2 slope); for Delta = 0 it
    reduces to the piecewise-quadratic integral of 2|Omega|.
    """
    t_arr = np.asarray(t, dtype=float)
    half = params.T / 2
    if t0 not in (0.0, half):
        raise DomainError(f"t0 must be a stroke start (0 or T/2), got {t0}")
    if np.any(t_arr < t0 - 1e-12) or np.any(t_arr > t0 + half + 1e-12):
        raise DomainError("phase_integral arguments must stay within one stroke")
    sgn = 1.0 if params.gap_direction is GapDirection.INCREASING else -1.0
    slope = sgn * abs(params.v) * (1.0 if t0 == 0.0 else -1.0)
    om0 = float(params.omega(t0))
    om_t = om0 + slope * (t_arr - t0)
    delta = params.Delta
    if slope == 0.0:
        out = 2 * np.hypot(om0, delta) * (t_arr - t0)
    elif delta == 0.0:
        # Omega keeps one sign within a stroke (validated), so |Omega| integrates
        # to a signed quadratic.
        s = 1.0 if (om0 + om_t.max()) >= 0 else -1.0
        out = s * (om_t ** 2 - om0 ** 2) / slope
    else:
        def F(u):
            return u * np.hypot(u, delta) + delta ** 2 * np.arcsinh(u / delta)
        out = (F(om_t) - F(om0)) / slope
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# coupling schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Impulse:
    """Delta-kick coupling g_C(t) = g delta(t - t1)."""

    g: float
    t1: float
    T: float

    def __post_init__(self):
        if not (0.0 < self.t1 < self.T):
            raise ValueError(f"impulse time t1 must lie in (0, T), got {self.t1}")
        if abs(self.t1 - self.T / 2) <= 1e-12 * self.T:
            raise ValueError("impulse must not coincide with the thermalization at T/2")


PLATEAU_ENDPOINT_TOL = 1e-6
PLATEAU_MIDCYCLE_TOL = 1e-3


@dataclass(frozen=True)
class SmoothPlateau:
    """Twin tanh plateaus of area g each, one per work stroke.

    g_C(t) = g/(delta_t T) sum_{n=0,1} [tanh(alpha(t - t_on - nT/2))
                                        - tanh(alpha(t - t_off - nT/2))]
    with t_on = (1 - delta_t) T / 4 and t_off = t_on + delta_t T / 2 by
    default.  The switching tails must be off at t = 0 and t = T.
    """

    g: float
    delta_t: float
    alpha: float
    T: float
    t_on: float = None
    t_off: float = None

    def __post_init__(self):
        if not (0.0 < self.delta_t < 1.0):
            raise ValueError(f"delta_t must lie in (0, 1), got {self.delta_t}")
        if self.T <= 0 or self.alpha <= 0:
            raise ValueError("SmoothPlateau needs T > 0 and alpha > 0")
        if self.t_on is None:
            object.__setattr__(self, "t_on", (1 - self.delta_t) * self.T / 4)
        if self.t_off is None:
            object.__setattr__(self, "t_off", self.t_on + self.delta_t * self.T / 2)
        scale = abs(self.g) / (self.delta_t * self.T)
        if scale > 0:
            ends = max(abs(self._value(0.0)), abs(self._value(self.T)))
            if ends > PLATEAU_ENDPOINT_TOL * scale:
                raise ValueError(
                    f"coupling does not switch off at the cycle endpoints: "
                    f"|g_C(0 or T)| = {ends:.3e} > {PLATEAU_ENDPOINT_TOL:.0e} x g/(delta_t T)"
                )
            mid = abs(self._value(self.T / 2))
            if mid > PLATEAU_MIDCYCLE_TOL * scale:
                warnings.warn(
                    f"coupling tail at the thermalization instant T/2 is "
                    f"{mid / scale:.2e} of the plateau; probabilities get a "
                    "thermalization-overlap flag",
                    stacklevel=2,
                )

    @property
    def plateau_height(self) -> float:
        return 2 * self.g / (self.delta_t * self.T)

    def _value(self, t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros_like(t)
        for n in (0, 1):
            acc = acc + (
                np.tanh(self.alpha * (t - self.t_on - n * self.T / 2))
                - np.tanh(self.alpha * (t - self.t_off - n * self.T / 2))
            )
        out = self.g / (self.delta_t * self.T) * acc
        return out if out.ndim else float(out)

    def switch_times(self):
        return tuple(
            s + n * self.T / 2 for n in (0, 1) for s in (self.t_on, self.t_off)
        )

    def midcycle_tail_fraction(self) -> float:
        scale = abs(self.plateau_height)
        return abs(self._value(self.T / 2)) / scale if scale else 0.0


@dataclass(frozen=True, eq=False)
class Sampled:
    """Coupling given on a time grid; evaluated by linear interpolation."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("Sampled needs matching 1-d times/values with >= 2 points")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Sampled times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> float:
        return float(self.times[-1])


CouplingSchedule = Union[Impulse, SmoothPlateau, Sampled]


def schedule_period(schedule: CouplingSchedule) -> float:
    return float(schedule.T)


def check_schedule_cycle(params: EngineParams, schedule: CouplingSchedule):
    """Reject schedule/drive period mismatches early."""
    T = schedule_period(schedule)
    if abs(T - params.T) > 1e-9 * params.T:
        raise DomainError(
            f"schedule period {T} does not match the drive cycle T = {params.T}"
        )


def g_of_t(schedule: CouplingSchedule, t):
    """Pointwise coupling value; impulses have none (use the kick)."""
    if isinstance(schedule, Impulse):
        raise InvalidVariantError(
            "an Impulse has no pointwise value; apply it as a finite kick"
        )
    if isinstance(schedule, SmoothPlateau):
        if np.any(np.asarray(t) < -1e-12) or np.any(np.asarray(t) > schedule.T * (1 + 1e-12)):
            raise DomainError(f"t must lie in [0, T] = [0, {schedule.T}]")
        return schedule._value(t)
    if isinstance(schedule, Sampled):
        out = np.interp(np.asarray(t, dtype=float), schedule.times, schedule.values)
        return out if out.ndim else float(out)
    raise InvalidVariantError(f"unknown schedule type {type(schedule).__name__}")


def _trapezoid(y, x):
    fn = getattr(np, "trapezoid", None) or np.trapz
    return float(fn(y, x))


def coupling_area(schedule: CouplingSchedule) -> float:
    """Integral of g_C over the full cycle (trapezoid on the native grid
    for sampled schedules; twin plateaus integrate to ~2g)."""
    if isinstance(schedule, Impulse):
        return schedule.g
    if isinstance(schedule, Sampled):
        return _trapezoid(schedule.values, schedule.times)
    tt = np.linspace(0.0, schedule.T, 20001)
    return _trapezoid(schedule._value(tt), tt)


# ---------------------------------------------------------------------------
# external system
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExternalSystem:
    """Driven system S: spectrum (ground energy pinned to zero) and the
    Hermitian coupling operator V_S, both in the energy eigenbasis."""

    energies: np.ndarray
    V_S: DenseOperator
    label: str = ""

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        if energies.ndim != 1 or energies.size < 1:
            raise ValueError("energies must be a 1-d list of levels")
        if abs(energies[0]) > 1e-12:
            raise ValueError(f"ground-state energy must be zero, got {energies[0]}")
        if np.any(np.diff(energies) < -1e-12):
            raise ValueError("energies must be ascending")
        object.__setattr__(self, "energies", energies)
        vs = self.V_S
        if not isinstance(vs, DenseOperator):
            vs = DenseOperator(HOTruncated(energies.size), vs)
            object.__setattr__(self, "V_S", vs)
        if vs.dim != energies.size:
            raise ValueError("V_S dimension does not match the energy list")
        vs.assert_hermitian()

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def matrix(self) -> np.ndarray:
        return self.V_S.matrix

    def with_dim(self, dim: int) -> "ExternalSystem":
        """Same physical system re-truncated to `dim` levels (harmonic only)."""
        if self.label.startswith("ho:"):
            omega = float(self.label.split(":", 1)[1])
            return harmonic_system(omega, dim)
        raise InvalidVariantError("re-truncation is only defined for harmonic systems")


def harmonic_system(omega: float, dim: int) -> ExternalSystem:
    """Truncated harmonic oscillator with V_S = c^dag + c.

    Levels are 0, omega, ..., (dim-1) omega and <i|V_S|i-1> = sqrt(i).
    """
    if dim < 2:
        raise ValueError(f"harmonic_system needs dim >= 2, got {dim}")
    if omega <= 0:
        raise ValueError(f"harmonic_system needs omega > 0, got {omega}")
    n = np.arange(dim)
    vs = np.zeros((dim, dim), dtype=complex)
    root = np.sqrt(np.arange(1, dim))
    vs[np.arange(1, dim), np.arange(dim - 1)] = root
    vs[np.arange(dim - 1), np.arange(1, dim)] = root
    return ExternalSystem(
        energies=omega * n,
        V_S=DenseOperator(HOTruncated(dim), vs),
        label=f"ho:{omega!r}",
    )
