"""Five-level population model: pumping, intersystem crossing, metastable decay and detrapping

State vector order is (GS, ES, MS_0, MS_1, MS_2) where the three MS entries are the
field-dressed metastable eigenstates in ascending energy order.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm

from .errors import DomainError
from .spin_model import (
    DefectOrientation,
    ZfsParams,
    enumerate_orientations,
    group_by_field,
    spectrum_at,
)
from .validators import ParameterValidator

logger = logging.getLogger("spincast.photodynamics")

N_LEVELS = 5
GS, ES = 0, 1
MS = slice(2, 5)
PROBABILITY_TOL = 1e-9


@dataclass(frozen=True)
class RateParams:
    """Optical and metastable rates; lifetimes in us, coefficients per uW"""

    tau_e: float = 0.005
    k_isc: float = 6.0
    branching: Tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    tau_0: float = 1.9
    tau_plus: float = 54.0
    tau_minus: float = 42.0
    pump_coeff: float = 5.0
    detrap_coeff: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "branching", tuple(float(b) for b in self.branching))
        errors, _ = ParameterValidator.validate_rates(
            self.tau_e,
            self.k_isc,
            self.branching,
            self.tau_0,
            self.tau_plus,
            self.tau_minus,
            self.pump_coeff,
            self.detrap_coeff,
        )
        if errors:
            raise DomainError(errors[0])

    @property
    def intrinsic_rates(self):
        """Zero-field decay rates (1/tau_0, 1/tau_plus, 1/tau_minus)"""
        return np.array([1.0 / self.tau_0, 1.0 / self.tau_plus, 1.0 / self.tau_minus])

    def with_changes(self, **changes):
        return replace(self, **changes)


class PopulationState(NamedTuple):
    n_gs: float
    n_es: float
    n_ms0: float
    n_msp: float
    n_msm: float

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def uniform(cls):
        return cls(*([1.0 / N_LEVELS] * N_LEVELS))

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (N_LEVELS,):
            raise DomainError(f"Population vector must have {N_LEVELS} entries")
        if np.any(values < -PROBABILITY_TOL) or np.any(values > 1 + PROBABILITY_TOL):
            raise DomainError("Populations must lie in [0, 1]")
        if abs(values.sum() - 1.0) > PROBABILITY_TOL:
            raise DomainError(f"Populations must sum to 1, got {values.sum():.12g}")
        return cls(*(float(v) for v in values))

    def as_array(self):
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class MixedDecay:
    """Decay rates of the field-dressed metastable states"""

    rates: np.ndarray
    overlaps: np.ndarray

    @classmethod
    def intrinsic(cls, rates: RateParams):
        return cls(rates.intrinsic_rates, np.eye(3))

    @classmethod
    def complete(cls, rates: RateParams):
        """Complete mixing: every dressed state is an equal superposition"""
        overlaps = np.full((3, 3), 1.0 / 3.0)
        return cls(overlaps.T @ rates.intrinsic_rates, overlaps)

    def feeding(self, branching):
        """ISC branching expressed in the dressed basis"""
        return self.overlaps.T @ np.asarray(branching, dtype=float)


@dataclass(frozen=True)
class PopulationTrace:
    times: np.ndarray
    populations: np.ndarray
    pl: np.ndarray

    @property
    def final_state(self):
        return PopulationState.from_array(self.populations[-1])

    def __len__(self):
        return len(self.times)


class WeightedDecay(NamedTuple):
    weight: float
    mixed: MixedDecay
    label: str


def mixed_decay_rates(
    zfs: ZfsParams, B_lab, orientation: DefectOrientation, rates: RateParams
) -> MixedDecay:
    """Dressed-state decay rates: overlap-weighted sums of the zero-field rates"""
    spectrum = spectrum_at(zfs, B_lab, orientation)
    overlaps = np.array(spectrum.zero_field_overlaps)
    return MixedDecay(overlaps.T @ rates.intrinsic_rates, overlaps)


def family_decays(
    zfs: ZfsParams,
    B_lab,
    rates: RateParams,
    orientations: Optional[Sequence[DefectOrientation]] = None,
    complete_mixing: bool = False,
) -> List[WeightedDecay]:
    """Dressed decays per orientation family, weighted by multiplicity"""
    if complete_mixing:
        return [WeightedDecay(1.0, MixedDecay.complete(rates), "complete")]

    orientations = list(orientations) if orientations else enumerate_orientations()
    B = np.asarray(B_lab, dtype=float)
    if np.linalg.norm(B) == 0:
        return [WeightedDecay(1.0, MixedDecay.intrinsic(rates), "zero-field")]

    total = len(orientations)
    return [
        WeightedDecay(
            family.multiplicity / total,
            mixed_decay_rates(zfs, B, family.members[0], rates),
            family.label,
        )
        for family in group_by_field(orientations, B)
    ]


def effective_decay_rate(tau_0: float, tau_1: float) -> float:
    """Complete-mixing decay rate (1/tau_0 + 2/tau_1)/3"""
    if tau_0 <= 0 or tau_1 <= 0:
        raise DomainError("Lifetimes must be > 0")
    return (1.0 / tau_0 + 2.0 / tau_1) / 3.0


def tau_0_from_effective(tau_eff: float, tau_1: float) -> float:
    """Invert the complete-mixing relation for tau_0"""
    if tau_eff <= 0 or tau_1 <= 0:
        raise DomainError("Lifetimes must be > 0")
    inverse = 3.0 / tau_eff - 2.0 / tau_1
    if inverse <= 0:
        raise DomainError(f"No positive tau_0 for tau_eff={tau_eff}, tau_1={tau_1}")
    return 1.0 / inverse


def harmonic_tau_1(tau_plus: float, tau_minus: float) -> float:
    """tau_1 with 1/tau_1 = (1/tau_plus + 1/tau_minus)/2"""
    if tau_plus <= 0 or tau_minus <= 0:
        raise DomainError("Lifetimes must be > 0")
    return 2.0 / (1.0 / tau_plus + 1.0 / tau_minus)


def rate_matrix(laser_power: float, mixed: MixedDecay, rates: RateParams) -> np.ndarray:
    """Generator M of dn/dt = M n; every column sums to zero"""
    if laser_power < 0 or not np.isfinite(laser_power):
        raise DomainError(f"Laser power must be >= 0, got {laser_power}")

    pump = rates.pump_coeff * laser_power
    detrap = rates.detrap_coeff * laser_power
    radiative = 1.0 / rates.tau_e - rates.k_isc
    feed = rates.k_isc * mixed.feeding(rates.branching)

    M = np.zeros((N_LEVELS, N_LEVELS))
    M[ES, GS] = pump
    M[GS, GS] = -pump
    M[GS, ES] = radiative
    M[MS, ES] = feed
    M[ES, ES] = -(radiative + feed.sum())
    out = np.asarray(mixed.rates, dtype=float) + detrap
    M[GS, MS] = out
    M[MS, MS] = -np.diag(out)
    return M


def propagate(initial, generator: np.ndarray, duration: float) -> np.ndarray:
    """Exact propagation of a population vector over one constant segment"""
    if duration < 0:
        raise DomainError(f"Duration must be >= 0, got {duration}")
    return expm(generator * duration) @ np.asarray(initial, dtype=float)


def _check_step(duration, dt):
    if not np.isfinite(duration) or duration < 0:
        raise DomainError(f"Duration must be >= 0, got {duration}")
    if not np.isfinite(dt) or dt <= 0:
        raise DomainError(f"Time step must be > 0, got {dt}")


def evolve_populations(
    initial: PopulationState,
    laser_power: float,
    mixed: MixedDecay,
    rates: RateParams,
    duration: float,
    dt: float,
    t0: float = 0.0,
) -> PopulationTrace:
    """Sampled evolution under constant illumination

    Each sample is advanced with the exact segment propagator, so dt sets only
    the output resolution.
    """
    _check_step(duration, dt)
    generator = rate_matrix(laser_power, mixed, rates)

    n_steps = max(1, math.ceil(duration / dt - 1e-9)) if duration > 0 else 0
    populations = np.empty((n_steps + 1, N_LEVELS))
    populations[0] = np.asarray(initial, dtype=float)
    if n_steps:
        step = expm(generator * (duration / n_steps))
        for k in range(n_steps):
            populations[k + 1] = step @ populations[k]

    times = t0 + np.linspace(0.0, duration, n_steps + 1)
    return PopulationTrace(times, populations, populations[:, ES] / rates.tau_e)


def integrate_window(trace: PopulationTrace, start: float, width: float) -> float:
    """Trapezoidal integral of the PL trace over [start, start + width]"""
    if width < 0:
        raise DomainError(f"Window width must be >= 0, got {width}")
    t = trace.times
    end = start + width
    slack = 1e-9 * max(1.0, abs(t[-1]))
    if start < t[0] - slack or end > t[-1] + slack:
        raise DomainError(
            f"Window [{start:g}, {end:g}] us outside trace support [{t[0]:g}, {t[-1]:g}] us"
        )
    if width == 0:
        return 0.0

    start, end = max(start, t[0]), min(end, t[-1])
    inside = (t > start) & (t < end)
    xs = np.concatenate(([start], t[inside], [end]))
    ys = np.concatenate(([np.interp(start, t, trace.pl)], trace.pl[inside], [np.interp(end, t, trace.pl)]))
    return float(trapezoid(ys, xs))


def window_functional(generator: np.ndarray, start: float, width: float, tau_e: float) -> np.ndarray:
    """Row vector w with w @ n = PL integral over [start, start + width] for segment-start state n"""
    if start < 0 or width < 0:
        raise DomainError("Window start and width must be >= 0")
    if width == 0:
        return np.zeros(N_LEVELS)
    # Top-right block of expm([[M, I], [0, 0]] w) is the integral of expm(M s) over [0, w]
    block = np.zeros((2 * N_LEVELS, 2 * N_LEVELS))
    block[:N_LEVELS, :N_LEVELS] = generator
    block[:N_LEVELS, N_LEVELS:] = np.eye(N_LEVELS)
    integral = expm(block * width)[:N_LEVELS, N_LEVELS:]
    return (integral @ expm(generator * start))[ES] / tau_e


def window_integral(state, generator: np.ndarray, start: float, width: float, tau_e: float) -> float:
    """Exact PL integral over a window inside one constant segment"""
    return float(window_functional(generator, start, width, tau_e) @ np.asarray(state, dtype=float))


def periodic_steady_state(cycle_propagator: np.ndarray) -> np.ndarray:
    """Fixed point of a one-cycle propagator, normalised to unit probability"""
    A = np.array(cycle_propagator, dtype=float) - np.eye(len(cycle_propagator))
    A[-1, :] = 1.0
    b = np.zeros(len(cycle_propagator))
    b[-1] = 1.0
    try:
        state = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        state = np.linalg.lstsq(A, b, rcond=None)[0]
    state = np.clip(state, 0.0, None)
    return state / state.sum()


@dataclass(frozen=True)
class TrplCurve:
    delays: np.ndarray
    delta_s: np.ndarray
    sr_zero: np.ndarray
    sr_field: np.ndarray


def _cyclic_sr(decays, rates, power, pulse, window, delay):
    """Multiplicity-weighted S/R of the laser-then-dark cycle"""
    total = 0.0
    for weight, mixed, _ in decays:
        lit = rate_matrix(power, mixed, rates)
        dark = rate_matrix(0.0, mixed, rates)
        start = periodic_steady_state(expm(dark * delay) @ expm(lit * pulse))
        signal = window_integral(start, lit, 0.0, window, rates.tau_e)
        reference = window_integral(start, lit, pulse - window, window, rates.tau_e)
        total += weight * signal / reference
    return total


def simulate_trpl_differential(
    rates: RateParams,
    zfs: ZfsParams,
    B_on,
    delays: Sequence[float],
    pulse: Tuple[float, float] = (1.0, 20.0),
    window: float = 0.2,
    complete_mixing: bool = False,
) -> TrplCurve:
    """Delta S_B(tau) = S/R with field minus S/R at zero field

    A repeated laser pulse is followed by a dark delay tau. S is the first
    window of the pulse and R its last window, both in the cyclic steady state.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0 or np.any(delays <= 0):
        raise DomainError("Delays must be > 0")
    duration, power = pulse
    if not 0 < window <= duration:
        raise DomainError(f"Window {window} us must fit inside the {duration} us pulse")

    zero = family_decays(zfs, np.zeros(3), rates)
    on = family_decays(zfs, B_on, rates, complete_mixing=complete_mixing)
    logger.debug("TRPL differential: %d delays, %d field families", delays.size, len(on))

    sr_zero = np.array([_cyclic_sr(zero, rates, power, duration, window, d) for d in delays])
    sr_field = np.array([_cyclic_sr(on, rates, power, duration, window, d) for d in delays])
    return TrplCurve(delays, sr_field - sr_zero, sr_zero, sr_field)


def readout_overshoot(
    rates: RateParams,
    zfs: ZfsParams,
    power: float,
    pulse: float = 1.0,
    period: float = 15.0,
    B_lab=(0.0, 0.0, 0.0),
    window: float = 0.2,
    dt: float = 1e-4,
) -> float:
    """Peak PL early in the readout pulse relative to end-of-pulse PL, minus one; never negative"""
    if power <= 0:
        raise DomainError(f"Laser power must be > 0, got {power}")
    if not 0 < pulse < period:
        raise DomainError("Pulse must be shorter than the repetition period")

    decays = family_decays(zfs, B_lab, rates)
    peak = end = 0.0
    for weight, mixed, _ in decays:
        lit = rate_matrix(power, mixed, rates)
        dark = rate_matrix(0.0, mixed, rates)
        start = periodic_steady_state(expm(dark * (period - pulse)) @ expm(lit * pulse))
        trace = evolve_populations(start, power, mixed, rates, min(window, pulse), dt)
        peak += weight * trace.pl.max()
        end += weight * propagate(start, lit, pulse)[ES] / rates.tau_e
    return max(0.0, float(peak / end - 1.0))


@dataclass(frozen=True)
class LifetimeTable:
    """Metastable lifetimes tabulated against temperature"""

    temperatures: np.ndarray
    tau_0: np.ndarray
    tau_1: np.ndarray

    def rates_at(self, index: int, base: RateParams) -> RateParams:
        """RateParams with tau_0 and tau_plus = tau_minus = tau_1 at one temperature"""
        return base.with_changes(
            tau_0=float(self.tau_0[index]),
            tau_plus=float(self.tau_1[index]),
            tau_minus=float(self.tau_1[index]),
        )


def lifetime_table(temperatures, tau_0, tau_1) -> LifetimeTable:
    """Validated (T, tau_0, tau_1) table"""
    temperatures = np.asarray(temperatures, dtype=float)
    tau_0 = np.asarray(tau_0, dtype=float)
    tau_1 = np.asarray(tau_1, dtype=float)
    if not temperatures.size == tau_0.size == tau_1.size:
        raise DomainError("Temperature, tau_0 and tau_1 tables must have equal length")
    errors, _ = ParameterValidator.validate_sweep(temperatures, "temperatures", positive=True)
    if errors:
        raise DomainError(errors[0])
    if np.any(tau_0 <= 0) or np.any(tau_1 <= 0):
        raise DomainError("Tabulated lifetimes must be > 0")
    return LifetimeTable(temperatures, tau_0, tau_1)
