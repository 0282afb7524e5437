"""Pulse sequences, the cyclic-steady-state executor and the experiment recipes"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import expm
from scipy.signal import find_peaks

from ..config import K_B_MEV_PER_K
from .coherence import (
    CoherenceParams,
    DriveParams,
    Protocol,
    echo_decay_bound,
    echo_time,
    extract_rabi_frequency,
    lorentzian_nodes,
    simulate_protocol,
    simulate_rabi,
    transfer_probability,
)
from .errors import DomainError
from .fitting import FitResult, biexp_argmax, fit, parabolic_peak
from .photodynamics import (
    N_LEVELS,
    LifetimeTable,
    MixedDecay,
    PopulationState,
    RateParams,
    effective_decay_rate,
    harmonic_tau_1,
    mixed_decay_rates,
    rate_matrix,
    readout_overshoot,
    simulate_trpl_differential,
    window_functional,
)
from .spin_model import (
    TRANSITIONS,
    DefectOrientation,
    OrientationFamily,
    ZfsParams,
    dominant_labels,
    enumerate_orientations,
    group_by_field,
    lac_field,
    misaligned_direction,
    spectrum_at,
    transition_frequencies,
)

logger = logging.getLogger("spincast.sequencer")

STEADY_STATE_TOL = 1e-6
MAX_SQUARINGS = 64
QUADRATURE_NODES = 201


# Sequence events


@dataclass(frozen=True)
class Laser:
    power: float
    duration: float


@dataclass(frozen=True)
class Wait:
    duration: float


@dataclass(frozen=True)
class Microwave:
    """MW pulse; coherent on every dressed pair, or an ideal rotation when angle is set"""

    drive: DriveParams
    duration_ns: float
    broadening: float = 0.0
    angle: Optional[float] = None

    @property
    def duration(self):
        return self.duration_ns * 1e-3


@dataclass(frozen=True)
class ReadWindow:
    """PL integration window, offset from the start of the preceding laser pulse"""

    offset: float
    width: float
    label: str


Event = Union[Laser, Wait, Microwave, ReadWindow]


@dataclass(frozen=True)
class PulseSequence:
    events: Tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        self.validate()

    def validate(self):
        labels = set()
        laser = None
        previous = None
        for event in self.events:
            if isinstance(event, ReadWindow):
                if laser is None or not isinstance(previous, (Laser, ReadWindow)):
                    raise DomainError(f"Read window {event.label!r} must directly follow a laser pulse")
                if event.offset < 0 or event.width < 0:
                    raise DomainError(f"Read window {event.label!r} has a negative offset or width")
                if event.offset + event.width > laser.duration + 1e-12:
                    raise DomainError(f"Read window {event.label!r} extends past its laser pulse")
                if event.label in labels:
                    raise DomainError(f"Duplicate read window label {event.label!r}")
                labels.add(event.label)
            elif isinstance(event, (Laser, Wait, Microwave)):
                if not np.isfinite(event.duration) or event.duration < 0:
                    raise DomainError(f"{type(event).__name__} duration must be >= 0")
                if isinstance(event, Laser):
                    if event.power < 0:
                        raise DomainError(f"Laser power must be >= 0, got {event.power}")
                    laser = event
            else:
                raise DomainError(f"Unknown sequence event {event!r}")
            previous = event

    @property
    def period(self):
        return sum(e.duration for e in self.events if not isinstance(e, ReadWindow))

    @property
    def labels(self):
        return [e.label for e in self.events if isinstance(e, ReadWindow)]


def readout_pulse(power: float, duration: float, window: float) -> List[Event]:
    """Laser pulse with S in its first window and R in its last"""
    return [
        Laser(power, duration),
        ReadWindow(0.0, window, "S"),
        ReadWindow(duration - window, window, "R"),
    ]


# Executor


class _OrientationRun:
    """Segment propagators and window functionals for one orientation"""

    def __init__(self, zfs, rates, B_lab, orientation, complete_mixing=False):
        self.rates = rates
        spectrum = spectrum_at(zfs, B_lab, orientation)
        self.energies = np.array(spectrum.energies)
        self.labels = dominant_labels(spectrum)
        if complete_mixing:
            self.mixed = MixedDecay.complete(rates)
        else:
            self.mixed = mixed_decay_rates(zfs, B_lab, orientation, rates)
        self._propagators = {}

    def propagator(self, power, duration):
        key = (power, duration)
        if key not in self._propagators:
            self._propagators[key] = expm(rate_matrix(power, self.mixed, self.rates) * duration)
        return self._propagators[key]

    def window_row(self, power, offset, width):
        generator = rate_matrix(power, self.mixed, self.rates)
        return window_functional(generator, offset, width, self.rates.tau_e)

    def pair(self, transition):
        a, b = TRANSITIONS[transition]
        return self.labels.index(a), self.labels.index(b)

    def transfer(self, mw: Microwave):
        """Population exchange between dressed MS states at the start of the pulse"""
        if mw.angle is not None:
            i, j = self.pair(mw.drive.target_transition)
            exchanges = [(i, j, float(np.sin(0.5 * mw.angle) ** 2))]
        else:
            if mw.broadening > 0:
                offsets, weights = lorentzian_nodes(0.0, 0.5 * mw.broadening, QUADRATURE_NODES)
            else:
                offsets, weights = np.zeros(1), np.ones(1)
            exchanges = []
            for i, j in itertools.combinations(range(3), 2):
                line = self.energies[j] - self.energies[i]
                detunings = mw.drive.frequency - (line + offsets)
                p = float(np.dot(weights, transfer_probability(mw.drive, detunings, mw.duration)))
                exchanges.append((i, j, p))

        T = np.eye(N_LEVELS)
        for i, j, p in exchanges:
            a, b = 2 + i, 2 + j
            swap = np.eye(N_LEVELS)
            swap[a, a] = swap[b, b] = 1.0 - p
            swap[a, b] = swap[b, a] = p
            T = swap @ T
        return T

    def compile(self, seq: PulseSequence):
        """One-cycle propagator and window functionals relative to cycle start"""
        P = np.eye(N_LEVELS)
        laser_start = laser_power = None
        rows = {}
        for event in seq.events:
            if isinstance(event, Laser):
                laser_start, laser_power = P, event.power
                P = self.propagator(event.power, event.duration) @ P
            elif isinstance(event, ReadWindow):
                rows[event.label] = self.window_row(laser_power, event.offset, event.width) @ laser_start
            elif isinstance(event, Wait):
                P = self.propagator(0.0, event.duration) @ P
            else:
                P = self.propagator(0.0, event.duration) @ self.transfer(event) @ P
        return P, rows


def _settle(cycle, rows, initial, tol):
    """Iterate the cycle by repeated squaring until window values stop changing"""
    functional = np.array(list(rows.values())) if rows else np.eye(N_LEVELS)
    state = np.asarray(initial, dtype=float)
    values = functional @ state
    power = cycle
    cycles = 0
    for k in range(MAX_SQUARINGS):
        state = power @ state
        cycles += 2**k
        updated = functional @ state
        change = np.max(np.abs(updated - values) / np.maximum(np.abs(updated), 1e-300))
        values = updated
        if change < tol:
            break
        power = power @ power
    else:
        logger.warning("Cyclic steady state not reached after %d cycles (change %.2e)", cycles, change)
    state = state / state.sum()
    return state, cycles


class SteadyState(NamedTuple):
    state: np.ndarray
    windows: Dict[str, float]
    cycles: int


def cyclic_steady_state(
    seq: PulseSequence,
    zfs: ZfsParams,
    rates: RateParams,
    B_lab=(0.0, 0.0, 0.0),
    orientation: Optional[DefectOrientation] = None,
    initial: Optional[PopulationState] = None,
    tol: float = STEADY_STATE_TOL,
    complete_mixing: bool = False,
) -> SteadyState:
    """Cycle-start populations of an endlessly repeated sequence for one orientation"""
    orientation = orientation or enumerate_orientations()[0]
    run = _OrientationRun(zfs, rates, B_lab, orientation, complete_mixing)
    cycle, rows = run.compile(seq)
    start = (initial or PopulationState.ground()).as_array()
    state, cycles = _settle(cycle, rows, start, tol)
    return SteadyState(state, {label: float(row @ state) for label, row in rows.items()}, cycles)


class SequencePoint(NamedTuple):
    windows: Dict[str, float]
    per_family: Dict[str, Dict[str, float]]
    weights: Dict[str, float]
    cycles: int


def _orientation_groups(orientations, B_lab, group_direction):
    """(key, weight, members simulated) per family"""
    B = np.asarray(B_lab, dtype=float)
    total = len(orientations)
    if group_direction is None:
        if np.linalg.norm(B) == 0:
            return [("all", 1.0, [orientations[0]])]
        return [(f.key, f.multiplicity / total, [f.members[0]]) for f in group_by_field(orientations, B)]
    return [(f.key, f.multiplicity / total, list(f.members)) for f in group_by_field(orientations, group_direction)]


def run_sequence(
    seq: PulseSequence,
    zfs: ZfsParams,
    rates: RateParams,
    B_lab=(0.0, 0.0, 0.0),
    orientations: Optional[Sequence[DefectOrientation]] = None,
    initial: Optional[PopulationState] = None,
    tol: float = STEADY_STATE_TOL,
    group_direction=None,
    complete_mixing: bool = False,
) -> SequencePoint:
    """Labelled window integrals in the cyclic steady state, averaged over orientations

    Orientations sharing field angles are simulated once. With group_direction set,
    every orientation is simulated and grouped by its family for that direction.
    """
    seq.validate()
    orientations = list(orientations) if orientations else enumerate_orientations()
    start = (initial or PopulationState.ground()).as_array()

    per_family, weights = {}, {}
    max_cycles = 0
    for key, weight, members in _orientation_groups(orientations, B_lab, group_direction):
        sums = {label: 0.0 for label in seq.labels}
        for orientation in members:
            run = _OrientationRun(zfs, rates, B_lab, orientation, complete_mixing)
            cycle, rows = run.compile(seq)
            state, cycles = _settle(cycle, rows, start, tol)
            max_cycles = max(max_cycles, cycles)
            for label, row in rows.items():
                sums[label] += float(row @ state) / len(members)
        per_family[key] = sums
        weights[key] = weight

    windows = {label: sum(weights[k] * per_family[k][label] for k in per_family) for label in seq.labels}
    return SequencePoint(windows, per_family, weights, max_cycles)


def family_ratio(point: SequencePoint, numerator: str = "S", denominator: str = "R") -> Dict[str, float]:
    """Window ratio per family"""
    return {key: w[numerator] / w[denominator] for key, w in point.per_family.items()}


def _weighted(values: Dict[str, float], weights: Dict[str, float]) -> float:
    return float(sum(weights[k] * values[k] for k in values))


def _sweep(function, items, workers: int = 1):
    """Map over sweep points, optionally in worker processes; order is preserved"""
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(function, items))
    return [function(item) for item in items]


# Results


@dataclass
class ExperimentResult:
    """Sweep axis, total signal, optional family breakdown and extra columns"""

    recipe: str
    sweep_name: str
    sweep_units: str
    sweep: np.ndarray
    signal_name: str
    signal_units: str
    signal: np.ndarray
    per_family: Dict[str, np.ndarray] = field(default_factory=dict)
    family_weights: Dict[str, float] = field(default_factory=dict)
    extra: Dict[str, Tuple[str, np.ndarray]] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)
    fits: Dict[str, FitResult] = field(default_factory=dict)

    def __post_init__(self):
        self.sweep = np.asarray(self.sweep, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.signal.shape != self.sweep.shape:
            raise DomainError(f"Signal length {self.signal.size} does not match sweep length {self.sweep.size}")

    def family_total(self) -> np.ndarray:
        """Multiplicity-weighted sum of the family signals"""
        return sum(self.family_weights[k] * np.asarray(v) for k, v in self.per_family.items())

    def to_frame(self) -> pd.DataFrame:
        """Columns named 'name [units]'"""
        columns = {
            f"{self.sweep_name} [{self.sweep_units}]": self.sweep,
            f"{self.signal_name} [{self.signal_units}]": self.signal,
        }
        for key, values in self.per_family.items():
            columns[f"{self.signal_name}_{key} [{self.signal_units}]"] = np.asarray(values, dtype=float)
        for name, (units, values) in self.extra.items():
            columns[f"{name} [{units}]"] = np.asarray(values, dtype=float)
        return pd.DataFrame(columns)


def _with_family_columns(points, signal_of):
    """Per-family arrays and weights from a list of SequencePoint-derived dicts"""
    keys = list(points[0][0].keys())
    weights = points[0][1]
    per_family = {k: np.array([signal_of(p)[k] for p in points]) for k in keys}
    total = np.array([_weighted(signal_of(p), weights) for p in points])
    return per_family, weights, total


def _unit(vector):
    v = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DomainError("Field direction must be non-zero")
    return v / norm


# ODMR


def _odmr_contrast(
    frequency,
    *,
    zfs,
    rates,
    B_lab,
    t_a,
    t_b,
    mw_pulse_ns,
    rabi_rate,
    broadening,
    transition,
    power,
    pulse,
    window,
    scaling=None,
):
    """Per-family contrast (S/R)_MW / (S/R)_ref - 1 at one drive frequency"""
    if scaling is not None:
        rabi_rate = rabi_rate * float(np.interp(frequency, scaling[0], scaling[1]))
    drive = DriveParams(frequency=frequency, rabi_rate=rabi_rate, target_transition=transition)
    head = readout_pulse(power, pulse, window)
    with_mw = PulseSequence(head + [Wait(t_a), Microwave(drive, mw_pulse_ns, broadening), Wait(t_b)])
    reference = PulseSequence(head + [Wait(t_a + mw_pulse_ns * 1e-3 + t_b)])
    on = family_ratio(run_sequence(with_mw, zfs, rates, B_lab))
    point = run_sequence(reference, zfs, rates, B_lab)
    off = family_ratio(point)
    return {k: on[k] / off[k] - 1.0 for k in on}, point.weights


def _default_rabi_rate(mw_pulse_ns, rabi_rate):
    if rabi_rate is not None:
        return float(rabi_rate)
    # The pulse is a pi pulse on resonance
    return 1.0 / (2.0 * mw_pulse_ns * 1e-3)


def _scaling_table(table):
    if table is None:
        return None
    frequencies, factors = (np.asarray(column, dtype=float) for column in table)
    if frequencies.shape != factors.shape or frequencies.size < 2:
        raise DomainError("Rabi scaling table needs matching frequency and factor columns of length >= 2")
    if np.any(np.diff(frequencies) <= 0) or np.any(factors < 0):
        raise DomainError("Rabi scaling frequencies must ascend and factors be >= 0")
    return tuple(frequencies), tuple(factors)


def refine_peaks(x, y, min_height: float = 0.2) -> List[float]:
    """Local maxima above min_height of the maximum, refined by parabolic interpolation"""
    y = np.asarray(y, dtype=float)
    if y.max() <= 0:
        return []
    indices, _ = find_peaks(y, height=min_height * y.max())
    return [parabolic_peak(x, y, int(i)) for i in indices]


def recipe_odmr_spectrum(
    frequencies: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    B_lab=(0.0, 0.0, 0.0),
    t_a: float = 5.0,
    t_b: float = 5.0,
    mw_pulse_ns: float = 120.0,
    rabi_rate: Optional[float] = None,
    broadening: float = 20.0,
    ideal: bool = False,
    power: float = 20.0,
    pulse: float = 1.0,
    window: float = 0.2,
    rabi_scaling: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    workers: int = 1,
) -> ExperimentResult:
    """ODMR contrast vs MW frequency

    Each cycle is a laser pulse (S at its start, R at its end), a wait t_a, the MW
    pulse and a wait t_b. Contrast compares against the same cycle without MW.
    rabi_scaling is an optional (frequencies, factors) table multiplying the Rabi
    rate, interpolated linearly over the sweep.
    """
    frequencies = np.asarray(frequencies, dtype=float)
    if np.any(frequencies <= 0):
        raise DomainError("MW frequencies must be > 0")
    point = partial(
        _odmr_contrast,
        zfs=zfs,
        rates=rates,
        B_lab=tuple(np.asarray(B_lab, dtype=float)),
        t_a=t_a,
        t_b=t_b,
        mw_pulse_ns=mw_pulse_ns,
        rabi_rate=_default_rabi_rate(mw_pulse_ns, rabi_rate),
        broadening=0.0 if ideal else broadening,
        transition="plus",
        power=power,
        pulse=pulse,
        window=window,
        scaling=_scaling_table(rabi_scaling),
    )
    logger.info("ODMR spectrum: %d frequencies", frequencies.size)
    points = _sweep(point, frequencies, workers)
    per_family, weights, contrast = _with_family_columns(points, lambda p: p[0])

    lines = {t.name: t.frequency for t in transition_frequencies(zfs, B_lab, enumerate_orientations()[0])}
    summary = {"peaks": refine_peaks(frequencies, contrast), "transitions": lines}
    return ExperimentResult(
        "odmr",
        "frequency",
        "MHz",
        frequencies,
        "contrast",
        "fraction",
        contrast,
        per_family if len(per_family) > 1 else {},
        weights if len(per_family) > 1 else {},
        summary=summary,
    )


def recipe_contrast_map(
    t_a_values: Sequence[float],
    t_b_values: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    B_lab=(0.0, 0.0, 0.0),
    transition: str = "plus",
    mw_pulse_ns: float = 120.0,
    rabi_rate: Optional[float] = None,
    broadening: float = 20.0,
    ideal: bool = False,
    power: float = 20.0,
    pulse: float = 1.0,
    window: float = 0.2,
    workers: int = 1,
) -> ExperimentResult:
    """On-resonance ODMR contrast over the waits before (t_a) and after (t_b) the MW pulse

    The drive sits on the chosen transition of the first orientation; rows run
    over t_b fastest.
    """
    t_a_values = np.asarray(t_a_values, dtype=float)
    t_b_values = np.asarray(t_b_values, dtype=float)
    if np.any(t_a_values <= 0) or np.any(t_b_values <= 0):
        raise DomainError("Contrast-map waits must be > 0")
    if transition not in TRANSITIONS:
        raise DomainError(f"Unknown transition {transition!r}")

    line = {t.name: t.frequency for t in transition_frequencies(zfs, B_lab, enumerate_orientations()[0])}
    grid = list(itertools.product(t_a_values, t_b_values))

    def settings(pair):
        return dict(
            zfs=zfs,
            rates=rates,
            B_lab=tuple(np.asarray(B_lab, dtype=float)),
            t_a=float(pair[0]),
            t_b=float(pair[1]),
            mw_pulse_ns=mw_pulse_ns,
            rabi_rate=_default_rabi_rate(mw_pulse_ns, rabi_rate),
            broadening=0.0 if ideal else broadening,
            transition=transition,
            power=power,
            pulse=pulse,
            window=window,
        )

    logger.info("Contrast map: %d x %d points", t_a_values.size, t_b_values.size)
    points = _sweep(partial(_map_point, line[transition]), [settings(p) for p in grid], workers)
    _, _, contrast = _with_family_columns(points, lambda p: p[0])

    best = int(np.argmax(contrast))
    summary = {
        "drive_frequency": line[transition],
        "argmax_t_a": float(grid[best][0]),
        "argmax_t_b": float(grid[best][1]),
        "max_contrast": float(contrast[best]),
    }
    return ExperimentResult(
        "contrast-map",
        "t_a",
        "us",
        np.array([p[0] for p in grid]),
        "contrast",
        "fraction",
        contrast,
        extra={"t_b": ("us", np.array([p[1] for p in grid]))},
        summary=summary,
    )


def _map_point(frequency, kwargs):
    return _odmr_contrast(frequency, **kwargs)


# Field dependence


def recipe_field_split_spectrum(
    fields: Sequence[float],
    zfs: ZfsParams,
    direction=(1.0, 1.0, 1.0),
) -> ExperimentResult:
    """Lower-branch (plus) line of every orientation family vs field magnitude"""
    fields = np.asarray(fields, dtype=float)
    unit = _unit(direction)
    families = group_by_field(enumerate_orientations(), unit)
    total = sum(f.multiplicity for f in families)

    per_family = {}
    for family in families:
        per_family[family.key] = np.array(
            [transition_frequencies(zfs, b * unit, family.members[0])[0].frequency for b in fields]
        )
    weights = {f.key: f.multiplicity / total for f in families}
    mean_line = sum(weights[k] * v for k, v in per_family.items())
    summary = {
        "families": [
            {"key": f.key, "theta_deg": f.theta_deg, "phi_deg": f.phi_deg, "multiplicity": f.multiplicity}
            for f in families
        ]
    }
    return ExperimentResult(
        "field-split", "field", "mT", fields, "line", "MHz", mean_line, per_family, weights, summary=summary
    )


def parallel_family(families: Sequence[OrientationFamily]) -> OrientationFamily:
    """The family whose defect axis lies along the field, or the closest one"""
    closest = min(families, key=lambda f: f.theta_deg)
    if closest.theta_deg > 1e-6:
        logger.warning("No family parallel to the field; using theta = %.2f deg", closest.theta_deg)
    return closest


def _lac_point(field_mT, *, seq, zfs, rates, direction, axis):
    point = run_sequence(seq, zfs, rates, field_mT * direction, group_direction=axis)
    return family_ratio(point), point.weights


def recipe_lac_sweep(
    fields: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    misalignment_deg: float = 1.5,
    delay: float = 10.0,
    axis=(1.0, 1.0, 1.0),
    toward=(1.0, 1.0, -2.0),
    power: float = 20.0,
    pulse: float = 1.0,
    window: float = 0.2,
    workers: int = 1,
) -> ExperimentResult:
    """PL change S/R(B)/S/R(0) - 1 for a field swept near the defect axis

    Families are those of the nominal axis; every member is simulated at the
    tilted field. The anticrossing peak is located on the parallel family.
    """
    B_lac = lac_field(zfs)
    fields = np.asarray(fields, dtype=float)
    if misalignment_deg < 0:
        raise DomainError(f"Misalignment must be >= 0, got {misalignment_deg}")
    axis = _unit(axis)
    direction = misaligned_direction(axis, misalignment_deg, toward) if misalignment_deg > 0 else axis

    seq = PulseSequence(readout_pulse(power, pulse, window) + [Wait(delay)])
    baseline = _weighted(*_lac_point(0.0, seq=seq, zfs=zfs, rates=rates, direction=direction, axis=axis))

    point = partial(_lac_point, seq=seq, zfs=zfs, rates=rates, direction=direction, axis=axis)
    logger.info("LAC sweep: %d fields, misalignment %.2f deg", fields.size, misalignment_deg)
    points = _sweep(point, fields, workers)
    per_family, weights, total = _with_family_columns(
        points, lambda p: {k: v / baseline - 1.0 for k, v in p[0].items()}
    )

    parallel = parallel_family(group_by_field(enumerate_orientations(), axis)).key
    column = per_family[parallel]
    peak_index = int(np.argmax(column))
    summary = {
        "lac_field": B_lac,
        "parallel_family": parallel,
        "peak_field": parabolic_peak(fields, column, peak_index),
        "peak_signal": float(column[peak_index]),
        "direction": [float(c) for c in direction],
    }
    return ExperimentResult(
        "lac-sweep", "field", "mT", fields, "pl_change", "fraction", total, per_family, weights, summary=summary
    )


# Time-resolved recipes


def _trpl_point(delay, *, zfs, rates, B_on, power, pulse, window, complete_mixing):
    seq = PulseSequence(readout_pulse(power, pulse, window) + [Wait(delay)])
    zero = _weighted(*_ratio_point(run_sequence(seq, zfs, rates)))
    on = run_sequence(seq, zfs, rates, B_on, complete_mixing=complete_mixing)
    return {k: v - zero for k, v in family_ratio(on).items()}, on.weights


def _ratio_point(point):
    return family_ratio(point), point.weights


def _fit_biexp(delays, curve, rates):
    tau_1 = harmonic_tau_1(rates.tau_plus, rates.tau_minus)
    tau_eff = 1.0 / effective_decay_rate(rates.tau_0, tau_1)
    scale = max(float(np.max(np.abs(curve))), 1e-12)
    return fit("biexp_diff", delays, curve, init=[2.0 * scale, tau_1, tau_eff])


def recipe_trpl_differential(
    delays: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    B_on=(0.0, 0.0, 50.0),
    power: float = 20.0,
    pulse: float = 1.0,
    window: float = 0.2,
    complete_mixing: bool = False,
    workers: int = 1,
) -> ExperimentResult:
    """Delta S_B(tau) from the sequencer, with a biexponential fit"""
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0 or np.any(delays <= 0):
        raise DomainError("Delays must be > 0")
    point = partial(
        _trpl_point,
        zfs=zfs,
        rates=rates,
        B_on=tuple(np.asarray(B_on, dtype=float)),
        power=power,
        pulse=pulse,
        window=window,
        complete_mixing=complete_mixing,
    )
    logger.info("TRPL differential: %d delays", delays.size)
    points = _sweep(point, delays, workers)
    per_family, weights, delta = _with_family_columns(points, lambda p: p[0])

    result = _fit_biexp(delays, delta, rates)
    summary = {"argmax_delay": float(delays[int(np.argmax(delta))])}
    if result.converged:
        summary["fit_argmax"] = biexp_argmax(result.value("tau_1"), result.value("tau_eff"))
    return ExperimentResult(
        "trpl-diff",
        "delay",
        "us",
        delays,
        "delta_s",
        "fraction",
        delta,
        per_family if len(per_family) > 1 else {},
        weights if len(per_family) > 1 else {},
        summary=summary,
        fits={"biexp_diff": result},
    )


def _lifetime_point(delay, *, zfs, rates, drive, t_pi, angle, prep_wait, power, pulse, window):
    head = readout_pulse(power, pulse, window)
    plain = PulseSequence(head + [Wait(prep_wait + t_pi + delay)])
    rotated = PulseSequence(head + [Wait(prep_wait), Microwave(drive, t_pi * 1e3, angle=angle), Wait(delay)])
    s1 = _weighted(*_ratio_point(run_sequence(plain, zfs, rates)))
    s2 = _weighted(*_ratio_point(run_sequence(rotated, zfs, rates)))
    return s2 - s1


def recipe_lifetime_differential(
    delays: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    coh: CoherenceParams,
    transition: str = "plus",
    prep_wait: float = 5.0,
    rotation: str = "pi",
    power: float = 20.0,
    pulse: float = 1.0,
    window: float = 0.2,
    workers: int = 1,
) -> ExperimentResult:
    """S2 - S1: with and without a pulse on one transition before a dark delay"""
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise DomainError("Delays must be >= 0")
    angles = {"pi": np.pi, "2pi": 2.0 * np.pi}
    if rotation not in angles:
        raise DomainError(f"Rotation must be one of {sorted(angles)}, got {rotation!r}")

    lines = {t.name: t.frequency for t in transition_frequencies(zfs, np.zeros(3), enumerate_orientations()[0])}
    drive = DriveParams(frequency=lines[transition], rabi_rate=coh.rabi_rate, target_transition=transition)
    t_pi = 1.0 / (2.0 * coh.rabi_rate)
    point = partial(
        _lifetime_point,
        zfs=zfs,
        rates=rates,
        drive=drive,
        t_pi=t_pi,
        angle=angles[rotation],
        prep_wait=prep_wait,
        power=power,
        pulse=pulse,
        window=window,
    )
    logger.info("Lifetime differential on %s: %d delays", transition, delays.size)
    difference = np.array(_sweep(point, delays, workers))

    fits = {}
    scale = float(np.max(np.abs(difference)))
    if rotation == "pi" and scale > 0:
        tau_s = rates.tau_plus if transition == "plus" else rates.tau_minus
        fits["lifetime_diff"] = fit("lifetime_diff", delays, difference, init=[scale, tau_s, scale, rates.tau_0])
    signs = np.sign(difference[np.abs(difference) > 1e-12 * max(scale, 1e-300)])
    summary = {"sign_changes": int(np.count_nonzero(np.diff(signs))), "t_pi_ns": t_pi * 1e3}
    return ExperimentResult(
        "lifetime-diff", "delay", "us", delays, "delta_s", "fraction", difference, summary=summary, fits=fits
    )


def recipe_power_scan(
    powers: Sequence[float],
    zfs: ZfsParams,
    rates: RateParams,
    pulse: float = 1.0,
    period: float = 15.0,
    workers: int = 1,
) -> ExperimentResult:
    """Readout overshoot vs laser power; threshold where it drops below 5% of the lowest-power value"""
    powers = np.asarray(powers, dtype=float)
    if np.any(powers <= 0):
        raise DomainError("Laser powers must be > 0")
    point = partial(_overshoot_point, zfs=zfs, rates=rates, pulse=pulse, period=period)
    overshoot = np.array(_sweep(point, powers, workers))

    reference = overshoot[int(np.argmin(powers))]
    below = np.nonzero(overshoot < 0.05 * reference)[0]
    summary = {"threshold_power": float(powers[below[0]]) if below.size else None}
    return ExperimentResult("power-scan", "power", "uW", powers, "overshoot", "fraction", overshoot, summary=summary)


def _overshoot_point(power, *, zfs, rates, pulse, period):
    return readout_overshoot(rates, zfs, power, pulse=pulse, period=period)


def recipe_temperature(
    table: LifetimeTable,
    zfs: ZfsParams,
    rates: RateParams,
    delays: Sequence[float],
    B_on=(0.0, 0.0, 50.0),
    power: float = 200.0,
    activation_energy: float = 8.7,
    prefactor: float = 2.0e4,
    complete_mixing: bool = False,
) -> ExperimentResult:
    """Delta S_B maximum vs temperature with a thermally activated quench

    Lifetimes follow the tabulated values; the emitting fraction is
    1/(1 + A exp(-E_a/k_B T)). Both Arrhenius forms are fitted to the maxima.
    """
    delays = np.asarray(delays, dtype=float)
    maxima, fractions, peak_delays, tau_1_fit, tau_eff_fit = [], [], [], [], []
    for index, temperature in enumerate(table.temperatures):
        local = table.rates_at(index, rates)
        curve = simulate_trpl_differential(
            local, zfs, B_on, delays, pulse=(1.0, power), complete_mixing=complete_mixing
        )
        fraction = 1.0 / (1.0 + prefactor * np.exp(-activation_energy / (K_B_MEV_PER_K * temperature)))
        quenched = fraction * curve.delta_s
        best = int(np.argmax(quenched))
        maxima.append(float(quenched[best]))
        fractions.append(fraction)
        peak_delays.append(float(delays[best]))
        result = _fit_biexp(delays, quenched, local)
        tau_1_fit.append(result.value("tau_1") if result.converged else np.nan)
        tau_eff_fit.append(result.value("tau_eff") if result.converged else np.nan)
        logger.debug("T = %.1f K: max delta S %.4g at %.1f us", temperature, maxima[-1], peak_delays[-1])

    temperatures = table.temperatures
    maxima = np.array(maxima)
    fractions = np.array(fractions)
    fits = {
        "arrhenius_amplitude": fit("arrhenius_amplitude", temperatures, maxima, init=[maxima[0], 1e4, 7.5]),
        "arrhenius_exp": fit(
            "arrhenius_exp",
            temperatures,
            maxima,
            init=[maxima[-1] * np.exp(-7.5 / (K_B_MEV_PER_K * temperatures[-1])), 7.5],
        ),
        "active_fraction": fit("arrhenius_amplitude", temperatures, fractions, init=[0.9, 1e4, 7.5]),
    }
    extra = {
        "active_fraction": ("fraction", fractions),
        "peak_delay": ("us", np.array(peak_delays)),
        "tau_0": ("us", table.tau_0),
        "tau_1": ("us", table.tau_1),
        "tau_1_fit": ("us", np.array(tau_1_fit)),
        "tau_eff_fit": ("us", np.array(tau_eff_fit)),
    }
    return ExperimentResult(
        "temperature", "temperature", "K", temperatures, "delta_s_max", "fraction", maxima, extra=extra, fits=fits
    )


# Coherent control


def recipe_rabi(
    durations: Sequence[float],
    rates: RateParams,
    coh: CoherenceParams,
    powers: Optional[Sequence[float]] = None,
    reference_power: float = 1.0,
    decay: bool = True,
) -> ExperimentResult:
    """Rabi contrast vs pulse length; with powers, Rabi frequency vs sqrt(P)"""
    rabi = simulate_rabi(durations, rates, coh, powers=powers, reference_power=reference_power, decay=decay)
    frequency = extract_rabi_frequency(rabi.durations, rabi.contrast)
    fits = {}
    if decay and frequency > 0:
        fits["damped_sinusoid"] = fit(
            "damped_sinusoid",
            rabi.durations,
            rabi.contrast,
            init=[-0.5 * np.ptp(rabi.contrast), coh.rabi_decay or 1.0, frequency, 0.0, float(np.mean(rabi.contrast))],
        )
    summary = {
        "rabi_frequency": frequency,
        "configured_rabi_rate": coh.rabi_rate,
        "powers": rabi.powers.tolist(),
        "frequencies": rabi.frequencies.tolist(),
        "slope": rabi.slope,
        "intercept": rabi.intercept,
    }
    return ExperimentResult(
        "rabi", "duration", "us", rabi.durations, "contrast", "fraction", rabi.contrast, summary=summary, fits=fits
    )


def recipe_coherence(
    protocol: Protocol,
    rates: RateParams,
    coh: CoherenceParams,
    free_times: Sequence[float],
) -> ExperimentResult:
    """Ramsey, echo or CPMG contrast vs free evolution time with a mono-exponential fit"""
    result = simulate_protocol(protocol, rates, coh, free_times)
    times, contrast = result.free_times, result.contrast

    fits = {}
    if protocol.kind != "rabi" and contrast[0] > 0:
        below = np.nonzero(contrast < contrast[0] / np.e)[0]
        guess = times[below[0]] if below.size else times[-1]
        fits["monoexp"] = fit("monoexp", times, contrast, init=[contrast[0], max(guess, 1e-3), 0.0])
    summary = {
        "protocol": protocol.kind,
        "n_pulses": protocol.refocusing_pulses,
        "lifetime_bound": echo_decay_bound(rates, protocol.transition),
        "predicted_echo_time": echo_time(rates, coh, protocol.transition),
    }
    if "monoexp" in fits and fits["monoexp"].converged:
        summary["decay_time"] = fits["monoexp"].value("tau")
    return ExperimentResult(
        "coherence", "free_time", "us", times, "contrast", "fraction", contrast, summary=summary, fits=fits
    )
