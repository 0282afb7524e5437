"""Three-level density-matrix engine for microwave control of the metastable triplet

Basis order is (|0>, |+>, |->). Density matrices are vectorised row-major, so
vec(A rho B) = kron(A, B.T) vec(rho). Frequencies are in MHz, times in us.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

from .errors import DomainError
from .fitting import fit, get_model
from .photodynamics import RateParams
from .validators import ParameterValidator

logger = logging.getLogger("spincast.coherence")

DIM = 3
TRIPLET_INDEX = {"0": 0, "+": 1, "-": 2}
TRANSITION_PAIRS = {"plus": (0, 1), "minus": (0, 2)}
PROTOCOL_KINDS = ("rabi", "ramsey", "echo", "cpmg")

_OFF_DIAGONAL = (1.0 - np.eye(DIM)).reshape(-1)
_IDENTITY = np.eye(DIM)


@dataclass(frozen=True)
class DriveParams:
    """Microwave drive on one transition of the triplet"""

    frequency: float
    rabi_rate: float
    phase: float = 0.0
    target_transition: str = "plus"

    def __post_init__(self):
        if self.rabi_rate < 0:
            raise DomainError(f"rabi_rate must be >= 0, got {self.rabi_rate}")
        if self.frequency <= 0:
            raise DomainError(f"Drive frequency must be > 0, got {self.frequency}")
        if self.target_transition not in TRANSITION_PAIRS:
            raise DomainError(
                f"Unknown transition {self.target_transition!r}; expected one of {sorted(TRANSITION_PAIRS)}"
            )


@dataclass(frozen=True)
class CoherenceParams:
    t2_star: float = 0.027
    gamma_phi_dyn: float = 0.2038
    rabi_decay: Optional[float] = 0.230
    pi_half_ns: float = 7.2
    quadrature_nodes: int = 201
    ideal_pulses: bool = False

    def __post_init__(self):
        errors, _ = ParameterValidator.validate_coherence(
            self.t2_star, self.gamma_phi_dyn, self.rabi_decay, self.pi_half_ns, self.quadrature_nodes
        )
        if errors:
            raise DomainError(errors[0])

    @property
    def detuning_hwhm(self):
        """Lorentzian half width (MHz) whose ensemble average decays as exp(-t/T2*)"""
        return 1.0 / (2.0 * np.pi * self.t2_star)

    @property
    def rabi_rate(self):
        return rabi_rate_from_pi_half(self.pi_half_ns)


@dataclass(frozen=True)
class Protocol:
    """Pulse protocol; echo is cpmg with a single refocusing pulse"""

    kind: str = "echo"
    n_pulses: int = 1
    transition: str = "plus"

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise DomainError(f"Unknown protocol {self.kind!r}; expected one of {PROTOCOL_KINDS}")
        if self.n_pulses < 1:
            raise DomainError(f"CPMG needs n >= 1, got {self.n_pulses}")
        if self.transition not in TRANSITION_PAIRS:
            raise DomainError(f"Unknown transition {self.transition!r}")

    @property
    def refocusing_pulses(self):
        if self.kind == "echo":
            return 1
        if self.kind == "cpmg":
            return self.n_pulses
        return 0


class DensityEvolution(NamedTuple):
    rho: np.ndarray
    leaked: float


class ProtocolResult(NamedTuple):
    free_times: np.ndarray
    contrast: np.ndarray


class RabiResult(NamedTuple):
    durations: np.ndarray
    contrast: np.ndarray
    powers: np.ndarray
    frequencies: np.ndarray
    slope: Optional[float]
    intercept: Optional[float]


def rabi_rate_from_pi_half(pi_half_ns: float) -> float:
    """Rabi frequency (MHz) for a given pi/2 duration (ns)"""
    if pi_half_ns <= 0:
        raise DomainError("pi/2 duration must be > 0")
    return 1.0 / (4.0 * pi_half_ns * 1e-3)


def rabi_spread(coh: CoherenceParams, rabi_rate: float) -> float:
    """Relative Lorentzian spread of the drive amplitude giving the configured envelope"""
    if coh.rabi_decay is None or rabi_rate <= 0:
        return 0.0
    return 1.0 / (2.0 * np.pi * coh.rabi_decay * rabi_rate)


def echo_decay_bound(rates: RateParams, transition: str = "plus") -> float:
    """Lifetime-limited coherence time 2/(Gamma_0 + Gamma_pair)"""
    a, b = TRANSITION_PAIRS[transition]
    loss = rates.intrinsic_rates
    return 2.0 / (loss[a] + loss[b])


def echo_time(rates: RateParams, coh: CoherenceParams, transition: str = "plus") -> float:
    """Echo decay time including residual dynamic dephasing"""
    return 1.0 / (1.0 / echo_decay_bound(rates, transition) + coh.gamma_phi_dyn)


def gamma_phi_for_echo_time(rates: RateParams, target: float, transition: str = "plus") -> float:
    """Dynamic dephasing rate that brings the echo time down to target"""
    bound = echo_decay_bound(rates, transition)
    if target > bound:
        raise DomainError(f"Echo time {target} us exceeds the lifetime bound {bound:.4g} us")
    return 1.0 / target - 1.0 / bound


def lorentzian_nodes(center: float, hwhm: float, n: int = 201) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights for a Lorentzian distribution

    Gauss-Legendre nodes on (-1, 1) are mapped through center + hwhm*tan(pi*u/2),
    which turns the Lorentzian average into a uniform one. Weights sum to 1.
    """
    if n < 201 or n % 2 == 0:
        raise DomainError(f"Quadrature needs an odd node count >= 201, got {n}")
    if hwhm < 0:
        raise DomainError("Lorentzian width must be >= 0")
    u, w = leggauss(n)
    return center + hwhm * np.tan(0.5 * np.pi * u), 0.5 * w


def transfer_probability(drive: DriveParams, detuning, duration: float):
    """Coherent population transfer on the addressed pair (no decay); detuning may be an array"""
    detuning = np.asarray(detuning, dtype=float)
    omega_sq = drive.rabi_rate**2 + detuning**2
    safe = np.where(omega_sq > 0, omega_sq, 1.0)
    p = np.where(
        omega_sq > 0,
        drive.rabi_rate**2 / safe * np.sin(np.pi * np.sqrt(omega_sq) * duration) ** 2,
        0.0,
    )
    return float(p) if p.ndim == 0 else p


def pure_state(label: str) -> np.ndarray:
    """Projector onto one zero-field triplet state"""
    rho = np.zeros((DIM, DIM), dtype=complex)
    index = TRIPLET_INDEX[label]
    rho[index, index] = 1.0
    return rho


def pair_hamiltonian(transition: str, detuning: float, rabi_rate: float, phase: float) -> np.ndarray:
    """Rotating-frame Hamiltonian (MHz) on the addressed pair; spectator at zero"""
    a, b = TRANSITION_PAIRS[transition]
    H = np.zeros((DIM, DIM), dtype=complex)
    H[a, a] = -0.5 * detuning
    H[b, b] = 0.5 * detuning
    H[a, b] = 0.5 * rabi_rate * np.exp(-1j * phase)
    H[b, a] = np.conj(H[a, b])
    return H


def liouvillian(hamiltonian: np.ndarray, loss, gamma_phi: float) -> np.ndarray:
    """Superoperator for coherent evolution, sublevel leakage and pure dephasing"""
    G = np.diag(np.asarray(loss, dtype=float))
    L = -2j * np.pi * (np.kron(hamiltonian, _IDENTITY) - np.kron(_IDENTITY, hamiltonian.T))
    L -= 0.5 * (np.kron(G, _IDENTITY) + np.kron(_IDENTITY, G))
    L -= gamma_phi * np.diag(_OFF_DIAGONAL)
    return L


@lru_cache(maxsize=4096)
def _drive_propagator(transition, detuning, rabi_rate, phase, loss, gamma_phi, duration):
    H = pair_hamiltonian(transition, detuning, rabi_rate, phase)
    return expm(liouvillian(H, loss, gamma_phi) * duration)


def _free_diagonal(transition, detuning, loss, gamma_phi):
    """Diagonal of the undriven Liouvillian"""
    H = pair_hamiltonian(transition, detuning, 0.0, 0.0)
    return np.diag(liouvillian(H, loss, gamma_phi))


def ideal_rotation(transition: str, angle: float, phase: float) -> np.ndarray:
    """Instantaneous rotation superoperator on the addressed pair"""
    a, b = TRANSITION_PAIRS[transition]
    U = np.eye(DIM, dtype=complex)
    c, s = np.cos(0.5 * angle), np.sin(0.5 * angle)
    U[a, a] = U[b, b] = c
    U[a, b] = -1j * s * np.exp(-1j * phase)
    U[b, a] = -1j * s * np.exp(1j * phase)
    return np.kron(U, U.conj())


def _check_density(rho):
    if rho.shape != (DIM, DIM):
        raise DomainError(f"Density matrix must be {DIM}x{DIM}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise DomainError("Density matrix must be Hermitian")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -1e-10:
        raise DomainError("Density matrix must be positive semidefinite")
    if np.trace(rho).real > 1 + 1e-9:
        raise DomainError("Density matrix trace must be <= 1")


def evolve_density_matrix(
    initial,
    drive: DriveParams,
    detuning: float,
    rates: RateParams,
    coh: CoherenceParams,
    duration: float,
) -> DensityEvolution:
    """Driven evolution with leakage to GS; returns the state and the population leaked during this call"""
    rho = np.asarray(initial, dtype=complex)
    _check_density(rho)
    if duration < 0:
        raise DomainError(f"Duration must be >= 0, got {duration}")

    U = _drive_propagator(
        drive.target_transition,
        float(detuning),
        float(drive.rabi_rate),
        float(drive.phase),
        tuple(rates.intrinsic_rates),
        float(coh.gamma_phi_dyn),
        float(duration),
    )
    out = (U @ rho.reshape(-1)).reshape(DIM, DIM)
    out = 0.5 * (out + out.conj().T)
    return DensityEvolution(out, float(np.trace(rho).real - np.trace(out).real))


def _sample_evolution(L, vec0, times):
    """Vectorised states at each time (columns), stepping on uniform grids"""
    times = np.asarray(times, dtype=float)
    states = np.empty((vec0.size, times.size), dtype=complex)
    steps = np.diff(times)
    if times.size > 1 and np.allclose(steps, steps[0], rtol=1e-9, atol=1e-15):
        step = expm(L * steps[0])
        states[:, 0] = expm(L * times[0]) @ vec0
        for k in range(1, times.size):
            states[:, k] = step @ states[:, k - 1]
    else:
        for k, t in enumerate(times):
            states[:, k] = expm(L * t) @ vec0
    return states


def _population(states, index):
    return states[index * DIM + index].real


def _rabi_contrast(durations, rabi_rate, rates, coh, transition, decay):
    """|0> fraction of the surviving triplet population after a resonant pulse"""
    durations = np.asarray(durations, dtype=float)
    if rabi_rate == 0:
        return np.zeros_like(durations)

    a, b = TRANSITION_PAIRS[transition]
    label = "+" if b == 1 else "-"
    vec0 = pure_state(label).reshape(-1)
    if decay:
        loss, gamma_phi = rates.intrinsic_rates, coh.gamma_phi_dyn
        spread = rabi_spread(coh, rabi_rate)
    else:
        loss, gamma_phi, spread = np.zeros(DIM), 0.0, 0.0

    if spread > 0:
        amplitudes, weights = lorentzian_nodes(rabi_rate, spread * rabi_rate, coh.quadrature_nodes)
    else:
        amplitudes, weights = np.array([rabi_rate]), np.array([1.0])

    contrast = np.zeros_like(durations)
    for amplitude, weight in zip(amplitudes, weights):
        L = liouvillian(pair_hamiltonian(transition, 0.0, amplitude, 0.0), loss, gamma_phi)
        states = _sample_evolution(L, vec0, durations)
        triplet = sum(_population(states, k) for k in range(DIM))
        contrast += weight * _population(states, a) / triplet
    return contrast


def extract_rabi_frequency(durations, contrast) -> float:
    """Oscillation frequency (MHz) of a Rabi trace: FFT seed refined by a damped-sinusoid fit"""
    durations = np.asarray(durations, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    if np.ptp(contrast) < 1e-9:
        return 0.0

    step = durations[1] - durations[0]
    spectrum = np.abs(np.fft.rfft(contrast - contrast.mean()))
    frequencies = np.fft.rfftfreq(contrast.size, d=step)
    seed = frequencies[1 + int(np.argmax(spectrum[1:]))]

    span = durations[-1] - durations[0]
    init = [-0.5 * np.ptp(contrast), 10.0 * span, seed, 0.0, contrast.mean()]
    result = fit(get_model("damped_sinusoid"), durations, contrast, init=init)
    frequency = abs(result.value("f"))
    resolution = frequencies[1]
    if not np.isfinite(frequency) or abs(frequency - seed) > resolution:
        logger.warning("Rabi fit left the FFT peak (%s); using FFT estimate", result.message)
        return float(seed)
    if not result.converged:
        logger.debug("Rabi fit stalled after %d iterations", result.iterations)
    return float(frequency)


def simulate_rabi(
    durations: Sequence[float],
    rates: RateParams,
    coh: CoherenceParams,
    rabi_rate: Optional[float] = None,
    powers: Optional[Sequence[float]] = None,
    reference_power: float = 1.0,
    decay: bool = True,
    transition: str = "plus",
) -> RabiResult:
    """Rabi contrast vs pulse length, optionally scanning MW power with rate ~ sqrt(P)

    The envelope comes from a Lorentzian spread of drive amplitudes sized so that
    the ensemble damping time equals the configured Rabi decay.
    """
    durations = np.asarray(durations, dtype=float)
    errors, _ = ParameterValidator.validate_sweep(durations, "durations")
    if errors:
        raise DomainError(errors[0])
    base_rate = coh.rabi_rate if rabi_rate is None else float(rabi_rate)

    contrast = _rabi_contrast(durations, base_rate, rates, coh, transition, decay)

    powers = np.asarray(powers if powers is not None else [], dtype=float)
    if powers.size == 0:
        return RabiResult(durations, contrast, powers, np.array([]), None, None)
    if np.any(powers < 0) or reference_power <= 0:
        raise DomainError("MW powers must be >= 0 and the reference power > 0")

    frequencies = []
    for power in powers:
        rate = base_rate * np.sqrt(power / reference_power)
        trace = _rabi_contrast(durations, rate, rates, coh, transition, decay)
        frequencies.append(extract_rabi_frequency(durations, trace))
    frequencies = np.array(frequencies)
    logger.debug("Rabi power scan: %d powers", powers.size)

    slope = intercept = None
    if powers.size > 2:
        scan_fit = fit(
            get_model("sqrt_linear"),
            powers,
            frequencies,
            init=[base_rate / np.sqrt(reference_power), 0.0],
        )
        slope, intercept = scan_fit.value("a"), scan_fit.value("b")
    return RabiResult(durations, contrast, powers, frequencies, slope, intercept)


def _protocol_schedule(protocol: Protocol):
    """Free-evolution fractions and refocusing pulses between the two pi/2 pulses"""
    n = protocol.refocusing_pulses
    if n == 0:
        return [1.0]
    return [0.5 / n] + [1.0 / n] * (n - 1) + [0.5 / n]


def _node_contrast(protocol, free_times, detuning, rabi_rate, loss, gamma_phi, ideal):
    transition = protocol.transition
    loss_key = tuple(float(x) for x in loss)

    def pulse(angle, phase):
        if ideal:
            return ideal_rotation(transition, angle, phase)
        duration = angle / (2.0 * np.pi * rabi_rate)
        return _drive_propagator(
            transition, float(detuning), float(rabi_rate), float(phase), loss_key, float(gamma_phi), duration
        )

    free = _free_diagonal(transition, detuning, loss, gamma_phi)
    _, b = TRANSITION_PAIRS[transition]
    start = pure_state("+" if b == 1 else "-").reshape(-1)

    states = np.repeat((pulse(0.5 * np.pi, 0.0) @ start)[:, None], free_times.size, axis=1)
    fractions = _protocol_schedule(protocol)
    refocus = pulse(np.pi, 0.5 * np.pi)
    for k, fraction in enumerate(fractions):
        states = np.exp(free[:, None] * (fraction * free_times)[None, :]) * states
        if k < len(fractions) - 1:
            states = refocus @ states

    p_same = _population(pulse(0.5 * np.pi, 0.0) @ states, 0)
    p_flip = _population(pulse(0.5 * np.pi, np.pi) @ states, 0)
    return p_same - p_flip


def simulate_protocol(
    protocol: Protocol,
    rates: RateParams,
    coh: CoherenceParams,
    free_times: Sequence[float],
    center_detuning: float = 0.0,
    rabi_rate: Optional[float] = None,
    ideal: Optional[bool] = None,
) -> ProtocolResult:
    """Ensemble contrast vs total free evolution time

    Contrast is P0 after a final pi/2 pulse at phase 0 minus P0 at phase pi,
    starting from the upper state of the addressed pair. Static detunings are
    averaged over a Lorentzian of half width 1/(2 pi T2*).
    """
    free_times = np.asarray(free_times, dtype=float)
    errors, _ = ParameterValidator.validate_sweep(free_times, "free_times")
    if errors:
        raise DomainError(errors[0])

    rate = coh.rabi_rate if rabi_rate is None else float(rabi_rate)
    if protocol.kind == "rabi":
        contrast = _rabi_contrast(free_times, rate, rates, coh, protocol.transition, True)
        return ProtocolResult(free_times, contrast)

    ideal = coh.ideal_pulses if ideal is None else ideal
    nodes, weights = lorentzian_nodes(center_detuning, coh.detuning_hwhm, coh.quadrature_nodes)
    contrast = np.zeros_like(free_times)
    for detuning, weight in zip(nodes, weights):
        contrast += weight * _node_contrast(
            protocol, free_times, detuning, rate, rates.intrinsic_rates, coh.gamma_phi_dyn, ideal
        )
    logger.debug(
        "%s (n=%d): %d free times, %d detuning nodes",
        protocol.kind,
        protocol.refocusing_pulses,
        free_times.size,
        nodes.size,
    )
    return ProtocolResult(free_times, contrast)
