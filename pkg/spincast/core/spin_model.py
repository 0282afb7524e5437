"""S=1 spin Hamiltonian, defect orientations and the level anticrossing"""

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from .errors import DomainError

logger = logging.getLogger("spincast.spin_model")

HERMITIAN_TOL = 1e-9
DEGENERACY_TOL = 1e-9
ANGLE_DECIMALS = 6

_SQRT2 = np.sqrt(2.0)

# Zero-field eigenbasis {|0>, |+>, |->} as columns in the |+1, 0, -1> basis
ZERO_FIELD_BASIS = np.array(
    [
        [0.0, 1.0 / _SQRT2, 1.0 / _SQRT2],
        [1.0, 0.0, 0.0],
        [0.0, 1.0 / _SQRT2, -1.0 / _SQRT2],
    ],
    dtype=complex,
)
ZERO_FIELD_LABELS = ("0", "+", "-")

# Transition name -> pair of zero-field labels
TRANSITIONS = {
    "plus": ("0", "+"),
    "minus": ("0", "-"),
    "pm": ("+", "-"),
}

# <111> defect axes and the <110> family the x axes are drawn from
_Z_AXES = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]


@dataclass(frozen=True)
class ZfsParams:
    """Zero-field splitting D, E (MHz) and gyromagnetic ratio (MHz/mT)"""

    D: float = -1210.0
    E: float = 520.0
    gamma_e: float = -28.0

    def __post_init__(self):
        for name in ("D", "E", "gamma_e"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"ZFS parameter {name} must be finite")
        if self.E < 0:
            raise DomainError(f"E must be >= 0, got {self.E}")


@dataclass(frozen=True)
class SpinMatrices:
    """Spin-1 operators in the |+1, 0, -1> basis"""

    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray


@dataclass(frozen=True)
class DefectOrientation:
    """One crystallographic (z, x) frame of the defect"""

    z_axis: Tuple[float, float, float]
    x_axis: Tuple[float, float, float]
    label: str = ""

    def __post_init__(self):
        z = np.asarray(self.z_axis, dtype=float)
        x = np.asarray(self.x_axis, dtype=float)
        if abs(np.linalg.norm(z) - 1.0) > 1e-12 or abs(np.linalg.norm(x) - 1.0) > 1e-12:
            raise DomainError(f"Orientation {self.label!r} axes must be unit vectors")
        if abs(np.dot(z, x)) > 1e-12:
            raise DomainError(f"Orientation {self.label!r} axes are not perpendicular")

    @property
    def y_axis(self):
        return tuple(np.cross(self.z_axis, self.x_axis))

    @property
    def rotation(self):
        """Rows are the defect axes expressed in lab coordinates"""
        return np.array([self.x_axis, self.y_axis, self.z_axis], dtype=float)


@dataclass(frozen=True)
class SpinSpectrum:
    """Eigen-decomposition of the spin Hamiltonian"""

    energies: np.ndarray
    states: np.ndarray
    zero_field_overlaps: np.ndarray


@dataclass(frozen=True)
class OrientationFamily:
    """Orientations sharing the same field angles"""

    theta_deg: float
    phi_deg: float
    multiplicity: int
    members: Tuple[DefectOrientation, ...]

    @property
    def label(self):
        return f"theta={self.theta_deg:.2f} phi={self.phi_deg:.0f}"

    @property
    def key(self):
        """Column-safe identifier"""
        return f"theta{self.theta_deg:.2f}_phi{self.phi_deg:.0f}"


class Transition(NamedTuple):
    name: str
    frequency: float
    lower: int
    upper: int


def _readonly(matrix):
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=1)
def spin_operators() -> SpinMatrices:
    """Spin-1 matrices in the |+1, 0, -1> basis"""
    sx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _SQRT2
    sy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _SQRT2
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return SpinMatrices(_readonly(sx), _readonly(sy), _readonly(sz))


def build_hamiltonian(zfs: ZfsParams, B_defect) -> np.ndarray:
    """ZFS plus Zeeman Hamiltonian (MHz) for a field given in the defect frame"""
    S = spin_operators()
    bx, by, bz = np.asarray(B_defect, dtype=float)
    H = (
        zfs.D * (S.Sz @ S.Sz)
        + zfs.E * (S.Sx @ S.Sx - S.Sy @ S.Sy)
        - zfs.gamma_e * (bx * S.Sx + by * S.Sy + bz * S.Sz)
    )
    return 0.5 * (H + H.conj().T)


def _resolve_degeneracies(energies, vectors, tol):
    """Rebuild degenerate clusters from projected zero-field states, |0> first"""
    vectors = vectors.copy()
    i = 0
    while i < len(energies):
        j = i
        while j + 1 < len(energies) and energies[j + 1] - energies[i] <= tol:
            j += 1
        size = j - i + 1
        if size > 1:
            subspace = vectors[:, i : j + 1]
            projector = subspace @ subspace.conj().T
            chosen = []
            for candidate in ZERO_FIELD_BASIS.T:
                w = projector @ candidate
                for u in chosen:
                    w = w - (u.conj() @ w) * u
                norm = np.linalg.norm(w)
                if norm > 1e-6:
                    chosen.append(w / norm)
                if len(chosen) == size:
                    break
            vectors[:, i : j + 1] = np.column_stack(chosen)
        i = j + 1
    return vectors


def _fix_phases(vectors):
    """Make the first sizeable component of each state real and positive"""
    fixed = vectors.copy()
    for k in range(fixed.shape[1]):
        column = fixed[:, k]
        magnitudes = np.abs(column)
        pivot = int(np.argmax(magnitudes > 0.5 * magnitudes.max()))
        phase = column[pivot] / magnitudes[pivot]
        fixed[:, k] = column / phase
    return fixed


def eigen_spectrum(H, zfs: Optional[ZfsParams] = None) -> SpinSpectrum:
    """Ascending eigenpairs plus overlaps with the zero-field basis"""
    H = np.asarray(H, dtype=complex)
    if H.shape != (3, 3):
        raise DomainError(f"Hamiltonian must be 3x3, got {H.shape}")
    asymmetry = np.max(np.abs(H - H.conj().T))
    if asymmetry > HERMITIAN_TOL:
        raise DomainError(f"Hamiltonian is not Hermitian (deviation {asymmetry:.3e})")

    energies, vectors = eigh(0.5 * (H + H.conj().T))
    scale = max(1.0, float(np.max(np.abs(energies))))
    if zfs is not None:
        scale = max(scale, abs(zfs.D), abs(zfs.E))
    vectors = _fix_phases(_resolve_degeneracies(energies, vectors, DEGENERACY_TOL * scale))

    # overlaps[i, k] = |<zero-field i | state k>|^2
    overlaps = np.abs(ZERO_FIELD_BASIS.conj().T @ vectors) ** 2
    return SpinSpectrum(
        energies=_readonly(np.asarray(energies, dtype=float)),
        states=_readonly(vectors),
        zero_field_overlaps=_readonly(overlaps),
    )


def dominant_labels(spectrum: SpinSpectrum) -> Tuple[str, str, str]:
    """Zero-field character of each eigenstate (overlap-maximising assignment)"""
    overlaps = spectrum.zero_field_overlaps
    best = max(
        itertools.permutations(range(3)),
        key=lambda perm: sum(overlaps[perm[k], k] for k in range(3)),
    )
    return tuple(ZERO_FIELD_LABELS[best[k]] for k in range(3))


def field_in_defect_frame(B_lab, orientation: DefectOrientation) -> np.ndarray:
    """Components of a lab-frame field along the defect (x, y, z) axes"""
    return orientation.rotation @ np.asarray(B_lab, dtype=float)


def spectrum_at(zfs: ZfsParams, B_lab, orientation: DefectOrientation) -> SpinSpectrum:
    """Spin spectrum of one orientation in a lab-frame field"""
    H = build_hamiltonian(zfs, field_in_defect_frame(B_lab, orientation))
    return eigen_spectrum(H, zfs)


def transition_frequencies(
    zfs: ZfsParams, B_lab, orientation: DefectOrientation
) -> Tuple[Transition, Transition, Transition]:
    """The three transition frequencies labeled plus, minus and pm"""
    spectrum = spectrum_at(zfs, B_lab, orientation)
    labels = dominant_labels(spectrum)
    index = {label: k for k, label in enumerate(labels)}
    transitions = []
    for name, (a, b) in TRANSITIONS.items():
        i, j = sorted((index[a], index[b]))
        frequency = float(abs(spectrum.energies[j] - spectrum.energies[i]))
        transitions.append(Transition(name, frequency, i, j))
    return tuple(transitions)


def _miller(vector):
    return "[" + "".join(str(int(c)) for c in vector) + "]"


def _x_axes_for(z_axis):
    """<110> directions perpendicular to z, sign-canonical (first nonzero negative)"""
    axes = set()
    for candidate in itertools.product((-1, 0, 1), repeat=3):
        if sum(1 for c in candidate if c != 0) != 2:
            continue
        if np.dot(candidate, z_axis) != 0:
            continue
        first = next(c for c in candidate if c != 0)
        if first > 0:
            candidate = tuple(-c for c in candidate)
        axes.add(candidate)
    return sorted(axes)


@lru_cache(maxsize=1)
def _orientation_table():
    orientations = []
    for z in _Z_AXES:
        for x in _x_axes_for(z):
            orientations.append(
                DefectOrientation(
                    z_axis=tuple(np.asarray(z, dtype=float) / np.sqrt(3.0)),
                    x_axis=tuple(np.asarray(x, dtype=float) / _SQRT2),
                    label=f"z={_miller(z)} x={_miller(x)}",
                )
            )
    return tuple(orientations)


def enumerate_orientations() -> List[DefectOrientation]:
    """All 12 (z, x) frames: 4 <111> axes times 3 perpendicular <110> axes"""
    return list(_orientation_table())


def field_angles(b_defect) -> Tuple[float, float]:
    """Polar and azimuthal angles (deg) reduced by the spectrum symmetries

    B -> -B leaves the spectrum unchanged, so theta is folded into [0, 90].
    The E term is symmetric under phi -> -phi and phi -> phi + 180; azimuths
    are reported in [-90, 90) with the non-negative member preferred.
    """
    b = np.asarray(b_defect, dtype=float)
    norm = np.linalg.norm(b)
    if norm == 0:
        raise DomainError("Field direction must be non-zero")
    b = b / norm
    if b[2] < 0:
        b = -b
    theta = float(np.degrees(np.arccos(np.clip(b[2], -1.0, 1.0))))
    if np.hypot(b[0], b[1]) < 1e-12:
        return theta, 0.0
    phi = float(np.degrees(np.arctan2(b[1], b[0])))
    phi = abs(((phi + 90.0) % 180.0) - 90.0)
    if abs(phi - 90.0) < 1e-9:
        phi = -90.0
    return theta, phi


def group_by_field(
    orientations: Sequence[DefectOrientation], B_direction
) -> List[OrientationFamily]:
    """Partition orientations into families with equivalent field angles"""
    direction = np.asarray(B_direction, dtype=float)
    if np.linalg.norm(direction) == 0:
        raise DomainError("B_direction must be non-zero")
    direction = direction / np.linalg.norm(direction)

    groups = {}
    for orientation in orientations:
        theta, phi = field_angles(field_in_defect_frame(direction, orientation))
        key = (round(theta, ANGLE_DECIMALS), round(phi, ANGLE_DECIMALS))
        groups.setdefault(key, []).append(orientation)

    families = [
        OrientationFamily(theta, phi, len(members), tuple(members))
        for (theta, phi), members in sorted(groups.items())
    ]
    logger.debug("Grouped %d orientations into %d families", len(orientations), len(families))
    return families


def lac_field(zfs: ZfsParams) -> float:
    """Field (mT) where |0> and |+1> cross on the defect axis"""
    if abs(zfs.E) >= abs(zfs.D):
        raise DomainError(
            f"No level anticrossing: |E| = {abs(zfs.E)} must be below |D| = {abs(zfs.D)}"
        )
    if zfs.gamma_e == 0:
        raise DomainError("gamma_e must be non-zero")
    return float(np.sqrt(zfs.D**2 - zfs.E**2) / abs(zfs.gamma_e))


def zfs_from_lines(nu_plus: float, nu_minus: float, gamma_e: float = -28.0) -> ZfsParams:
    """ZFS parameters from the two zero-field ESR lines (MHz)"""
    if not 0 < nu_plus <= nu_minus:
        raise DomainError(
            f"ESR lines must satisfy 0 < nu_plus <= nu_minus, got {nu_plus}, {nu_minus}"
        )
    return ZfsParams(
        D=-(nu_minus + nu_plus) / 2.0, E=(nu_minus - nu_plus) / 2.0, gamma_e=gamma_e
    )


def zfs_axial_components(zfs: ZfsParams) -> Tuple[float, float]:
    """Principal components D_x = -D/3 + E and D_z = 2D/3"""
    return -zfs.D / 3.0 + zfs.E, 2.0 * zfs.D / 3.0


def misaligned_direction(axis, angle_deg: float, toward=None) -> np.ndarray:
    """Unit vector tilted away from axis by angle_deg toward a second direction"""
    if angle_deg < 0:
        raise DomainError(f"Misalignment must be >= 0, got {angle_deg}")
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    if toward is None:
        toward = np.eye(3)[int(np.argmin(np.abs(a)))]
    t = np.asarray(toward, dtype=float)
    t = t - np.dot(t, a) * a
    if np.linalg.norm(t) < 1e-12:
        raise DomainError("Tilt direction is parallel to the axis")
    t = t / np.linalg.norm(t)
    angle = np.radians(angle_deg)
    return np.cos(angle) * a + np.sin(angle) * t
