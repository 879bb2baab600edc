"""
Static trap physics: where a stray field pushes the ion, what laser phase the
ion sees there, and which field direction a probing method is sensitive to.

All quantities are SI. Axes are the secular eigenmode frame: x and y radial,
z axial.
"""

from dataclasses import dataclass
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import constants

from trapcal.errors import DegenerateDirection, IonLost

logger = logging.getLogger(__name__)

Vector3 = Tuple[float, float, float]

DEFAULT_PI_TIME = 10e-6
DEFAULT_WAVELENGTH = 674e-9


def wrap_phase(phase):
    """
    Reduce a phase (scalar or array) to [-pi, pi)
    """
    return np.mod(np.asarray(phase) + np.pi, 2 * np.pi) - np.pi


def _as_vector3(values: Sequence[float], name: str) -> Vector3:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {array.shape[0]}")
    return tuple(float(v) for v in array)


@dataclass(frozen=True)
class IonSpecies:
    charge: float
    mass: float

    def __post_init__(self):
        if self.charge <= 0:
            raise ValueError(f"Ion charge must be positive, got {self.charge}")
        if self.mass <= 0:
            raise ValueError(f"Ion mass must be positive, got {self.mass}")

    @classmethod
    def from_mass_u(cls, mass_u: float, charge_e: float = 1.0) -> "IonSpecies":
        return cls(
            charge=charge_e * constants.elementary_charge,
            mass=mass_u * constants.atomic_mass,
        )

    @classmethod
    def sr88(cls) -> "IonSpecies":
        return cls.from_mass_u(88.0, 1.0)

    @property
    def charge_to_mass(self) -> float:
        return self.charge / self.mass


@dataclass(frozen=True)
class TrapSetting:
    """
    Secular frequencies of one trap stiffness configuration

    :param label: Identifier used by pulse sequences to refer to this setting
    :param secular: Angular secular frequencies (rad/s) along x, y, z
    """

    label: str
    secular: Vector3

    def __post_init__(self):
        secular = _as_vector3(self.secular, "secular")
        if not all(math.isfinite(w) and w > 0 for w in secular):
            raise IonLost(
                f"Trap setting '{self.label}' does not confine the ion: {secular}"
            )
        object.__setattr__(self, "secular", secular)

    @classmethod
    def from_hz(cls, label: str, secular_hz: Sequence[float]) -> "TrapSetting":
        return cls(label, tuple(2 * np.pi * np.asarray(secular_hz, dtype=float)))

    @property
    def omega(self) -> np.ndarray:
        return np.array(self.secular)


@dataclass(frozen=True)
class RfDriveModel:
    """
    Secular frequencies as a function of the RF amplitude scale ``s``

    Radial pseudopotential frequencies grow linearly with ``s`` and the static
    axial confinement defocuses both radial directions::

        w_r,i(s)^2 = s^2 * pseudo_radial_i^2 - static_axial^2 / 2
        w_z(s)^2   = static_axial^2 + s^2 * rf_axial^2

    :param pseudo_radial: Pure pseudopotential radial frequencies at s = 1 (rad/s)
    :param static_axial: Axial frequency from the static quadrupole (rad/s)
    :param rf_drive_freq: RF drive frequency Omega (rad/s)
    :param rf_axial: RF contribution to the axial frequency at s = 1 (rad/s)
    """

    pseudo_radial: Tuple[float, float]
    static_axial: float
    rf_drive_freq: float
    rf_axial: float = 0.0

    def __post_init__(self):
        pseudo = tuple(float(p) for p in self.pseudo_radial)
        if len(pseudo) != 2 or not all(p > 0 for p in pseudo):
            raise ValueError(f"pseudo_radial must be two positive values, got {pseudo}")
        if self.static_axial < 0 or self.rf_axial < 0:
            raise ValueError("Axial frequencies must be non-negative")
        if self.rf_drive_freq <= 0:
            raise ValueError(
                f"RF drive frequency must be positive, got {self.rf_drive_freq}"
            )
        object.__setattr__(self, "pseudo_radial", pseudo)

    @classmethod
    def calibrated(
        cls, setting: TrapSetting, rf_drive_freq: float, rf_axial: float = 0.0
    ) -> "RfDriveModel":
        """
        Fit the model so that ``s = 1`` reproduces ``setting`` exactly

        :param setting: Measured trap setting at nominal RF amplitude
        :param rf_drive_freq: RF drive frequency (rad/s)
        :param rf_axial: RF contribution to the axial frequency (rad/s)
        :return: The fitted drive model
        """
        wx, wy, wz = setting.secular
        static_sq = wz ** 2 - rf_axial ** 2
        if static_sq <= 0:
            raise ValueError(
                f"rf_axial={rf_axial} leaves no static axial confinement for wz={wz}"
            )
        pseudo = (
            math.sqrt(wx ** 2 + 0.5 * static_sq),
            math.sqrt(wy ** 2 + 0.5 * static_sq),
        )
        return cls(pseudo, math.sqrt(static_sq), rf_drive_freq, rf_axial)

    def pseudo_frequencies(self, s: float = 1.0) -> np.ndarray:
        """
        RF pseudopotential frequency per axis at scale ``s``, as seen by the
        micromotion model
        """
        return s * np.array([self.pseudo_radial[0], self.pseudo_radial[1], self.rf_axial])

    def critical_scale(self, axis: int = 0) -> float:
        """
        Scale at which radial ``axis`` loses confinement
        """
        return math.sqrt(self.static_axial ** 2 / (2 * self.pseudo_radial[axis] ** 2))


@dataclass(frozen=True)
class StrayField:
    E: Vector3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        E = _as_vector3(self.E, "E")
        if not all(math.isfinite(e) for e in E):
            raise ValueError(f"Stray field must be finite, got {E}")
        object.__setattr__(self, "E", E)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.E)

    def __add__(self, other: "StrayField") -> "StrayField":
        return StrayField(tuple(self.vector + other.vector))


@dataclass(frozen=True)
class LaserBeam:
    """
    A coherent beam addressing the ion

    :param beam_id: Identifier used by pulse sequences
    :param k: Wavevector (rad/m)
    :param phase_offset: Static phase at the RF null, stored reduced to [-pi, pi)
    :param nominal_rabi: Resonant Rabi frequency (rad/s)
    """

    beam_id: str
    k: Vector3
    phase_offset: float = 0.0
    nominal_rabi: float = np.pi / DEFAULT_PI_TIME

    def __post_init__(self):
        k = _as_vector3(self.k, "k")
        if np.linalg.norm(k) == 0:
            raise ValueError(f"Beam '{self.beam_id}' has a zero wavevector")
        if self.nominal_rabi <= 0:
            raise ValueError(f"Beam '{self.beam_id}' needs a positive Rabi frequency")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "phase_offset", float(wrap_phase(self.phase_offset)))

    @property
    def wavevector(self) -> np.ndarray:
        return np.array(self.k)

    def with_phase_offset(self, phase_offset: float) -> "LaserBeam":
        return LaserBeam(self.beam_id, self.k, phase_offset, self.nominal_rabi)


def beam_from_angles(
    beam_id: str,
    azimuth: float,
    elevation: float = 0.0,
    wavelength: float = DEFAULT_WAVELENGTH,
    phase_offset: float = 0.0,
    nominal_rabi: float = np.pi / DEFAULT_PI_TIME,
) -> LaserBeam:
    """
    Build a beam from its propagation angles in the secular frame

    :param azimuth: Angle from x in the x-y plane (rad)
    :param elevation: Angle out of the x-y plane towards z (rad)
    """
    magnitude = 2 * np.pi / wavelength
    direction = (
        math.cos(elevation) * math.cos(azimuth),
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
    )
    k = tuple(magnitude * c for c in direction)
    return LaserBeam(beam_id, k, phase_offset, nominal_rabi)


def horizontal_beam(beam_id: str = "h", **kwargs) -> LaserBeam:
    """Beam along (x - y)/sqrt(2)"""
    return beam_from_angles(beam_id, -np.pi / 4, **kwargs)


def vertical_beam(beam_id: str = "v", **kwargs) -> LaserBeam:
    """Beam along (x + y)/sqrt(2)"""
    return beam_from_angles(beam_id, np.pi / 4, **kwargs)


def axial_beam(beam_id: str = "z", **kwargs) -> LaserBeam:
    return beam_from_angles(beam_id, 0.0, np.pi / 2, **kwargs)


def mathieu_q(pseudo: np.ndarray, rf_drive_freq: float) -> np.ndarray:
    """
    Signed Mathieu q parameter per axis, 2*sqrt(2)*w_pseudo/Omega

    The radial quadrupole focuses x and y in antiphase, so q_y carries the
    opposite sign to q_x.
    """
    magnitude = 2 * np.sqrt(2) * np.asarray(pseudo, dtype=float) / rf_drive_freq
    return magnitude * np.array([1.0, -1.0, 1.0])


def equilibrium_displacement(
    ion: IonSpecies, setting: TrapSetting, field: StrayField
) -> np.ndarray:
    """
    Shift of the ion from the RF null, r_i = q E_i / (m w_i^2)

    :return: Displacement in meters
    """
    return ion.charge_to_mass * field.vector / setting.omega ** 2


def displacement_change(
    ion: IonSpecies, setting_a: TrapSetting, setting_b: TrapSetting, field: StrayField
) -> np.ndarray:
    """
    Movement of the ion when the trap goes from ``setting_a`` to ``setting_b``
    """
    weights = 1 / setting_b.omega ** 2 - 1 / setting_a.omega ** 2
    return ion.charge_to_mass * field.vector * weights


def field_phase_at(beam: LaserBeam, position: Sequence[float]) -> float:
    """
    Laser phase at ``position``: k . r + phase_offset. Not wrapped.
    """
    return float(np.dot(beam.wavevector, np.asarray(position, dtype=float))) + (
        beam.phase_offset
    )


def _find_beam(beams: Sequence[LaserBeam], index: int, method: str) -> LaserBeam:
    if len(beams) <= index:
        raise ValueError(f"Method {method} needs {index + 1} beam(s), got {len(beams)}")
    return beams[index]


def sensitivity_direction(
    method: str,
    beams: Sequence[LaserBeam],
    setting_a: TrapSetting,
    setting_b: TrapSetting,
    m_alpha: Optional[int] = None,
    m_beta: Optional[int] = None,
    parity: str = "plus",
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Field direction a method is sensitive to

    The measured phase is ``phi_PD = (q/m) * d . E`` with
    ``d_i = kappa_i * (1/w_Ai^2 - 1/w_Bi^2)``, where kappa is ``k_alpha`` for
    Method A, ``k_alpha - k_beta`` for Method B and
    ``M_alpha k_alpha +/- M_beta k_beta`` for Method C.

    :param method: ``"A"``, ``"B"`` or ``"C"``
    :param beams: The beams used, alpha first
    :param setting_a: Trap setting A
    :param setting_b: Trap setting B
    :param m_alpha: Method C: area (in units of pi/2) driven by beam alpha per setting
    :param m_beta: Method C: area (in units of pi/2) driven by beam beta per setting
    :param parity: Method C: ``"plus"`` or ``"minus"`` combination
    :return: Tuple of (unnormalized d, unit direction)
    """
    method = method.upper()
    alpha = _find_beam(beams, 0, method).wavevector
    if method == "A":
        kappa = alpha
    elif method == "B":
        kappa = alpha - _find_beam(beams, 1, method).wavevector
    elif method == "C":
        beta = _find_beam(beams, 1, method).wavevector
        if m_alpha is None or m_beta is None or m_alpha < 0 or m_beta < 0:
            raise ValueError("Method C needs non-negative m_alpha and m_beta")
        if parity not in ("plus", "minus"):
            raise ValueError(f"parity must be 'plus' or 'minus', got '{parity}'")
        sign = 1.0 if parity == "plus" else -1.0
        kappa = m_alpha * alpha + sign * m_beta * beta
    else:
        raise ValueError(f"Unknown method '{method}'")

    d = kappa * (1 / setting_a.omega ** 2 - 1 / setting_b.omega ** 2)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise DegenerateDirection(
            f"Method {method} with settings '{setting_a.label}'/'{setting_b.label}' "
            "is insensitive to every field direction"
        )
    return d, d / norm


def secular_from_scale(
    model: RfDriveModel, s: float, label: Optional[str] = None
) -> TrapSetting:
    """
    Trap setting obtained by scaling the RF amplitude by ``s``

    :raises IonLost: If a radial direction is no longer confining
    """
    if s <= 0:
        raise ValueError(f"RF scale must be positive, got {s}")
    pseudo = np.array(model.pseudo_radial)
    radial_sq = s ** 2 * pseudo ** 2 - 0.5 * model.static_axial ** 2
    if np.any(radial_sq <= 0):
        raise IonLost(
            f"RF scale {s:g} is below the radial stability limit "
            f"{model.critical_scale(int(np.argmin(radial_sq))):g}"
        )
    axial = math.sqrt(model.static_axial ** 2 + s ** 2 * model.rf_axial ** 2)
    if axial <= 0:
        raise IonLost(f"RF scale {s:g} leaves no axial confinement")
    label = label if label is not None else f"s={s:g}"
    radial = np.sqrt(radial_sq)
    setting = TrapSetting(label, (float(radial[0]), float(radial[1]), axial))
    logger.debug("Scale %g gives secular frequencies %s rad/s", s, setting.secular)
    return setting
