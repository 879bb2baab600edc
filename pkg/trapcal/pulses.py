"""
Two-level dynamics of the M+1 pulse sequences used to read out the laser phase
difference between trap settings (Method A), beams (Method B) or both (Method C).

Pulses are rotations of the Bloch vector. Starting in |g> (w = -1), a sequence
with laser phases ``phi_j`` and control phases ``theta_j`` ends in |e> with
probability ``(1 + C cos(phi_T + theta_T)) / 2``; :func:`run_sequence`
integrates the same dynamics pulse by pulse so that detuning, pulse area errors
and dephasing can be switched on.
"""

from dataclasses import dataclass
import logging
import math
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from trapcal.errors import LengthMismatch, UnknownId
from trapcal.trap import (
    DEFAULT_PI_TIME,
    IonSpecies,
    LaserBeam,
    StrayField,
    TrapSetting,
    equilibrium_displacement,
    field_phase_at,
)

logger = logging.getLogger(__name__)

DEFAULT_WAIT = 50e-6
NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class QubitState:
    bloch: Tuple[float, float, float]

    def __post_init__(self):
        bloch = tuple(float(c) for c in self.bloch)
        if len(bloch) != 3:
            raise ValueError(f"Bloch vector needs 3 components, got {len(bloch)}")
        if math.sqrt(sum(c * c for c in bloch)) > 1 + NORM_TOLERANCE:
            raise ValueError(f"Bloch vector {bloch} lies outside the sphere")
        object.__setattr__(self, "bloch", bloch)

    @classmethod
    def ground(cls) -> "QubitState":
        return cls((0.0, 0.0, -1.0))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.bloch)

    @property
    def excitation(self) -> float:
        """Probability of finding the ion in |e>"""
        return min(1.0, max(0.0, 0.5 * (1 + self.bloch[2])))


@dataclass(frozen=True)
class PulseSpec:
    """
    One coherent pulse

    :param beam_id: Beam driving the pulse
    :param trap_setting_id: Trap setting the ion sits in during the pulse
    :param area: Nominal pulse area (rad)
    :param control_phase: Deliberate laser phase shift theta_j (rad)
    :param detuning: Laser detuning (rad/s)
    :param duration: Pulse length (s)
    :param area_error: Multiplicative error on the area, 1 is ideal
    """

    beam_id: str
    trap_setting_id: str
    area: float
    control_phase: float = 0.0
    detuning: float = 0.0
    duration: float = DEFAULT_PI_TIME
    area_error: float = 1.0

    def __post_init__(self):
        if self.area < 0:
            raise ValueError(f"Pulse area must be non-negative, got {self.area}")
        if self.duration < 0:
            raise ValueError(f"Pulse duration must be non-negative, got {self.duration}")


@dataclass(frozen=True)
class SequenceSpec:
    method: str
    M: int
    pulses: Tuple[PulseSpec, ...]
    inter_pulse_wait: float = DEFAULT_WAIT

    def __post_init__(self):
        pulses = tuple(self.pulses)
        object.__setattr__(self, "pulses", pulses)
        if self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if len(pulses) != self.M + 1:
            raise LengthMismatch(
                f"A length-{self.M} sequence needs {self.M + 1} pulses, got {len(pulses)}"
            )
        if self.inter_pulse_wait < 0:
            raise ValueError("inter_pulse_wait must be non-negative")

        pairs = list(zip(pulses[:-1], pulses[1:]))
        if self.method == "A":
            if any(a.trap_setting_id == b.trap_setting_id for a, b in pairs):
                raise ValueError("Method A must change trap setting between pulses")
        elif self.method == "B":
            if len({p.trap_setting_id for p in pulses}) != 1:
                raise ValueError("Method B holds a single trap setting")
            if any(a.beam_id == b.beam_id for a, b in pairs):
                raise ValueError("Method B must alternate beams between pulses")
        elif self.method != "C":
            raise ValueError(f"Unknown method '{self.method}'")

    @property
    def stiffness_schedule(self) -> List[str]:
        return [p.trap_setting_id for p in self.pulses]

    @property
    def control_phases(self) -> List[float]:
        return [p.control_phase for p in self.pulses]


@dataclass(frozen=True)
class NoiseModel:
    """
    :param t2: Coherence time (s), ``inf`` disables dephasing
    :param area_error_even: Area factor applied to even-indexed pulses (1-based)
    :param area_error_odd: Area factor applied to odd-indexed pulses (1-based)
    :param detuning: Laser detuning (rad/s), added to each pulse's own detuning
    :param projection_sampling: Whether measurements draw projection noise
    :param dephase_during_pulses: Whether dephasing also acts while pulses run
    """

    t2: float = math.inf
    area_error_even: float = 1.0
    area_error_odd: float = 1.0
    detuning: float = 0.0
    projection_sampling: bool = True
    dephase_during_pulses: bool = True

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValueError(f"T2 must be positive, got {self.t2}")
        if self.area_error_even < 0 or self.area_error_odd < 0:
            raise ValueError("Area error factors must be non-negative")

    def area_factor(self, index: int) -> float:
        """Area factor for 1-based pulse ``index``"""
        return self.area_error_even if index % 2 == 0 else self.area_error_odd


@dataclass(frozen=True)
class TrapContext:
    """
    Everything :func:`run_sequence` resolves pulse ids against
    """

    ion: IonSpecies
    settings: Mapping[str, TrapSetting]
    beams: Mapping[str, LaserBeam]

    @classmethod
    def build(
        cls,
        ion: IonSpecies,
        settings: Sequence[TrapSetting],
        beams: Sequence[LaserBeam],
    ) -> "TrapContext":
        return cls(
            ion,
            {setting.label: setting for setting in settings},
            {beam.beam_id: beam for beam in beams},
        )

    def setting(self, label: str) -> TrapSetting:
        try:
            return self.settings[label]
        except KeyError:
            raise UnknownId(f"Unknown trap setting '{label}'") from None

    def beam(self, beam_id: str) -> LaserBeam:
        try:
            return self.beams[beam_id]
        except KeyError:
            raise UnknownId(f"Unknown beam '{beam_id}'") from None


def sequence_weights(M: int) -> np.ndarray:
    """
    Coefficients of phi_j in phi_T: 1, -2, 2, ..., (-1)^M
    """
    weights = np.array([2.0 * (-1) ** (j - 1) for j in range(1, M + 2)])
    weights[0] = 1.0
    weights[-1] = float((-1) ** M)
    return weights


def xi(M: int) -> float:
    return math.pi if M % 2 == 0 else 0.0


def total_phase(
    phi: Sequence[float], theta: Sequence[float], M: int
) -> Tuple[float, float]:
    """
    Sequence-level phases (phi_T, theta_T) of a length-``M`` sequence

    :param phi: Laser phase at the ion for each of the M+1 pulses
    :param theta: Control phase of each pulse
    :param M: Sequence length
    :raises LengthMismatch: If either list does not hold M+1 phases
    """
    if len(phi) != M + 1 or len(theta) != M + 1:
        raise LengthMismatch(
            f"Expected {M + 1} phases, got {len(phi)} laser and {len(theta)} control"
        )
    weights = sequence_weights(M)
    phi_T = float(np.dot(weights, phi))
    theta_T = float(np.dot(weights, theta)) + xi(M)
    return phi_T, theta_T


def ideal_probability(phi_T, theta_T, contrast: float = 1.0):
    """
    Excitation probability ``(1 + C cos(phi_T + theta_T)) / 2``
    """
    if not 0 <= contrast <= 1:
        raise ValueError(f"Contrast must lie in [0, 1], got {contrast}")
    return 0.5 * (1 + contrast * np.cos(np.asarray(phi_T) + theta_T))


def _rotate(vector: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    cos, sin = math.cos(angle), math.sin(angle)
    return (
        vector * cos
        + np.cross(axis, vector) * sin
        + axis * np.dot(axis, vector) * (1 - cos)
    )


def propagate_pulse(
    state: QubitState, pulse: PulseSpec, laser_phase_total: float
) -> QubitState:
    """
    Apply one pulse as a rotation about ``(Omega' cos phi, Omega' sin phi, Delta)``

    :param state: State before the pulse
    :param pulse: The pulse; its ``area_error`` scales the Rabi frequency
    :param laser_phase_total: phi_j + theta_j
    :return: State after the pulse
    """
    area = pulse.area_error * pulse.area
    if pulse.duration == 0:
        rabi, detuning, angle = 1.0, 0.0, area
    else:
        rabi = area / pulse.duration
        detuning = pulse.detuning
        angle = math.hypot(rabi, detuning) * pulse.duration

    generalized = math.hypot(rabi, detuning)
    if generalized == 0:
        return state

    axis = np.array(
        [
            rabi * math.cos(laser_phase_total),
            rabi * math.sin(laser_phase_total),
            detuning,
        ]
    ) / generalized
    return QubitState(tuple(_rotate(state.vector, axis, angle)))


def free_precession(state: QubitState, wait: float, detuning: float) -> QubitState:
    """Rotation about z accumulated at ``detuning`` over ``wait``"""
    if detuning == 0 or wait == 0:
        return state
    z_axis = np.array([0.0, 0.0, 1.0])
    return QubitState(tuple(_rotate(state.vector, z_axis, detuning * wait)))


def apply_dephasing(state: QubitState, wait: float, t2: float) -> QubitState:
    """
    Shrink the transverse Bloch components by ``exp(-wait / T2)``
    """
    if wait < 0:
        raise ValueError(f"Wait must be non-negative, got {wait}")
    if math.isinf(t2) or wait == 0:
        return state
    decay = math.exp(-wait / t2)
    u, v, w = state.bloch
    return QubitState((u * decay, v * decay, w))


def simulate_phases(
    phi: Sequence[float],
    pulses: Sequence[PulseSpec],
    noise: NoiseModel = NoiseModel(),
    inter_pulse_wait: float = DEFAULT_WAIT,
) -> QubitState:
    """
    Run a pulse train given the laser phase each pulse sees

    The noise model's area factors (by 1-based parity) multiply each pulse's own
    ``area_error`` and its detuning adds to each pulse's own. Between pulses the
    state precesses at the detuning and dephases.

    :param phi: Laser phase at the ion for each pulse
    :param pulses: Pulses in time order
    :param noise: Noise model
    :param inter_pulse_wait: Settling time between pulses (s)
    :return: Final state, starting from |g>
    """
    if len(phi) != len(pulses):
        raise LengthMismatch(f"{len(pulses)} pulses but {len(phi)} laser phases")

    state = QubitState.ground()
    for index, (phase, pulse) in enumerate(zip(phi, pulses), start=1):
        detuning = pulse.detuning + noise.detuning
        noisy = PulseSpec(
            pulse.beam_id,
            pulse.trap_setting_id,
            pulse.area,
            pulse.control_phase,
            detuning,
            pulse.duration,
            pulse.area_error * noise.area_factor(index),
        )
        state = propagate_pulse(state, noisy, phase + pulse.control_phase)
        if noise.dephase_during_pulses:
            state = apply_dephasing(state, pulse.duration, noise.t2)
        if index < len(pulses):
            state = free_precession(state, inter_pulse_wait, detuning)
            state = apply_dephasing(state, inter_pulse_wait, noise.t2)

    return state


def sequence_phases(
    seq: SequenceSpec, context: TrapContext, field: StrayField
) -> List[float]:
    """
    Laser phase seen by the ion during each pulse

    The ion sits at the equilibrium position of the pulse's trap setting.
    """
    phases = []
    for pulse in seq.pulses:
        setting = context.setting(pulse.trap_setting_id)
        beam = context.beam(pulse.beam_id)
        position = equilibrium_displacement(context.ion, setting, field)
        phases.append(field_phase_at(beam, position))
    return phases


def run_sequence(
    seq: SequenceSpec,
    context: TrapContext,
    field: StrayField,
    noise: NoiseModel = NoiseModel(),
) -> float:
    """
    Final excitation probability of ``seq`` with the ion displaced by ``field``

    :raises UnknownId: If a pulse refers to an unknown beam or trap setting
    """
    phases = sequence_phases(seq, context, field)
    state = simulate_phases(phases, seq.pulses, noise, seq.inter_pulse_wait)
    return state.excitation


def sample_measurements(p: float, N: int, rng: np.random.Generator) -> int:
    """
    Number of |e> outcomes in ``N`` projective measurements
    """
    if not 0 <= p <= 1:
        raise ValueError(f"Probability must lie in [0, 1], got {p}")
    if N < 0:
        raise ValueError(f"Measurement count must be non-negative, got {N}")
    return int(rng.binomial(N, p))


def measured_probability(
    p: float, N: int, noise: NoiseModel, rng: Optional[np.random.Generator]
) -> float:
    """Sampled excitation fraction, or ``p`` itself when sampling is off"""
    if not noise.projection_sampling or rng is None:
        return p
    return sample_measurements(p, N, rng) / N


def sequence_duration(seq: SequenceSpec) -> float:
    """Time from the start of the first pulse to the end of the last"""
    return sum(p.duration for p in seq.pulses) + seq.M * seq.inter_pulse_wait


def expected_contrast(seq: SequenceSpec, noise: NoiseModel) -> float:
    """
    Fringe contrast exp(-t/T2) for the sequence's transverse exposure ``t``

    Exact when dephasing acts only during waits; with dephasing during pulses the
    pulse time is counted in full.
    """
    if math.isinf(noise.t2):
        return 1.0
    exposure = seq.M * seq.inter_pulse_wait
    if noise.dephase_during_pulses:
        exposure += sum(p.duration for p in seq.pulses)
    return math.exp(-exposure / noise.t2)


def _areas(M: int) -> List[float]:
    return [math.pi / 2] + [math.pi] * (M - 1) + [math.pi / 2]


def plain_control_phases(M: int, theta_T: float) -> List[float]:
    """
    Control phases realising ``theta_T`` with a single shift on the first pulse
    """
    return [theta_T - xi(M)] + [0.0] * M


def _build(
    method: str,
    M: int,
    beams: Sequence[str],
    settings: Sequence[str],
    theta_T: float,
    thetas: Optional[Sequence[float]],
    pi_time: float,
    wait: float,
) -> SequenceSpec:
    if thetas is None:
        thetas = plain_control_phases(M, theta_T)
    if len(thetas) != M + 1:
        raise LengthMismatch(f"Expected {M + 1} control phases, got {len(thetas)}")
    pulses = [
        PulseSpec(
            beam_id=beam,
            trap_setting_id=setting,
            area=area,
            control_phase=theta,
            duration=area / math.pi * pi_time,
        )
        for beam, setting, area, theta in zip(beams, settings, _areas(M), thetas)
    ]
    return SequenceSpec(method, M, tuple(pulses), wait)


def method_a_sequence(
    M: int,
    beam_id: str,
    setting_a: str,
    setting_b: str,
    theta_T: float = 0.0,
    thetas: Optional[Sequence[float]] = None,
    pi_time: float = DEFAULT_PI_TIME,
    wait: float = DEFAULT_WAIT,
) -> SequenceSpec:
    """
    One beam, trap setting A on odd pulses and B on even pulses, so that
    ``phi_T = M (Phi_A - Phi_B)``

    :param theta_T: Sequence control phase, realised on the first pulse.
        Ignored when ``thetas`` is given.
    :param thetas: Explicit per-pulse control phases
    """
    settings = [setting_a if j % 2 == 1 else setting_b for j in range(1, M + 2)]
    return _build("A", M, [beam_id] * (M + 1), settings, theta_T, thetas, pi_time, wait)


def method_b_sequence(
    M: int,
    alpha: str,
    beta: str,
    setting: str,
    theta_T: float = 0.0,
    thetas: Optional[Sequence[float]] = None,
    pi_time: float = DEFAULT_PI_TIME,
    wait: float = DEFAULT_WAIT,
) -> SequenceSpec:
    """
    One trap setting, beam alpha on odd pulses and beta on even pulses, so that
    ``phi_T = M (Phi_alpha - Phi_beta)``
    """
    beams = [alpha if j % 2 == 1 else beta for j in range(1, M + 2)]
    return _build("B", M, beams, [setting] * (M + 1), theta_T, thetas, pi_time, wait)


def _split_weights(indices: Sequence[int], weights: np.ndarray, target: int) -> set:
    ones = [j for j in indices if abs(weights[j - 1]) == 1]
    twos = [j for j in indices if abs(weights[j - 1]) == 2]
    for n_ones in range(target % 2, len(ones) + 1, 2):
        n_twos = (target - n_ones) // 2
        if 0 <= n_twos <= len(twos):
            return set(ones[:n_ones] + twos[:n_twos])
    raise ValueError(
        f"Pulse areas at indices {list(indices)} cannot be split to give {target}"
    )


def method_c_sequence(
    M: int,
    alpha: str,
    beta: str,
    setting_a: str,
    setting_b: str,
    m_alpha: int,
    m_beta: int,
    parity: str = "plus",
    theta_T: float = 0.0,
    thetas: Optional[Sequence[float]] = None,
    pi_time: float = DEFAULT_PI_TIME,
    wait: float = DEFAULT_WAIT,
) -> SequenceSpec:
    """
    Four pulse subsets (alpha at A, alpha at B, beta at A, beta at B), each
    beam driving ``m`` quarter-turns at each setting.

    With ``parity="plus"`` the sequence measures
    ``M_alpha (Phi_alphaA - Phi_alphaB) + M_beta (Phi_betaA - Phi_betaB)``;
    ``"minus"`` puts beta's A pulses on even indices and its B pulses on odd
    indices, flipping the sign of the beta term.

    :param m_alpha: Area driven by alpha at each setting, in units of pi/2
    :param m_beta: Area driven by beta at each setting, in units of pi/2
    """
    if m_alpha < 0 or m_beta < 0 or m_alpha + m_beta != M:
        raise ValueError(f"m_alpha + m_beta must equal M={M}, got {m_alpha}+{m_beta}")
    if parity not in ("plus", "minus"):
        raise ValueError(f"parity must be 'plus' or 'minus', got '{parity}'")

    weights = sequence_weights(M)
    odd = [j for j in range(1, M + 2) if j % 2 == 1]
    even = [j for j in range(1, M + 2) if j % 2 == 0]
    on_alpha = _split_weights(odd, weights, m_alpha)
    on_alpha |= _split_weights(even, weights, m_alpha)

    beams, settings = [], []
    for j in range(1, M + 2):
        uses_alpha = j in on_alpha
        beams.append(alpha if uses_alpha else beta)
        at_a = j % 2 == 1
        if parity == "minus" and not uses_alpha:
            at_a = not at_a
        settings.append(setting_a if at_a else setting_b)

    return _build("C", M, beams, settings, theta_T, thetas, pi_time, wait)


def method_c_stiffness_changes(M: int, m_alpha: int, m_beta: int) -> int:
    """
    Fewest trap-stiffness changes a minus-form Method C sequence needs
    """
    difference = abs(m_alpha - m_beta)
    return difference if M % 2 == 1 else max(difference, 2)
