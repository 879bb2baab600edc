"""
Phase reconstruction from measured excitation probabilities.

Inputs are probabilities (or measured excitation fractions) at chosen values of
the sequence control phase theta_T. Outputs are :class:`PhaseEstimate` values
inside the estimator's validity range.
"""

from dataclasses import dataclass
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from trapcal.errors import BadSchedule, OddM, Undefined, ZeroDenominator
from trapcal.montecarlo import MonteCarlo
from trapcal.pulses import ideal_probability, sample_measurements
from trapcal.trap import wrap_phase

logger = logging.getLogger(__name__)

RANGE_TOLERANCE = 1e-12

ESTIMATOR_TAGS = (
    "arcsin",
    "arctan2",
    "arctan2_offset",
    "settingsI",
    "settingsII",
    "settingsIII",
    "averagedI_II",
    "rpe",
)


@dataclass(frozen=True)
class PhaseEstimate:
    value: float
    range_halfwidth: float
    samples_used: int
    estimator_tag: str
    clamped: bool = False

    def __post_init__(self):
        if self.estimator_tag not in ESTIMATOR_TAGS:
            raise ValueError(f"Unknown estimator tag '{self.estimator_tag}'")
        if self.samples_used <= 0:
            raise ValueError(f"samples_used must be positive, got {self.samples_used}")
        if abs(self.value) > self.range_halfwidth + RANGE_TOLERANCE:
            raise ValueError(
                f"Estimate {self.value} outside its range +/-{self.range_halfwidth}"
            )

    def scaled(self, M: int) -> "PhaseEstimate":
        """The same estimate divided by the sequence length ``M``"""
        return PhaseEstimate(
            self.value / M,
            self.range_halfwidth / M,
            self.samples_used,
            self.estimator_tag,
            self.clamped,
        )


@dataclass(frozen=True)
class ControlPhaseSettings:
    tag: str
    M: int

    def __post_init__(self):
        if self.tag not in ("plain", "I", "II", "III"):
            raise ValueError(f"Unknown control phase settings '{self.tag}'")
        if self.M < 1:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.tag != "plain" and self.M % 2 == 1:
            raise OddM(f"Settings {self.tag} need an even M, got {self.M}")


@dataclass(frozen=True)
class RpeSchedule:
    """
    Measurement counts per pass; pass ``j`` uses a sequence of length 2^(j-1)
    and splits its ``N_j`` measurements between theta_T = -pi/2 and 0
    """

    counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        if not counts:
            raise BadSchedule("An RPE schedule needs at least one pass")
        if any(n <= 0 or n % 2 for n in counts):
            raise BadSchedule(f"Pass counts must be positive and even, got {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def j_max(self) -> int:
        return len(self.counts)

    @property
    def lengths(self) -> List[int]:
        return [2 ** (j - 1) for j in range(1, self.j_max + 1)]

    def total_area(self) -> float:
        """Total pulse area, sum of N_j M_j pi"""
        return float(sum(n * m * math.pi for n, m in zip(self.counts, self.lengths)))


def rpe_schedule(j_max: int, per_pass: int) -> RpeSchedule:
    """Equal counts in every pass"""
    return RpeSchedule(tuple([per_pass] * j_max))


def heisenberg_schedule(j_max: int, last_pass: int, growth: int = 2) -> RpeSchedule:
    """
    Counts falling linearly with pass index, more measurements at short lengths

    ``N_j = last_pass + growth * (j_max - j)``, each rounded up to even.
    """
    counts = []
    for j in range(1, j_max + 1):
        n = last_pass + growth * (j_max - j)
        counts.append(n + n % 2)
    return RpeSchedule(tuple(counts))


def estimate_arcsin(
    p_minus: float, p_plus: float, contrast: float = 1.0, samples: int = 2
) -> PhaseEstimate:
    """
    Estimate phi_T from measurements at theta_T = -pi/2 and +pi/2::

        phi_T = arcsin[(p_minus - p_plus) / (C (p_minus + p_plus))]

    Arguments outside [-1, 1] are clamped and the estimate is flagged.

    :raises ZeroDenominator: If both probabilities are zero
    """
    if not 0 < contrast <= 1:
        raise ValueError(f"Contrast must lie in (0, 1], got {contrast}")
    total = p_minus + p_plus
    if total == 0:
        raise ZeroDenominator("Both arcsin inputs are zero")
    argument = (p_minus - p_plus) / (contrast * total)
    clamped = abs(argument) > 1
    if clamped:
        logger.warning("arcsin argument %.6g clamped to [-1, 1]", argument)
        argument = max(-1.0, min(1.0, argument))
    return PhaseEstimate(math.asin(argument), math.pi / 2, samples, "arcsin", clamped)


def _arctan2(y: float, x: float) -> float:
    if y == 0 and x == 0:
        raise Undefined("Both arctan2 arguments are zero, the data holds no phase")
    return math.atan2(y, x)


def estimate_arctan2(p_mhalf: float, p_zero: float, samples: int = 2) -> PhaseEstimate:
    """
    Estimate phi_T from measurements at theta_T = -pi/2 and theta_T = 0

    Independent of the fringe contrast.

    :raises Undefined: If both probabilities are exactly 1/2
    """
    value = _arctan2(p_mhalf - 0.5, p_zero - 0.5)
    return PhaseEstimate(value, math.pi, samples, "arctan2")


def estimate_arctan2_offset(p_q: float, p_3q: float, samples: int = 2) -> PhaseEstimate:
    """
    Estimate phi_T from measurements at theta_T = pi/4 and 3pi/4

    Statistical error is smallest near phi_T = 0.
    """
    value = _arctan2(p_q - 0.5, p_3q - 0.5) - 3 * math.pi / 4
    return PhaseEstimate(float(wrap_phase(value)), math.pi, samples, "arctan2_offset")


def control_phases(settings: ControlPhaseSettings, theta_1: float) -> List[float]:
    """
    Per-pulse control phases of a robust settings family

    Settings I: 0 on even pulses, -pi/2 on interior odd pulses, pi on the last.
    Settings II: as I with +pi/2 on interior odd pulses.
    Settings III: pi/2 on even pulses, -pi/2 on interior odd pulses, pi on the last.
    ``"plain"`` puts ``theta_1`` on the first pulse and nothing elsewhere.

    :param settings: Settings family and sequence length
    :param theta_1: Control phase of the first pulse, pi or pi/2
    :return: M+1 control phases
    """
    M = settings.M
    if settings.tag == "plain":
        return [theta_1] + [0.0] * M

    even = math.pi / 2 if settings.tag == "III" else 0.0
    odd = math.pi / 2 if settings.tag == "II" else -math.pi / 2
    thetas = [theta_1]
    for j in range(2, M + 1):
        thetas.append(even if j % 2 == 0 else odd)
    thetas.append(math.pi)
    return thetas


def estimate_settings(
    p_half: float, p_pi: float, M: int, tag: str, samples: int = 2
) -> PhaseEstimate:
    """
    Estimate phi_T from the two runs of a robust settings family

    :param p_half: Probability with theta_1 = pi/2
    :param p_pi: Probability with theta_1 = pi
    :param M: Sequence length, even
    :param tag: ``"I"``, ``"II"`` or ``"III"``
    """
    if M % 2:
        raise OddM(f"Settings estimates need an even M, got {M}")
    if tag in ("I", "II"):
        sign = (-1) ** (M // 2)
    elif tag == "III":
        sign = 1
    else:
        raise ValueError(f"Unknown settings tag '{tag}'")
    value = _arctan2(sign * (p_half - 0.5), sign * (p_pi - 0.5))
    return PhaseEstimate(value, math.pi, samples, f"settings{tag}")


def average_estimates(estimates: Sequence[PhaseEstimate]) -> PhaseEstimate:
    """
    Circular mean of estimates, used to combine settings I and II
    """
    phasor = sum(complex(math.cos(e.value), math.sin(e.value)) for e in estimates)
    if phasor == 0:
        raise Undefined("Estimates cancel, their circular mean is undefined")
    halfwidth = min(e.range_halfwidth for e in estimates)
    value = float(wrap_phase(math.atan2(phasor.imag, phasor.real)))
    return PhaseEstimate(
        value, halfwidth, sum(e.samples_used for e in estimates), "averagedI_II"
    )


def estimate_method_b_difference(
    at_a: PhaseEstimate, at_b: PhaseEstimate, M: int
) -> PhaseEstimate:
    """
    Beam phase difference change between trap settings, phi_PD^A - phi_PD^B

    Both inputs are per-length phases of length-``M`` sequences, each known
    modulo 2pi/M, so the difference is wrapped to [-pi/M, pi/M).
    """
    value = float(wrap_phase(M * (at_a.value - at_b.value))) / M
    return PhaseEstimate(
        value,
        math.pi / M,
        at_a.samples_used + at_b.samples_used,
        at_a.estimator_tag,
        at_a.clamped or at_b.clamped,
    )


def rpe_pass_estimate(
    p_mhalf: float, p_zero: float, j: int, samples: int = 2
) -> PhaseEstimate:
    """
    Pass ``j`` estimate of the per-length phase, phi_T / M_j
    """
    estimate = estimate_arctan2(p_mhalf, p_zero, samples).scaled(2 ** (j - 1))
    return PhaseEstimate(
        estimate.value, estimate.range_halfwidth, samples, "rpe", estimate.clamped
    )


def rpe_combine(per_pass_estimates: Sequence[PhaseEstimate]) -> float:
    """
    Combine pass estimates ordered by ``j`` into one phase

    Each pass picks the branch of its estimate closest to the running result::

        estimate = 0
        for j, phi_j in passes:
            L = pi / 2^(j-1)
            shift phi_j by multiples of 2L into [estimate - L, estimate + L]
            estimate = phi_j

    :raises BadSchedule: If pass ``j`` does not have range pi/2^(j-1)
    """
    estimate = 0.0
    for j, pass_estimate in enumerate(per_pass_estimates, start=1):
        half = math.pi / 2 ** (j - 1)
        if not math.isclose(pass_estimate.range_halfwidth, half, rel_tol=1e-9):
            raise BadSchedule(
                f"Pass {j} has range {pass_estimate.range_halfwidth}, expected {half}"
            )
        current = pass_estimate.value
        while current < estimate - half:
            current += 2 * half
        while current > estimate + half:
            current -= 2 * half
        estimate = current
        logger.debug("RPE pass %d: %.6f -> %.6f", j, pass_estimate.value, estimate)
    return estimate


def rpe_estimate(
    schedule: RpeSchedule,
    phi_per_length: float,
    contrasts: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, List[PhaseEstimate]]:
    """
    Simulate a full RPE run on a phase ``phi_per_length`` (phi_T of a length-1
    sequence) and combine the passes

    :param schedule: Pass counts
    :param phi_per_length: True phase per unit sequence length
    :param contrasts: Fringe contrast of each pass, default 1
    :param rng: Generator for projection noise; noiseless when None
    :return: Combined estimate and the per-pass estimates
    """
    contrasts = contrasts if contrasts is not None else [1.0] * schedule.j_max
    passes = []
    for j, (count, length, contrast) in enumerate(
        zip(schedule.counts, schedule.lengths, contrasts), start=1
    ):
        phi_T = length * phi_per_length
        p_mhalf = float(ideal_probability(phi_T, -math.pi / 2, contrast))
        p_zero = float(ideal_probability(phi_T, 0.0, contrast))
        if rng is not None:
            half = count // 2
            p_mhalf = sample_measurements(p_mhalf, half, rng) / half
            p_zero = sample_measurements(p_zero, half, rng) / half
        try:
            passes.append(rpe_pass_estimate(p_mhalf, p_zero, j, count))
        except Undefined:
            passes.append(PhaseEstimate(0.0, math.pi / length, count, "rpe"))
    return rpe_combine(passes), passes


def sql_bound(total_area: float) -> float:
    """
    Standard quantum limit sqrt(pi / A) for total pulse area ``A``
    """
    if total_area <= 0:
        raise ValueError(f"Total pulse area must be positive, got {total_area}")
    return math.sqrt(math.pi / total_area)


class ArctanMonteCarlo(MonteCarlo[float]):
    """
    Signed error of the arctan2 estimators under projection noise

    Each trial draws N/2 measurements at each of the two control phases and
    returns the wrapped estimation error. Ties at exactly 1/2, 1/2 estimate 0,
    as ``numpy.arctan2(0, 0)`` does.
    """

    def __init__(
        self,
        N: int,
        phi_T: Optional[float] = None,
        offset: bool = False,
        random_seed: int = 42,
        stream: str = "arctan",
    ):
        """
        :param N: Measurements per estimate, split evenly across two settings
        :param phi_T: True phase; drawn uniformly from [-pi, pi) each trial if None
        :param offset: Use the pi/4, 3pi/4 variant
        """
        super().__init__(random_seed, stream)
        if N < 2 or N % 2:
            raise ValueError(f"N must be even and at least 2, got {N}")
        self.N = N
        self.phi_T = phi_T
        self.use_offset = offset

    def trial(self, rng: np.random.Generator, index: int) -> float:
        phi_T = self.phi_T if self.phi_T is not None else rng.uniform(-math.pi, math.pi)
        half = self.N // 2
        if self.use_offset:
            thetas = (math.pi / 4, 3 * math.pi / 4)
            estimator = estimate_arctan2_offset
        else:
            thetas = (-math.pi / 2, 0.0)
            estimator = estimate_arctan2
        fractions = [
            sample_measurements(float(ideal_probability(phi_T, theta)), half, rng) / half
            for theta in thetas
        ]
        try:
            value = estimator(*fractions, samples=self.N).value
        except Undefined:
            value = 0.0
        return float(wrap_phase(value - phi_T))


def rms(errors: Sequence[float]) -> float:
    return float(np.sqrt(np.mean(np.square(errors))))
