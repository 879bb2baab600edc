"""
Stray-field compensation: calibrate how measured phases respond to the
compensation electrodes, solve for voltages, and run the loop against a
drifting field. Also the resolved-sideband observable and the single-beam
hybrid scheme it enables, and RF duty-cycle bookkeeping.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from trapcal.errors import (
    DegenerateDirection,
    NoProgress,
    RangeOverflow,
    RankDeficient,
    TooShort,
    Undefined,
    ZeroDenominator,
)
from trapcal.estimators import (
    ControlPhaseSettings,
    PhaseEstimate,
    average_estimates,
    control_phases,
    estimate_arcsin,
    estimate_arctan2,
    estimate_arctan2_offset,
    estimate_method_b_difference,
    estimate_settings,
)
from trapcal.pulses import (
    DEFAULT_WAIT,
    NoiseModel,
    SequenceSpec,
    TrapContext,
    expected_contrast,
    measured_probability,
    method_a_sequence,
    method_b_sequence,
    run_sequence,
)
from trapcal.trap import (
    DEFAULT_PI_TIME,
    IonSpecies,
    LaserBeam,
    StrayField,
    TrapSetting,
    equilibrium_displacement,
    mathieu_q,
    sensitivity_direction,
)

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12

ESTIMATOR_THETAS = {
    "arcsin": (-math.pi / 2, math.pi / 2),
    "arctan2": (-math.pi / 2, 0.0),
    "arctan2_offset": (math.pi / 4, 3 * math.pi / 4),
}


@dataclass(frozen=True, eq=False)
class ElectrodeGeometry:
    """
    Field at the RF null per volt on each compensation electrode

    :param field_per_volt: Matrix of shape (3, n_electrodes), V/m per V
    """

    field_per_volt: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.field_per_volt, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != 3:
            raise ValueError(f"field_per_volt must be 3 x n, got shape {matrix.shape}")
        if np.linalg.matrix_rank(matrix) < matrix.shape[1]:
            raise RankDeficient(
                "Compensation electrodes produce linearly dependent fields"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "field_per_volt", matrix)

    @property
    def n_electrodes(self) -> int:
        return self.field_per_volt.shape[1]

    def field(self, voltages: Sequence[float]) -> StrayField:
        return StrayField(tuple(self.field_per_volt @ np.asarray(voltages, dtype=float)))


@dataclass(frozen=True)
class Observable:
    """
    One phase measurement of the loop

    Method A measures phi_PD between ``setting_a`` and ``setting_b`` with
    ``beams[0]``. Method B measures phi_PD^A - phi_PD^B for beams
    ``beams[0]`` and ``beams[1]``.
    """

    method: str
    beams: Tuple[str, ...]
    setting_a: str
    setting_b: str
    M: int = 1

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))
        needed = {"A": 1, "B": 2}.get(self.method)
        if needed is None:
            raise ValueError(f"Loops support Methods A and B, got '{self.method}'")
        if len(self.beams) != needed:
            raise ValueError(f"Method {self.method} needs {needed} beam(s)")
        if self.M < 1:
            raise ValueError(f"M must be positive, got {self.M}")


@dataclass(frozen=True)
class LoopConfig:
    """
    :param context: Ion, trap settings and beams
    :param observables: One phase observable per row of the gradient matrix
    :param geometry: Compensation electrodes, needed by everything except single
        measurements
    :param noise: Noise model of every measurement
    :param shots: Measurements per control-phase value
    :param estimator: ``arcsin``, ``arctan2``, ``arctan2_offset`` or ``averagedI_II``
    :param gain: Fraction of the solved correction applied per update
    """

    context: TrapContext
    observables: Tuple[Observable, ...]
    geometry: Optional[ElectrodeGeometry] = None
    noise: NoiseModel = NoiseModel()
    shots: int = 100
    estimator: str = "arcsin"
    pi_time: float = DEFAULT_PI_TIME
    wait: float = DEFAULT_WAIT
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        if self.estimator not in ESTIMATOR_THETAS and self.estimator != "averagedI_II":
            raise ValueError(f"Unknown estimator '{self.estimator}'")
        if self.shots < 1:
            raise ValueError(f"shots must be positive, got {self.shots}")
        if self.estimator == "averagedI_II" and any(o.M % 2 for o in self.observables):
            raise ValueError("averagedI_II needs an even M for every observable")

    @property
    def electrodes(self) -> ElectrodeGeometry:
        if self.geometry is None:
            raise ValueError("This loop has no compensation electrodes")
        return self.geometry


@dataclass(frozen=True, eq=False)
class GradientMatrix:
    """
    :param matrix: d(phi_PD_i)/dV_j in rad/V
    :param settings: Trap setting pairs the rows were measured with
    :param residuals: RMS fit residual per entry (rad), or None if analytic
    """

    matrix: np.ndarray
    settings: Tuple[Tuple[str, str], ...] = ()
    residuals: Optional[np.ndarray] = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise RankDeficient(f"Gradient matrix must be square, got {matrix.shape}")
        if np.linalg.matrix_rank(matrix) < matrix.shape[0]:
            raise RankDeficient(f"Gradient matrix is singular:\n{matrix}")
        if np.linalg.cond(matrix) > CONDITION_LIMIT:
            raise RankDeficient(f"Gradient matrix is ill-conditioned:\n{matrix}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


@dataclass(frozen=True, eq=False)
class VoltageSolution:
    voltages: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class DriftModel:
    """
    :param field_rate: Random-walk rate of each field component, V/m per sqrt(s)
    :param voltage_noise: White noise on each applied voltage, V rms per update
    """

    field_rate: float = 0.0
    voltage_noise: float = 0.0

    def __post_init__(self):
        if self.field_rate < 0 or self.voltage_noise < 0:
            raise ValueError("Drift rates must be non-negative")


def _sequences(
    config: LoopConfig, observable: Observable, setting: Optional[str] = None
) -> List[SequenceSpec]:
    M = observable.M
    if observable.method == "A":

        def build(theta_T=0.0, thetas=None):
            return method_a_sequence(
                M,
                observable.beams[0],
                observable.setting_a,
                observable.setting_b,
                theta_T,
                thetas,
                config.pi_time,
                config.wait,
            )

    else:

        def build(theta_T=0.0, thetas=None):
            return method_b_sequence(
                M,
                observable.beams[0],
                observable.beams[1],
                setting,
                theta_T,
                thetas,
                config.pi_time,
                config.wait,
            )

    if config.estimator == "averagedI_II":
        return [
            build(thetas=control_phases(ControlPhaseSettings(tag, M), theta_1))
            for tag in ("I", "II")
            for theta_1 in (math.pi / 2, math.pi)
        ]
    return [build(theta_T=theta) for theta in ESTIMATOR_THETAS[config.estimator]]


def _estimate(
    config: LoopConfig, sequences: List[SequenceSpec], fractions: List[float]
) -> PhaseEstimate:
    samples = config.shots * len(fractions)
    if config.estimator == "arcsin":
        contrast = expected_contrast(sequences[0], config.noise)
        return estimate_arcsin(*fractions, contrast=contrast, samples=samples)
    if config.estimator == "arctan2":
        return estimate_arctan2(*fractions, samples=samples)
    if config.estimator == "arctan2_offset":
        return estimate_arctan2_offset(*fractions, samples=samples)
    M = sequences[0].M
    return average_estimates(
        [
            estimate_settings(*fractions[:2], M, "I", samples // 2),
            estimate_settings(*fractions[2:], M, "II", samples // 2),
        ]
    )


def _measure_phi_pd(
    config: LoopConfig,
    observable: Observable,
    field: StrayField,
    rng: Optional[np.random.Generator],
    setting: Optional[str] = None,
) -> PhaseEstimate:
    sequences = _sequences(config, observable, setting)
    fractions = [
        measured_probability(
            run_sequence(seq, config.context, field, config.noise),
            config.shots,
            config.noise,
            rng,
        )
        for seq in sequences
    ]
    try:
        estimate = _estimate(config, sequences, fractions)
    except (Undefined, ZeroDenominator):
        logger.debug("Measurement held no phase information, reporting 0")
        halfwidth = math.pi / 2 if config.estimator == "arcsin" else math.pi
        estimate = PhaseEstimate(0.0, halfwidth, config.shots * len(fractions), "arctan2")
    return estimate.scaled(observable.M)


def measure_phase(
    config: LoopConfig,
    observable: Observable,
    field: StrayField,
    rng: Optional[np.random.Generator] = None,
) -> PhaseEstimate:
    """
    Simulated measurement of one observable's phi_PD (rad)

    :param config: Loop configuration
    :param observable: What to measure
    :param field: Total field at the ion, stray plus compensation
    :param rng: Generator for projection noise; exact probabilities when None
    """
    if observable.method == "A":
        return _measure_phi_pd(config, observable, field, rng)
    return measure_method_b_pair(config, observable, field, rng)[2]


def measure_method_b_pair(
    config: LoopConfig,
    observable: Observable,
    field: StrayField,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[PhaseEstimate, PhaseEstimate, PhaseEstimate]:
    """
    Method B phases at each trap setting and their difference

    :return: phi_PD at setting A, phi_PD at setting B, and phi_PD^A - phi_PD^B
    """
    if observable.method != "B":
        raise ValueError("Only Method B observables are measured in pairs")
    at_a = _measure_phi_pd(config, observable, field, rng, observable.setting_a)
    at_b = _measure_phi_pd(config, observable, field, rng, observable.setting_b)
    return at_a, at_b, estimate_method_b_difference(at_a, at_b, observable.M)


def measure_phases(
    config: LoopConfig, field: StrayField, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    return np.array(
        [measure_phase(config, o, field, rng).value for o in config.observables]
    )


def _observable_direction(config: LoopConfig, observable: Observable) -> np.ndarray:
    context = config.context
    beams = [context.beam(beam_id) for beam_id in observable.beams]
    d, _ = sensitivity_direction(
        observable.method,
        beams,
        context.setting(observable.setting_a),
        context.setting(observable.setting_b),
    )
    return context.ion.charge_to_mass * d


def analytic_gradient_matrix(config: LoopConfig) -> GradientMatrix:
    """
    Gradient from the chain rule, (q/m) d_i . field_per_volt[:, j]
    """
    rows = [
        _observable_direction(config, o) @ config.electrodes.field_per_volt
        for o in config.observables
    ]
    settings = tuple((o.setting_a, o.setting_b) for o in config.observables)
    return GradientMatrix(np.array(rows), settings)


def fit_gradients(
    config: LoopConfig,
    stray: StrayField,
    amplitude: float,
    n_points: int = 5,
    baseline: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Scan each electrode around ``baseline`` and fit a line to every observable

    :param config: Loop configuration
    :param stray: Stray field during the scan
    :param amplitude: Half-width of each voltage scan (V)
    :param n_points: Voltages per scan, at least 3
    :param baseline: Voltages held on the other electrodes, default 0
    :param rng: Generator for projection noise; exact when None
    :return: Slopes (rad/V) and RMS residuals (rad), each n_observables x n_electrodes
    :raises RangeOverflow: If a scanned phase jumps by more than half its range
    :raises RankDeficient: If the scan has zero amplitude
    """
    if n_points < 3:
        raise ValueError(f"A gradient scan needs at least 3 points, got {n_points}")
    n_electrodes = config.electrodes.n_electrodes
    baseline = np.zeros(n_electrodes) if baseline is None else np.asarray(baseline, float)
    offsets = np.linspace(-amplitude, amplitude, n_points)
    design = np.column_stack([offsets, np.ones(n_points)])
    if np.linalg.matrix_rank(design) < 2:
        raise RankDeficient("Gradient scan has zero amplitude")

    slopes = np.zeros((len(config.observables), n_electrodes))
    residuals = np.zeros_like(slopes)
    for j in range(n_electrodes):
        phases = np.zeros((n_points, len(config.observables)))
        halfwidths = np.full(len(config.observables), np.inf)
        for k, offset in enumerate(offsets):
            voltages = baseline.copy()
            voltages[j] += offset
            total = stray + config.electrodes.field(voltages)
            for i, observable in enumerate(config.observables):
                estimate = measure_phase(config, observable, total, rng)
                phases[k, i] = estimate.value
                halfwidths[i] = min(halfwidths[i], estimate.range_halfwidth)

        for i in range(len(config.observables)):
            if np.any(np.abs(np.diff(phases[:, i])) > halfwidths[i]):
                raise RangeOverflow(
                    f"Observable {i} wrapped while scanning electrode {j}; "
                    "reduce the scan amplitude"
                )
        coefficients, _, _, _ = np.linalg.lstsq(design, phases, rcond=None)
        slopes[:, j] = coefficients[0]
        fitted = design @ coefficients
        residuals[:, j] = np.sqrt(np.mean((phases - fitted) ** 2, axis=0))
        logger.debug("Electrode %d slopes %s rad/V", j, coefficients[0])
    return slopes, residuals


def calibrate_gradient_matrix(
    config: LoopConfig,
    stray: StrayField,
    amplitude: float,
    n_points: int = 5,
    baseline: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradientMatrix:
    """
    Measure the gradient matrix M_ij = d(phi_i)/dV_j by voltage scans

    See :func:`fit_gradients` for the parameters.

    :raises RankDeficient: If the fitted matrix is singular or not square
    """
    slopes, residuals = fit_gradients(config, stray, amplitude, n_points, baseline, rng)
    settings = tuple((o.setting_a, o.setting_b) for o in config.observables)
    matrix = GradientMatrix(slopes, settings, residuals)
    logger.info("Calibrated gradient matrix:\n%s", matrix.matrix)
    return matrix


def solve_voltages(
    gradient: GradientMatrix,
    phases: Sequence[float],
    phase_sigma: Optional[Sequence[float]] = None,
) -> VoltageSolution:
    """
    Voltage offsets ``V = M^-1 phi`` that null the measured phases

    :param gradient: Calibrated gradient matrix
    :param phases: Measured phases (rad)
    :param phase_sigma: Standard error of each phase, zero if omitted
    :return: Voltages and their covariance ``M^-1 S M^-T``
    """
    phases = np.asarray(phases, dtype=float)
    try:
        voltages = np.linalg.solve(gradient.matrix, phases)
    except np.linalg.LinAlgError as error:
        raise RankDeficient(str(error)) from error
    sigma = np.zeros_like(phases) if phase_sigma is None else np.asarray(phase_sigma)
    inverse = gradient.inverse
    covariance = inverse @ np.diag(sigma ** 2) @ inverse.T
    return VoltageSolution(voltages, covariance)


@dataclass(frozen=True, eq=False)
class LoopSample:
    t: float
    field_true: np.ndarray
    field_estimate: np.ndarray
    voltages: np.ndarray
    rf_field: float


@dataclass(eq=False)
class ClosedLoopResult:
    samples: List[LoopSample]
    geometry: ElectrodeGeometry
    interval: float

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def field_true(self) -> np.ndarray:
        return np.array([s.field_true for s in self.samples])

    @property
    def field_estimate(self) -> np.ndarray:
        return np.array([s.field_estimate for s in self.samples])

    @property
    def voltages(self) -> np.ndarray:
        return np.array([s.voltages for s in self.samples])

    def stray_estimates(self) -> np.ndarray:
        """
        Per-interval estimate of the stray field alone, the measured residual
        minus the field of the commanded voltages
        """
        return self.field_estimate - self.voltages @ self.geometry.field_per_volt.T

    def rows(self) -> List[List[float]]:
        """Rows of t_s, Ex_true..Ez_true, Ex_est..Ez_est, V1..Vn, Erf_Vm"""
        return [
            [s.t, *s.field_true, *s.field_estimate, *s.voltages, s.rf_field]
            for s in self.samples
        ]

    def columns(self) -> List[str]:
        voltages = [f"V{j + 1}" for j in range(self.geometry.n_electrodes)]
        return (
            ["t_s", "Ex_true", "Ey_true", "Ez_true", "Ex_est", "Ey_est", "Ez_est"]
            + voltages
            + ["Erf_Vm"]
        )


def closed_loop_run(
    config: LoopConfig,
    gradient: GradientMatrix,
    stray: StrayField,
    duration: float,
    update_interval: float,
    drift: DriftModel = DriftModel(),
    rng: Optional[np.random.Generator] = None,
    rf_setting: Optional[str] = None,
    rf_drive_freq: Optional[float] = None,
    rf_pseudo: Optional[Sequence[float]] = None,
    initial_voltages: Optional[Sequence[float]] = None,
) -> ClosedLoopResult:
    """
    Simulate the compensation loop

    Every ``update_interval`` the stray field takes a random-walk step, the
    phases are measured with the voltages currently applied, and the voltages
    are corrected by ``gain * M^-1 phi``.

    :param config: Loop configuration
    :param gradient: Calibrated gradient matrix
    :param stray: Initial stray field
    :param duration: Simulated time (s)
    :param update_interval: Time per measurement batch (s)
    :param drift: Field drift and voltage-source noise
    :param rng: Generator for drift and projection noise; noiseless when None
    :param rf_setting: Trap setting used for the residual RF field column,
        default the first observable's setting A
    :param rf_drive_freq: RF drive frequency (rad/s) for the residual RF field
        column; the column is 0 when omitted
    :param rf_pseudo: RF pseudopotential frequencies for that column, see
        :func:`residual_rf_field`
    :param initial_voltages: Starting voltages, default 0
    """
    if update_interval <= 0:
        raise ValueError(f"update_interval must be positive, got {update_interval}")
    n_updates = int(round(duration / update_interval))
    geometry = config.electrodes
    inverse = gradient.inverse
    voltages = (
        np.zeros(geometry.n_electrodes)
        if initial_voltages is None
        else np.asarray(initial_voltages, dtype=float)
    )
    stray_vector = stray.vector
    rf_setting = config.context.setting(rf_setting or config.observables[0].setting_a)

    samples = []
    for k in range(1, n_updates + 1):
        applied = voltages
        if rng is not None:
            stray_vector = stray_vector + drift.field_rate * math.sqrt(
                update_interval
            ) * rng.normal(size=3)
            applied = voltages + drift.voltage_noise * rng.normal(size=voltages.shape)

        total = StrayField(tuple(stray_vector + geometry.field_per_volt @ applied))
        phases = measure_phases(config, total, rng)
        offsets = inverse @ phases
        estimate = geometry.field_per_volt @ offsets

        rf_field = 0.0
        if rf_drive_freq is not None:
            residual = residual_rf_field(total, rf_setting, rf_drive_freq, rf_pseudo)
            rf_field = float(np.linalg.norm(residual))
        samples.append(
            LoopSample(
                k * update_interval, total.vector, estimate, voltages.copy(), rf_field
            )
        )
        voltages = voltages - config.gain * offsets
        logger.debug("t=%.1f s residual |E|=%.4g V/m", k * update_interval,
                     np.linalg.norm(total.vector))

    return ClosedLoopResult(samples, geometry, update_interval)


def allan_style_deviation(
    series: Sequence, interval: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Overlapping-window deviation of averaged estimates vs averaging time

    For windows of ``n`` intervals (n = 1, 2, 4, ... up to half the series)::

        sigma(n) = sqrt( mean_k |m_{k+n} - m_k|^2 / 2 )

    where ``m_k`` is the mean of estimates ``k .. k+n-1``. Vector series
    (shape ``(n_intervals, dims)``) use the Euclidean norm.

    :param series: Per-interval estimates
    :param interval: Duration of one interval (s)
    :return: Averaging times and deviations
    :raises TooShort: With fewer than 4 intervals
    """
    values = np.asarray(series, dtype=float)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    n_intervals = values.shape[0]
    if n_intervals < 4:
        raise TooShort(f"Need at least 4 intervals, got {n_intervals}")

    cumulative = np.vstack([np.zeros(values.shape[1]), np.cumsum(values, axis=0)])
    windows, deviations = [], []
    n = 1
    while 2 * n <= n_intervals:
        means = (cumulative[n:] - cumulative[:-n]) / n
        differences = means[n:] - means[:-n]
        deviations.append(math.sqrt(0.5 * np.mean(np.sum(differences ** 2, axis=1))))
        windows.append(n * interval)
        n *= 2
    return np.array(windows), np.array(deviations)


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """
    Least-squares fit of ``y = a x^b`` in log-log space

    :return: Exponent ``b`` and prefactor ``a``
    """
    exponent, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(exponent), float(math.exp(intercept))


def _pseudo(setting: TrapSetting, pseudo: Optional[Sequence[float]]) -> np.ndarray:
    if pseudo is not None:
        return np.asarray(pseudo, dtype=float)
    return np.array([setting.secular[0], setting.secular[1], 0.0])


def micromotion_amplitude(
    ion: IonSpecies,
    setting: TrapSetting,
    field: StrayField,
    rf_drive_freq: float,
    pseudo: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Micromotion amplitude u_i = (q_i / 2) r_i in meters

    :param pseudo: RF pseudopotential frequency per axis (rad/s); defaults to the
        radial secular frequencies with no axial RF confinement
    """
    q = mathieu_q(_pseudo(setting, pseudo), rf_drive_freq)
    return 0.5 * q * equilibrium_displacement(ion, setting, field)


def sideband_signal(
    beam: LaserBeam,
    ion: IonSpecies,
    setting: TrapSetting,
    field: StrayField,
    rf_drive_freq: float,
    pseudo: Optional[Sequence[float]] = None,
) -> float:
    """
    Micromotion sideband to carrier ratio, ``|k . u| / 2``
    """
    u = micromotion_amplitude(ion, setting, field, rf_drive_freq, pseudo)
    return abs(float(np.dot(beam.wavevector, u))) / 2


def residual_rf_field(
    field: StrayField,
    setting: TrapSetting,
    rf_drive_freq: float,
    pseudo: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Oscillating dipole field amplitude (V/m) seen by an ion pushed off the RF
    null by ``field``

    The ion follows the RF field with amplitude ``u``, so the field it
    experiences is ``m Omega^2 u / q``, which reduces to
    ``Omega^2 q_i E_i / (2 w_i^2)`` per axis.
    """
    q = mathieu_q(_pseudo(setting, pseudo), rf_drive_freq)
    return rf_drive_freq ** 2 * q * field.vector / (2 * setting.omega ** 2)


@dataclass(frozen=True)
class HybridConfig:
    """
    Single-beam 2D minimisation

    :param loop: Loop configuration holding one Method A observable
    :param interferometry_electrode: Electrode corrected from the phase
    :param sideband_electrode: Electrode scanned to minimise the sideband
    :param rf_drive_freq: RF drive frequency (rad/s)
    :param phase_threshold: Convergence threshold on |phi_PD| (rad)
    :param sideband_threshold: Convergence threshold on the sideband ratio
    :param search_span: Half-width of each sideband line search (V)
    :param sideband_noise: Standard deviation added to each sideband reading
    """

    loop: LoopConfig
    interferometry_electrode: int
    sideband_electrode: int
    rf_drive_freq: float
    phase_threshold: float = 1e-3
    sideband_threshold: float = 1e-4
    search_span: float = 1.0
    sideband_noise: float = 0.0
    max_iterations: int = 20
    pseudo: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if len(self.loop.observables) != 1 or self.loop.observables[0].method != "A":
            raise ValueError("The hybrid scheme uses a single Method A observable")
        if self.interferometry_electrode == self.sideband_electrode:
            raise ValueError("The hybrid scheme needs two distinct electrodes")


@dataclass(eq=False)
class HybridResult:
    voltages: np.ndarray
    final_field: np.ndarray
    phase: float
    sideband: float
    interferometric_updates: int
    sideband_searches: int
    iterations: int
    history: List[Tuple[int, float, float]] = field(default_factory=list)


def hybrid_2d_minimize(
    config: HybridConfig, stray: StrayField, rng: Optional[np.random.Generator] = None
) -> HybridResult:
    """
    Null two field components with one beam

    Alternates interferometric corrections of the component along the beam's
    sensitivity direction with golden-section searches of the sideband signal
    over the second electrode, until both fall below threshold.

    :raises NoProgress: If either observable is insensitive to its electrode, or
        the thresholds are not met within ``max_iterations``
    """
    loop = config.loop
    observable = loop.observables[0]
    context = loop.context
    beam = context.beam(observable.beams[0])
    sideband_setting = context.setting(observable.setting_a)
    geometry = loop.electrodes
    i_int, i_sb = config.interferometry_electrode, config.sideband_electrode

    try:
        direction = _observable_direction(loop, observable)
    except DegenerateDirection as error:
        raise NoProgress(str(error)) from error
    slope = float(direction @ geometry.field_per_volt[:, i_int])
    unit = np.zeros(geometry.n_electrodes)
    unit[i_sb] = 1.0
    sideband_slope = sideband_signal(
        beam,
        context.ion,
        sideband_setting,
        geometry.field(unit),
        config.rf_drive_freq,
        config.pseudo,
    )
    if abs(slope) < 1e-15 or sideband_slope < 1e-15:
        raise NoProgress(
            f"Geometry is degenerate: phase slope {slope:g} rad/V, "
            f"sideband slope {sideband_slope:g} per V"
        )

    def total(voltages):
        return stray + geometry.field(voltages)

    def sideband(voltages):
        reading = sideband_signal(
            beam,
            context.ion,
            sideband_setting,
            total(voltages),
            config.rf_drive_freq,
            config.pseudo,
        )
        if rng is not None and config.sideband_noise > 0:
            reading = abs(reading + config.sideband_noise * rng.normal())
        return reading

    voltages = np.zeros(geometry.n_electrodes)
    n_int = n_sb = 0
    history = []
    for iteration in range(1, config.max_iterations + 1):
        phase = measure_phase(loop, observable, total(voltages), rng).value
        signal = sideband(voltages)
        history.append((iteration, phase, signal))
        logger.debug("Hybrid iteration %d: phase %.3g rad, sideband %.3g", iteration,
                     phase, signal)
        if abs(phase) < config.phase_threshold and signal < config.sideband_threshold:
            logger.info("Hybrid minimisation converged after %d iterations", iteration)
            return HybridResult(
                voltages,
                total(voltages).vector,
                phase,
                signal,
                n_int,
                n_sb,
                iteration,
                history,
            )

        if abs(phase) >= config.phase_threshold:
            voltages[i_int] -= phase / slope
            n_int += 1

        if sideband(voltages) >= config.sideband_threshold:
            centre = voltages[i_sb]

            def scan(v):
                trial = voltages.copy()
                trial[i_sb] = v
                return sideband(trial)

            search = minimize_scalar(
                scan,
                bracket=(centre - config.search_span, centre + config.search_span),
                method="golden",
            )
            voltages[i_sb] = search.x
            n_sb += 1

    raise NoProgress(
        f"Hybrid minimisation did not converge in {config.max_iterations} iterations"
    )


def sensitivity_angle(d1: Sequence[float], d2: Sequence[float]) -> float:
    """Angle between two sensitivity directions, in degrees"""
    d1, d2 = np.asarray(d1, float), np.asarray(d2, float)
    cosine = np.dot(d1, d2) / (np.linalg.norm(d1) * np.linalg.norm(d2))
    return math.degrees(math.acos(max(-1.0, min(1.0, float(cosine)))))


@dataclass(frozen=True)
class DutyCycleReport:
    reduced_fraction: float
    mean_power: float
    balanced: List[Tuple[float, float]]

    @property
    def balanced_mean(self) -> float:
        durations = np.array([d for d, _ in self.balanced])
        powers = np.array([p for _, p in self.balanced])
        return float(np.sum(durations * powers) / np.sum(durations))


def duty_cycle_report(
    schedule: Sequence[Tuple[float, float]], nominal: float = 1.0
) -> DutyCycleReport:
    """
    Fraction of time spent below nominal RF power, and a profile that keeps the
    average RF power at nominal

    Every reduced segment is paired with a segment of equal length raised by the
    same amount, carved out of the nominal-power time that follows it (appended at
    the end if there is not enough).

    :param schedule: ``(duration, power)`` segments in time order
    :param nominal: RF power during normal trap operation
    """
    if any(duration <= 0 for duration, _ in schedule):
        raise ValueError("Schedule durations must be positive")
    durations = np.array([d for d, _ in schedule], dtype=float)
    powers = np.array([p for _, p in schedule], dtype=float)
    total = durations.sum()
    reduced = durations[powers < nominal].sum() / total
    mean = float(np.sum(durations * powers) / total)

    balanced: List[Tuple[float, float]] = []
    owed: List[List[float]] = []
    for duration, power in schedule:
        if power < nominal:
            balanced.append((duration, power))
            owed.append([duration, nominal - power])
            continue
        if power > nominal or not owed:
            balanced.append((duration, power))
            continue
        remaining = duration
        while owed and remaining > 0:
            length, deficit = owed[0]
            taken = min(length, remaining)
            balanced.append((taken, nominal + deficit))
            remaining -= taken
            if taken == length:
                owed.pop(0)
            else:
                owed[0][0] = length - taken
        if remaining > 0:
            balanced.append((remaining, nominal))
    balanced.extend((length, nominal + deficit) for length, deficit in owed)

    logger.info("RF power reduced %.1f%% of the time", 100 * reduced)
    return DutyCycleReport(float(reduced), mean, balanced)


def method_a_schedule(
    M: int,
    s_b: float,
    pi_time: float = DEFAULT_PI_TIME,
    wait: float = DEFAULT_WAIT,
    overhead: float = 0.0,
) -> List[Tuple[float, float]]:
    """
    RF power schedule of one Method A shot, power relative to nominal (s^2)

    The trap switches setting at the start of each wait, so every wait belongs to
    the following pulse's setting. ``overhead`` adds cooling and detection time
    at nominal power.
    """
    schedule = []
    for j in range(1, M + 2):
        power = 1.0 if j % 2 == 1 else s_b ** 2
        area = 0.5 if j in (1, M + 1) else 1.0
        if j > 1 and wait > 0:
            schedule.append((wait, power))
        schedule.append((area * pi_time, power))
    if overhead > 0:
        schedule.append((overhead, 1.0))
    return schedule
