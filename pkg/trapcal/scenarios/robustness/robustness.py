import logging
import math
from typing import Dict, List, Sequence

import numpy as np

from trapcal.errors import Undefined
from trapcal.estimators import (
    ControlPhaseSettings,
    average_estimates,
    control_phases,
    estimate_arctan2,
    estimate_settings,
)
from trapcal.pulses import (
    NoiseModel,
    SequenceSpec,
    method_a_sequence,
    sequence_duration,
    simulate_phases,
)
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import wrap_phase

logger = logging.getLogger(__name__)

TAGS = ("plain", "I", "II", "III", "averagedI_II")
NEGLIGIBLE_SHIFT = 1e-9


def method_a_phases(M: int, phi_pd: float) -> List[float]:
    """
    Laser phase at the ion for each pulse of a Method A sequence, taking the
    setting-A position as reference
    """
    return [0.0 if j % 2 == 1 else -phi_pd for j in range(1, M + 2)]


class RobustEstimator:
    """
    Estimate phi_T of a Method A sequence with a given control phase family,
    from exact excitation probabilities under a noise model

    :param M: Sequence length, even for the settings families
    :param beam_id: Beam id written into the pulses
    :param pi_time: pi-pulse duration (s)
    :param wait: Wait between pulses (s)
    """

    def __init__(self, M: int, beam_id: str, pi_time: float, wait: float):
        self.M = M
        self.beam_id = beam_id
        self.pi_time = pi_time
        self.wait = wait

    def sequence(self, thetas: Sequence[float]) -> SequenceSpec:
        return method_a_sequence(
            self.M,
            self.beam_id,
            "A",
            "B",
            thetas=thetas,
            pi_time=self.pi_time,
            wait=self.wait,
        )

    def probability(
        self, thetas: Sequence[float], phi_pd: float, noise: NoiseModel
    ) -> float:
        seq = self.sequence(thetas)
        phases = method_a_phases(self.M, phi_pd)
        return simulate_phases(phases, seq.pulses, noise, self.wait).excitation

    def estimate(self, tag: str, phi_pd: float, noise: NoiseModel) -> float:
        """
        :return: Estimated phi_T
        """
        if tag == "averagedI_II":
            parts = [self._settings(part, phi_pd, noise) for part in ("I", "II")]
            return average_estimates(parts).value
        if tag == "plain":
            probabilities = [
                self.probability(
                    control_phases(ControlPhaseSettings("plain", self.M), theta_1),
                    phi_pd,
                    noise,
                )
                # theta_T = theta_1 + pi for even M
                for theta_1 in (math.pi / 2, math.pi)
            ]
            return estimate_arctan2(*probabilities).value
        return self._settings(tag, phi_pd, noise).value

    def _settings(self, tag: str, phi_pd: float, noise: NoiseModel):
        settings = ControlPhaseSettings(tag, self.M)
        p_half, p_pi = (
            self.probability(control_phases(settings, theta_1), phi_pd, noise)
            for theta_1 in (math.pi / 2, math.pi)
        )
        return estimate_settings(p_half, p_pi, self.M, tag)

    def shift(self, tag: str, phi_pd: float, noise: NoiseModel) -> float:
        """
        Per-length estimation error, wrap(phi_T_est - M phi_PD) / M
        """
        try:
            value = self.estimate(tag, phi_pd, noise)
        except Undefined:
            return math.nan
        return float(wrap_phase(value - self.M * phi_pd)) / self.M


class RobustnessScenario(Scenario):
    """
    Control phase families under pulse area errors and laser detuning

    Parameters (``params``):
        ``even_area_errors``: default [0, 0.05, 0.1, 0.15, 0.2]
        ``odd_area_errors``: default [0, 0.1]
        ``area_phi_pd_rad``: phi_PD of the area error sweep, default 0
        ``detuning_steps``: Delta T / M values, default [0, 0.1, 0.2, 0.3]
        ``bias_points``: phi_PD grid of the bias table, default 128
        ``bias_area_error``: even-pulse area error of the bias table, default 0.05
        ``bias_window_rad``: half width of the windows around 0, pi and +-pi/2
            the bias extrema are reported over, default 0.25
    """

    name = "robustness"

    def run(self) -> ScenarioResult:
        schedule = self.config.schedule
        M = schedule.M[0]
        estimator = RobustEstimator(M, schedule.beams[0], schedule.pi_time, schedule.wait)
        ideal = NoiseModel(projection_sampling=False, dephase_during_pulses=False)

        area = Table(
            ["even_area_error", "odd_area_error", "tag", "phi_pd_rad", "shift_rad"]
        )
        phi_pd = float(self.param("area_phi_pd_rad", 0.0))
        max_area_shift: Dict[str, float] = {tag: 0.0 for tag in TAGS}
        average_beats_single = True
        average_compared = 0
        for odd_error in self.param("odd_area_errors", [0.0, 0.1]):
            for even_error in self.param("even_area_errors", [0.0, 0.05, 0.1, 0.15, 0.2]):
                noise = NoiseModel(
                    area_error_even=1 + even_error,
                    area_error_odd=1 + odd_error,
                    projection_sampling=False,
                    dephase_during_pulses=False,
                )
                shifts = {tag: estimator.shift(tag, phi_pd, noise) for tag in TAGS}
                for tag, shift in shifts.items():
                    area.append(even_error, odd_error, tag, phi_pd, shift)
                    max_area_shift[tag] = max(max_area_shift[tag], abs(shift))
                single = min(abs(shifts["I"]), abs(shifts["II"]))
                # Rows where both settings are exact carry no comparison
                if odd_error > 0 and single > NEGLIGIBLE_SHIFT:
                    average_compared += 1
                    if not abs(shifts["averagedI_II"]) < single:
                        average_beats_single = False

        detuning = Table(
            [
                "delta_t_over_m_rad",
                "detuning_rad_per_s",
                "tag",
                "shift_rad",
                "naive_shift_rad",
            ]
        )
        duration = sequence_duration(estimator.sequence([0.0] * (M + 1)))
        detuning_ratio = 0.0
        for step in self.param("detuning_steps", [0.0, 0.1, 0.2, 0.3]):
            delta = step * M / duration
            noise = NoiseModel(
                detuning=delta, projection_sampling=False, dephase_during_pulses=False
            )
            for tag in TAGS:
                shift = estimator.shift(tag, 0.0, noise)
                detuning.append(step, delta, tag, shift, step)
                if step > 0 and tag in ("I", "II"):
                    detuning_ratio = max(detuning_ratio, abs(shift) / step)

        bias = Table(["tag", "phi_pd_rad", "shift_rad"])
        points = int(self.param("bias_points", 128))
        window = float(self.param("bias_window_rad", 0.25))
        noise = NoiseModel(
            area_error_even=1 + float(self.param("bias_area_error", 0.05)),
            projection_sampling=False,
            dephase_during_pulses=False,
        )
        # The coherent area error only costs contrast where M phi_PD is a multiple
        # of pi, so a coarse grid misses the extrema between those nodes
        grid = np.linspace(-math.pi, math.pi, points, endpoint=False)
        curves: Dict[str, np.ndarray] = {}
        for tag in ("I", "III"):
            curves[tag] = np.array([estimator.shift(tag, phi, noise) for phi in grid])
            for phi, shift in zip(grid, curves[tag]):
                bias.append(tag, phi, shift)
        near_zero = _within(grid, [0.0, math.pi], window)
        near_quarter = _within(grid, [-math.pi / 2, math.pi / 2], window)

        ideal_shift = max(abs(estimator.shift(tag, phi_pd, ideal)) for tag in TAGS)
        peaks = {
            tag: float(grid[int(np.nanargmax(np.abs(curve)))])
            for tag, curve in curves.items()
        }
        logger.info(
            "Largest area error shift: settings I %.3g, average %.3g rad",
            max_area_shift["I"],
            max_area_shift["averagedI_II"],
        )
        logger.info("Bias peaks at phi_PD: %s", peaks)
        metrics = {
            "M": M,
            "max_area_shift_rad": max_area_shift,
            "average_beats_single": average_beats_single and average_compared > 0,
            "average_compared": average_compared,
            "detuning_shift_ratio": detuning_ratio,
            "ideal_shift_rad": ideal_shift,
            "bias_peak_phi_pd_rad": peaks,
            "bias_near_zero_rad": {
                tag: float(np.nanmax(np.abs(curve[near_zero])))
                for tag, curve in curves.items()
            },
            "bias_near_quarter_turn_rad": {
                tag: float(np.nanmax(np.abs(curve[near_quarter])))
                for tag, curve in curves.items()
            },
        }
        return ScenarioResult(
            {"area_error": area, "detuning": detuning, "bias": bias}, metrics
        )


def _within(grid: np.ndarray, targets: Sequence[float], window: float) -> np.ndarray:
    """Mask of grid points within ``window`` of any target, modulo 2 pi"""
    distance = np.min([np.abs(wrap_phase(grid - target)) for target in targets], axis=0)
    return distance <= window


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = RobustnessScenario(load_default_config("robustness")).run()
    print(result.metrics)
