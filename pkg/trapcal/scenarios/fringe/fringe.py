import logging
import math
from typing import List

import numpy as np

from trapcal.pulses import measured_probability, method_a_sequence, run_sequence
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import StrayField, sensitivity_direction

logger = logging.getLogger(__name__)


def count_zero_crossings(values: List[float], level: float = 0.5) -> int:
    """
    Sign changes of ``values - level`` around a closed (periodic) sweep. Points
    within rounding of ``level`` are skipped.
    """
    signs = np.sign(np.round(np.asarray(values, dtype=float) - level, 12))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs != np.roll(signs, 1)))


class FringeScenario(Scenario):
    """
    Method A fringes: excitation probability against the phi_PD produced by a
    stray field swept along the sensitivity direction, one full turn of phi_PD
    per sequence length.

    Parameters (``params``):
        ``points``: sweep points per turn, default 1001
    """

    name = "fringe"

    def run(self) -> ScenarioResult:
        config = self.config
        schedule = config.schedule
        context = config.context
        setting_a, setting_b = schedule.settings[:2]
        beam_id = schedule.beams[0]
        thetas = schedule.theta_T or (-math.pi / 2,)
        points = int(self.param("points", 1001))
        shots = schedule.shots // 2
        rng = self.rng()

        d, unit = sensitivity_direction(
            "A",
            [context.beam(beam_id)],
            context.setting(setting_a),
            context.setting(setting_b),
        )
        phase_per_field = config.ion.charge_to_mass * float(np.linalg.norm(d))
        phi_grid = -math.pi + (np.arange(points) + 0.5) * 2 * math.pi / points

        table = Table(["M", "E_v_per_m", "phi_pd_rad", "theta_T_rad", "p", "p_measured"])
        crossings = {}
        for M in schedule.M:
            for index, theta_T in enumerate(thetas):
                seq = method_a_sequence(
                    M,
                    beam_id,
                    setting_a,
                    setting_b,
                    theta_T,
                    pi_time=schedule.pi_time,
                    wait=schedule.wait,
                )
                probabilities = []
                for phi_pd in phi_grid:
                    strength = phi_pd / phase_per_field
                    field = StrayField(tuple(strength * unit))
                    p = run_sequence(seq, context, field, config.noise)
                    measured = measured_probability(p, shots, config.noise, rng)
                    probabilities.append(p)
                    table.append(M, strength, phi_pd, theta_T, p, measured)
                if index == 0:
                    crossings[M] = count_zero_crossings(probabilities)
            logger.info("M=%d: %d zero crossings", M, crossings[M])

        first = schedule.M[0]
        unit_frequency = crossings[first] / 2 / first
        metrics = {
            "field_per_turn_v_per_m": 2 * math.pi / phase_per_field,
            "zero_crossings": {str(M): n for M, n in crossings.items()},
            "fringe_frequency": {str(M): n / 2 for M, n in crossings.items()},
            "frequency_ratio_to_M1": {
                str(M): (n / 2) / unit_frequency for M, n in crossings.items()
            },
        }
        return ScenarioResult({"fringe": table}, metrics)


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = FringeScenario(load_default_config("fringe")).run()
    print(result.metrics)
